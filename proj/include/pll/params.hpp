#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pll/tensor.hpp"

namespace pll {

struct ParamEntry {
    std::string name;
    Tensor value;
    bool trainable = true;  // running statistics are not
};

/// Ordered, uniquely named parameter tensors.
class ParameterSet {
public:
    /// Returns the index of the new entry. Duplicate names are rejected.
    std::size_t add(std::string name, Tensor value, bool trainable = true);

    std::size_t size() const { return entries_.size(); }
    std::optional<std::size_t> find(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    ParamEntry& entry(std::size_t i) { return entries_[i]; }
    const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
    Tensor& operator[](std::size_t i) { return entries_[i].value; }
    const Tensor& operator[](std::size_t i) const { return entries_[i].value; }
    Tensor& at(const std::string& name) { return entries_[index_of(name)].value; }
    const Tensor& at(const std::string& name) const { return entries_[index_of(name)].value; }

    const std::vector<ParamEntry>& entries() const { return entries_; }

    /// Total number of trainable scalars.
    std::size_t trainable_count() const;

    /// Same names, shapes and trainable flags.
    bool congruent(const ParameterSet& other) const;

    bool operator==(const ParameterSet& other) const;

private:
    std::vector<ParamEntry> entries_;
};

/// One gradient tensor per parameter entry, laid out identically to the owning
/// ParameterSet. Entries for non-trainable parameters stay empty.
class GradientSet {
public:
    GradientSet() = default;
    explicit GradientSet(const ParameterSet& params);

    std::size_t size() const { return grads_.size(); }
    Tensor& operator[](std::size_t i) { return grads_[i]; }
    const Tensor& operator[](std::size_t i) const { return grads_[i]; }
    bool has(std::size_t i) const { return !grads_[i].shape.empty(); }

    void zero();
    void add_scaled(const GradientSet& other, double factor);
    bool all_finite() const;
    bool congruent(const ParameterSet& params) const;

private:
    std::vector<Tensor> grads_;
};

}  // namespace pll
