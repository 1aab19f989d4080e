#include "pll/params.hpp"

#include <stdexcept>

namespace pll {

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    entries_.push_back({std::move(name), std::move(value), trainable});
    return entries_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable) n += e.value.size();
    }
    return n;
}

bool ParameterSet::congruent(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name || a.value.shape != b.value.shape || a.trainable != b.trainable) return false;
    }
    return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (!congruent(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].value.values != other.entries_[i].value.values) return false;
    }
    return true;
}

GradientSet::GradientSet(const ParameterSet& params) {
    grads_.reserve(params.size());
    for (const auto& e : params.entries()) {
        grads_.push_back(e.trainable ? Tensor(e.value.shape) : Tensor());
    }
}

void GradientSet::zero() {
    for (auto& g : grads_) g.fill(0.0);
}

void GradientSet::add_scaled(const GradientSet& other, double factor) {
    if (other.grads_.size() != grads_.size()) throw std::invalid_argument("gradient layouts differ");
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        if (grads_[i].shape != other.grads_[i].shape) throw ShapeError("gradient entry shapes differ");
        for (std::size_t j = 0; j < grads_[i].size(); ++j) grads_[i][j] += factor * other.grads_[i][j];
    }
}

bool GradientSet::all_finite() const {
    for (const auto& g : grads_) {
        if (!g.all_finite()) return false;
    }
    return true;
}

bool GradientSet::congruent(const ParameterSet& params) const {
    if (grads_.size() != params.size()) return false;
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        const auto& e = params.entry(i);
        if (e.trainable ? grads_[i].shape != e.value.shape : !grads_[i].shape.empty()) return false;
    }
    return true;
}

}  // namespace pll
