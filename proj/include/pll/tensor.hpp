#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pll {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised whenever operand shapes do not fit an operation; the message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }
    bool empty() const { return values.empty(); }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    /// Row `i` of a tensor whose first axis is the batch axis.
    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    void fill(double v);
    bool all_finite() const;

    /// Same values, new shape of equal volume.
    Tensor reshaped(Shape s) const;

    bool operator==(const Tensor& other) const = default;
};

void require_shape(const Tensor& t, const Shape& expected, const char* what);
void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace pll
