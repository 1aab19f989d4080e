#include "pll/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace pll {

std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(shape_volume(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_volume(shape)) {
        throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
    }
}

std::span<double> Tensor::row(std::size_t i) {
    const std::size_t stride = shape.empty() ? 0 : values.size() / shape[0];
    return {values.data() + i * stride, stride};
}

std::span<const double> Tensor::row(std::size_t i) const {
    const std::size_t stride = shape.empty() ? 0 : values.size() / shape[0];
    return {values.data() + i * stride, stride};
}

void Tensor::fill(double v) { std::fill(values.begin(), values.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape s) const {
    if (shape_volume(s) != values.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape) + " to " + shape_string(s));
    }
    return Tensor(std::move(s), values);
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
    if (t.shape != expected) {
        throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                         shape_string(t.shape));
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape));
    }
}

}  // namespace pll
