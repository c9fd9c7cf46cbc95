#include "artgan/tensor.hpp"

#include "artgan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace artgan {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += "x";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void check_dims(const Shape& shape)
{
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
        }
    }
}

} // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape))
{
    check_dims(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    check_dims(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const
{
    if (data_.size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

void round_to_float(std::span<double> values) noexcept
{
    for (auto& v : values) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

} // namespace artgan
