#pragma once

#include "artgan/tensor.hpp"

#include <cstddef>

namespace artgan::linalg {

/// [m x k] * [k x n] through the dispatched GEMM kernel.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

struct ConvGeometry {
    std::size_t batch = 0, channels = 0, height = 0, width = 0;
    std::size_t filters = 0, kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1, pad = 0;
    std::size_t out_h = 0, out_w = 0;

    std::size_t patch() const noexcept { return channels * kernel_h * kernel_w; }
    std::size_t out_pixels() const noexcept { return out_h * out_w; }
};

/// Validates shapes and derives the output size.
ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t pad);

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const ConvGeometry& geo);
/// Gradient of the loss w.r.t. the input, given dL/dout.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const ConvGeometry& geo);
/// Gradient of the loss w.r.t. the kernel, given dL/dout.
Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const ConvGeometry& geo);

} // namespace artgan::linalg
