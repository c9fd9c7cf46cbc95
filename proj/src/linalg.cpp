#include "artgan/linalg.hpp"

#include "artgan/errors.hpp"
#include "artgan/kernels.hpp"

#include <algorithm>
#include <vector>

namespace artgan::linalg {

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    kernels::gemm({.m = m, .n = n, .k = k, .a = a.ptr(), .lda = k, .b = b.ptr(), .ldb = n, .c = c.ptr(), .ldc = n});
    return c;
}

Tensor transpose(const Tensor& a)
{
    if (a.rank() != 2) {
        throw ShapeError("transpose expects rank 2, got " + shape_string(a.shape()));
    }
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    Tensor t({cols, rows});
    constexpr std::size_t kTile = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
        for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
            const std::size_t i1 = std::min(rows, i0 + kTile), j1 = std::min(cols, j0 + kTile);
            for (std::size_t i = i0; i < i1; ++i) {
                for (std::size_t j = j0; j < j1; ++j) {
                    t[j * rows + i] = a[i * cols + j];
                }
            }
        }
    }
    return t;
}

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t pad)
{
    if (input.size() != 4 || kernel.size() != 4) {
        throw ShapeError("conv2d expects N x C x H x W input and F x C x kh x kw kernel, got " +
                         shape_string(input) + " and " + shape_string(kernel));
    }
    if (input[1] != kernel[1]) {
        throw ShapeError("conv2d channel mismatch: input " + shape_string(input) + ", kernel " +
                         shape_string(kernel));
    }
    if (stride < 1) {
        throw ShapeError("conv2d stride must be >= 1");
    }
    ConvGeometry g;
    g.batch = input[0];
    g.channels = input[1];
    g.height = input[2];
    g.width = input[3];
    g.filters = kernel[0];
    g.kernel_h = kernel[2];
    g.kernel_w = kernel[3];
    g.stride = stride;
    g.pad = pad;
    if (g.kernel_h > g.height + 2 * pad || g.kernel_w > g.width + 2 * pad) {
        throw ShapeError("conv2d kernel larger than padded input");
    }
    g.out_h = (g.height + 2 * pad - g.kernel_h) / stride + 1;
    g.out_w = (g.width + 2 * pad - g.kernel_w) / stride + 1;
    return g;
}

namespace {

bool is_pointwise(const ConvGeometry& g)
{
    return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

// Patch matrix of one sample: [C*kh*kw, out_h*out_w].
void im2col(const double* x, const ConvGeometry& g, double* col)
{
    const std::size_t pixels = g.out_pixels();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = x + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * pixels;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                    double* out = row + oh * g.out_w;
                    if (ih < 0 || ih >= static_cast<long>(g.height)) {
                        std::fill(out, out + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(ih) * g.width;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                        out[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? 0.0
                                                                                : src[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

// Transposed patch matrix of one sample: [out_h*out_w, C*kh*kw].
void im2col_transposed(const double* x, const ConvGeometry& g, double* colt)
{
    const std::size_t patch = g.patch();
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            double* out = colt + (oh * g.out_w + ow) * patch;
            for (std::size_t c = 0; c < g.channels; ++c) {
                const double* plane = x + c * g.height * g.width;
                for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                    for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                        const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                        const bool inside = ih >= 0 && ih < static_cast<long>(g.height) && iw >= 0 &&
                                            iw < static_cast<long>(g.width);
                        *out++ = inside ? plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)]
                                        : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back into image layout.
void col2im_add(const double* col, const ConvGeometry& g, double* x)
{
    const std::size_t pixels = g.out_pixels();
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = x + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * pixels;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                    if (ih < 0 || ih >= static_cast<long>(g.height)) {
                        continue;
                    }
                    double* dst = plane + static_cast<std::size_t>(ih) * g.width;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                        if (iw >= 0 && iw < static_cast<long>(g.width)) {
                            dst[static_cast<std::size_t>(iw)] += row[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const ConvGeometry& g)
{
    Tensor out({g.batch, g.filters, g.out_h, g.out_w});
    const std::size_t patch = g.patch(), pixels = g.out_pixels();
    const std::size_t in_stride = g.channels * g.height * g.width;
    std::vector<double> col(is_pointwise(g) ? 0 : patch * pixels);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* b = input.ptr() + n * in_stride;
        if (!is_pointwise(g)) {
            im2col(b, g, col.data());
            b = col.data();
        }
        kernels::gemm({.m = g.filters, .n = pixels, .k = patch, .a = kernel.ptr(), .lda = patch, .b = b,
                       .ldb = pixels, .c = out.ptr() + n * g.filters * pixels, .ldc = pixels});
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const ConvGeometry& g)
{
    Tensor grad_in({g.batch, g.channels, g.height, g.width});
    const std::size_t patch = g.patch(), pixels = g.out_pixels();
    const std::size_t in_stride = g.channels * g.height * g.width;
    const Tensor kernel_t = transpose(kernel.reshaped({g.filters, patch}));
    std::vector<double> col(patch * pixels);
    for (std::size_t n = 0; n < g.batch; ++n) {
        double* dst = is_pointwise(g) ? grad_in.ptr() + n * in_stride : col.data();
        kernels::gemm({.m = patch, .n = pixels, .k = g.filters, .a = kernel_t.ptr(), .lda = g.filters,
                       .b = grad_out.ptr() + n * g.filters * pixels, .ldb = pixels, .c = dst, .ldc = pixels});
        if (!is_pointwise(g)) {
            col2im_add(col.data(), g, grad_in.ptr() + n * in_stride);
        }
    }
    return grad_in;
}

Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const ConvGeometry& g)
{
    const std::size_t patch = g.patch(), pixels = g.out_pixels();
    const std::size_t in_stride = g.channels * g.height * g.width;
    Tensor grad_k({g.filters, g.channels, g.kernel_h, g.kernel_w});
    std::vector<double> colt(patch * pixels);
    for (std::size_t n = 0; n < g.batch; ++n) {
        im2col_transposed(input.ptr() + n * in_stride, g, colt.data());
        kernels::gemm({.m = g.filters, .n = patch, .k = pixels, .a = grad_out.ptr() + n * g.filters * pixels,
                       .lda = pixels, .b = colt.data(), .ldb = patch, .c = grad_k.ptr(), .ldc = patch,
                       .accumulate = n > 0});
    }
    return grad_k;
}

} // namespace artgan::linalg
