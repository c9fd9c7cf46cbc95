#pragma once

// Arithmetic inner loops. Every kernel has a portable scalar reference and an
// AVX2 variant; the active one is picked at runtime from CPUID. Both variants
// perform the same IEEE operations in the same order per output element, so
// they agree bit for bit (the build disables FP contraction to keep it so).

#include <cstddef>
#include <string_view>

namespace artgan::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// Best instruction set supported by this CPU and build.
Isa detected_isa() noexcept;
Isa active_isa() noexcept;
/// Throws ConfigError when the CPU cannot run the requested variant.
void set_active_isa(Isa isa);

/// Row-major matrix view dimensions with explicit leading strides.
struct GemmArgs {
    std::size_t m = 0, n = 0, k = 0;
    const double* a = nullptr; // m x k, row stride lda
    std::size_t lda = 0;
    const double* b = nullptr; // k x n, row stride ldb
    std::size_t ldb = 0;
    double* c = nullptr; // m x n, row stride ldc
    std::size_t ldc = 0;
    bool accumulate = false; // c += a*b instead of c = a*b
};

/// Per output element: acc starts at 0 (or c when accumulating) and then
/// acc = acc + a[i,p]*b[p,j] for p = 0..k-1 in order.
void gemm(const GemmArgs& args);

struct AdamCoeffs {
    double lr = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
    double bias_correction1 = 1.0; // 1 - beta1^t
    double bias_correction2 = 1.0; // 1 - beta2^t
};

/// m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g*g ;
/// p = p - lr * (m/bc1) / (sqrt(v/bc2) + eps)
void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& coeffs);

namespace scalar {
void gemm(const GemmArgs& args);
void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& coeffs);
} // namespace scalar

namespace avx2 {
bool available() noexcept;
void gemm(const GemmArgs& args);
void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& coeffs);
} // namespace avx2

} // namespace artgan::kernels
