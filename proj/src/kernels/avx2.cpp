// Compiled with -mavx2 (no -mfma): multiplies and adds stay separate so the
// rounding sequence matches the scalar reference exactly.

#include "artgan/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace artgan::kernels::avx2 {

namespace {

constexpr std::size_t kPanelWidth = 8;
constexpr std::size_t kDepthBlock = 256;

// Scalar path for the column tail; same per-element operation order.
void gemm_tail_columns(const GemmArgs& g, std::size_t j0)
{
    for (std::size_t i = 0; i < g.m; ++i) {
        const double* arow = g.a + i * g.lda;
        double* crow = g.c + i * g.ldc;
        for (std::size_t j = j0; j < g.n; ++j) {
            double acc = g.accumulate ? crow[j] : 0.0;
            for (std::size_t p = 0; p < g.k; ++p) {
                acc = acc + arow[p] * g.b[p * g.ldb + j];
            }
            crow[j] = acc;
        }
    }
}

inline void micro_4x8(const double* a, std::size_t lda, const double* panel, std::size_t kc, double* c,
                      std::size_t ldc, bool load_c)
{
    __m256d c00, c01, c10, c11, c20, c21, c30, c31;
    if (load_c) {
        c00 = _mm256_loadu_pd(c);
        c01 = _mm256_loadu_pd(c + 4);
        c10 = _mm256_loadu_pd(c + ldc);
        c11 = _mm256_loadu_pd(c + ldc + 4);
        c20 = _mm256_loadu_pd(c + 2 * ldc);
        c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
        c30 = _mm256_loadu_pd(c + 3 * ldc);
        c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
    } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
    }
    const double* a0 = a;
    const double* a1 = a + lda;
    const double* a2 = a + 2 * lda;
    const double* a3 = a + 3 * lda;
    for (std::size_t p = 0; p < kc; ++p) {
        const __m256d b0 = _mm256_load_pd(panel + p * kPanelWidth);
        const __m256d b1 = _mm256_load_pd(panel + p * kPanelWidth + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_add_pd(c00, _mm256_mul_pd(av, b0));
        c01 = _mm256_add_pd(c01, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_add_pd(c10, _mm256_mul_pd(av, b0));
        c11 = _mm256_add_pd(c11, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_add_pd(c20, _mm256_mul_pd(av, b0));
        c21 = _mm256_add_pd(c21, _mm256_mul_pd(av, b1));
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_add_pd(c30, _mm256_mul_pd(av, b0));
        c31 = _mm256_add_pd(c31, _mm256_mul_pd(av, b1));
    }
    _mm256_storeu_pd(c, c00);
    _mm256_storeu_pd(c + 4, c01);
    _mm256_storeu_pd(c + ldc, c10);
    _mm256_storeu_pd(c + ldc + 4, c11);
    _mm256_storeu_pd(c + 2 * ldc, c20);
    _mm256_storeu_pd(c + 2 * ldc + 4, c21);
    _mm256_storeu_pd(c + 3 * ldc, c30);
    _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void micro_1x8(const double* a, const double* panel, std::size_t kc, double* c, bool load_c)
{
    __m256d c0 = load_c ? _mm256_loadu_pd(c) : _mm256_setzero_pd();
    __m256d c1 = load_c ? _mm256_loadu_pd(c + 4) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < kc; ++p) {
        const __m256d av = _mm256_broadcast_sd(a + p);
        c0 = _mm256_add_pd(c0, _mm256_mul_pd(av, _mm256_load_pd(panel + p * kPanelWidth)));
        c1 = _mm256_add_pd(c1, _mm256_mul_pd(av, _mm256_load_pd(panel + p * kPanelWidth + 4)));
    }
    _mm256_storeu_pd(c, c0);
    _mm256_storeu_pd(c + 4, c1);
}

struct AlignedPanel {
    explicit AlignedPanel(std::size_t n) : raw(n + 4) {}
    double* data()
    {
        auto addr = reinterpret_cast<std::uintptr_t>(raw.data());
        return reinterpret_cast<double*>((addr + 31) & ~std::uintptr_t{31});
    }
    std::vector<double> raw;
};

} // namespace

bool available() noexcept
{
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

void gemm(const GemmArgs& g)
{
    if (g.m == 0 || g.n == 0) {
        return;
    }
    if (g.k == 0) {
        if (!g.accumulate) {
            for (std::size_t i = 0; i < g.m; ++i) {
                std::fill(g.c + i * g.ldc, g.c + i * g.ldc + g.n, 0.0);
            }
        }
        return;
    }
    const std::size_t full_cols = g.n - g.n % kPanelWidth;
    const std::size_t depth_block = std::min(g.k, kDepthBlock);
    AlignedPanel panel_storage(depth_block * kPanelWidth);
    double* panel = panel_storage.data();

    for (std::size_t jc = 0; jc < full_cols; jc += kPanelWidth) {
        for (std::size_t pc = 0; pc < g.k; pc += kDepthBlock) {
            const std::size_t kc = std::min(kDepthBlock, g.k - pc);
            for (std::size_t p = 0; p < kc; ++p) {
                const double* src = g.b + (pc + p) * g.ldb + jc;
                _mm256_store_pd(panel + p * kPanelWidth, _mm256_loadu_pd(src));
                _mm256_store_pd(panel + p * kPanelWidth + 4, _mm256_loadu_pd(src + 4));
            }
            const bool load_c = g.accumulate || pc > 0;
            std::size_t i = 0;
            for (; i + 4 <= g.m; i += 4) {
                micro_4x8(g.a + i * g.lda + pc, g.lda, panel, kc, g.c + i * g.ldc + jc, g.ldc, load_c);
            }
            for (; i < g.m; ++i) {
                micro_1x8(g.a + i * g.lda + pc, panel, kc, g.c + i * g.ldc + jc, load_c);
            }
        }
    }
    if (full_cols < g.n) {
        gemm_tail_columns(g, full_cols);
    }
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c)
{
    const __m256d b1 = _mm256_set1_pd(c.beta1);
    const __m256d b2 = _mm256_set1_pd(c.beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
    const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
    const __m256d lr = _mm256_set1_pd(c.lr);
    const __m256d eps = _mm256_set1_pd(c.eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d mhat = _mm256_div_pd(mv, bc1);
        const __m256d vhat = _mm256_div_pd(vv, bc2);
        const __m256d step =
            _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    if (i < n) {
        scalar::adam_update(n - i, param + i, grad + i, m + i, v + i, c);
    }
}

} // namespace artgan::kernels::avx2
