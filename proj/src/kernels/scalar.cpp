#include "artgan/kernels.hpp"

#include <cmath>

namespace artgan::kernels::scalar {

void gemm(const GemmArgs& g)
{
    for (std::size_t i = 0; i < g.m; ++i) {
        double* crow = g.c + i * g.ldc;
        if (!g.accumulate) {
            for (std::size_t j = 0; j < g.n; ++j) {
                crow[j] = 0.0;
            }
        }
        const double* arow = g.a + i * g.lda;
        for (std::size_t p = 0; p < g.k; ++p) {
            const double av = arow[p];
            const double* brow = g.b + p * g.ldb;
            for (std::size_t j = 0; j < g.n; ++j) {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c)
{
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double mhat = m[i] / c.bias_correction1;
        const double vhat = v[i] / c.bias_correction2;
        param[i] = param[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
}

} // namespace artgan::kernels::scalar
