#include "artgan/errors.hpp"
#include "artgan/kernels.hpp"
#include "artgan/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace artgan::kernels {

namespace {

Isa initial_isa() noexcept
{
    const Isa best = detected_isa();
    if (const char* env = std::getenv("ARTGAN_ISA")) {
        if (std::string(env) == "scalar") {
            return Isa::scalar;
        }
    }
    return best;
}

std::atomic<Isa>& active_slot() noexcept
{
    static std::atomic<Isa> slot{initial_isa()};
    return slot;
}

// Minimum multiply-adds per thread before splitting a GEMM.
constexpr std::size_t kMinWorkPerThread = 1u << 16;

} // namespace

std::string_view isa_name(Isa isa) noexcept
{
    switch (isa) {
    case Isa::scalar:
        return "scalar";
    case Isa::avx2:
        return "avx2";
    }
    return "unknown";
}

Isa detected_isa() noexcept { return avx2::available() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() noexcept { return active_slot().load(); }

void set_active_isa(Isa isa)
{
    if (isa == Isa::avx2 && !avx2::available()) {
        throw ConfigError("AVX2 kernels requested but not supported by this CPU");
    }
    active_slot().store(isa);
}

void gemm(const GemmArgs& args)
{
    const Isa isa = active_isa();
    auto run = [isa](const GemmArgs& g) {
        if (isa == Isa::avx2) {
            avx2::gemm(g);
        } else {
            scalar::gemm(g);
        }
    };
    const std::size_t row_work = std::max<std::size_t>(1, args.n * args.k);
    const std::size_t min_rows = std::max<std::size_t>(4, kMinWorkPerThread / row_work);
    if (worker_threads() <= 1 || args.m <= min_rows) {
        run(args);
        return;
    }
    parallel_for(args.m, min_rows, [&](std::size_t begin, std::size_t end) {
        GemmArgs part = args;
        part.m = end - begin;
        part.a = args.a + begin * args.lda;
        part.c = args.c + begin * args.ldc;
        run(part);
    });
}

void adam_update(std::size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& coeffs)
{
    if (active_isa() == Isa::avx2) {
        avx2::adam_update(n, param, grad, m, v, coeffs);
    } else {
        scalar::adam_update(n, param, grad, m, v, coeffs);
    }
}

} // namespace artgan::kernels
