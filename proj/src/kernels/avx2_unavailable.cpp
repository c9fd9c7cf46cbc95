// Non-x86 builds: the AVX2 entry points exist but report unavailability.

#include "artgan/errors.hpp"
#include "artgan/kernels.hpp"

namespace artgan::kernels::avx2 {

bool available() noexcept { return false; }

void gemm(const GemmArgs&) { throw ConfigError("AVX2 kernels are not built for this architecture"); }

void adam_update(std::size_t, double*, const double*, double*, double*, const AdamCoeffs&)
{
    throw ConfigError("AVX2 kernels are not built for this architecture");
}

} // namespace artgan::kernels::avx2
