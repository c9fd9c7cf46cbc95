#include "artgan/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace artgan {

std::uint64_t splitmix64(std::uint64_t& x) noexcept
{
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) noexcept
{
    // FNV-1a over the tag, then mixed with seed and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t x = seed ^ h;
    std::uint64_t a = splitmix64(x);
    x ^= index * 0xd1b54a32d192ed03ULL;
    return a ^ splitmix64(x);
}

Rng::Rng(std::uint64_t seed)
{
    std::uint64_t x = seed;
    for (auto& word : s_) {
        word = splitmix64(x);
    }
}

Rng Rng::from_state(const State& state)
{
    Rng rng;
    rng.s_ = state;
    return rng;
}

std::uint64_t Rng::next_u64() noexcept
{
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept
{
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept
{
    if (n <= 1) {
        return 0;
    }
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r = next_u64();
    while (r >= limit) {
        r = next_u64();
    }
    return r % n;
}

void Rng::fill_normal(std::span<double> out) noexcept
{
    for (auto& v : out) {
        v = normal();
    }
}

} // namespace artgan
