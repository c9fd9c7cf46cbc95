#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace artgan {

/// xoshiro256** generator. The whole state is four words so it can travel
/// inside a checkpoint; normal deviates use Box-Muller without a cached
/// second value, so the four words fully determine the stream.
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0);

    static Rng from_state(const State& state);
    const State& state() const noexcept { return s_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double normal() noexcept;
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

    void fill_normal(std::span<double> out) noexcept;

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    State s_{};
};

std::uint64_t splitmix64(std::uint64_t& x) noexcept;

/// Stable stream derivation: combines a base seed with a tag and an index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept;

} // namespace artgan
