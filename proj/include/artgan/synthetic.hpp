#pragma once

#include "artgan/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace artgan {

/// Procedural corpus of flat-coloured discs and rectangles on a coloured
/// background, raw 0..255 values as 3 x R x R tensors.
std::vector<Tensor> synthetic_shapes(std::size_t count, std::size_t resolution, std::uint64_t seed);

/// Writes synthetic_shapes as shape_0000.png ... into dir (created if needed).
void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t resolution,
                            std::uint64_t seed);

} // namespace artgan
