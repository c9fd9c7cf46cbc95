#pragma once

#include "artgan/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace artgan {

enum class ImageFormat { png, jpeg };

std::string_view format_name(ImageFormat format) noexcept;
std::optional<ImageFormat> format_from_extension(const std::filesystem::path& path);

struct ImageInfo {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0; // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA (or CMYK for JPEG)
    ImageFormat format = ImageFormat::png;
};

/// 8-bit interleaved pixels.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Header-only inspection. Throws FormatError when the file cannot be decoded.
ImageInfo probe_image(const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

/// Throws IoError on failure.
void write_png(const std::filesystem::path& path, const Image& image);
void write_jpeg(const std::filesystem::path& path, const Image& image, int quality = 95);

/// RGB image -> Tensor[3 x H x W] with raw 0..255 values.
Tensor image_to_planar(const Image& image);
/// Tensor[3 x H x W] in [-1, 1] -> 8-bit RGB, clamped at export.
Image planar_to_image(const Tensor& pixels);

} // namespace artgan
