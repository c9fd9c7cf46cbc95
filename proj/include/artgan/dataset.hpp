#pragma once

#include "artgan/image_io.hpp"
#include "artgan/tensor.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace artgan {

struct ImageRecord {
    std::string path;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    ImageFormat format = ImageFormat::png;
};

struct ManifestCounts {
    std::size_t scanned = 0;
    std::size_t kept = 0;
    std::size_t dropped_non_rgb = 0;
    std::size_t dropped_unreadable = 0;
};

/// Records are sorted by path; kept + dropped_non_rgb + dropped_unreadable == scanned.
struct DatasetManifest {
    std::vector<ImageRecord> records;
    std::size_t target_resolution = 64;
    ManifestCounts counts;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& doc);
};

/// Lists decodable PNG/JPEG files under `dir` (non-recursive). Files with other
/// extensions are ignored with a warning; image files that fail to decode
/// are counted as unreadable. Throws IoError for a missing directory and
/// EmptyDatasetError when nothing decodes.
DatasetManifest scan_directory(const std::filesystem::path& dir, std::ostream* warnings = nullptr);

/// Keeps 3-channel records only; grayscale, gray+alpha, RGBA and CMYK are dropped.
DatasetManifest filter_rgb(DatasetManifest manifest);

/// Square resample to target x target (power of two in [16, 1024]), aspect
/// ratio not preserved. Area average when shrinking an axis, bilinear
/// (half-pixel centres) when enlarging it.
Tensor resize_image(const Tensor& pixels, std::size_t target);

/// Same resampler without the target restrictions; pixels is C x H x W.
Tensor resample(const Tensor& pixels, std::size_t out_height, std::size_t out_width);

/// Decoded, resized RGB images held in memory (raw 0..255 values).
class ImageDataset {
public:
    static ImageDataset load(const DatasetManifest& manifest, std::size_t resolution);
    static ImageDataset from_images(std::vector<Tensor> images);

    std::size_t size() const noexcept { return images_.size(); }
    std::size_t resolution() const noexcept { return resolution_; }
    const Tensor& image(std::size_t i) const { return images_.at(i); }

    /// Batch for a training iteration, values mapped to [-1, 1]. Sampling is
    /// without replacement within an epoch: global slot t*batch+b indexes a
    /// per-epoch permutation derived from the seed. With augmentation on,
    /// each slot is mirrored horizontally with probability 0.5. Stateless, so
    /// any iteration can be regenerated after a resume.
    Tensor training_batch(std::size_t batch_size, std::uint64_t seed, std::uint64_t iteration,
                          bool augment_flip = false) const;

    /// Image indices drawn for an iteration (without the pixel work).
    std::vector<std::size_t> batch_indices(std::size_t batch_size, std::uint64_t seed,
                                           std::uint64_t iteration) const;

    /// All images in [-1, 1] as N x 3 x R x R.
    Tensor all_normalized() const;

private:
    std::vector<Tensor> images_;
    std::size_t resolution_ = 0;
};

} // namespace artgan
