#include "artgan/dataset.hpp"

#include "artgan/errors.hpp"
#include "artgan/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

namespace artgan {

namespace fs = std::filesystem;
using nlohmann::json;

json DatasetManifest::to_json() const
{
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"path", r.path},
                        {"width", r.width},
                        {"height", r.height},
                        {"channels", r.channels},
                        {"format", format_name(r.format)}});
    }
    return {{"target_resolution", target_resolution},
            {"counts",
             {{"scanned", counts.scanned},
              {"kept", counts.kept},
              {"dropped_non_rgb", counts.dropped_non_rgb},
              {"dropped_unreadable", counts.dropped_unreadable}}},
            {"records", recs}};
}

DatasetManifest DatasetManifest::from_json(const json& doc)
{
    try {
        DatasetManifest m;
        m.target_resolution = doc.at("target_resolution").get<std::size_t>();
        const json& c = doc.at("counts");
        m.counts = {c.at("scanned").get<std::size_t>(), c.at("kept").get<std::size_t>(),
                    c.at("dropped_non_rgb").get<std::size_t>(), c.at("dropped_unreadable").get<std::size_t>()};
        for (const auto& r : doc.at("records")) {
            const std::string fmt = r.at("format").get<std::string>();
            if (fmt != "png" && fmt != "jpeg") {
                throw FormatError("manifest record has unknown format '" + fmt + "'");
            }
            m.records.push_back({r.at("path").get<std::string>(), r.at("width").get<std::size_t>(),
                                 r.at("height").get<std::size_t>(), r.at("channels").get<std::size_t>(),
                                 fmt == "png" ? ImageFormat::png : ImageFormat::jpeg});
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
}

DatasetManifest scan_directory(const fs::path& dir, std::ostream* warnings)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw IoError("data directory does not exist: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    DatasetManifest manifest;
    for (const auto& file : files) {
        const auto format = format_from_extension(file);
        if (!format) {
            if (warnings) {
                *warnings << "warning: ignoring non-image file " << file.string() << "\n";
            }
            continue;
        }
        ++manifest.counts.scanned;
        try {
            const ImageInfo info = probe_image(file);
            if (info.width < 1 || info.height < 1) {
                throw FormatError("empty image");
            }
            manifest.records.push_back({file.string(), info.width, info.height, info.channels, info.format});
        } catch (const Error& e) {
            ++manifest.counts.dropped_unreadable;
            if (warnings) {
                *warnings << "warning: " << e.what() << "\n";
            }
        }
    }
    manifest.counts.kept = manifest.records.size();
    if (manifest.records.empty()) {
        throw EmptyDatasetError("no decodable PNG or JPEG images in " + dir.string());
    }
    return manifest;
}

DatasetManifest filter_rgb(DatasetManifest manifest)
{
    const auto before = manifest.records.size();
    std::erase_if(manifest.records, [](const ImageRecord& r) { return r.channels != 3; });
    manifest.counts.dropped_non_rgb += before - manifest.records.size();
    manifest.counts.kept = manifest.records.size();
    return manifest;
}

namespace {

struct Tap {
    std::size_t index;
    double weight;
};

// Per-output-sample source taps for one axis.
std::vector<std::vector<Tap>> axis_taps(std::size_t src, std::size_t dst)
{
    std::vector<std::vector<Tap>> taps(dst);
    if (src == dst) {
        for (std::size_t j = 0; j < dst; ++j) {
            taps[j] = {{j, 1.0}};
        }
        return taps;
    }
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    if (dst < src) {
        // Area average: output j covers [j*ratio, (j+1)*ratio) of the source.
        for (std::size_t j = 0; j < dst; ++j) {
            const double lo = static_cast<double>(j) * ratio;
            const double hi = static_cast<double>(j + 1) * ratio;
            const auto first = static_cast<std::size_t>(std::floor(lo));
            const auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
            for (std::size_t i = first; i < last; ++i) {
                const double overlap =
                    std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
                if (overlap > 0) {
                    taps[j].push_back({i, overlap / ratio});
                }
            }
        }
        return taps;
    }
    for (std::size_t j = 0; j < dst; ++j) {
        double x = (static_cast<double>(j) + 0.5) * ratio - 0.5;
        x = std::clamp(x, 0.0, static_cast<double>(src - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(x));
        const std::size_t i1 = std::min(src - 1, i0 + 1);
        const double frac = x - static_cast<double>(i0);
        if (frac == 0.0 || i0 == i1) {
            taps[j] = {{i0, 1.0}};
        } else {
            taps[j] = {{i0, 1.0 - frac}, {i1, frac}};
        }
    }
    return taps;
}

} // namespace

Tensor resample(const Tensor& pixels, std::size_t out_h, std::size_t out_w)
{
    if (pixels.rank() != 3) {
        throw ShapeError("resample expects C x H x W, got " + shape_string(pixels.shape()));
    }
    const std::size_t channels = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    if (h == out_h && w == out_w) {
        return pixels;
    }
    const auto row_taps = axis_taps(h, out_h);
    const auto col_taps = axis_taps(w, out_w);
    Tensor tmp({channels, h, out_w});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            const double* src = pixels.ptr() + (c * h + y) * w;
            double* dst = tmp.ptr() + (c * h + y) * out_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (const Tap& t : col_taps[x]) {
                    acc += t.weight * src[t.index];
                }
                dst[x] = acc;
            }
        }
    }
    Tensor out({channels, out_h, out_w});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            double* dst = out.ptr() + (c * out_h + y) * out_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (const Tap& t : row_taps[y]) {
                    acc += t.weight * tmp[(c * h + t.index) * out_w + x];
                }
                dst[x] = acc;
            }
        }
    }
    return out;
}

Tensor resize_image(const Tensor& pixels, std::size_t target)
{
    if (target < 16 || target > 1024 || !std::has_single_bit(target)) {
        throw ConfigError("resize target must be a power of two in [16, 1024], got " + std::to_string(target));
    }
    return resample(pixels, target, target);
}

ImageDataset ImageDataset::load(const DatasetManifest& manifest, std::size_t resolution)
{
    if (manifest.records.empty()) {
        throw EmptyDatasetError("dataset manifest has no RGB images");
    }
    std::vector<Tensor> images;
    images.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        const Image img = read_image(rec.path);
        if (img.channels != 3) {
            throw ContractError("non-RGB image in filtered manifest: " + rec.path);
        }
        images.push_back(resize_image(image_to_planar(img), resolution));
    }
    ImageDataset ds;
    ds.images_ = std::move(images);
    ds.resolution_ = resolution;
    return ds;
}

ImageDataset ImageDataset::from_images(std::vector<Tensor> images)
{
    if (images.empty()) {
        throw EmptyDatasetError("no images");
    }
    const Shape shape = images.front().shape();
    if (shape.size() != 3 || shape[0] != 3 || shape[1] != shape[2]) {
        throw ShapeError("dataset images must be 3 x R x R, got " + shape_string(shape));
    }
    for (const auto& im : images) {
        if (im.shape() != shape) {
            throw ShapeError("dataset images must share one shape");
        }
    }
    ImageDataset ds;
    ds.resolution_ = shape[1];
    ds.images_ = std::move(images);
    return ds;
}

std::vector<std::size_t> ImageDataset::batch_indices(std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t iteration) const
{
    if (images_.empty()) {
        throw EmptyDatasetError("empty dataset");
    }
    if (batch_size < 1) {
        throw ConfigError("batch size must be >= 1");
    }
    const std::uint64_t n = images_.size();
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    std::uint64_t cached_epoch = ~std::uint64_t{0};
    std::vector<std::size_t> perm(n);
    for (std::size_t b = 0; b < batch_size; ++b) {
        const std::uint64_t slot = iteration * batch_size + b;
        const std::uint64_t epoch = slot / n;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(derive_seed(seed, "epoch", epoch));
            rng.shuffle(perm);
            cached_epoch = epoch;
        }
        out.push_back(perm[slot % n]);
    }
    return out;
}

Tensor ImageDataset::training_batch(std::size_t batch_size, std::uint64_t seed, std::uint64_t iteration,
                                    bool augment_flip) const
{
    const auto indices = batch_indices(batch_size, seed, iteration);
    const std::size_t r = resolution_;
    Tensor batch({batch_size, 3, r, r});
    for (std::size_t b = 0; b < batch_size; ++b) {
        const Tensor& src = images_[indices[b]];
        bool flip = false;
        if (augment_flip) {
            Rng coin(derive_seed(seed, "flip", iteration * batch_size + b));
            flip = coin.uniform() < 0.5;
        }
        double* dst = batch.ptr() + b * 3 * r * r;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < r; ++y) {
                for (std::size_t x = 0; x < r; ++x) {
                    const std::size_t sx = flip ? r - 1 - x : x;
                    dst[(c * r + y) * r + x] = src[(c * r + y) * r + sx] / 127.5 - 1.0;
                }
            }
        }
    }
    return batch;
}

Tensor ImageDataset::all_normalized() const
{
    const std::size_t r = resolution_, per = 3 * r * r;
    Tensor out({images_.size(), 3, r, r});
    for (std::size_t i = 0; i < images_.size(); ++i) {
        for (std::size_t k = 0; k < per; ++k) {
            out[i * per + k] = images_[i][k] / 127.5 - 1.0;
        }
    }
    return out;
}

} // namespace artgan
