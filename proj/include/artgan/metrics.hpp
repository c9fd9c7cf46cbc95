#pragma once

#include "artgan/tensor.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace artgan {

/// n x d feature vectors tagged with the extractor that produced them.
struct FeatureSet {
    Tensor matrix;
    std::string extractor_id;

    std::size_t n() const { return matrix.dim(0); }
    std::size_t d() const { return matrix.dim(1); }
};

struct GaussianStats {
    Tensor mu;    // d
    Tensor sigma; // d x d
};

struct KidConfig {
    unsigned degree = 3;
    double offset = 1.0;
    /// 0 selects 1/d.
    double scale = 0.0;
    /// 0 selects min(n_real, n_gen, 100).
    std::size_t block_size = 0;
    std::size_t num_blocks = 10;
};

struct KidResult {
    double mean = 0.0;
    /// Population standard deviation across blocks.
    double std = 0.0;
};

/// Built-in extractors: "pool" (area-average to 8x8, d = 192) and
/// "randproj-<k>" (fixed seeded Gaussian projection of the raw pixels).
/// images: n x 3 x R x R in [-1, 1].
FeatureSet extract_features(const Tensor& images, const std::string& extractor_id);
bool is_builtin_extractor(const std::string& extractor_id);

GaussianStats gaussian_stats(const FeatureSet& features);
GaussianStats gaussian_stats(const Tensor& matrix);

/// Principal square root of a symmetric PSD matrix by eigendecomposition,
/// negative eigenvalues clamped to 0.
Tensor sqrtm_spd(const Tensor& a);

/// ||mu_r - mu_g||^2 + tr(S_r + S_g - 2 (S_r^1/2 S_g S_r^1/2)^1/2),
/// with results in [-1e-8, 0) clamped to 0. The trace term is evaluated as
/// the nuclear norm of S_g^1/2 S_r^1/2, which has the same value.
double fid(const GaussianStats& real, const GaussianStats& gen);
/// Same, after checking both sets came from the same extractor.
double fid(const FeatureSet& real, const FeatureSet& gen);

/// Unbiased MMD^2 with k(x, y) = (scale <x, y> + offset)^degree over
/// num_blocks seeded subsamples of block_size rows from each set.
KidResult kid(const FeatureSet& real, const FeatureSet& gen, const KidConfig& cfg, std::uint64_t seed);
/// Unbiased MMD^2 over the full sets (one block of everything).
double mmd2_unbiased(const Tensor& x, const Tensor& y, unsigned degree, double offset, double scale);

/// Feature file: "FEAT" | u32 version | u32 n | u32 d | u16 id length | id |
/// n*d f32 LE row-major | CRC-32. Values are stored as float.
void save_features(const FeatureSet& features, const std::filesystem::path& path);
FeatureSet load_features(const std::filesystem::path& path);
std::vector<std::uint8_t> features_to_bytes(const FeatureSet& features);
FeatureSet features_from_bytes(std::span<const std::uint8_t> bytes);

struct MetricReport {
    double fid = 0.0;
    double kid_mean = 0.0;
    double kid_std = 0.0;
    std::size_t n_real = 0;
    std::size_t n_gen = 0;
    std::string extractor_id;
    std::string provenance;

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& doc);
    /// "Metric,FID,KID" header and one "Results,<fid>,<kid>" row.
    std::string to_csv() const;
};

MetricReport evaluate(const FeatureSet& real, const FeatureSet& gen, const KidConfig& cfg, std::uint64_t seed);

} // namespace artgan
