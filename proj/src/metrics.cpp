#include "artgan/metrics.hpp"

#include "artgan/binary_io.hpp"
#include "artgan/dataset.hpp"
#include "artgan/errors.hpp"
#include "artgan/linalg.hpp"
#include "artgan/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <numeric>

namespace artgan {

using nlohmann::json;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

constexpr std::size_t pool_side = 8;
constexpr std::uint64_t randproj_seed = 0x5eedf00dULL;

std::size_t randproj_dims(const std::string& id)
{
    constexpr std::string_view prefix = "randproj-";
    if (id.rfind(prefix, 0) != 0) {
        return 0;
    }
    std::size_t k = 0;
    const char* first = id.data() + prefix.size();
    const char* last = id.data() + id.size();
    const auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec != std::errc() || ptr != last || k == 0) {
        return 0;
    }
    return k;
}

Eigen::Map<const Matrix> as_matrix(const Tensor& t)
{
    return {t.ptr(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

Tensor from_matrix(const Matrix& m)
{
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    std::copy_n(m.data(), m.size(), t.ptr());
    return t;
}

void require_square(const Tensor& a, const char* what)
{
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
        throw ShapeError(std::string(what) + " needs a square matrix, got " + shape_string(a.shape()));
    }
}

Eigen::SelfAdjointEigenSolver<Matrix> eigen_sym(const Matrix& a, Eigen::DecompositionOptions opts)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a, opts);
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigensolver did not converge; retry with jitter (+1e-6 I) on the covariance");
    }
    return solver;
}

} // namespace

bool is_builtin_extractor(const std::string& extractor_id)
{
    return extractor_id == "pool" || randproj_dims(extractor_id) > 0;
}

FeatureSet extract_features(const Tensor& images, const std::string& extractor_id)
{
    if (images.rank() != 4 || images.dim(1) != 3) {
        throw ShapeError("feature extraction expects n x 3 x H x W, got " + shape_string(images.shape()));
    }
    const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    if (n < 2) {
        throw InsufficientDataError("feature extraction needs at least 2 images, got " + std::to_string(n));
    }
    const std::size_t per = 3 * h * w;
    if (extractor_id == "pool") {
        const std::size_t d = 3 * pool_side * pool_side;
        Tensor out({n, d});
        for (std::size_t i = 0; i < n; ++i) {
            Tensor img({3, h, w}, std::vector<double>(images.ptr() + i * per, images.ptr() + (i + 1) * per));
            const Tensor pooled = resample(img, pool_side, pool_side);
            std::copy_n(pooled.ptr(), d, out.ptr() + i * d);
        }
        return {std::move(out), extractor_id};
    }
    if (const std::size_t k = randproj_dims(extractor_id); k > 0) {
        // Projection depends only on (k, input size), never on the data.
        Tensor proj({per, k});
        Rng rng(derive_seed(randproj_seed, "randproj-" + std::to_string(per), k));
        const double norm = 1.0 / std::sqrt(static_cast<double>(per));
        for (double& v : proj.data()) {
            v = rng.normal() * norm;
        }
        return {linalg::matmul(images.reshaped({n, per}), proj), extractor_id};
    }
    throw ConfigError("unknown feature extractor '" + extractor_id + "' (expected pool or randproj-<k>)");
}

GaussianStats gaussian_stats(const Tensor& matrix)
{
    if (matrix.rank() != 2) {
        throw ShapeError("feature matrix must be n x d, got " + shape_string(matrix.shape()));
    }
    const std::size_t n = matrix.dim(0), d = matrix.dim(1);
    if (n < 2) {
        throw InsufficientDataError("covariance needs at least 2 feature rows, got " + std::to_string(n));
    }
    const auto x = as_matrix(matrix);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Matrix centred = x.rowwise() - mu;
    Matrix sigma = (centred.transpose() * centred) / static_cast<double>(n - 1);
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    GaussianStats s{Tensor({d}), from_matrix(sigma)};
    std::copy_n(mu.data(), d, s.mu.ptr());
    return s;
}

GaussianStats gaussian_stats(const FeatureSet& features) { return gaussian_stats(features.matrix); }

Tensor sqrtm_spd(const Tensor& a)
{
    require_square(a, "sqrtm_spd");
    const auto m = as_matrix(a);
    const double tol = 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) {
        throw ContractError("sqrtm_spd: matrix is not symmetric; symmetrize the product first");
    }
    const Matrix sym = 0.5 * (m + m.transpose());
    const auto solver = eigen_sym(sym, Eigen::ComputeEigenvectors);
    const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix& v = solver.eigenvectors();
    Matrix s = v * roots.asDiagonal() * v.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    return from_matrix(s);
}

double fid(const GaussianStats& real, const GaussianStats& gen)
{
    const std::size_t d = real.mu.size();
    if (gen.mu.size() != d || real.sigma.shape() != Shape{d, d} || gen.sigma.shape() != Shape{d, d}) {
        throw ShapeError("fid: statistics have mismatched dimensions");
    }
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = real.mu[i] - gen.mu[i];
        mean_term += diff * diff;
    }
    // tr (S_r^1/2 S_g S_r^1/2)^1/2 equals the sum of singular values of
    // S_g^1/2 S_r^1/2; taking it from an SVD avoids square-rooting round-off
    // eigenvalues near zero, which matters for rank-deficient covariances.
    const Tensor root_r = sqrtm_spd(real.sigma);
    const Tensor root_g = sqrtm_spd(gen.sigma);
    const Matrix product = as_matrix(root_g) * as_matrix(root_r);
    Eigen::BDCSVD<Matrix> svd(product);
    if (svd.info() != Eigen::Success) {
        throw NumericError("SVD did not converge; retry with jitter (+1e-6 I) on the covariance");
    }
    const double trace_root = svd.singularValues().sum();
    const double value = mean_term + as_matrix(real.sigma).trace() + as_matrix(gen.sigma).trace() - 2.0 * trace_root;
    if (value < 0.0 && value >= -1e-8) {
        return 0.0;
    }
    return value;
}

namespace {

void require_same_extractor(const FeatureSet& a, const FeatureSet& b)
{
    if (a.extractor_id != b.extractor_id) {
        throw ContractError("feature sets come from different extractors: '" + a.extractor_id + "' vs '" +
                            b.extractor_id + "'");
    }
    if (a.d() != b.d()) {
        throw ShapeError("feature sets have different dimensions: " + std::to_string(a.d()) + " vs " +
                         std::to_string(b.d()));
    }
}

double poly_kernel(const double* x, const double* y, std::size_t d, unsigned degree, double offset, double scale)
{
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        dot += x[k] * y[k];
    }
    double base = scale * dot + offset, out = 1.0;
    for (unsigned p = 0; p < degree; ++p) {
        out *= base;
    }
    return out;
}

double mmd2_rows(const Tensor& x, const std::vector<std::size_t>& xi, const Tensor& y, const std::vector<std::size_t>& yi,
                 unsigned degree, double offset, double scale)
{
    const std::size_t d = x.dim(1);
    const double m = static_cast<double>(xi.size()), n = static_cast<double>(yi.size());
    const auto row = [d](const Tensor& t, std::size_t i) { return t.ptr() + i * d; };
    // Sums are taken relative to one cross-kernel value; the offset cancels in
    // the estimator (1 + 1 - 2) and makes constant kernels give exactly 0.
    const double k0 = poly_kernel(row(x, xi[0]), row(y, yi[0]), d, degree, offset, scale);
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::size_t a = 0; a < xi.size(); ++a) {
        for (std::size_t b = a + 1; b < xi.size(); ++b) {
            kxx += poly_kernel(row(x, xi[a]), row(x, xi[b]), d, degree, offset, scale) - k0;
        }
    }
    for (std::size_t a = 0; a < yi.size(); ++a) {
        for (std::size_t b = a + 1; b < yi.size(); ++b) {
            kyy += poly_kernel(row(y, yi[a]), row(y, yi[b]), d, degree, offset, scale) - k0;
        }
    }
    for (std::size_t a = 0; a < xi.size(); ++a) {
        for (std::size_t b = 0; b < yi.size(); ++b) {
            kxy += poly_kernel(row(x, xi[a]), row(y, yi[b]), d, degree, offset, scale) - k0;
        }
    }
    // Off-diagonal pairs were summed once each; the unbiased terms count both orders.
    return 2.0 * kxx / (m * (m - 1.0)) + 2.0 * kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (count == n) {
        return idx;
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

double fid(const FeatureSet& real, const FeatureSet& gen)
{
    require_same_extractor(real, gen);
    return fid(gaussian_stats(real), gaussian_stats(gen));
}

double mmd2_unbiased(const Tensor& x, const Tensor& y, unsigned degree, double offset, double scale)
{
    if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
        throw ShapeError("mmd2: feature matrices must be n x d with equal d");
    }
    if (x.dim(0) < 2 || y.dim(0) < 2) {
        throw InsufficientDataError("mmd2 needs at least 2 rows per set");
    }
    return mmd2_rows(x, sample_rows(x.dim(0), x.dim(0), 0), y, sample_rows(y.dim(0), y.dim(0), 0), degree, offset,
                     scale);
}

KidResult kid(const FeatureSet& real, const FeatureSet& gen, const KidConfig& cfg, std::uint64_t seed)
{
    require_same_extractor(real, gen);
    if (cfg.degree < 1) {
        throw ConfigError("KID kernel degree must be >= 1");
    }
    if (cfg.num_blocks < 1) {
        throw ConfigError("KID needs at least one block");
    }
    const std::size_t smallest = std::min(real.n(), gen.n());
    const std::size_t block = cfg.block_size == 0 ? std::min<std::size_t>(smallest, 100) : cfg.block_size;
    if (block < 2) {
        throw ConfigError("KID block size must be >= 2");
    }
    if (block > smallest) {
        throw ConfigError("KID block size " + std::to_string(block) + " exceeds the smaller set (" +
                          std::to_string(smallest) + " rows)");
    }
    const double scale = cfg.scale == 0.0 ? 1.0 / static_cast<double>(real.d()) : cfg.scale;
    std::vector<double> values(cfg.num_blocks);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        // One draw per block for both sets, so identical inputs pick identical rows.
        const std::uint64_t block_seed = derive_seed(seed, "kid-block", b);
        const auto xi = sample_rows(real.n(), block, block_seed);
        const auto yi = sample_rows(gen.n(), block, block_seed);
        values[b] = mmd2_rows(real.matrix, xi, gen.matrix, yi, cfg.degree, cfg.offset, scale);
    }
    KidResult r;
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - r.mean) * (v - r.mean);
    }
    r.std = std::sqrt(var / static_cast<double>(values.size()));
    return r;
}

// ---- feature files ----

namespace {
constexpr std::string_view feat_magic = "FEAT";
constexpr std::uint32_t feat_version = 1;
} // namespace

std::vector<std::uint8_t> features_to_bytes(const FeatureSet& f)
{
    if (f.matrix.rank() != 2) {
        throw ShapeError("feature matrix must be n x d");
    }
    if (f.n() > 0xffffffffu || f.d() > 0xffffffffu || f.extractor_id.size() > 0xffffu) {
        throw FormatError("feature set too large for the file format");
    }
    ByteWriter w;
    w.raw(feat_magic);
    w.u32(feat_version);
    w.u32(static_cast<std::uint32_t>(f.n()));
    w.u32(static_cast<std::uint32_t>(f.d()));
    w.u16(static_cast<std::uint16_t>(f.extractor_id.size()));
    w.raw(f.extractor_id);
    for (double v : f.matrix.data()) {
        w.f32(static_cast<float>(v));
    }
    w.append_crc();
    return std::move(w).take();
}

FeatureSet features_from_bytes(std::span<const std::uint8_t> bytes)
{
    ByteReader head(bytes, "feature file");
    if (bytes.size() < 4 || head.str(4) != feat_magic) {
        throw FormatError("not a feature file (bad magic)");
    }
    const auto payload = verify_crc(bytes, "feature file");
    ByteReader r(payload, "feature file");
    r.raw(4);
    if (const auto version = r.u32(); version != feat_version) {
        throw FormatError("unsupported feature file version " + std::to_string(version));
    }
    const std::uint64_t n = r.u32(), d = r.u32();
    const std::string id = r.str(r.u16());
    if (n * d * 4 != r.remaining()) {
        throw FormatError("feature file declares " + std::to_string(n) + " x " + std::to_string(d) +
                          " values but holds " + std::to_string(r.remaining()) + " data bytes");
    }
    if (n == 0 || d == 0) {
        throw FormatError("feature file is empty");
    }
    Tensor m({static_cast<std::size_t>(n), static_cast<std::size_t>(d)});
    for (double& v : m.data()) {
        v = r.f32();
    }
    if (!m.all_finite()) {
        throw FormatError("feature file contains non-finite values");
    }
    return {std::move(m), id};
}

void save_features(const FeatureSet& features, const std::filesystem::path& path)
{
    write_file_atomic(path, features_to_bytes(features));
}

FeatureSet load_features(const std::filesystem::path& path) { return features_from_bytes(read_file(path)); }

// ---- reports ----

json MetricReport::to_json() const
{
    return {{"fid", fid},       {"kid_mean", kid_mean},         {"kid_std", kid_std},      {"n_real", n_real},
            {"n_gen", n_gen},   {"extractor_id", extractor_id}, {"provenance", provenance}};
}

MetricReport MetricReport::from_json(const json& doc)
{
    try {
        MetricReport r;
        r.fid = doc.at("fid").get<double>();
        r.kid_mean = doc.at("kid_mean").get<double>();
        r.kid_std = doc.at("kid_std").get<double>();
        r.n_real = doc.at("n_real").get<std::size_t>();
        r.n_gen = doc.at("n_gen").get<std::size_t>();
        r.extractor_id = doc.at("extractor_id").get<std::string>();
        r.provenance = doc.at("provenance").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed metric report: ") + e.what());
    }
}

std::string MetricReport::to_csv() const
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "Results,%.2f,%.3f\n", fid, kid_mean);
    return std::string("Metric,FID,KID\n") + buf;
}

MetricReport evaluate(const FeatureSet& real, const FeatureSet& gen, const KidConfig& cfg, std::uint64_t seed)
{
    MetricReport r;
    r.fid = fid(real, gen);
    const KidResult k = kid(real, gen, cfg, seed);
    r.kid_mean = k.mean;
    r.kid_std = k.std;
    r.n_real = real.n();
    r.n_gen = gen.n();
    r.extractor_id = real.extractor_id;
    r.provenance = is_builtin_extractor(real.extractor_id)
                       ? "built-in '" + real.extractor_id +
                             "' features; values are not comparable with Inception-based FID/KID"
                       : "external features '" + real.extractor_id + "'";
    return r;
}

} // namespace artgan
