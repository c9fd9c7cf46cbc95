#include "artgan/binary_io.hpp"
#include "artgan/errors.hpp"
#include "artgan/metrics.hpp"
#include "artgan/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace artgan;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0, double shift = 0.0)
{
    Tensor t({rows, cols});
    Rng rng(seed);
    for (double& v : t.data()) {
        v = shift + scale * rng.normal();
    }
    return t;
}

Tensor matmul_ref(const Tensor& a, const Tensor& b)
{
    Tensor c({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) {
                acc += a(i, k) * b(k, j);
            }
            c(i, j) = acc;
        }
    }
    return c;
}

Tensor transpose_ref(const Tensor& a)
{
    Tensor t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < a.dim(1); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

double frobenius(const Tensor& a)
{
    double s = 0.0;
    for (double v : a.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

// B Bᵀ + 0.1 I is comfortably SPD.
Tensor random_spd(std::size_t d, std::uint64_t seed)
{
    const Tensor b = random_matrix(d, d, seed);
    Tensor a = matmul_ref(b, transpose_ref(b));
    for (std::size_t i = 0; i < d; ++i) {
        a(i, i) += 0.1;
    }
    return a;
}

// Orthogonal matrix from Gram-Schmidt on a random Gaussian matrix.
Tensor random_orthogonal(std::size_t d, std::uint64_t seed)
{
    Tensor q = random_matrix(d, d, seed);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                dot += q(i, j) * q(i, k);
            }
            for (std::size_t i = 0; i < d; ++i) {
                q(i, j) -= dot * q(i, k);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            norm += q(i, j) * q(i, j);
        }
        for (std::size_t i = 0; i < d; ++i) {
            q(i, j) /= std::sqrt(norm);
        }
    }
    return q;
}

GaussianStats univariate(double mu, double var)
{
    return {Tensor({1}, std::vector<double>{mu}), Tensor({1, 1}, std::vector<double>{var})};
}

// Brute-force unbiased MMD^2 straight from the definition.
double mmd2_oracle(const Tensor& x, const Tensor& y, double scale)
{
    const std::size_t m = x.dim(0), n = y.dim(0), d = x.dim(1);
    auto k = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            dot += a(i, t) * b(j, t);
        }
        return std::pow(scale * dot + 1.0, 3);
    };
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i != j) {
                xx += k(x, i, x, j);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) {
                yy += k(y, i, y, j);
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            xy += k(x, i, y, j);
        }
    }
    const double md = static_cast<double>(m), nd = static_cast<double>(n);
    return xx / (md * (md - 1)) + yy / (nd * (nd - 1)) - 2 * xy / (md * nd);
}

} // namespace

TEST_CASE("gaussian_stats")
{
    SUBCASE("two-point hand case")
    {
        const GaussianStats s = gaussian_stats(Tensor({2, 2}, std::vector<double>{0, 0, 2, 2}));
        CHECK(s.mu == Tensor({2}, std::vector<double>{1, 1}));
        CHECK(s.sigma == Tensor({2, 2}, std::vector<double>{2, 2, 2, 2}));
    }
    SUBCASE("identical rows give zero covariance")
    {
        Tensor x({5, 3});
        for (std::size_t i = 0; i < 5; ++i) {
            x(i, 0) = 1.5;
            x(i, 1) = -2.0;
            x(i, 2) = 0.25;
        }
        CHECK(gaussian_stats(x).sigma == Tensor::zeros({3, 3}));
    }
    SUBCASE("shapes and a two-pass oracle")
    {
        const Tensor x = random_matrix(30, 4, 1);
        const GaussianStats s = gaussian_stats(x);
        REQUIRE(s.mu.shape() == Shape{4});
        REQUIRE(s.sigma.shape() == Shape{4, 4});
        for (std::size_t a = 0; a < 4; ++a) {
            double ma = 0.0;
            for (std::size_t i = 0; i < 30; ++i) {
                ma += x(i, a);
            }
            ma /= 30;
            CHECK(std::abs(s.mu[a] - ma) <= 1e-14);
            for (std::size_t b = 0; b < 4; ++b) {
                double mb = 0.0, c = 0.0;
                for (std::size_t i = 0; i < 30; ++i) {
                    mb += x(i, b);
                }
                mb /= 30;
                for (std::size_t i = 0; i < 30; ++i) {
                    c += (x(i, a) - ma) * (x(i, b) - mb);
                }
                CHECK(std::abs(s.sigma(a, b) - c / 29) <= 1e-13);
            }
        }
    }
    SUBCASE("fewer than two rows")
    {
        CHECK_THROWS_AS(gaussian_stats(Tensor({1, 3})), InsufficientDataError);
    }
}

TEST_CASE("sqrtm_spd")
{
    SUBCASE("identity")
    {
        Tensor eye({4, 4});
        for (std::size_t i = 0; i < 4; ++i) {
            eye(i, i) = 1.0;
        }
        CHECK(max_abs_diff(sqrtm_spd(eye), eye) <= 1e-15);
    }
    SUBCASE("diagonal")
    {
        const Tensor s = sqrtm_spd(Tensor({2, 2}, std::vector<double>{4, 0, 0, 9}));
        CHECK(max_abs_diff(s, Tensor({2, 2}, std::vector<double>{2, 0, 0, 3})) <= 1e-12);
    }
    SUBCASE("multiply-back on random SPD matrices")
    {
        std::uint64_t seed = 100;
        for (std::size_t d : {2u, 8u, 64u}) {
            for (int rep = 0; rep < 5; ++rep) {
                const Tensor a = random_spd(d, seed++);
                const Tensor s = sqrtm_spd(a);
                Tensor diff = matmul_ref(s, s);
                for (std::size_t i = 0; i < diff.size(); ++i) {
                    diff[i] -= a[i];
                }
                CHECK(frobenius(diff) / frobenius(a) < 1e-8);
                CHECK(max_abs_diff(s, transpose_ref(s)) == 0.0);
            }
        }
    }
    SUBCASE("PSD with a zero eigenvalue")
    {
        // rank-1 matrix v vᵀ has square root v vᵀ / |v|
        const Tensor v({3, 1}, std::vector<double>{1, 2, 2});
        const Tensor a = matmul_ref(v, transpose_ref(v));
        Tensor expect = a;
        for (double& x : expect.data()) {
            x /= 3.0;
        }
        CHECK(max_abs_diff(sqrtm_spd(a), expect) <= 1e-12);
    }
    SUBCASE("errors")
    {
        CHECK_THROWS_AS(sqrtm_spd(Tensor({2, 3})), ShapeError);
        CHECK_THROWS_AS(sqrtm_spd(Tensor({2, 2}, std::vector<double>{1, 0.5, 0, 1})), ContractError);
    }
}

TEST_CASE("fid")
{
    SUBCASE("univariate closed form")
    {
        CHECK(std::abs(fid(univariate(0, 1), univariate(1, 4)) - 2.0) <= 1e-10);
        // (mu_r - mu_g)^2 + s_r^2 + s_g^2 - 2 s_r s_g for a few more pairs
        for (auto [m1, v1, m2, v2] : {std::array{0.5, 2.0, -1.0, 0.5}, std::array{3.0, 9.0, 3.0, 1.0}}) {
            const double expect = (m1 - m2) * (m1 - m2) + v1 + v2 - 2 * std::sqrt(v1) * std::sqrt(v2);
            CHECK(std::abs(fid(univariate(m1, v1), univariate(m2, v2)) - expect) <= 1e-12);
        }
    }
    SUBCASE("diagonal covariances match the per-axis closed form")
    {
        GaussianStats a{Tensor({3}, std::vector<double>{0, 1, 2}), Tensor({3, 3})};
        GaussianStats b{Tensor({3}, std::vector<double>{1, 1, 0}), Tensor({3, 3})};
        const double va[] = {1, 4, 0.25}, vb[] = {9, 1, 0.25};
        double expect = 1 + 0 + 4;
        for (std::size_t i = 0; i < 3; ++i) {
            a.sigma(i, i) = va[i];
            b.sigma(i, i) = vb[i];
            expect += va[i] + vb[i] - 2 * std::sqrt(va[i] * vb[i]);
        }
        CHECK(std::abs(fid(a, b) - expect) <= 1e-12);
    }
    const GaussianStats a = gaussian_stats(random_matrix(200, 32, 5));
    const GaussianStats b = gaussian_stats(random_matrix(200, 32, 6, 1.5, 0.3));
    SUBCASE("identical statistics")
    {
        CHECK(std::abs(fid(a, a)) < 1e-10);
        CHECK(fid(a, a) >= 0.0);
    }
    SUBCASE("symmetry")
    {
        CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-9);
    }
    SUBCASE("orthogonal invariance")
    {
        const Tensor q = random_orthogonal(32, 7);
        const auto rotate = [&](const GaussianStats& s) {
            GaussianStats r;
            r.mu = matmul_ref(s.mu.reshaped({1, 32}), q).reshaped({32});
            r.sigma = matmul_ref(matmul_ref(transpose_ref(q), s.sigma), q);
            for (std::size_t i = 0; i < 32; ++i) {
                for (std::size_t j = 0; j < i; ++j) {
                    const double avg = 0.5 * (r.sigma(i, j) + r.sigma(j, i));
                    r.sigma(i, j) = r.sigma(j, i) = avg;
                }
            }
            return r;
        };
        CHECK(std::abs(fid(rotate(a), rotate(b)) - fid(a, b)) <= 1e-9);
    }
    SUBCASE("shifting only the generated set adds |c|^2")
    {
        const Tensor x = random_matrix(100, 8, 8);
        Tensor shifted = x;
        const Tensor c = random_matrix(1, 8, 9);
        double c2 = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            c2 += c[j] * c[j];
            for (std::size_t i = 0; i < 100; ++i) {
                shifted(i, j) += c[j];
            }
        }
        const FeatureSet real{x, "t"}, gen{shifted, "t"};
        CHECK(std::abs(fid(real, gen) - c2) <= 1e-9);
    }
    SUBCASE("constant sets reduce to the mean term")
    {
        Tensor x({4, 3}, 1.0), y({4, 3}, -0.5);
        CHECK(std::abs(fid(FeatureSet{x, "t"}, FeatureSet{y, "t"}) - 3 * 2.25) <= 1e-12);
    }
    SUBCASE("guards")
    {
        CHECK_THROWS_AS(fid(univariate(0, 1), gaussian_stats(random_matrix(5, 2, 1))), ShapeError);
        CHECK_THROWS_AS(fid(FeatureSet{random_matrix(4, 2, 1), "pool"}, FeatureSet{random_matrix(4, 2, 2), "x"}),
                        ContractError);
    }
}

TEST_CASE("kid")
{
    SUBCASE("hand case")
    {
        const FeatureSet x{Tensor({2, 1}, std::vector<double>{1, 1}), "t"};
        const FeatureSet y{Tensor({2, 1}, std::vector<double>{0, 0}), "t"};
        KidConfig cfg;
        cfg.scale = 1.0;
        cfg.num_blocks = 1;
        const KidResult r = kid(x, y, cfg, 0);
        CHECK(r.mean == 7.0);
        CHECK(r.std == 0.0);
    }
    SUBCASE("identical constant vectors give exactly zero")
    {
        const FeatureSet x{Tensor({6, 4}, 0.3), "t"};
        KidConfig cfg;
        cfg.block_size = 4;
        CHECK(kid(x, x, cfg, 3).mean == 0.0);
    }
    SUBCASE("single full block matches the double-loop oracle")
    {
        const FeatureSet x{random_matrix(200, 8, 20), "t"};
        const FeatureSet y{random_matrix(200, 8, 21, 1.2, 0.1), "t"};
        KidConfig cfg;
        cfg.block_size = 200;
        cfg.num_blocks = 1;
        const double oracle = mmd2_oracle(x.matrix, y.matrix, 1.0 / 8);
        CHECK(std::abs(kid(x, y, cfg, 5).mean - oracle) <= 1e-10);
        CHECK(std::abs(mmd2_unbiased(x.matrix, y.matrix, 3, 1.0, 1.0 / 8) - oracle) <= 1e-10);
    }
    SUBCASE("same distribution is unbiased")
    {
        std::vector<double> values;
        for (std::uint64_t rep = 0; rep < 50; ++rep) {
            const FeatureSet x{random_matrix(200, 8, 1000 + 2 * rep), "t"};
            const FeatureSet y{random_matrix(200, 8, 1001 + 2 * rep), "t"};
            KidConfig cfg;
            cfg.block_size = 200;
            cfg.num_blocks = 1;
            values.push_back(kid(x, y, cfg, rep).mean);
        }
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / 50;
        double var = 0.0;
        for (double v : values) {
            var += (v - mean) * (v - mean);
        }
        const double se = std::sqrt(var / 49) / std::sqrt(50.0);
        CHECK(std::abs(mean) <= 3 * se);
    }
    SUBCASE("blocks are seeded and deterministic")
    {
        const FeatureSet x{random_matrix(60, 4, 30), "t"};
        const FeatureSet y{random_matrix(50, 4, 31, 1.0, 0.5), "t"};
        KidConfig cfg;
        cfg.block_size = 20;
        cfg.num_blocks = 7;
        const KidResult a = kid(x, y, cfg, 9), b = kid(x, y, cfg, 9);
        CHECK(a.mean == b.mean);
        CHECK(a.std == b.std);
        CHECK(a.std > 0.0);
        CHECK(kid(x, y, cfg, 10).mean != a.mean);
    }
    SUBCASE("guards")
    {
        const FeatureSet x{random_matrix(10, 4, 1), "t"};
        const FeatureSet y{random_matrix(8, 4, 2), "t"};
        KidConfig cfg;
        cfg.block_size = 9;
        CHECK_THROWS_AS(kid(x, y, cfg, 0), ConfigError);
        CHECK_THROWS_AS(kid(x, FeatureSet{y.matrix, "other"}, KidConfig{}, 0), ContractError);
    }
}

TEST_CASE("feature extraction")
{
    SUBCASE("pool dimensions and block-average oracle")
    {
        const Tensor imgs = random_matrix(2, 3 * 64 * 64, 40).reshaped({2, 3, 64, 64});
        const FeatureSet f = extract_features(imgs, "pool");
        REQUIRE(f.d() == 192);
        REQUIRE(f.n() == 2);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t by = 0; by < 8; ++by) {
                for (std::size_t bx = 0; bx < 8; ++bx) {
                    double acc = 0.0;
                    for (std::size_t y = 0; y < 8; ++y) {
                        for (std::size_t x = 0; x < 8; ++x) {
                            acc += imgs(1, c, by * 8 + y, bx * 8 + x);
                        }
                    }
                    CHECK(std::abs(f.matrix(1, (c * 8 + by) * 8 + bx) - acc / 64) <= 1e-12);
                }
            }
        }
    }
    SUBCASE("identical constant images give identical rows")
    {
        for (const char* id : {"pool", "randproj-16"}) {
            const FeatureSet f = extract_features(Tensor({4, 3, 16, 16}, 0.2), id);
            for (std::size_t i = 1; i < 4; ++i) {
                for (std::size_t j = 0; j < f.d(); ++j) {
                    CHECK(f.matrix(i, j) == f.matrix(0, j));
                }
            }
        }
    }
    SUBCASE("randproj is deterministic with k dims")
    {
        const Tensor imgs = random_matrix(3, 3 * 16 * 16, 41).reshaped({3, 3, 16, 16});
        const FeatureSet a = extract_features(imgs, "randproj-64");
        CHECK(a.d() == 64);
        CHECK(a.matrix == extract_features(imgs, "randproj-64").matrix);
    }
    SUBCASE("unknown ids")
    {
        const Tensor imgs({2, 3, 8, 8});
        CHECK_THROWS_AS(extract_features(imgs, "inception"), ConfigError);
        CHECK_THROWS_AS(extract_features(imgs, "randproj-"), ConfigError);
        CHECK_THROWS_AS(extract_features(imgs, "randproj-0"), ConfigError);
        CHECK_THROWS_AS(extract_features(Tensor({1, 3, 8, 8}), "pool"), InsufficientDataError);
    }
}

TEST_CASE("feature files")
{
    const auto path = std::filesystem::temp_directory_path() / ("artgan_feat_" + std::to_string(::getpid()) + ".feat");
    Tensor m = random_matrix(10, 16, 50);
    for (double& v : m.data()) {
        v = static_cast<float>(v);
    }
    const FeatureSet f{m, "randproj-16"};
    save_features(f, path);
    const FeatureSet back = load_features(path);
    CHECK(back.matrix == f.matrix);
    CHECK(back.extractor_id == f.extractor_id);

    std::vector<std::uint8_t> bytes = read_file(path);
    SUBCASE("truncation")
    {
        bytes.resize(bytes.size() - 9);
        CHECK_THROWS_AS(features_from_bytes(bytes), CorruptionError);
    }
    SUBCASE("bad magic")
    {
        bytes[0] = 'X';
        CHECK_THROWS_AS(features_from_bytes(bytes), FormatError);
    }
    SUBCASE("every single-byte corruption is detected")
    {
        for (std::size_t i = 4; i < bytes.size(); ++i) {
            auto copy = bytes;
            copy[i] ^= 0x20;
            CHECK_THROWS_AS(features_from_bytes(copy), CorruptionError);
        }
    }
    SUBCASE("declared size larger than the data")
    {
        ByteWriter w;
        w.raw("FEAT");
        w.u32(1);
        w.u32(1000000);
        w.u32(1000000);
        w.u16(1);
        w.raw("x");
        w.f32(1.0f);
        w.append_crc();
        CHECK_THROWS_AS(features_from_bytes(w.bytes()), FormatError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("evaluate and report")
{
    const FeatureSet real{random_matrix(40, 6, 60), "pool"};
    SUBCASE("identical sets")
    {
        KidConfig cfg;
        cfg.block_size = 20;
        const MetricReport r = evaluate(real, real, cfg, 1);
        CHECK(r.fid < 1e-10);
        CHECK(r.kid_mean <= 1e-10);
        CHECK(r.n_real == 40);
        CHECK(r.provenance.find("not comparable") != std::string::npos);
        CHECK(MetricReport::from_json(r.to_json()).to_json() == r.to_json());
    }
    SUBCASE("CSV layout")
    {
        MetricReport r;
        r.fid = 43.64;
        r.kid_mean = 0.012;
        CHECK(r.to_csv() == "Metric,FID,KID\nResults,43.64,0.012\n");
    }
}
