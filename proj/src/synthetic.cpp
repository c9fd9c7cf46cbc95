#include "artgan/synthetic.hpp"

#include "artgan/image_io.hpp"
#include "artgan/rng.hpp"

#include <cmath>
#include <cstdio>

namespace artgan {

std::vector<Tensor> synthetic_shapes(std::size_t count, std::size_t resolution, std::uint64_t seed)
{
    std::vector<Tensor> out;
    out.reserve(count);
    const double r = static_cast<double>(resolution);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "shape", i));
        Tensor img({3, resolution, resolution});
        double bg[3];
        for (double& c : bg) {
            c = std::floor(40 + 80 * rng.uniform());
        }
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < resolution * resolution; ++p) {
                img[c * resolution * resolution + p] = bg[c];
            }
        }
        const std::size_t shapes = 1 + rng.below(2);
        for (std::size_t s = 0; s < shapes; ++s) {
            const bool disc = rng.uniform() < 0.5;
            const double cx = r * (0.25 + 0.5 * rng.uniform());
            const double cy = r * (0.25 + 0.5 * rng.uniform());
            const double size = r * (0.12 + 0.18 * rng.uniform());
            double col[3];
            for (double& c : col) {
                c = std::floor(255 * rng.uniform());
            }
            for (std::size_t y = 0; y < resolution; ++y) {
                for (std::size_t x = 0; x < resolution; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx;
                    const double dy = static_cast<double>(y) + 0.5 - cy;
                    const bool inside =
                        disc ? dx * dx + dy * dy <= size * size : std::abs(dx) <= size && std::abs(dy) <= size * 0.7;
                    if (!inside) {
                        continue;
                    }
                    for (std::size_t c = 0; c < 3; ++c) {
                        img[(c * resolution + y) * resolution + x] = col[c];
                    }
                }
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t resolution,
                            std::uint64_t seed)
{
    std::filesystem::create_directories(dir);
    const auto images = synthetic_shapes(count, resolution, seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor& t = images[i];
        Image im{resolution, resolution, 3, std::vector<std::uint8_t>(resolution * resolution * 3)};
        for (std::size_t p = 0; p < resolution * resolution; ++p) {
            for (std::size_t c = 0; c < 3; ++c) {
                im.pixels[p * 3 + c] = static_cast<std::uint8_t>(t[c * resolution * resolution + p]);
            }
        }
        char name[32];
        std::snprintf(name, sizeof name, "shape_%04zu.png", i);
        write_png(dir / name, im);
    }
}

} // namespace artgan
