#pragma once

#include "artgan/autodiff.hpp"
#include "artgan/rng.hpp"
#include "artgan/tensor.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace artgan {

struct ModelConfig {
    std::size_t resolution = 64;
    std::size_t dim_z = 64;
    std::size_t dim_w = 64;
    std::size_t mapping_layers = 4;
    /// Feature maps at resolution r: min(channel_base / r, channel_max), at least 1.
    std::size_t channel_base = 512;
    std::size_t channel_max = 32;
    double leaky_slope = 0.2;
    double demod_eps = 1e-8;

    std::size_t channels_at(std::size_t res) const;
    /// log2(resolution) - 1 synthesis blocks, the first at 4x4.
    std::size_t num_blocks() const;
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
};

/// Named parameter tensors in a fixed order.
class ParamSet {
public:
    void add(std::string name, Tensor value);
    const Tensor& get(std::string_view name) const;
    Tensor& get(std::string_view name);
    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    std::vector<Tensor>& tensors() noexcept { return tensors_; }
    std::size_t total_elements() const;

    /// Same names and shapes, all zeros.
    ParamSet zeros_like() const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

/// Parameters registered on a tape, looked up by name during a forward pass.
class BoundParams {
public:
    /// differentiable = false binds the values as tape constants.
    BoundParams(Tape& tape, const ParamSet& params, bool differentiable = true);
    /// Use vars already on the tape, one per entry of `params` in order.
    BoundParams(Tape& tape, const ParamSet& params, std::vector<Var> vars);

    Var operator()(std::string_view name) const;
    const std::vector<Var>& vars() const noexcept { return vars_; }
    Tape& tape() const noexcept { return *tape_; }

private:
    Tape* tape_;
    const ParamSet* params_;
    std::vector<Var> vars_;
};

ParamSet init_generator(const ModelConfig& cfg, Rng& rng);
ParamSet init_discriminator(const ModelConfig& cfg, Rng& rng);

/// Modulate kernel[f, c, i, j] by style_scales[c], then divide each output
/// channel slice by sqrt(sum of its squares + eps).
Tensor demodulate_weights(const Tensor& kernel, const Tensor& style_scales, double eps = 1e-8);

/// Convolution of x (N x C x H x W) with a kernel modulated per sample by
/// styles (N x C), demodulated per output channel when `demodulate` is set.
/// Evaluated as scale-input, shared conv, scale-output, which equals running
/// each sample through demodulate_weights(weight, styles[n], eps).
Var modulated_conv(Var x, Var styles, Var weight, bool demodulate, double eps);

/// z (N x dim_z) -> w (N x dim_w): RMS-normalise each row, then the mapping MLP.
Var mapping_forward(const BoundParams& p, const ModelConfig& cfg, Var z);
Tensor mapping_forward(const ParamSet& params, const ModelConfig& cfg, const Tensor& z);

/// z (N x dim_z) -> images (N x 3 x R x R), linear output. Block b of image n
/// draws its per-pixel noise from derive_seed(noise_seed, "noise", 64 n + b),
/// so an image does not depend on the rest of its batch.
Var generator_forward(const BoundParams& p, const ModelConfig& cfg, Var z, std::uint64_t noise_seed);
Tensor generate_images(const ParamSet& params, const ModelConfig& cfg, const Tensor& z, std::uint64_t noise_seed);
/// Single latent (dim_z) -> 3 x R x R.
Tensor generator_forward(const Tensor& z, const ParamSet& params, const ModelConfig& cfg, std::uint64_t noise_seed);

/// images (N x 3 x R x R) -> logits (N x 1); higher means "real".
Var discriminator_forward(const BoundParams& p, const ModelConfig& cfg, Var images);
double discriminator_forward(const Tensor& image, const ParamSet& params, const ModelConfig& cfg);

struct GanLosses {
    double loss_d = 0.0;
    double loss_g = 0.0;
};

/// Non-saturating logistic losses for one real and one fake logit.
GanLosses gan_losses(double d_real, double d_fake);

/// mean softplus(fake) + mean softplus(-real)
Var discriminator_loss(Var real_logits, Var fake_logits);
/// mean softplus(-fake)
Var generator_loss(Var fake_logits);

/// Standard-normal latents, N x dim_z.
Tensor sample_latents(Rng& rng, std::size_t count, std::size_t dim_z);

} // namespace artgan
