#include "artgan/model.hpp"

#include "artgan/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace artgan {

namespace o = ops;
using nlohmann::json;

// ---- config ----

std::size_t ModelConfig::channels_at(std::size_t res) const
{
    return std::max<std::size_t>(1, std::min(channel_base / res, channel_max));
}

std::size_t ModelConfig::num_blocks() const { return static_cast<std::size_t>(std::bit_width(resolution)) - 2; }

void ModelConfig::validate() const
{
    if (resolution < 8 || resolution > 1024 || !std::has_single_bit(resolution)) {
        throw ConfigError("model resolution must be a power of two in [8, 1024], got " + std::to_string(resolution));
    }
    if (dim_z < 1 || dim_w < 1 || mapping_layers < 1) {
        throw ConfigError("latent sizes and mapping depth must be >= 1");
    }
    if (channel_base < 1 || channel_max < 1) {
        throw ConfigError("channel_base and channel_max must be >= 1");
    }
    if (!(demod_eps >= 0.0) || !(leaky_slope >= 0.0)) {
        throw ConfigError("demod_eps and leaky_slope must be non-negative");
    }
}

json ModelConfig::to_json() const
{
    return {{"resolution", resolution},     {"dim_z", dim_z},       {"dim_w", dim_w},
            {"mapping_layers", mapping_layers}, {"channel_base", channel_base}, {"channel_max", channel_max},
            {"leaky_slope", leaky_slope},   {"demod_eps", demod_eps}};
}

ModelConfig ModelConfig::from_json(const json& doc)
{
    ModelConfig c;
    c.resolution = doc.at("resolution").get<std::size_t>();
    c.dim_z = doc.at("dim_z").get<std::size_t>();
    c.dim_w = doc.at("dim_w").get<std::size_t>();
    c.mapping_layers = doc.at("mapping_layers").get<std::size_t>();
    c.channel_base = doc.at("channel_base").get<std::size_t>();
    c.channel_max = doc.at("channel_max").get<std::size_t>();
    c.leaky_slope = doc.at("leaky_slope").get<double>();
    c.demod_eps = doc.at("demod_eps").get<double>();
    c.validate();
    return c;
}

// ---- parameters ----

void ParamSet::add(std::string name, Tensor value)
{
    if (contains(name)) {
        throw ContractError("duplicate parameter name " + name);
    }
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

std::size_t ParamSet::index_of(std::string_view name) const
{
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        throw ContractError("unknown parameter " + std::string(name));
    }
    return static_cast<std::size_t>(it - names_.begin());
}

bool ParamSet::contains(std::string_view name) const
{
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Tensor& ParamSet::get(std::string_view name) const { return tensors_[index_of(name)]; }
Tensor& ParamSet::get(std::string_view name) { return tensors_[index_of(name)]; }

std::size_t ParamSet::total_elements() const
{
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        n += t.size();
    }
    return n;
}

ParamSet ParamSet::zeros_like() const
{
    ParamSet z;
    for (std::size_t i = 0; i < size(); ++i) {
        z.add(names_[i], Tensor::zeros(tensors_[i].shape()));
    }
    return z;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool differentiable)
    : tape_(&tape), params_(&params)
{
    vars_.reserve(params.size());
    for (const auto& t : params.tensors()) {
        vars_.push_back(differentiable ? tape.leaf(t) : tape.constant(t));
    }
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, std::vector<Var> vars)
    : tape_(&tape), params_(&params), vars_(std::move(vars))
{
    if (vars_.size() != params.size()) {
        throw ContractError("BoundParams: " + std::to_string(vars_.size()) + " vars for " +
                            std::to_string(params.size()) + " parameters");
    }
}

Var BoundParams::operator()(std::string_view name) const { return vars_[params_->index_of(name)]; }

namespace {

Tensor normal_tensor(Rng& rng, Shape shape)
{
    Tensor t(std::move(shape));
    rng.fill_normal(t.data());
    return t;
}

std::string block(std::size_t i) { return "syn." + std::to_string(i); }

std::size_t block_resolution(std::size_t i) { return std::size_t{4} << i; }

double gain(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Runtime weight scaling by 1/sqrt(fan_in) (equalized learning rate).
Var equalized(Var kernel)
{
    const Shape& s = kernel.shape();
    return o::scale(kernel, gain(s[1] * s[2] * s[3]));
}

} // namespace

ParamSet init_generator(const ModelConfig& cfg, Rng& rng)
{
    cfg.validate();
    ParamSet p;
    for (std::size_t i = 0; i < cfg.mapping_layers; ++i) {
        const std::size_t in = i == 0 ? cfg.dim_z : cfg.dim_w;
        p.add("map." + std::to_string(i) + ".weight", normal_tensor(rng, {in, cfg.dim_w}));
        p.add("map." + std::to_string(i) + ".bias", Tensor::zeros({cfg.dim_w}));
    }
    const std::size_t c4 = cfg.channels_at(4);
    p.add("syn.const", normal_tensor(rng, {1, c4, 4, 4}));
    std::size_t in_ch = c4;
    for (std::size_t i = 0; i < cfg.num_blocks(); ++i) {
        const std::size_t out_ch = cfg.channels_at(block_resolution(i));
        p.add(block(i) + ".affine.weight", normal_tensor(rng, {cfg.dim_w, in_ch}));
        p.add(block(i) + ".affine.bias", Tensor::ones({in_ch}));
        p.add(block(i) + ".conv.weight", normal_tensor(rng, {out_ch, in_ch, 3, 3}));
        p.add(block(i) + ".noise_strength", Tensor::zeros({1}));
        p.add(block(i) + ".bias", Tensor::zeros({out_ch}));
        in_ch = out_ch;
    }
    p.add("syn.torgb.affine.weight", normal_tensor(rng, {cfg.dim_w, in_ch}));
    p.add("syn.torgb.affine.bias", Tensor::ones({in_ch}));
    p.add("syn.torgb.weight", normal_tensor(rng, {3, in_ch, 1, 1}));
    p.add("syn.torgb.bias", Tensor::zeros({3}));
    return p;
}

ParamSet init_discriminator(const ModelConfig& cfg, Rng& rng)
{
    cfg.validate();
    ParamSet p;
    p.add("disc.fromrgb.weight", normal_tensor(rng, {cfg.channels_at(cfg.resolution), 3, 1, 1}));
    p.add("disc.fromrgb.bias", Tensor::zeros({cfg.channels_at(cfg.resolution)}));
    for (std::size_t res = cfg.resolution; res > 4; res /= 2) {
        const std::string name = "disc." + std::to_string(res);
        p.add(name + ".weight", normal_tensor(rng, {cfg.channels_at(res / 2), cfg.channels_at(res), 3, 3}));
        p.add(name + ".bias", Tensor::zeros({cfg.channels_at(res / 2)}));
    }
    const std::size_t c4 = cfg.channels_at(4);
    p.add("disc.final.weight", normal_tensor(rng, {c4, c4, 3, 3}));
    p.add("disc.final.bias", Tensor::zeros({c4}));
    p.add("disc.dense.weight", normal_tensor(rng, {c4 * 16, 1}));
    p.add("disc.dense.bias", Tensor::zeros({1}));
    return p;
}

Tensor demodulate_weights(const Tensor& kernel, const Tensor& style_scales, double eps)
{
    if (kernel.rank() != 4 || style_scales.size() != kernel.dim(1)) {
        throw ShapeError("demodulate_weights: kernel " + shape_string(kernel.shape()) + " vs scales " +
                         shape_string(style_scales.shape()));
    }
    const std::size_t filters = kernel.dim(0), channels = kernel.dim(1);
    const std::size_t taps = kernel.dim(2) * kernel.dim(3);
    Tensor out(kernel.shape());
    for (std::size_t f = 0; f < filters; ++f) {
        double sq = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t t = 0; t < taps; ++t) {
                const std::size_t idx = (f * channels + c) * taps + t;
                out[idx] = style_scales[c] * kernel[idx];
                sq += out[idx] * out[idx];
            }
        }
        const double norm = std::sqrt(sq + eps);
        for (std::size_t k = f * channels * taps; k < (f + 1) * channels * taps; ++k) {
            out[k] /= norm;
        }
    }
    return out;
}

namespace {

// Style scales for a layer: w * A / sqrt(dim_w) + bias.
Var affine(const BoundParams& p, const std::string& prefix, const ModelConfig& cfg, Var w)
{
    Var weight = o::scale(p(prefix + ".weight"), gain(cfg.dim_w));
    return o::add_channel_bias(o::matmul(w, weight), p(prefix + ".bias"));
}

Tensor block_noise(std::uint64_t noise_seed, std::size_t batch, std::size_t block_index, std::size_t res)
{
    Tensor noise({batch, 1, res, res});
    for (std::size_t n = 0; n < batch; ++n) {
        Rng rng(derive_seed(noise_seed, "noise", n * 64 + block_index));
        rng.fill_normal(std::span<double>(noise.ptr() + n * res * res, res * res));
    }
    return noise;
}

} // namespace

Var modulated_conv(Var x, Var styles, Var weight, bool demodulate, double eps)
{
    const Shape& ks = weight.shape();
    Var y = o::conv2d(o::scale_channels(x, styles), weight, 1, ks[2] / 2);
    if (!demodulate) {
        return y;
    }
    Var wsq = o::sum_trailing(o::square(weight), 2);                        // F x C
    Var norms = o::matmul(o::square(styles), o::transpose(wsq));            // N x F
    return o::scale_channels(y, o::rsqrt(o::add_scalar(norms, eps)));
}

Var mapping_forward(const BoundParams& p, const ModelConfig& cfg, Var z)
{
    if (z.shape().size() != 2 || z.shape()[1] != cfg.dim_z) {
        throw ShapeError("mapping expects N x " + std::to_string(cfg.dim_z) + " latents, got " +
                         shape_string(z.shape()));
    }
    Var h = o::normalize_rms_rows(z);
    for (std::size_t i = 0; i < cfg.mapping_layers; ++i) {
        const std::string name = "map." + std::to_string(i);
        const std::size_t fan_in = i == 0 ? cfg.dim_z : cfg.dim_w;
        h = o::matmul(h, o::scale(p(name + ".weight"), gain(fan_in)));
        h = o::leaky_relu(o::add_channel_bias(h, p(name + ".bias")), cfg.leaky_slope);
    }
    return h;
}

Tensor mapping_forward(const ParamSet& params, const ModelConfig& cfg, const Tensor& z)
{
    Tape tape;
    BoundParams p(tape, params, false);
    const Tensor zz = z.rank() == 1 ? z.reshaped({1, z.size()}) : z;
    return mapping_forward(p, cfg, tape.constant(zz)).value();
}

namespace {

void check_generator_layout(const BoundParams& p, const ModelConfig& cfg)
{
    const auto expect = [&](const std::string& name, const Shape& shape) {
        Shape got;
        try {
            got = p(name).shape();
        } catch (const ContractError&) {
            throw ConfigError("generator parameters lack " + name + " needed at resolution " +
                              std::to_string(cfg.resolution));
        }
        if (got != shape) {
            throw ConfigError("generator parameter " + name + " has shape " + shape_string(got) + ", expected " +
                              shape_string(shape));
        }
    };
    std::size_t in_ch = cfg.channels_at(4);
    expect("syn.const", {1, in_ch, 4, 4});
    for (std::size_t i = 0; i < cfg.num_blocks(); ++i) {
        const std::size_t out_ch = cfg.channels_at(block_resolution(i));
        expect(block(i) + ".conv.weight", {out_ch, in_ch, 3, 3});
        expect(block(i) + ".affine.weight", {cfg.dim_w, in_ch});
        in_ch = out_ch;
    }
    expect("syn.torgb.weight", {3, in_ch, 1, 1});
    bool extra = false;
    try {
        p(block(cfg.num_blocks()) + ".conv.weight");
        extra = true;
    } catch (const ContractError&) {
    }
    if (extra) {
        throw ConfigError("generator parameters have more blocks than resolution " + std::to_string(cfg.resolution) +
                          " allows");
    }
}

} // namespace

Var generator_forward(const BoundParams& p, const ModelConfig& cfg, Var z, std::uint64_t noise_seed)
{
    cfg.validate();
    check_generator_layout(p, cfg);
    Tape& tape = p.tape();
    const std::size_t batch = z.shape().at(0);
    Var w = mapping_forward(p, cfg, z);

    Var cst = p("syn.const");
    const std::size_t c4 = cst.shape()[1];
    Var x = o::matmul(tape.constant(Tensor::ones({batch, 1})), o::reshape(cst, {1, c4 * 16}));
    x = o::reshape(x, {batch, c4, 4, 4});

    const std::size_t blocks = cfg.num_blocks();
    for (std::size_t i = 0; i < blocks; ++i) {
        const std::string name = block(i);
        const std::size_t res = block_resolution(i);
        Var styles = affine(p, name + ".affine", cfg, w);
        x = modulated_conv(x, styles, equalized(p(name + ".conv.weight")), true, cfg.demod_eps);
        Var noise = tape.constant(block_noise(noise_seed, batch, i, res));
        x = o::add_scaled_noise(x, noise, p(name + ".noise_strength"));
        x = o::leaky_relu(o::add_channel_bias(x, p(name + ".bias")), cfg.leaky_slope);
        if (i + 1 < blocks) {
            x = o::upsample2x(x);
        }
    }
    Var styles = affine(p, "syn.torgb.affine", cfg, w);
    Var rgb = modulated_conv(x, styles, equalized(p("syn.torgb.weight")), false, cfg.demod_eps);
    rgb = o::add_channel_bias(rgb, p("syn.torgb.bias"));
    if (rgb.shape() != Shape{batch, 3, cfg.resolution, cfg.resolution}) {
        throw ConfigError("generator produced " + shape_string(rgb.shape()) + " for resolution " +
                          std::to_string(cfg.resolution));
    }
    return rgb;
}

Tensor generate_images(const ParamSet& params, const ModelConfig& cfg, const Tensor& z, std::uint64_t noise_seed)
{
    Tape tape;
    BoundParams p(tape, params, false);
    return generator_forward(p, cfg, tape.constant(z), noise_seed).value();
}

Tensor generator_forward(const Tensor& z, const ParamSet& params, const ModelConfig& cfg, std::uint64_t noise_seed)
{
    if (z.size() != cfg.dim_z) {
        throw ShapeError("latent has " + std::to_string(z.size()) + " values, expected " + std::to_string(cfg.dim_z));
    }
    const Tensor out = generate_images(params, cfg, z.reshaped({1, cfg.dim_z}), noise_seed);
    return out.reshaped({3, cfg.resolution, cfg.resolution});
}

Var discriminator_forward(const BoundParams& p, const ModelConfig& cfg, Var images)
{
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != cfg.resolution || s[3] != cfg.resolution) {
        throw ShapeError("discriminator expects N x 3 x " + std::to_string(cfg.resolution) + " x " +
                         std::to_string(cfg.resolution) + ", got " + shape_string(s));
    }
    const std::size_t batch = s[0];
    Var x = o::conv2d(images, o::scale(p("disc.fromrgb.weight"), gain(3)));
    x = o::leaky_relu(o::add_channel_bias(x, p("disc.fromrgb.bias")), cfg.leaky_slope);
    for (std::size_t res = cfg.resolution; res > 4; res /= 2) {
        const std::string name = "disc." + std::to_string(res);
        Var weight = p(name + ".weight");
        const Shape& ws = weight.shape();
        x = o::conv2d(x, o::scale(weight, gain(ws[1] * 9)), 1, 1);
        x = o::leaky_relu(o::add_channel_bias(x, p(name + ".bias")), cfg.leaky_slope);
        x = o::downsample2x(x);
    }
    Var weight = p("disc.final.weight");
    x = o::conv2d(x, o::scale(weight, gain(weight.shape()[1] * 9)), 1, 1);
    x = o::leaky_relu(o::add_channel_bias(x, p("disc.final.bias")), cfg.leaky_slope);
    const std::size_t features = x.value().size() / batch;
    x = o::reshape(x, {batch, features});
    Var logits = o::matmul(x, o::scale(p("disc.dense.weight"), gain(features)));
    return o::add_channel_bias(logits, p("disc.dense.bias"));
}

double discriminator_forward(const Tensor& image, const ParamSet& params, const ModelConfig& cfg)
{
    Tape tape;
    BoundParams p(tape, params, false);
    const Tensor batch = image.reshaped({1, 3, image.shape().at(1), image.shape().at(2)});
    return discriminator_forward(p, cfg, tape.constant(batch)).value().item();
}

namespace {
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
} // namespace

GanLosses gan_losses(double d_real, double d_fake)
{
    return {softplus(d_fake) + softplus(-d_real), softplus(-d_fake)};
}

Var discriminator_loss(Var real_logits, Var fake_logits)
{
    return o::add(o::mean(o::softplus(fake_logits)), o::mean(o::softplus(o::scale(real_logits, -1.0))));
}

Var generator_loss(Var fake_logits) { return o::mean(o::softplus(o::scale(fake_logits, -1.0))); }

Tensor sample_latents(Rng& rng, std::size_t count, std::size_t dim_z)
{
    Tensor z({count, dim_z});
    rng.fill_normal(z.data());
    return z;
}

} // namespace artgan
