#include "artgan/trainer.hpp"

#include "artgan/binary_io.hpp"
#include "artgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace artgan {

using nlohmann::json;

// ---- config ----

void TrainConfig::validate() const
{
    model.validate();
    if (batch_size < 2) {
        throw ConfigError("batch_size must be >= 2");
    }
    if (!(learning_rate_g > 0.0) || !(learning_rate_d > 0.0)) {
        throw ConfigError("learning rates must be > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw ConfigError("Adam betas must lie in [0, 1) and eps must be > 0");
    }
    if (checkpoint_interval < 1 || fid_monitor_interval < 1 || r1_interval < 1) {
        throw ConfigError("checkpoint, FID monitor and R1 intervals must be >= 1");
    }
    if (fid_monitor_samples < 2) {
        throw ConfigError("fid_monitor_samples must be >= 2");
    }
    if (!(r1_gamma >= 0.0)) {
        throw ConfigError("r1_gamma must be >= 0");
    }
    if (!is_builtin_extractor(extractor)) {
        throw ConfigError("unknown feature extractor '" + extractor + "'");
    }
    if (!(ema_kimg >= 0.0) || !(ema_rampup >= 0.0)) {
        throw ConfigError("ema_kimg and ema_rampup must be >= 0");
    }
    if (!(stop_min_delta >= 0.0)) {
        throw ConfigError("stop_min_delta must be >= 0");
    }
}

json TrainConfig::to_json() const
{
    return {{"model", model.to_json()},
            {"batch_size", batch_size},
            {"learning_rate_g", learning_rate_g},
            {"learning_rate_d", learning_rate_d},
            {"adam_betas", {beta1, beta2}},
            {"adam_eps", adam_eps},
            {"total_iterations", total_iterations},
            {"checkpoint_interval", checkpoint_interval},
            {"fid_monitor_interval", fid_monitor_interval},
            {"fid_monitor_samples", fid_monitor_samples},
            {"extractor", extractor},
            {"seed", seed},
            {"augment_flip", augment_flip},
            {"r1_gamma", r1_gamma},
            {"r1_interval", r1_interval},
            {"ema_kimg", ema_kimg},
            {"ema_rampup", ema_rampup},
            {"stop_patience", stop_patience},
            {"stop_min_delta", stop_min_delta}};
}

TrainConfig TrainConfig::from_json(const json& doc)
{
    try {
        TrainConfig c;
        c.model = ModelConfig::from_json(doc.at("model"));
        c.batch_size = doc.at("batch_size").get<std::size_t>();
        c.learning_rate_g = doc.at("learning_rate_g").get<double>();
        c.learning_rate_d = doc.at("learning_rate_d").get<double>();
        c.beta1 = doc.at("adam_betas").at(0).get<double>();
        c.beta2 = doc.at("adam_betas").at(1).get<double>();
        c.adam_eps = doc.at("adam_eps").get<double>();
        c.total_iterations = doc.at("total_iterations").get<std::size_t>();
        c.checkpoint_interval = doc.at("checkpoint_interval").get<std::size_t>();
        c.fid_monitor_interval = doc.at("fid_monitor_interval").get<std::size_t>();
        c.fid_monitor_samples = doc.at("fid_monitor_samples").get<std::size_t>();
        c.extractor = doc.at("extractor").get<std::string>();
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.augment_flip = doc.at("augment_flip").get<bool>();
        c.r1_gamma = doc.at("r1_gamma").get<double>();
        c.r1_interval = doc.at("r1_interval").get<std::size_t>();
        c.ema_kimg = doc.at("ema_kimg").get<double>();
        c.ema_rampup = doc.at("ema_rampup").get<double>();
        c.stop_patience = doc.at("stop_patience").get<std::size_t>();
        c.stop_min_delta = doc.at("stop_min_delta").get<double>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed training config: ") + e.what());
    }
}

// ---- state ----

AdamState AdamState::for_params(const ParamSet& params) { return {params.zeros_like(), params.zeros_like(), 0}; }

namespace {

void round_params(ParamSet& p)
{
    for (auto& t : p.tensors()) {
        round_to_float(t.data());
    }
}

} // namespace

TrainState init_state(const TrainConfig& cfg)
{
    cfg.validate();
    TrainState s;
    Rng g_rng(derive_seed(cfg.seed, "init-generator", 0));
    Rng d_rng(derive_seed(cfg.seed, "init-discriminator", 0));
    s.generator = init_generator(cfg.model, g_rng);
    s.discriminator = init_discriminator(cfg.model, d_rng);
    round_params(s.generator);
    round_params(s.discriminator);
    s.generator_ema = s.generator;
    s.adam_g = AdamState::for_params(s.generator);
    s.adam_d = AdamState::for_params(s.discriminator);
    s.rng = Rng(derive_seed(cfg.seed, "train", 0)).state();
    return s;
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper)
{
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam_step: parameter, gradient and moment counts differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    kernels::AdamCoeffs c;
    c.lr = hyper.lr;
    c.beta1 = hyper.beta1;
    c.beta2 = hyper.beta2;
    c.eps = hyper.eps;
    c.bias_correction1 = 1.0 - std::pow(hyper.beta1, t);
    c.bias_correction2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.tensors()[i];
        Tensor& m = state.m.tensors()[i];
        Tensor& v = state.v.tensors()[i];
        require_same_shape(p, grads[i], "adam_step");
        require_same_shape(p, m, "adam_step");
        kernels::adam_update(p.size(), p.ptr(), grads[i].ptr(), m.ptr(), v.ptr(), c);
        round_to_float(p.data());
        round_to_float(m.data());
        round_to_float(v.data());
    }
}

namespace {

std::vector<Tensor> leaf_grads(const Gradients& grads, const BoundParams& bound)
{
    std::vector<Tensor> out;
    out.reserve(bound.vars().size());
    for (const Var& v : bound.vars()) {
        out.push_back(grads[v]);
    }
    return out;
}

// Gradient of sum(D(x)) w.r.t. the discriminator parameters and (optionally) x.
struct DiscGrad {
    std::vector<Tensor> params;
    Tensor input;
};

DiscGrad disc_sum_grad(const ParamSet& d, const ModelConfig& model, const Tensor& images, bool want_input)
{
    Tape tape;
    BoundParams p(tape, d, true);
    Var x = want_input ? tape.leaf(images) : tape.constant(images);
    Var total = ops::sum(discriminator_forward(p, model, x));
    const Gradients g = backward(tape, total);
    DiscGrad out{leaf_grads(g, p), want_input ? g[x] : Tensor::scalar(0.0)};
    return out;
}

} // namespace

R1Result r1_penalty(const ParamSet& d, const ModelConfig& model, const Tensor& real, double gamma)
{
    const Tensor g = disc_sum_grad(d, model, real, true).input;
    const std::size_t batch = real.dim(0);
    double sq = 0.0, gmax = 0.0;
    for (double v : g.data()) {
        sq += v * v;
        gmax = std::max(gmax, std::abs(v));
    }
    R1Result out;
    out.penalty = 0.5 * gamma * sq / static_cast<double>(batch);
    if (gmax == 0.0) {
        for (const auto& t : d.tensors()) {
            out.grads.push_back(Tensor::zeros(t.shape()));
        }
        return out;
    }
    // Largest pixel perturbation 1e-3 for inputs in [-1, 1].
    const double h = 1e-3 / gmax;
    Tensor plus = real, minus = real;
    for (std::size_t i = 0; i < real.size(); ++i) {
        plus[i] += h * g[i];
        minus[i] -= h * g[i];
    }
    out.grads = disc_sum_grad(d, model, plus, false).params;
    const auto gm = disc_sum_grad(d, model, minus, false).params;
    const double factor = gamma / static_cast<double>(batch) / (2.0 * h);
    for (std::size_t t = 0; t < out.grads.size(); ++t) {
        for (std::size_t i = 0; i < out.grads[t].size(); ++i) {
            out.grads[t][i] = factor * (out.grads[t][i] - gm[t][i]);
        }
    }
    return out;
}

double ema_beta(const TrainConfig& cfg, std::size_t batch, std::uint64_t images_seen)
{
    double half_life = cfg.ema_kimg * 1000.0;
    if (cfg.ema_rampup > 0.0) {
        half_life = std::min(half_life, static_cast<double>(images_seen) * cfg.ema_rampup);
    }
    return half_life > 0.0 ? std::pow(0.5, static_cast<double>(batch) / half_life) : 0.0;
}

TrainState train_step(const TrainState& state, const Tensor& real_batch, const TrainConfig& cfg)
{
    const ModelConfig& model = cfg.model;
    const std::size_t r = model.resolution;
    if (real_batch.rank() != 4 || real_batch.dim(1) != 3 || real_batch.dim(2) != r || real_batch.dim(3) != r) {
        throw ShapeError("training batch must be N x 3 x " + std::to_string(r) + " x " + std::to_string(r) + ", got " +
                         shape_string(real_batch.shape()));
    }
    const std::size_t batch = real_batch.dim(0);
    TrainState next = state;
    Rng rng = Rng::from_state(state.rng);

    // Discriminator update.
    const Tensor z_d = sample_latents(rng, batch, model.dim_z);
    const std::uint64_t noise_d = rng.next_u64();
    double loss_d = 0.0;
    std::vector<Tensor> grads_d;
    {
        Tape tape;
        BoundParams gp(tape, state.generator, false);
        BoundParams dp(tape, state.discriminator, true);
        Var fake = generator_forward(gp, model, tape.constant(z_d), noise_d);
        Var real = tape.constant(real_batch);
        Var loss = discriminator_loss(discriminator_forward(dp, model, real), discriminator_forward(dp, model, fake));
        loss_d = loss.value().item();
        grads_d = leaf_grads(backward(tape, loss), dp);
    }
    std::optional<double> r1;
    if (cfg.r1_gamma > 0.0 && state.iteration % cfg.r1_interval == 0) {
        // Lazy regularization: applied every r1_interval steps, scaled up to match.
        const R1Result pen = r1_penalty(state.discriminator, model, real_batch, cfg.r1_gamma);
        const double scale = static_cast<double>(cfg.r1_interval);
        for (std::size_t t = 0; t < grads_d.size(); ++t) {
            for (std::size_t i = 0; i < grads_d[t].size(); ++i) {
                grads_d[t][i] += scale * pen.grads[t][i];
            }
        }
        r1 = pen.penalty;
    }
    if (!std::isfinite(loss_d) || (r1 && !std::isfinite(*r1))) {
        throw DivergedTrainingError("discriminator loss became non-finite at iteration " +
                                        std::to_string(state.iteration),
                                    state);
    }
    adam_step(next.discriminator, grads_d, next.adam_d, {cfg.learning_rate_d, cfg.beta1, cfg.beta2, cfg.adam_eps});

    // Generator update against the updated discriminator.
    const Tensor z_g = sample_latents(rng, batch, model.dim_z);
    const std::uint64_t noise_g = rng.next_u64();
    double loss_g = 0.0;
    std::vector<Tensor> grads_g;
    {
        Tape tape;
        BoundParams gp(tape, state.generator, true);
        BoundParams dp(tape, next.discriminator, false);
        Var fake = generator_forward(gp, model, tape.constant(z_g), noise_g);
        Var loss = generator_loss(discriminator_forward(dp, model, fake));
        loss_g = loss.value().item();
        grads_g = leaf_grads(backward(tape, loss), gp);
    }
    if (!std::isfinite(loss_g)) {
        throw DivergedTrainingError("generator loss became non-finite at iteration " + std::to_string(state.iteration),
                                    state);
    }
    adam_step(next.generator, grads_g, next.adam_g, {cfg.learning_rate_g, cfg.beta1, cfg.beta2, cfg.adam_eps});

    const double beta = ema_beta(cfg, batch, (state.iteration + 1) * batch);
    for (std::size_t t = 0; t < next.generator.size(); ++t) {
        auto avg = next.generator_ema.tensors()[t].data();
        const auto cur = next.generator.tensors()[t].data();
        for (std::size_t i = 0; i < avg.size(); ++i) {
            avg[i] = cur[i] + (avg[i] - cur[i]) * beta;
        }
        round_to_float(avg);
    }

    next.loss_history.push_back({state.iteration, loss_d, loss_g, r1});
    next.rng = rng.state();
    next.iteration = state.iteration + 1;
    return next;
}

// ---- checkpoints ----

namespace {

constexpr std::string_view ckpt_magic = "AGFK";
constexpr std::uint32_t ckpt_version = 1;

struct NamedSet {
    const char* prefix;
    ParamSet TrainState::*params = nullptr;
    AdamState TrainState::*adam = nullptr;
    ParamSet AdamState::*moment = nullptr;
};

const std::array<NamedSet, 7> ckpt_sets{{
    {"G/", &TrainState::generator, nullptr, nullptr},
    {"G_ema/", &TrainState::generator_ema, nullptr, nullptr},
    {"D/", &TrainState::discriminator, nullptr, nullptr},
    {"G.adam_m/", nullptr, &TrainState::adam_g, &AdamState::m},
    {"G.adam_v/", nullptr, &TrainState::adam_g, &AdamState::v},
    {"D.adam_m/", nullptr, &TrainState::adam_d, &AdamState::m},
    {"D.adam_v/", nullptr, &TrainState::adam_d, &AdamState::v},
}};

template <class S>
auto& set_of(S& state, const NamedSet& ns)
{
    return ns.params ? state.*ns.params : (state.*ns.adam).*ns.moment;
}

json history_json(const TrainState& s)
{
    json losses = json::array();
    for (const auto& l : s.loss_history) {
        losses.push_back({l.iteration, l.loss_d, l.loss_g, l.r1 ? json(*l.r1) : json(nullptr)});
    }
    json fids = json::array();
    for (const auto& f : s.fid_history) {
        fids.push_back({f.iteration, f.fid});
    }
    return {{"iteration", s.iteration},
            {"adam_g_step", s.adam_g.step},
            {"adam_d_step", s.adam_d.step},
            {"loss_history", losses},
            {"fid_history", fids}};
}

} // namespace

std::vector<std::uint8_t> checkpoint_bytes(const TrainState& state, const TrainConfig& cfg)
{
    ByteWriter w;
    w.raw(ckpt_magic);
    w.u32(ckpt_version);
    const std::string doc = json{{"config", cfg.to_json()}, {"state", history_json(state)}}.dump();
    w.u64(doc.size());
    w.raw(doc);
    for (const NamedSet& ns : ckpt_sets) {
        const ParamSet& set = set_of(state, ns);
        for (std::size_t i = 0; i < set.size(); ++i) {
            const std::string name = ns.prefix + set.names()[i];
            const Tensor& t = set.tensors()[i];
            w.u32(static_cast<std::uint32_t>(name.size()));
            w.raw(name);
            w.u8(static_cast<std::uint8_t>(t.rank()));
            for (std::size_t d : t.shape()) {
                w.u64(d);
            }
            for (double v : t.data()) {
                w.f32(static_cast<float>(v));
            }
        }
    }
    for (std::uint64_t word : state.rng) {
        w.u64(word);
    }
    w.append_crc();
    return std::move(w).take();
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path)
{
    write_file_atomic(path, checkpoint_bytes(state, cfg));
}

Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes)
{
    {
        ByteReader head(bytes, "checkpoint");
        if (bytes.size() < 8 || head.str(4) != ckpt_magic) {
            throw FormatError("not a checkpoint file (bad magic)");
        }
        if (const auto version = head.u32(); version != ckpt_version) {
            throw FormatError("unsupported checkpoint version " + std::to_string(version));
        }
    }
    ByteReader r(verify_crc(bytes, "checkpoint"), "checkpoint");
    r.raw(8);
    const std::uint64_t doc_len = r.u64();
    if (doc_len > r.remaining()) {
        throw CorruptionError("checkpoint header length exceeds the file");
    }
    Checkpoint ck;
    json state_doc;
    try {
        const json doc = json::parse(r.str(doc_len));
        ck.config = TrainConfig::from_json(doc.at("config"));
        state_doc = doc.at("state");
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    // Expected layout from a fresh model of the stored configuration.
    const TrainState layout = init_state(ck.config);
    TrainState& s = ck.state;
    for (const NamedSet& ns : ckpt_sets) {
        const ParamSet& expect = set_of(layout, ns);
        ParamSet& out = set_of(s, ns);
        for (std::size_t i = 0; i < expect.size(); ++i) {
            const std::string want = ns.prefix + expect.names()[i];
            const std::string name = r.str(r.u32());
            if (name != want) {
                throw FormatError("checkpoint tensor '" + name + "' where '" + want + "' was expected");
            }
            Shape shape(r.u8());
            for (auto& d : shape) {
                d = r.u64();
            }
            if (shape != expect.tensors()[i].shape()) {
                throw FormatError("checkpoint tensor " + name + " has shape " + shape_string(shape));
            }
            Tensor t(shape);
            for (double& v : t.data()) {
                v = r.f32();
            }
            out.add(expect.names()[i], std::move(t));
        }
    }
    for (auto& word : s.rng) {
        word = r.u64();
    }
    if (r.remaining() != 0) {
        throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " unexpected trailing bytes");
    }
    try {
        s.iteration = state_doc.at("iteration").get<std::uint64_t>();
        s.adam_g.step = state_doc.at("adam_g_step").get<std::uint64_t>();
        s.adam_d.step = state_doc.at("adam_d_step").get<std::uint64_t>();
        for (const auto& l : state_doc.at("loss_history")) {
            LossRecord rec{l.at(0).get<std::uint64_t>(), l.at(1).get<double>(), l.at(2).get<double>(), std::nullopt};
            if (!l.at(3).is_null()) {
                rec.r1 = l.at(3).get<double>();
            }
            s.loss_history.push_back(rec);
        }
        for (const auto& f : state_doc.at("fid_history")) {
            s.fid_history.push_back({f.at(0).get<std::uint64_t>(), f.at(1).get<double>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint state is malformed: ") + e.what());
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_bytes(read_file(path)); }

// ---- monitoring ----

Tensor monitor_latents(const TrainConfig& cfg)
{
    Rng rng(derive_seed(cfg.seed, "monitor", 0));
    return sample_latents(rng, cfg.fid_monitor_samples, cfg.model.dim_z);
}

Tensor sample_images(const ParamSet& generator, const ModelConfig& model, const Tensor& latents,
                     std::uint64_t noise_seed)
{
    constexpr std::size_t chunk = 32;
    const std::size_t n = latents.dim(0), r = model.resolution, per = 3 * r * r;
    Tensor out({n, 3, r, r});
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        Tensor z({count, model.dim_z},
                 std::vector<double>(latents.ptr() + start * model.dim_z,
                                     latents.ptr() + (start + count) * model.dim_z));
        // Noise seeds are per chunk so chunking never changes an image's noise.
        const Tensor imgs = generate_images(generator, model, z, derive_seed(noise_seed, "chunk", start));
        std::copy_n(imgs.ptr(), count * per, out.ptr() + start * per);
    }
    return out;
}

double monitor_fid(TrainState& state, const FeatureSet& real_features, const Tensor& generated_images,
                   const std::string& extractor)
{
    const double value = fid(real_features, extract_features(generated_images, extractor));
    state.fid_history.push_back({state.iteration, value});
    return value;
}

double monitor_fid(TrainState& state, const FeatureSet& real_features, const TrainConfig& cfg)
{
    const Tensor imgs =
        sample_images(state.generator_ema, cfg.model, monitor_latents(cfg), derive_seed(cfg.seed, "monitor-noise", 0));
    return monitor_fid(state, real_features, imgs, cfg.extractor);
}

bool stop_rule(const std::vector<double>& h, std::size_t patience, double min_delta)
{
    if (patience < 1) {
        throw ConfigError("stop_rule patience must be >= 1");
    }
    if (h.size() <= patience) {
        return false;
    }
    const auto split = h.end() - static_cast<std::ptrdiff_t>(patience);
    const double best_before = *std::min_element(h.begin(), split);
    const double best_recent = *std::min_element(split, h.end());
    const bool improved = best_recent < best_before && best_before - best_recent >= min_delta;
    return !improved;
}

bool stop_rule(const std::vector<FidRecord>& h, std::size_t patience, double min_delta)
{
    std::vector<double> values;
    for (const auto& f : h) {
        values.push_back(f.fid);
    }
    return stop_rule(values, patience, min_delta);
}

// ---- loop ----

TrainResult run_training(const TrainConfig& cfg, const ImageDataset& data, TrainState state,
                         const TrainOptions& options)
{
    cfg.validate();
    if (data.resolution() != cfg.model.resolution) {
        throw ConfigError("dataset resolution " + std::to_string(data.resolution()) + " differs from model resolution " +
                          std::to_string(cfg.model.resolution));
    }
    TrainResult result;
    const auto monitor = [&] {
        if (!options.real_features) {
            return;
        }
        const double value = monitor_fid(state, *options.real_features, cfg);
        if (options.log) {
            *options.log << "iter " << state.iteration << " fid " << value << "\n";
        }
    };
    const bool monitored_here = !state.fid_history.empty() && state.fid_history.back().iteration == state.iteration;
    if (state.iteration == 0 && !monitored_here) {
        monitor();
    }
    std::size_t steps = 0;
    while (state.iteration < cfg.total_iterations && (options.max_steps == 0 || steps < options.max_steps)) {
        const Tensor batch = data.training_batch(cfg.batch_size, cfg.seed, state.iteration, cfg.augment_flip);
        state = train_step(state, batch, cfg);
        ++steps;
        if (options.log && state.iteration % 50 == 0) {
            const auto& l = state.loss_history.back();
            *options.log << "iter " << state.iteration << " loss_d " << l.loss_d << " loss_g " << l.loss_g << "\n";
        }
        const bool last = state.iteration == cfg.total_iterations;
        if (state.iteration % cfg.fid_monitor_interval == 0 || last) {
            monitor();
            if (options.real_features && cfg.stop_patience > 0 &&
                stop_rule(state.fid_history, cfg.stop_patience, cfg.stop_min_delta)) {
                result.stopped_early = !last;
            }
        }
        if (options.checkpoint_path && (state.iteration % cfg.checkpoint_interval == 0 || last ||
                                        result.stopped_early)) {
            try {
                save_checkpoint(state, cfg, *options.checkpoint_path);
                result.checkpoints_written.push_back(state.iteration);
            } catch (const IoError& e) {
                if (options.log) {
                    *options.log << "warning: checkpoint not written: " << e.what() << "\n";
                }
            }
        }
        if (result.stopped_early) {
            break;
        }
    }
    result.state = std::move(state);
    return result;
}

} // namespace artgan
