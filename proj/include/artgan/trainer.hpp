#pragma once

#include "artgan/dataset.hpp"
#include "artgan/errors.hpp"
#include "artgan/metrics.hpp"
#include "artgan/model.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

namespace artgan {

struct TrainConfig {
    ModelConfig model;
    std::size_t batch_size = 16;
    double learning_rate_g = 2e-3;
    double learning_rate_d = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    std::size_t total_iterations = 2000;
    std::size_t checkpoint_interval = 5;
    std::size_t fid_monitor_interval = 100;
    std::size_t fid_monitor_samples = 200;
    std::string extractor = "pool";
    std::uint64_t seed = 1;
    bool augment_flip = false;
    /// 0 disables the R1 penalty.
    double r1_gamma = 1.0;
    std::size_t r1_interval = 16;
    /// Half-life of the generator weight average, in thousands of images;
    /// 0 makes the average track the generator exactly.
    double ema_kimg = 5.0;
    /// Caps the half-life at ema_rampup * images seen so far (0 disables).
    double ema_rampup = 0.05;
    /// Early stop on a flat FID curve; 0 disables.
    std::size_t stop_patience = 0;
    double stop_min_delta = 0.0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& doc);
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::uint64_t step = 0;

    static AdamState for_params(const ParamSet& params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct LossRecord {
    std::uint64_t iteration = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    /// Set on iterations that applied the lazy R1 penalty.
    std::optional<double> r1;
    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct FidRecord {
    std::uint64_t iteration = 0;
    double fid = 0.0;
    friend bool operator==(const FidRecord&, const FidRecord&) = default;
};

struct TrainState {
    std::uint64_t iteration = 0;
    ParamSet generator;
    /// Exponential moving average of the generator weights; used for
    /// monitoring and sampling.
    ParamSet generator_ema;
    ParamSet discriminator;
    AdamState adam_g;
    AdamState adam_d;
    std::array<std::uint64_t, 4> rng{};
    std::vector<LossRecord> loss_history;
    std::vector<FidRecord> fid_history;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Non-finite loss; carries the last state whose losses were all finite.
class DivergedTrainingError : public NumericError {
public:
    DivergedTrainingError(const std::string& what, TrainState last)
        : NumericError(what), last_(std::make_shared<TrainState>(std::move(last)))
    {
    }
    const TrainState& last_state() const noexcept { return *last_; }

private:
    std::shared_ptr<const TrainState> last_;
};

/// Fresh parameters and optimizer state; all randomness derives from cfg.seed.
/// Parameters are stored at float precision so checkpoints are lossless.
TrainState init_state(const TrainConfig& cfg);

/// Decay applied to the weight average after an update of `batch` images
/// that brings the total to images_seen.
double ema_beta(const TrainConfig& cfg, std::size_t batch, std::uint64_t images_seen);

struct AdamHyper {
    double lr = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// One bias-corrected Adam step over every tensor, then rounds parameters
/// and moments to float precision.
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper);

struct R1Result {
    double penalty = 0.0;
    /// Gradient of the penalty w.r.t. each discriminator tensor.
    std::vector<Tensor> grads;
};

/// R1 penalty gamma/2 * mean_n |grad_x D(x_n)|^2 at the real batch. The
/// parameter gradient is a central difference of grad_theta sum D along the
/// input gradient direction (a Hessian-vector product).
R1Result r1_penalty(const ParamSet& discriminator, const ModelConfig& model, const Tensor& real, double gamma);

/// One discriminator update on (real batch, fresh fakes) followed by one
/// generator update on fresh fakes.
TrainState train_step(const TrainState& state, const Tensor& real_batch, const TrainConfig& cfg);

/// Checkpoint file: "AGFK" | u32 version | u64 JSON length | JSON (config and
/// scalar state) | tensor records | RNG u64 x 4 | CRC-32.
std::vector<std::uint8_t> checkpoint_bytes(const TrainState& state, const TrainConfig& cfg);
void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path);

struct Checkpoint {
    TrainState state;
    TrainConfig config;
};
Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Latents used by every FID monitor call of a run (fixed, independent of
/// the training RNG so monitoring never perturbs training).
Tensor monitor_latents(const TrainConfig& cfg);

/// FID of fid_monitor_samples generated images against real_features;
/// appended to state.fid_history.
double monitor_fid(TrainState& state, const FeatureSet& real_features, const TrainConfig& cfg);
/// Same bookkeeping for an externally produced image set.
double monitor_fid(TrainState& state, const FeatureSet& real_features, const Tensor& generated_images,
                   const std::string& extractor);

/// True when the best FID of the last `patience` points does not beat the
/// best earlier value by at least min_delta (and strictly).
bool stop_rule(const std::vector<double>& fid_history, std::size_t patience, double min_delta);
bool stop_rule(const std::vector<FidRecord>& fid_history, std::size_t patience, double min_delta);

/// Generated images in [-1, 1]-ish linear range, n x 3 x R x R, produced in chunks.
Tensor sample_images(const ParamSet& generator, const ModelConfig& model, const Tensor& latents,
                     std::uint64_t noise_seed);

struct TrainOptions {
    /// Rolling checkpoint file written every checkpoint_interval iterations.
    std::optional<std::filesystem::path> checkpoint_path;
    /// Monitor FID against these features when set.
    const FeatureSet* real_features = nullptr;
    std::ostream* log = nullptr;
    /// Stop after this many iterations of this call (0 = run to total_iterations).
    std::size_t max_steps = 0;
};

struct TrainResult {
    TrainState state;
    std::vector<std::uint64_t> checkpoints_written;
    bool stopped_early = false;
};

TrainResult run_training(const TrainConfig& cfg, const ImageDataset& data, TrainState state,
                         const TrainOptions& options = {});

} // namespace artgan
