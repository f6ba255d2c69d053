#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "lightmover/dataset.hpp"
#include "lightmover/tokenizer.hpp"
#include "lightmover/toy_dit.hpp"

namespace lightmover {

struct FlowState {
    MatrixXd x0;
    MatrixXd x1;
    double t = 0.0;
    MatrixXd x_t;
    MatrixXd v;
};

/// t * x1 + (1 - t) * x0.
MatrixXd interpolate_noisy(const MatrixXd& x1, const MatrixXd& x0, double t);
MatrixXd velocity_target(const MatrixXd& x1, const MatrixXd& x0);
FlowState make_flow_state(const MatrixXd& x1, const MatrixXd& x0, double t);

/// Mean squared error over the output block.
double flow_loss(const MatrixXd& pred, const MatrixXd& target);

/// Loss against a target laid out like the whole sequence. Only the rows of
/// the role=output block are compared, wherever that block sits.
double sequence_flow_loss(const MatrixXd& pred, const TokenSequence& seq, const MatrixXd& sequence_target);

/// Velocity for the output block only.
template <typename T>
MatrixXd predict_velocity(const ToyDiT<T>& model, const TokenSequence& seq, double t) {
    return model.forward(seq, t).template cast<double>();
}

/// Encoded conditions and ground truth for one dataset sample.
struct TrainingExample {
    TaskType task = TaskType::light_move;
    int index = 0;
    ConditionLatents conditions;
    LatentFrame target;
    ToneMappedImage source_display;
    ToneMappedImage target_display;
};

/// Builds the control frames from a relit pair and encodes them with the
/// given tokenizer factor and statistics.
TrainingExample build_example(const SampleRecord& record, const RelitPair& pair, int factor,
                              const NormalizationStats& stats);

/// Loads, relights and encodes every sample of a manifest.
std::vector<TrainingExample> load_examples(const DatasetManifest& manifest, int factor,
                                           const NormalizationStats& stats);

/// Statistics fitted on the tone-mapped source and target frames.
NormalizationStats fit_manifest_stats(const DatasetManifest& manifest);

/// Sequence with the given output-block latent tokens. Optional frames can be
/// dropped for condition dropout.
TokenSequence build_sequence(const TrainingExample& example, const MatrixXd& output_tokens,
                             const PruningPolicy& policy, bool drop_color = false, bool drop_intensity = false);

struct OptimizerConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Global gradient-norm clip; 0 disables.
    double grad_clip = 1.0;
    double ema_decay = 0.99;
    // The shadow tracks the weights exactly before this step.
    int ema_start_step = 1000;
    // Step size for the learnable pruning logits (soft mode only).
    double logit_lr = 1e-2;

    void validate() const;
    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizerState {
    OptimizerConfig config;
    std::vector<float> m;
    std::vector<float> v;
    std::vector<float> ema;
    std::int64_t step = 0;
    // Adam moments for the color and intensity pruning logits.
    std::vector<double> logit_m;
    std::vector<double> logit_v;

    static OptimizerState init(const OptimizerConfig& config, const std::vector<float>& params);
};

struct TrainConfig {
    int steps = 5000;
    int batch_size = 4;
    double condition_dropout = 0.1;
    int log_every = 1;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct StepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
};

/// One optimizer step on a batch. Per-item noise, t and dropout draws come
/// from the seed; per-item gradients are summed in batch order.
StepResult train_step(ToyDiT<float>& model, const std::vector<const TrainingExample*>& batch, OptimizerState& opt,
                      PruningPolicy& policy, const TrainConfig& config, std::uint64_t seed);

/// A fixed flow-matching problem: sequence (output block already holding x_t),
/// time and velocity target.
struct FlowItem {
    TokenSequence seq;
    double t = 0.0;
    MatrixXd target;
};

FlowItem make_flow_item(const TrainingExample& example, const PruningPolicy& policy, std::uint64_t seed);

double batch_loss(const ToyDiT<double>& model, const std::vector<FlowItem>& batch);

/// Analytic gradient of the mean flow loss over the batch.
std::vector<double> batch_gradient(const ToyDiT<double>& model, const std::vector<FlowItem>& batch);

struct GradCheckResult {
    double max_rel_error = 0.0;
    int checked = 0;
};

/// Compares analytic gradients against central differences on `count`
/// randomly chosen parameters. Relative error uses max(|a|, |n|, floor) as
/// denominator.
GradCheckResult grad_check(const ToyDiT<double>& model, const std::vector<FlowItem>& batch, double epsilon = 1e-4,
                           int count = 64, std::uint64_t seed = 0, double floor = 1e-6);

struct SamplerConfig {
    int num_steps = 20;
    std::uint64_t seed = 0;

    double dt() const noexcept { return 1.0 / num_steps; }
    void validate() const;
    friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

using VelocityField = std::function<MatrixXd(const TokenSequence&, double)>;
/// Called before each step with the sequence the velocity field will see.
using StepObserver = std::function<void(int, const TokenSequence&)>;

/// Euler integration from t = 0 to 1 starting at x0. Condition blocks are
/// restored from their clean copy before every step.
MatrixXd integrate(const VelocityField& field, TokenSequence seq, const MatrixXd& x0, const SamplerConfig& cfg,
                   const StepObserver& observer = {});

/// Draws x0 ~ N(0, 1) from the sampler seed and integrates.
MatrixXd sample(const VelocityField& field, const TokenSequence& seq, const SamplerConfig& cfg,
                const StepObserver& observer = {});

LatentFrame sample(const ToyDiT<float>& model, const TrainingExample& example, const PruningPolicy& policy,
                   const SamplerConfig& cfg, const StepObserver& observer = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ToyDitConfig model;
    int factor = 8;
    NormalizationStats stats;
    PruningPolicy policy;
    std::vector<float> params;
    OptimizerState optimizer;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointVersionError on a version mismatch, IoError otherwise.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with the given weights (EMA shadow when `use_ema` and present).
ToyDiT<float> model_from_checkpoint(const Checkpoint& ckpt, bool use_ema);

}  // namespace lightmover
