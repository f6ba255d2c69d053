#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lightmover/bounding_box.hpp"
#include "lightmover/image.hpp"

namespace lightmover {

using MatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-RGB-channel standardization applied to every latent value.
struct NormalizationStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

NormalizationStats fit_normalization_stats(const std::vector<const Image*>& images);

/// Space-to-depth latent grid. Row (gy * grid_w + gx) holds the f x f patch
/// flattened as ((py * f + px) * 3 + c). A frame produced by pooling keeps the
/// token width and records the pooling factor relative to the full grid.
struct LatentFrame {
    int grid_w = 0;
    int grid_h = 0;
    int factor = 1;
    int pool = 1;
    MatrixXd tokens;
    NormalizationStats stats;

    int token_count() const noexcept { return grid_w * grid_h; }
    int token_dim() const noexcept { return 3 * factor * factor; }
    int full_grid_w() const noexcept { return grid_w * pool; }
    int full_grid_h() const noexcept { return grid_h * pool; }
    void validate() const;
};

LatentFrame encode_frame(const Image& image, int factor, const NormalizationStats& stats = {});
Image decode_frame(const LatentFrame& latent);

/// Average-pools f x f token blocks. Throws ConfigError unless f divides the grid.
LatentFrame pool_latent(const LatentFrame& latent, int f);

/// Repeats each token over the full-resolution cells it covers.
LatentFrame broadcast_to_full(const LatentFrame& latent);

enum class ConditionType : std::uint8_t { reference = 0, object, movement, color, intensity, output };
inline constexpr int kConditionTypeCount = 6;

enum class Role : std::uint8_t { input = 0, output = 1 };
inline constexpr int kRoleCount = 2;

std::string_view to_string(ConditionType c) noexcept;

/// Position of a token in the four MSPE subspaces. Spatial coordinates are
/// expressed in full-resolution grid cells; a pooled token sits at the center
/// of the cells it covers.
struct PositionTag {
    double w = 0.0;
    double h = 0.0;
    double t = 0.0;
    ConditionType c = ConditionType::reference;
    Role r = Role::input;

    bool consistent() const noexcept { return (c == ConditionType::output) == (r == Role::output); }
    friend bool operator==(const PositionTag&, const PositionTag&) = default;
};

/// Fixed frame slot per condition type; dropped frames leave their slot empty.
inline int frame_slot(ConditionType c) noexcept { return static_cast<int>(c); }

struct FrameBlock {
    ConditionType type = ConditionType::reference;
    int start = 0;
    int count = 0;
    int grid_w = 0;
    int grid_h = 0;
    int pool = 1;
    bool soft = false;
};

struct TokenSequence {
    MatrixXd tokens;
    std::vector<PositionTag> tags;
    std::vector<FrameBlock> blocks;
    int full_grid_w = 0;
    int full_grid_h = 0;

    int size() const noexcept { return static_cast<int>(tags.size()); }
    int output_block_count() const noexcept;
    /// The unique output block; throws ContractError otherwise.
    const FrameBlock& output_block() const;
    const FrameBlock* find_block(ConditionType c) const noexcept;
    int condition_token_count() const noexcept;
    void validate() const;
};

enum class PruneMode : std::uint8_t { hard, soft };

struct PruningPolicy {
    double tau = 0.2;
    std::vector<int> candidates{1, 2, 4, 8};
    std::vector<double> color_logits;
    std::vector<double> intensity_logits;
    PruneMode mode = PruneMode::hard;
    bool spatial = true;
    bool nonspatial = true;
    bool prune_object = false;
    // Weight of the expected-retained-token penalty used when logits are trained.
    double efficiency_weight = 0.01;

    /// Logits start at log(f^2): the prior favors compression in proportion to
    /// the token reduction each candidate buys.
    static std::vector<double> prior_logits(const std::vector<int>& candidates);
    static PruningPolicy defaults();
    /// Keeps every token.
    static PruningPolicy disabled();
    void validate() const;
};

/// Area-ratio rule for spatial control frames.
LatentFrame prune_spatial(const LatentFrame& move_latent, const BoundingBox& src, const BoundingBox& tgt,
                          double tau);

/// Per-side factor prune_spatial would apply (1 means unchanged).
int spatial_prune_factor(int grid_w, int grid_h, double ratio, double tau);

std::vector<double> softmax(const std::vector<double>& logits);
std::size_t argmax(const std::vector<double>& logits);

/// Learnable-ratio pruning for non-spatial frames. Hard mode pools by the
/// argmax candidate; soft mode returns the softmax-weighted mix of the
/// pool-then-broadcast representations and keeps the full token count.
/// Throws ConfigError unless every candidate divides the grid.
LatentFrame prune_nonspatial(const LatentFrame& latent, const std::vector<double>& logits,
                             const std::vector<int>& candidates, PruneMode mode);

/// Gradient of a scalar loss w.r.t. the logits of a soft prune, given the
/// gradient w.r.t. its output tokens.
std::vector<double> soft_prune_logit_grad(const LatentFrame& latent, const std::vector<double>& logits,
                                          const std::vector<int>& candidates, const MatrixXd& grad_tokens);

/// Expected retained-token fraction sum_k p_k / f_k^2 and its logit gradient.
double expected_retained_fraction(const std::vector<double>& logits, const std::vector<int>& candidates,
                                  std::vector<double>* grad = nullptr);

struct ConditionLatents {
    LatentFrame reference;
    LatentFrame object;
    LatentFrame movement;
    std::optional<LatentFrame> color;
    std::optional<LatentFrame> intensity;
    BoundingBox src_box;
    BoundingBox tgt_box;
};

/// Concatenates [reference, object, movement, color, intensity, output] with
/// their position tags, pruning conditions according to the policy.
TokenSequence assemble_sequence(const ConditionLatents& conditions, const std::optional<LatentFrame>& output,
                                const PruningPolicy& policy);

/// Rotary layout of one attention head: W, H and T pairs occupy consecutive
/// dimensions; condition type and role enter as additive embeddings.
struct MspeConfig {
    int head_dim = 32;
    double base = 10000.0;
    int dim_w = 12;
    int dim_h = 12;
    int dim_t = 8;
    int train_len_w = 4;
    int train_len_h = 4;
    int train_len_t = 6;

    void validate() const;
    friend bool operator==(const MspeConfig&, const MspeConfig&) = default;
};

/// Additive tables for the condition-type and role subspaces.
struct MspeTables {
    MatrixXd condition;  // kConditionTypeCount x head_dim
    MatrixXd role;       // kRoleCount x head_dim
};

/// theta_k = base^(-2k/d) for k < d/2, with the NTK base rescaling
/// base * (eval/train)^(d/(d-2)) when eval_len exceeds train_len.
std::vector<double> ntk_scale_frequencies(int dim, double base, int eval_len, int train_len);

/// Frequencies for the three rotary axes at the given evaluation extents.
struct RotaryFrequencies {
    std::vector<double> w;
    std::vector<double> h;
    std::vector<double> t;
};
RotaryFrequencies rotary_frequencies(const MspeConfig& cfg, int eval_w, int eval_h, int eval_t);

/// Rotates each row in place (inverse = true applies the transpose).
template <typename Scalar>
void apply_rotary(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& rows,
                  const std::vector<PositionTag>& tags, const MspeConfig& cfg, const RotaryFrequencies& freqs,
                  bool inverse = false);

/// Adds the condition/role embeddings, then applies the rotary modulation.
MatrixXd apply_mspe(const MatrixXd& vectors, const std::vector<PositionTag>& tags, const MspeConfig& cfg,
                    const MspeTables& tables, int eval_w, int eval_h, int eval_t);

struct ReductionReport {
    double mean_reduction = 0.0;
    std::map<std::string, double> per_task_reduction;
    std::size_t samples = 0;
};

struct DatasetManifest;

/// Average relative shrinkage of the condition part of the sequence (every
/// frame except the output block) over the workload, with all five condition
/// frames present.
ReductionReport reduction_report(const PruningPolicy& policy, const DatasetManifest& workload, int factor);

/// Condition tokens kept for one sample and the unpruned count.
std::pair<int, int> condition_token_counts(const PruningPolicy& policy, int grid_w, int grid_h,
                                           const BoundingBox& src, const BoundingBox& tgt);

}  // namespace lightmover
