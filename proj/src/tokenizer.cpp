#include "lightmover/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lightmover/dataset.hpp"
#include "lightmover/errors.hpp"

namespace lightmover {

// ---------------------------------------------------------------------------
// Space-to-depth frames

NormalizationStats fit_normalization_stats(const std::vector<const Image*>& images) {
    std::array<double, 3> sum{};
    std::array<double, 3> sum_sq{};
    double n = 0.0;
    for (const Image* img : images) {
        auto v = img->values();
        for (std::size_t i = 0; i < v.size(); i += 3) {
            for (int c = 0; c < 3; ++c) {
                sum[c] += v[i + static_cast<std::size_t>(c)];
                sum_sq[c] += v[i + static_cast<std::size_t>(c)] * v[i + static_cast<std::size_t>(c)];
            }
            n += 1.0;
        }
    }
    NormalizationStats stats;
    if (n == 0.0) return stats;
    for (int c = 0; c < 3; ++c) {
        stats.mean[c] = sum[c] / n;
        const double var = std::max(sum_sq[c] / n - stats.mean[c] * stats.mean[c], 0.0);
        stats.stddev[c] = std::max(std::sqrt(var), 1e-3);
    }
    return stats;
}

void LatentFrame::validate() const {
    if (grid_w <= 0 || grid_h <= 0 || factor <= 0 || pool <= 0) throw ShapeError("latent frame: invalid grid");
    if (tokens.rows() != token_count() || tokens.cols() != token_dim()) {
        throw ShapeError("latent frame: token matrix does not match the grid");
    }
    for (int c = 0; c < 3; ++c) {
        if (!(stats.stddev[c] > 0.0)) throw ShapeError("latent frame: non-positive normalization scale");
    }
}

LatentFrame encode_frame(const Image& image, int factor, const NormalizationStats& stats) {
    if (factor <= 0 || image.empty() || image.width() % factor != 0 || image.height() % factor != 0) {
        throw ShapeError("encode_frame: " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                         " is not divisible by factor " + std::to_string(factor));
    }
    LatentFrame out;
    out.factor = factor;
    out.grid_w = image.width() / factor;
    out.grid_h = image.height() / factor;
    out.stats = stats;
    out.tokens.resize(out.token_count(), out.token_dim());
    for (int gy = 0; gy < out.grid_h; ++gy) {
        for (int gx = 0; gx < out.grid_w; ++gx) {
            const int row = gy * out.grid_w + gx;
            for (int py = 0; py < factor; ++py) {
                for (int px = 0; px < factor; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        const double v = image.at(gx * factor + px, gy * factor + py, c);
                        out.tokens(row, (py * factor + px) * 3 + c) = (v - stats.mean[c]) / stats.stddev[c];
                    }
                }
            }
        }
    }
    return out;
}

Image decode_frame(const LatentFrame& latent) {
    latent.validate();
    const LatentFrame full = latent.pool == 1 ? latent : broadcast_to_full(latent);
    const int f = full.factor;
    Image img(full.grid_w * f, full.grid_h * f);
    for (int gy = 0; gy < full.grid_h; ++gy) {
        for (int gx = 0; gx < full.grid_w; ++gx) {
            const int row = gy * full.grid_w + gx;
            for (int py = 0; py < f; ++py) {
                for (int px = 0; px < f; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        img.at(gx * f + px, gy * f + py, c) =
                            full.tokens(row, (py * f + px) * 3 + c) * full.stats.stddev[c] + full.stats.mean[c];
                    }
                }
            }
        }
    }
    return img;
}

LatentFrame pool_latent(const LatentFrame& latent, int f) {
    latent.validate();
    if (f <= 0 || latent.grid_w % f != 0 || latent.grid_h % f != 0) {
        throw ConfigError("pooling factor " + std::to_string(f) + " does not divide the " +
                          std::to_string(latent.grid_w) + "x" + std::to_string(latent.grid_h) + " grid");
    }
    if (f == 1) return latent;
    LatentFrame out = latent;
    out.grid_w = latent.grid_w / f;
    out.grid_h = latent.grid_h / f;
    out.pool = latent.pool * f;
    out.tokens = MatrixXd::Zero(out.token_count(), latent.token_dim());
    const double inv = 1.0 / (f * f);
    for (int gy = 0; gy < latent.grid_h; ++gy) {
        for (int gx = 0; gx < latent.grid_w; ++gx) {
            out.tokens.row((gy / f) * out.grid_w + gx / f) += latent.tokens.row(gy * latent.grid_w + gx);
        }
    }
    out.tokens *= inv;
    return out;
}

LatentFrame broadcast_to_full(const LatentFrame& latent) {
    latent.validate();
    if (latent.pool == 1) return latent;
    LatentFrame out = latent;
    const int p = latent.pool;
    out.grid_w = latent.grid_w * p;
    out.grid_h = latent.grid_h * p;
    out.pool = 1;
    out.tokens.resize(out.token_count(), latent.token_dim());
    for (int gy = 0; gy < out.grid_h; ++gy) {
        for (int gx = 0; gx < out.grid_w; ++gx) {
            out.tokens.row(gy * out.grid_w + gx) = latent.tokens.row((gy / p) * latent.grid_w + gx / p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sequences

std::string_view to_string(ConditionType c) noexcept {
    switch (c) {
        case ConditionType::reference: return "reference";
        case ConditionType::object: return "object";
        case ConditionType::movement: return "movement";
        case ConditionType::color: return "color";
        case ConditionType::intensity: return "intensity";
        case ConditionType::output: return "output";
    }
    return "unknown";
}

int TokenSequence::output_block_count() const noexcept {
    return static_cast<int>(std::count_if(blocks.begin(), blocks.end(),
                                          [](const FrameBlock& b) { return b.type == ConditionType::output; }));
}

const FrameBlock& TokenSequence::output_block() const {
    if (output_block_count() != 1) throw ContractError("token sequence must contain exactly one output block");
    return *find_block(ConditionType::output);
}

const FrameBlock* TokenSequence::find_block(ConditionType c) const noexcept {
    for (const auto& b : blocks) {
        if (b.type == c) return &b;
    }
    return nullptr;
}

int TokenSequence::condition_token_count() const noexcept {
    int n = 0;
    for (const auto& b : blocks) {
        if (b.type != ConditionType::output) n += b.count;
    }
    return n;
}

void TokenSequence::validate() const {
    output_block();
    if (tokens.rows() != size()) throw ShapeError("token sequence: token rows do not match tags");
    int expected_start = 0;
    for (const auto& b : blocks) {
        if (b.start != expected_start) throw ContractError("token sequence: blocks are not contiguous");
        expected_start += b.count;
        for (int i = b.start; i < b.start + b.count; ++i) {
            const auto& tag = tags[static_cast<std::size_t>(i)];
            if (!tag.consistent() || tag.c != b.type) throw ContractError("token sequence: inconsistent position tag");
        }
    }
    if (expected_start != size()) throw ContractError("token sequence: blocks do not cover all tokens");
}

namespace {

void append_frame(TokenSequence& seq, const LatentFrame& frame, ConditionType type, bool soft) {
    if (seq.tokens.cols() != 0 && seq.tokens.cols() != frame.token_dim()) {
        throw ShapeError("assemble_sequence: frames have different token widths");
    }
    if (frame.full_grid_w() != seq.full_grid_w || frame.full_grid_h() != seq.full_grid_h) {
        throw ShapeError("assemble_sequence: frames were encoded at different resolutions");
    }
    FrameBlock block{type, seq.size(), frame.token_count(), frame.grid_w, frame.grid_h, frame.pool, soft};
    const Role role = type == ConditionType::output ? Role::output : Role::input;
    const double offset = 0.5 * (frame.pool - 1);
    for (int gy = 0; gy < frame.grid_h; ++gy) {
        for (int gx = 0; gx < frame.grid_w; ++gx) {
            seq.tags.push_back({frame.pool * gx + offset, frame.pool * gy + offset,
                                static_cast<double>(frame_slot(type)), type, role});
        }
    }
    const auto old_rows = seq.tokens.rows();
    MatrixXd grown(old_rows + frame.token_count(), frame.token_dim());
    if (old_rows > 0) grown.topRows(old_rows) = seq.tokens;
    grown.bottomRows(frame.token_count()) = frame.tokens;
    seq.tokens = std::move(grown);
    seq.blocks.push_back(block);
}

}  // namespace

TokenSequence assemble_sequence(const ConditionLatents& conditions, const std::optional<LatentFrame>& output,
                                const PruningPolicy& policy) {
    if (!output) throw ContractError("assemble_sequence: output latent is required");
    policy.validate();
    output->validate();
    TokenSequence seq;
    seq.full_grid_w = output->full_grid_w();
    seq.full_grid_h = output->full_grid_h();

    append_frame(seq, conditions.reference, ConditionType::reference, false);
    if (policy.prune_object && policy.spatial) {
        append_frame(seq, prune_spatial(conditions.object, conditions.src_box, conditions.src_box, policy.tau),
                     ConditionType::object, false);
    } else {
        append_frame(seq, conditions.object, ConditionType::object, false);
    }
    if (policy.spatial) {
        append_frame(seq, prune_spatial(conditions.movement, conditions.src_box, conditions.tgt_box, policy.tau),
                     ConditionType::movement, false);
    } else {
        append_frame(seq, conditions.movement, ConditionType::movement, false);
    }
    auto add_nonspatial = [&](const std::optional<LatentFrame>& frame, const std::vector<double>& logits,
                              ConditionType type) {
        if (!frame) return;
        if (!policy.nonspatial) {
            append_frame(seq, *frame, type, false);
            return;
        }
        append_frame(seq, prune_nonspatial(*frame, logits, policy.candidates, policy.mode), type,
                     policy.mode == PruneMode::soft);
    };
    add_nonspatial(conditions.color, policy.color_logits, ConditionType::color);
    add_nonspatial(conditions.intensity, policy.intensity_logits, ConditionType::intensity);
    append_frame(seq, *output, ConditionType::output, false);
    return seq;
}

// ---------------------------------------------------------------------------
// Pruning

std::vector<double> PruningPolicy::prior_logits(const std::vector<int>& candidates) {
    std::vector<double> logits;
    logits.reserve(candidates.size());
    for (int f : candidates) logits.push_back(std::log(static_cast<double>(f) * f));
    return logits;
}

PruningPolicy PruningPolicy::defaults() {
    PruningPolicy p;
    p.color_logits = prior_logits(p.candidates);
    p.intensity_logits = prior_logits(p.candidates);
    return p;
}

PruningPolicy PruningPolicy::disabled() {
    PruningPolicy p = defaults();
    p.spatial = false;
    p.nonspatial = false;
    return p;
}

void PruningPolicy::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("pruning: tau must lie in (0, 1]");
    if (candidates.empty()) throw ConfigError("pruning: candidate factor list is empty");
    for (int f : candidates) {
        if (f <= 0) throw ConfigError("pruning: candidate factors must be positive");
    }
    for (const auto* logits : {&color_logits, &intensity_logits}) {
        if (logits->size() != candidates.size()) throw ConfigError("pruning: one logit per candidate required");
        for (double v : *logits) {
            if (!std::isfinite(v)) throw ConfigError("pruning: logits must be finite");
        }
    }
}

int spatial_prune_factor(int grid_w, int grid_h, double ratio, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("prune_spatial: tau must lie in (0, 1]");
    if (ratio < tau) return 1;
    const int n_full = grid_w * grid_h;
    const double target = std::round(n_full * tau / ratio);
    int best = 1;
    double best_diff = std::numeric_limits<double>::infinity();
    const int limit = std::gcd(grid_w, grid_h);
    for (int f = 1; f <= limit; ++f) {
        if (limit % f != 0) continue;
        const double diff = std::abs(static_cast<double>(n_full / (f * f)) - target);
        // Ties go to the coarser grid.
        if (diff <= best_diff) {
            best_diff = diff;
            best = f;
        }
    }
    return best;
}

LatentFrame prune_spatial(const LatentFrame& move_latent, const BoundingBox& src, const BoundingBox& tgt,
                          double tau) {
    move_latent.validate();
    const double ratio = std::max(src.area(), tgt.area());
    const int f = spatial_prune_factor(move_latent.grid_w, move_latent.grid_h, ratio, tau);
    return pool_latent(move_latent, f);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
    for (double& v : p) v /= z;
    return p;
}

std::size_t argmax(const std::vector<double>& logits) {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

namespace {

void check_candidates(const LatentFrame& latent, const std::vector<double>& logits,
                      const std::vector<int>& candidates) {
    if (logits.size() != candidates.size() || candidates.empty()) {
        throw ConfigError("prune_nonspatial: one logit per candidate required");
    }
    for (int f : candidates) {
        if (f <= 0 || latent.grid_w % f != 0 || latent.grid_h % f != 0) {
            throw ConfigError("prune_nonspatial: candidate factor " + std::to_string(f) + " does not divide the " +
                              std::to_string(latent.grid_w) + "x" + std::to_string(latent.grid_h) + " grid");
        }
    }
}

}  // namespace

LatentFrame prune_nonspatial(const LatentFrame& latent, const std::vector<double>& logits,
                             const std::vector<int>& candidates, PruneMode mode) {
    latent.validate();
    check_candidates(latent, logits, candidates);
    if (mode == PruneMode::hard) return pool_latent(latent, candidates[argmax(logits)]);
    const auto p = softmax(logits);
    LatentFrame out = latent;
    out.tokens.setZero();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        out.tokens += p[k] * broadcast_to_full(pool_latent(latent, candidates[k])).tokens;
    }
    return out;
}

std::vector<double> soft_prune_logit_grad(const LatentFrame& latent, const std::vector<double>& logits,
                                          const std::vector<int>& candidates, const MatrixXd& grad_tokens) {
    check_candidates(latent, logits, candidates);
    const auto p = softmax(logits);
    std::vector<double> g_rep(candidates.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        g_rep[k] = (broadcast_to_full(pool_latent(latent, candidates[k])).tokens.array() * grad_tokens.array()).sum();
        mean += p[k] * g_rep[k];
    }
    std::vector<double> grad(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) grad[k] = p[k] * (g_rep[k] - mean);
    return grad;
}

double expected_retained_fraction(const std::vector<double>& logits, const std::vector<int>& candidates,
                                  std::vector<double>* grad) {
    const auto p = softmax(logits);
    double e = 0.0;
    std::vector<double> keep(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        keep[k] = 1.0 / (static_cast<double>(candidates[k]) * candidates[k]);
        e += p[k] * keep[k];
    }
    if (grad) {
        grad->resize(candidates.size());
        for (std::size_t k = 0; k < candidates.size(); ++k) (*grad)[k] = p[k] * (keep[k] - e);
    }
    return e;
}

std::pair<int, int> condition_token_counts(const PruningPolicy& policy, int grid_w, int grid_h,
                                           const BoundingBox& src, const BoundingBox& tgt) {
    LatentFrame blank;
    blank.grid_w = grid_w;
    blank.grid_h = grid_h;
    blank.factor = 1;
    blank.tokens = MatrixXd::Zero(grid_w * grid_h, 3);
    ConditionLatents cond{blank, blank, blank, blank, blank, src, tgt};
    const TokenSequence pruned = assemble_sequence(cond, blank, policy);
    const TokenSequence full = assemble_sequence(cond, blank, PruningPolicy::disabled());
    return {pruned.condition_token_count(), full.condition_token_count()};
}

ReductionReport reduction_report(const PruningPolicy& policy, const DatasetManifest& workload, int factor) {
    if (workload.samples.empty()) throw DomainError("reduction_report: empty workload");
    if (factor <= 0 || workload.width % factor != 0 || workload.height % factor != 0) {
        throw ShapeError("reduction_report: workload resolution is not divisible by the tokenizer factor");
    }
    const int gw = workload.width / factor;
    const int gh = workload.height / factor;
    ReductionReport report;
    std::map<std::string, std::pair<double, int>> per_task;
    double total = 0.0;
    for (const auto& s : workload.samples) {
        const auto [kept, full] = condition_token_counts(policy, gw, gh, s.src_box, s.tgt_box);
        const double r = 1.0 - static_cast<double>(kept) / full;
        total += r;
        auto& slot = per_task[std::string(to_string(s.task))];
        slot.first += r;
        slot.second += 1;
    }
    report.samples = workload.samples.size();
    report.mean_reduction = total / static_cast<double>(workload.samples.size());
    for (const auto& [task, acc] : per_task) report.per_task_reduction[task] = acc.first / acc.second;
    return report;
}

// ---------------------------------------------------------------------------
// Multi-signal positional encoding

void MspeConfig::validate() const {
    for (int d : {dim_w, dim_h, dim_t}) {
        if (d <= 0 || d % 2 != 0) throw ConfigError("mspe: rotary subspace dimensions must be positive and even");
    }
    if (dim_w + dim_h + dim_t != head_dim) throw ConfigError("mspe: subspace dimensions must sum to the head dimension");
    if (!(base > 1.0)) throw ConfigError("mspe: base frequency must exceed 1");
    if (train_len_w < 1 || train_len_h < 1 || train_len_t < 1) throw ConfigError("mspe: train lengths must be >= 1");
}

std::vector<double> ntk_scale_frequencies(int dim, double base, int eval_len, int train_len) {
    if (dim <= 2 || dim % 2 != 0) throw ConfigError("ntk_scale_frequencies: rotary dimension must be even and > 2");
    if (eval_len < 1 || train_len < 1) throw ConfigError("ntk_scale_frequencies: lengths must be >= 1");
    double scaled = base;
    if (eval_len > train_len) {
        const double s = static_cast<double>(eval_len) / train_len;
        scaled = base * std::pow(s, static_cast<double>(dim) / (dim - 2));
    }
    std::vector<double> theta(static_cast<std::size_t>(dim / 2));
    for (int k = 0; k < dim / 2; ++k) theta[static_cast<std::size_t>(k)] = std::pow(scaled, -2.0 * k / dim);
    return theta;
}

RotaryFrequencies rotary_frequencies(const MspeConfig& cfg, int eval_w, int eval_h, int eval_t) {
    cfg.validate();
    return {ntk_scale_frequencies(cfg.dim_w, cfg.base, eval_w, cfg.train_len_w),
            ntk_scale_frequencies(cfg.dim_h, cfg.base, eval_h, cfg.train_len_h),
            ntk_scale_frequencies(cfg.dim_t, cfg.base, eval_t, cfg.train_len_t)};
}

template <typename Scalar>
void apply_rotary(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& rows,
                  const std::vector<PositionTag>& tags, const MspeConfig& cfg, const RotaryFrequencies& freqs,
                  bool inverse) {
    if (rows.cols() != cfg.head_dim || rows.rows() != static_cast<Eigen::Index>(tags.size())) {
        throw ShapeError("apply_rotary: vectors do not match the head dimension or tag count");
    }
    const double sign = inverse ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const auto& tag = tags[static_cast<std::size_t>(i)];
        int offset = 0;
        auto rotate_axis = [&](const std::vector<double>& theta, double pos) {
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double angle = sign * pos * theta[k];
                const auto c = static_cast<Scalar>(std::cos(angle));
                const auto s = static_cast<Scalar>(std::sin(angle));
                const int j = offset + 2 * static_cast<int>(k);
                const Scalar a = rows(i, j);
                const Scalar b = rows(i, j + 1);
                rows(i, j) = a * c - b * s;
                rows(i, j + 1) = a * s + b * c;
            }
            offset += 2 * static_cast<int>(theta.size());
        };
        rotate_axis(freqs.w, tag.w);
        rotate_axis(freqs.h, tag.h);
        rotate_axis(freqs.t, tag.t);
    }
}

template void apply_rotary<float>(Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&,
                                  const std::vector<PositionTag>&, const MspeConfig&, const RotaryFrequencies&, bool);
template void apply_rotary<double>(Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&,
                                   const std::vector<PositionTag>&, const MspeConfig&, const RotaryFrequencies&, bool);

MatrixXd apply_mspe(const MatrixXd& vectors, const std::vector<PositionTag>& tags, const MspeConfig& cfg,
                    const MspeTables& tables, int eval_w, int eval_h, int eval_t) {
    cfg.validate();
    if (vectors.cols() != cfg.head_dim) throw ShapeError("apply_mspe: vector width does not match head_dim");
    if (tables.condition.rows() != kConditionTypeCount || tables.role.rows() != kRoleCount ||
        tables.condition.cols() != cfg.head_dim || tables.role.cols() != cfg.head_dim) {
        throw ShapeError("apply_mspe: embedding tables have the wrong shape");
    }
    MatrixXd out = vectors;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const auto& tag = tags[static_cast<std::size_t>(i)];
        out.row(i) += tables.condition.row(static_cast<int>(tag.c)) + tables.role.row(static_cast<int>(tag.r));
    }
    apply_rotary(out, tags, cfg, rotary_frequencies(cfg, eval_w, eval_h, eval_t));
    return out;
}

}  // namespace lightmover
