#include "lightmover/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lightmover/config_io.hpp"
#include "lightmover/control_frames.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

namespace {

void require_same(const MatrixXd& a, const MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> dist(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace

MatrixXd interpolate_noisy(const MatrixXd& x1, const MatrixXd& x0, double t) {
    require_same(x1, x0, "interpolate_noisy");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolate_noisy: t must lie in [0, 1]");
    return t * x1 + (1.0 - t) * x0;
}

MatrixXd velocity_target(const MatrixXd& x1, const MatrixXd& x0) {
    require_same(x1, x0, "velocity_target");
    return x1 - x0;
}

FlowState make_flow_state(const MatrixXd& x1, const MatrixXd& x0, double t) {
    return {x0, x1, t, interpolate_noisy(x1, x0, t), velocity_target(x1, x0)};
}

double flow_loss(const MatrixXd& pred, const MatrixXd& target) {
    require_same(pred, target, "flow_loss");
    if (pred.size() == 0) throw ShapeError("flow_loss: empty output block");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double sequence_flow_loss(const MatrixXd& pred, const TokenSequence& seq, const MatrixXd& sequence_target) {
    const FrameBlock& out = seq.output_block();
    if (sequence_target.rows() != seq.size()) throw ShapeError("sequence_flow_loss: target does not span the sequence");
    return flow_loss(pred, sequence_target.middleRows(out.start, out.count));
}

// ---------------------------------------------------------------------------
// Examples

TrainingExample build_example(const SampleRecord& record, const RelitPair& pair, int factor,
                              const NormalizationStats& stats) {
    const Resolution res{pair.display_a.image.width(), pair.display_a.image.height()};
    TrainingExample ex;
    ex.task = record.task;
    ex.index = record.index;
    ex.source_display = pair.display_a;
    ex.target_display = pair.display_b;
    auto& c = ex.conditions;
    c.reference = encode_frame(pair.display_a.image, factor, stats);
    c.object = encode_frame(crop_object_frame(pair.display_a, record.src_box, res).image, factor, stats);
    c.movement = encode_frame(encode_movement_map(record.src_box, record.tgt_box, res).image, factor, stats);
    c.color = encode_frame(encode_color_frame(record.tint, res).image, factor, stats);
    c.intensity = encode_frame(encode_intensity_frame(ExposureStops{record.stops}, res).image, factor, stats);
    c.src_box = record.src_box;
    c.tgt_box = record.tgt_box;
    ex.target = encode_frame(pair.display_b.image, factor, stats);
    return ex;
}

NormalizationStats fit_manifest_stats(const DatasetManifest& manifest) {
    std::vector<RelitPair> pairs;
    pairs.reserve(manifest.samples.size());
    for (const auto& r : manifest.samples) pairs.push_back(load_relit_pair(manifest, r));
    std::vector<const Image*> images;
    for (const auto& p : pairs) {
        images.push_back(&p.display_a.image);
        images.push_back(&p.display_b.image);
    }
    return fit_normalization_stats(images);
}

std::vector<TrainingExample> load_examples(const DatasetManifest& manifest, int factor,
                                           const NormalizationStats& stats) {
    std::vector<TrainingExample> out;
    out.reserve(manifest.samples.size());
    for (const auto& r : manifest.samples) out.push_back(build_example(r, load_relit_pair(manifest, r), factor, stats));
    return out;
}

TokenSequence build_sequence(const TrainingExample& example, const MatrixXd& output_tokens,
                             const PruningPolicy& policy, bool drop_color, bool drop_intensity) {
    LatentFrame out = example.target;
    if (output_tokens.rows() != out.tokens.rows() || output_tokens.cols() != out.tokens.cols()) {
        throw ShapeError("build_sequence: output tokens do not match the target latent grid");
    }
    out.tokens = output_tokens;
    if (!drop_color && !drop_intensity) return assemble_sequence(example.conditions, out, policy);
    ConditionLatents c = example.conditions;
    if (drop_color) c.color.reset();
    if (drop_intensity) c.intensity.reset();
    return assemble_sequence(c, out, policy);
}

// ---------------------------------------------------------------------------
// Training

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer: lr must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be positive");
    if (!(grad_clip >= 0.0)) throw ConfigError("optimizer: grad_clip must be >= 0");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("optimizer: ema_decay must lie in [0, 1]");
    if (ema_start_step < 0) throw ConfigError("optimizer: ema_start_step must be >= 0");
    if (!(logit_lr >= 0.0)) throw ConfigError("optimizer: logit_lr must be >= 0");
}

OptimizerState OptimizerState::init(const OptimizerConfig& config, const std::vector<float>& params) {
    config.validate();
    OptimizerState s;
    s.config = config;
    s.m.assign(params.size(), 0.0f);
    s.v.assign(params.size(), 0.0f);
    s.ema = params;
    return s;
}

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(condition_dropout >= 0.0 && condition_dropout <= 1.0)) {
        throw ConfigError("train: condition_dropout must lie in [0, 1]");
    }
    if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
}

namespace {

struct ItemDraw {
    double t;
    MatrixXd x0;
    bool drop_color;
    bool drop_intensity;
};

ItemDraw draw_item(const TrainingExample& ex, std::uint64_t seed, double dropout) {
    Rng rng(seed);
    ItemDraw d;
    d.t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    d.drop_color = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < dropout;
    d.drop_intensity = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < dropout;
    d.x0 = normal_matrix(rng, ex.target.tokens.rows(), ex.target.tokens.cols());
    return d;
}

void adam_update(std::vector<double>& x, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 const OptimizerConfig& c, double lr, std::int64_t step) {
    m.resize(x.size(), 0.0);
    v.resize(x.size(), 0.0);
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
        x[i] -= lr * ((m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps));
    }
}

}  // namespace

StepResult train_step(ToyDiT<float>& model, const std::vector<const TrainingExample*>& batch, OptimizerState& opt,
                      PruningPolicy& policy, const TrainConfig& config, std::uint64_t seed) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    if (opt.m.size() != model.param_count() || opt.v.size() != model.param_count() ||
        opt.ema.size() != model.param_count()) {
        throw ContractError("train_step: optimizer state does not match the model");
    }
    const bool learn_logits = policy.nonspatial && policy.mode == PruneMode::soft;
    const std::size_t n_cand = policy.candidates.size();
    std::vector<double> g_color(n_cand, 0.0);
    std::vector<double> g_intensity(n_cand, 0.0);

    std::vector<float> grad(model.param_count(), 0.0f);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    ToyDiT<float>::Cache cache;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TrainingExample& ex = *batch[i];
        const ItemDraw d = draw_item(ex, derive_seed({seed, static_cast<std::uint64_t>(i)}), config.condition_dropout);
        const MatrixXd& x1 = ex.target.tokens;
        const TokenSequence seq =
            build_sequence(ex, interpolate_noisy(x1, d.x0, d.t), policy, d.drop_color, d.drop_intensity);
        const MatrixXd v = velocity_target(x1, d.x0);
        const ToyDiT<float>::Mat pred = model.forward(seq, d.t, &cache);
        const ToyDiT<float>::Mat diff = pred - v.cast<float>();
        const double item_loss = diff.template cast<double>().squaredNorm() / static_cast<double>(diff.size());
        if (!std::isfinite(item_loss)) {
            std::ostringstream msg;
            msg << "non-finite training loss at step " << opt.step << ", batch item " << i << " (sample "
                << ex.index << ", task " << to_string(ex.task) << ", t=" << d.t << ")";
            throw TrainingError(msg.str());
        }
        loss += item_loss * inv_batch;
        const ToyDiT<float>::Mat d_out = diff * static_cast<float>(2.0 * inv_batch / static_cast<double>(diff.size()));
        ToyDiT<float>::Mat d_input;
        model.backward(cache, d_out, grad, learn_logits ? &d_input : nullptr);
        if (learn_logits) {
            auto accumulate = [&](ConditionType type, const std::optional<LatentFrame>& frame,
                                  const std::vector<double>& logits, std::vector<double>& g) {
                const FrameBlock* b = seq.find_block(type);
                if (!b || !b->soft || !frame) return;
                const MatrixXd rows = d_input.middleRows(b->start, b->count).cast<double>();
                const auto gl = soft_prune_logit_grad(*frame, logits, policy.candidates, rows);
                for (std::size_t k = 0; k < n_cand; ++k) g[k] += gl[k];
            };
            accumulate(ConditionType::color, ex.conditions.color, policy.color_logits, g_color);
            accumulate(ConditionType::intensity, ex.conditions.intensity, policy.intensity_logits, g_intensity);
        }
    }

    double sq = 0.0;
    for (float g : grad) sq += static_cast<double>(g) * g;
    const double grad_norm = std::sqrt(sq);
    if (!std::isfinite(grad_norm)) {
        throw TrainingError("non-finite gradient norm at step " + std::to_string(opt.step));
    }
    const auto& c = opt.config;
    const float clip = (c.grad_clip > 0.0 && grad_norm > c.grad_clip) ? static_cast<float>(c.grad_clip / grad_norm)
                                                                     : 1.0f;

    const std::int64_t step = opt.step + 1;
    const float b1 = static_cast<float>(c.beta1);
    const float b2 = static_cast<float>(c.beta2);
    const float bc1 = static_cast<float>(1.0 - std::pow(c.beta1, static_cast<double>(step)));
    const float bc2 = static_cast<float>(1.0 - std::pow(c.beta2, static_cast<double>(step)));
    const float lr = static_cast<float>(c.lr);
    const float wd = static_cast<float>(c.weight_decay);
    const float eps = static_cast<float>(c.eps);
    const bool blend = opt.step >= c.ema_start_step;
    const float decay = static_cast<float>(c.ema_decay);
    auto& p = model.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float g = grad[i] * clip;
        opt.m[i] = b1 * opt.m[i] + (1.0f - b1) * g;
        opt.v[i] = b2 * opt.v[i] + (1.0f - b2) * g * g;
        const float update = (opt.m[i] / bc1) / (std::sqrt(opt.v[i] / bc2) + eps);
        p[i] -= lr * (update + wd * p[i]);
        opt.ema[i] = blend ? decay * opt.ema[i] + (1.0f - decay) * p[i] : p[i];
    }

    if (learn_logits) {
        auto update_logits = [&](std::vector<double>& logits, std::vector<double>& g, std::size_t offset) {
            std::vector<double> pen;
            expected_retained_fraction(logits, policy.candidates, &pen);
            for (std::size_t k = 0; k < n_cand; ++k) g[k] += policy.efficiency_weight * pen[k];
            std::vector<double> m(opt.logit_m.begin() + static_cast<std::ptrdiff_t>(offset),
                                  opt.logit_m.begin() + static_cast<std::ptrdiff_t>(offset + n_cand));
            std::vector<double> v(opt.logit_v.begin() + static_cast<std::ptrdiff_t>(offset),
                                  opt.logit_v.begin() + static_cast<std::ptrdiff_t>(offset + n_cand));
            adam_update(logits, g, m, v, c, c.logit_lr, step);
            std::copy(m.begin(), m.end(), opt.logit_m.begin() + static_cast<std::ptrdiff_t>(offset));
            std::copy(v.begin(), v.end(), opt.logit_v.begin() + static_cast<std::ptrdiff_t>(offset));
        };
        opt.logit_m.resize(2 * n_cand, 0.0);
        opt.logit_v.resize(2 * n_cand, 0.0);
        update_logits(policy.color_logits, g_color, 0);
        update_logits(policy.intensity_logits, g_intensity, n_cand);
    }
    opt.step = step;
    return {loss, grad_norm};
}

// ---------------------------------------------------------------------------
// Gradient verification

FlowItem make_flow_item(const TrainingExample& example, const PruningPolicy& policy, std::uint64_t seed) {
    const ItemDraw d = draw_item(example, seed, 0.0);
    const MatrixXd& x1 = example.target.tokens;
    return {build_sequence(example, interpolate_noisy(x1, d.x0, d.t), policy), d.t, velocity_target(x1, d.x0)};
}

double batch_loss(const ToyDiT<double>& model, const std::vector<FlowItem>& batch) {
    if (batch.empty()) throw ContractError("batch_loss: empty batch");
    double loss = 0.0;
    for (const auto& item : batch) loss += flow_loss(model.forward(item.seq, item.t), item.target);
    return loss / static_cast<double>(batch.size());
}

std::vector<double> batch_gradient(const ToyDiT<double>& model, const std::vector<FlowItem>& batch) {
    if (batch.empty()) throw ContractError("batch_gradient: empty batch");
    std::vector<double> grad(model.param_count(), 0.0);
    ToyDiT<double>::Cache cache;
    for (const auto& item : batch) {
        const MatrixXd pred = model.forward(item.seq, item.t, &cache);
        require_same(pred, item.target, "batch_gradient");
        const MatrixXd d_out = (pred - item.target) * (2.0 / (static_cast<double>(pred.size()) * batch.size()));
        model.backward(cache, d_out, grad);
    }
    return grad;
}

GradCheckResult grad_check(const ToyDiT<double>& model, const std::vector<FlowItem>& batch, double epsilon, int count,
                           std::uint64_t seed, double floor) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("grad_check: epsilon must be positive");
    if (count < 1) throw DomainError("grad_check: count must be >= 1");
    const auto analytic = batch_gradient(model, batch);
    std::vector<std::size_t> idx(model.param_count());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed({seed, 0x6C4Eull}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(count)));

    ToyDiT<double> probe = model;
    GradCheckResult res;
    for (std::size_t i : idx) {
        const double orig = probe.params()[i];
        probe.params()[i] = orig + epsilon;
        const double lp = batch_loss(probe, batch);
        probe.params()[i] = orig - epsilon;
        const double lm = batch_loss(probe, batch);
        probe.params()[i] = orig;
        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
        ++res.checked;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Sampling

void SamplerConfig::validate() const {
    if (num_steps < 1) throw ConfigError("sampler: num_steps must be >= 1");
}

MatrixXd integrate(const VelocityField& field, TokenSequence seq, const MatrixXd& x0, const SamplerConfig& cfg,
                   const StepObserver& observer) {
    cfg.validate();
    const FrameBlock out = seq.output_block();
    if (x0.rows() != out.count || x0.cols() != seq.tokens.cols()) {
        throw ShapeError("integrate: initial state does not match the output block");
    }
    const MatrixXd clean = seq.tokens;
    const double dt = cfg.dt();
    MatrixXd x = x0;
    for (int k = 0; k < cfg.num_steps; ++k) {
        const double t = k * dt;
        seq.tokens = clean;
        seq.tokens.middleRows(out.start, out.count) = x;
        if (observer) observer(k, seq);
        const MatrixXd v = field(seq, t);
        if (v.rows() != x.rows() || v.cols() != x.cols()) throw ShapeError("integrate: velocity shape mismatch");
        x += dt * v;
        if (!x.allFinite()) throw SamplingError("non-finite sampler state at step " + std::to_string(k));
    }
    return x;
}

MatrixXd sample(const VelocityField& field, const TokenSequence& seq, const SamplerConfig& cfg,
                const StepObserver& observer) {
    cfg.validate();
    const FrameBlock& out = seq.output_block();
    Rng rng(derive_seed({cfg.seed, 0x5A3Bull}));
    const MatrixXd x0 = normal_matrix(rng, out.count, seq.tokens.cols());
    return integrate(field, seq, x0, cfg, observer);
}

LatentFrame sample(const ToyDiT<float>& model, const TrainingExample& example, const PruningPolicy& policy,
                   const SamplerConfig& cfg, const StepObserver& observer) {
    const TokenSequence seq = build_sequence(
        example, MatrixXd::Zero(example.target.tokens.rows(), example.target.tokens.cols()), policy);
    const VelocityField field = [&model](const TokenSequence& s, double t) { return predict_velocity(model, s, t); };
    LatentFrame out = example.target;
    out.tokens = sample(field, seq, cfg, observer);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'L', 'M', 'O', 'V', 'C', 'K', 'P', 'T'};

void write_floats(std::ostream& out, const std::vector<float>& v) {
    const std::uint64_t n = v.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

std::vector<float> read_floats(std::istream& in, const std::string& path) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n > (std::uint64_t{1} << 32)) throw IoError("checkpoint " + path + ": truncated tensor header");
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("checkpoint " + path + ": truncated tensor data");
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    Json meta;
    meta["model"] = config_to_json(ckpt.model);
    meta["factor"] = ckpt.factor;
    meta["stats"] = config_to_json(ckpt.stats);
    meta["pruning"] = config_to_json(ckpt.policy);
    meta["optimizer"] = config_to_json(ckpt.optimizer.config);
    meta["step"] = ckpt.optimizer.step;
    meta["logit_m"] = ckpt.optimizer.logit_m;
    meta["logit_v"] = ckpt.optimizer.logit_v;
    const std::string text = meta.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(len));
    write_floats(out, ckpt.params);
    write_floats(out, ckpt.optimizer.ema);
    write_floats(out, ckpt.optimizer.m);
    write_floats(out, ckpt.optimizer.v);
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string p = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + p);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IoError("not a checkpoint file: " + p);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!in) throw IoError("checkpoint " + p + ": truncated header");
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("checkpoint " + p + " has version " + std::to_string(version) + ", expected " +
                                     std::to_string(kCheckpointVersion));
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (std::uint64_t{1} << 30)) throw IoError("checkpoint " + p + ": bad metadata length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint " + p + ": truncated metadata");

    Checkpoint ck;
    try {
        const Json meta = Json::parse(text);
        config_from_json(meta.at("model"), ck.model, "model");
        ck.factor = meta.at("factor").get<int>();
        config_from_json(meta.at("stats"), ck.stats, "stats");
        ck.policy = PruningPolicy::defaults();
        config_from_json(meta.at("pruning"), ck.policy, "pruning");
        config_from_json(meta.at("optimizer"), ck.optimizer.config, "optimizer");
        ck.optimizer.step = meta.at("step").get<std::int64_t>();
        ck.optimizer.logit_m = meta.at("logit_m").get<std::vector<double>>();
        ck.optimizer.logit_v = meta.at("logit_v").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw IoError("checkpoint " + p + ": malformed metadata (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw IoError("checkpoint " + p + ": " + e.what());
    }
    ck.params = read_floats(in, p);
    ck.optimizer.ema = read_floats(in, p);
    ck.optimizer.m = read_floats(in, p);
    ck.optimizer.v = read_floats(in, p);
    const ToyDiT<float> probe(ck.model, 0);
    for (const auto* v : {&ck.params, &ck.optimizer.ema, &ck.optimizer.m, &ck.optimizer.v}) {
        if (v->size() != probe.param_count()) throw IoError("checkpoint " + p + ": tensor size does not match model");
    }
    return ck;
}

ToyDiT<float> model_from_checkpoint(const Checkpoint& ckpt, bool use_ema) {
    ToyDiT<float> model(ckpt.model, 0);
    model.params() = (use_ema && !ckpt.optimizer.ema.empty()) ? ckpt.optimizer.ema : ckpt.params;
    return model;
}

}  // namespace lightmover
