#include "lightmover/run_config.hpp"

#include <fstream>
#include <sstream>

#include "lightmover/errors.hpp"

namespace lightmover {

PruningPolicy RunConfig::default_pruning() {
    PruningPolicy p = PruningPolicy::defaults();
    // 32x32 frames at factor 8 give a 4x4 grid; 8 does not divide it.
    p.candidates = {1, 2, 4};
    p.color_logits = PruningPolicy::prior_logits(p.candidates);
    p.intensity_logits = PruningPolicy::prior_logits(p.candidates);
    return p;
}

OptimizerConfig RunConfig::default_optimizer() {
    OptimizerConfig o;
    // At 1e-4 the toy model is still far from converged after 5000 steps.
    o.lr = 1e-3;
    return o;
}

SamplerConfig RunConfig::default_sampler() {
    SamplerConfig s;
    // One Euler step from noise returns the predicted conditional mean, which
    // scores best on PSNR; more steps trade distortion for sample sharpness.
    s.num_steps = 1;
    return s;
}

DatasetConfig RunConfig::default_dataset() {
    DatasetConfig d;
    d.count = 400;
    d.width = 32;
    d.height = 32;
    d.mix.weights = {1, 0, 0, 0, 0, 0, 0};
    return d;
}

DatasetConfig RunConfig::dataset_config(int jobs) const {
    DatasetConfig d = dataset;
    d.scene = scene;
    d.scene.camera.width = d.width;
    d.scene.camera.height = d.height;
    d.jobs = jobs;
    return d;
}

TrainingSetup RunConfig::training_setup(const NormalizationStats& stats) const {
    TrainingSetup s;
    s.model = model;
    s.optimizer = optimizer;
    s.train = train;
    s.policy = pruning;
    s.stats = stats;
    s.factor = tokenizer.factor;
    return s;
}

void RunConfig::validate() const {
    dataset_config(1).validate();
    if (tokenizer.factor < 1) throw ConfigError("tokenizer.factor must be >= 1");
    if (dataset.width % tokenizer.factor != 0 || dataset.height % tokenizer.factor != 0) {
        throw ConfigError("tokenizer.factor must divide dataset.width and dataset.height");
    }
    pruning.validate();
    model.validate();
    if (model.latent_dim != 3 * tokenizer.factor * tokenizer.factor) {
        throw ConfigError("model.latent_dim must equal 3 * tokenizer.factor^2 (" +
                          std::to_string(3 * tokenizer.factor * tokenizer.factor) + ")");
    }
    optimizer.validate();
    train.validate();
    sampler.validate();
    if (eval.max_samples < 0) throw ConfigError("eval.max_samples must be >= 0");
}

namespace {

Json eval_to_json(const EvalConfig& e) {
    Json j;
    j["max_samples"] = e.max_samples;
    j["use_ema"] = e.use_ema;
    j["similarity"] = e.similarity;
    j["dump_predictions"] = e.dump_predictions;
    return j;
}

}  // namespace

void config_from_json(const Json& j, TokenizerConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("factor", out.factor);
    r.finish();
}

void config_from_json(const Json& j, EvalConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("max_samples", out.max_samples);
    r.scalar("use_ema", out.use_ema);
    r.scalar("similarity", out.similarity);
    r.scalar("dump_predictions", out.dump_predictions);
    r.finish();
}

Json run_config_to_json(const RunConfig& cfg) {
    Json j;
    j["scene"] = config_to_json(cfg.scene);
    j["dataset"] = config_to_json(cfg.dataset);
    j["tokenizer"] = Json{{"factor", cfg.tokenizer.factor}};
    j["pruning"] = config_to_json(cfg.pruning);
    j["model"] = config_to_json(cfg.model);
    j["optimizer"] = config_to_json(cfg.optimizer);
    j["train"] = config_to_json(cfg.train);
    j["sampler"] = config_to_json(cfg.sampler);
    j["eval"] = eval_to_json(cfg.eval);
    return j;
}

RunConfig run_config_from_json(const Json& j) {
    RunConfig cfg;
    JsonReader r(j, "");
    r.nested("scene", cfg.scene);
    r.nested("dataset", cfg.dataset);
    r.nested("tokenizer", cfg.tokenizer);
    r.nested("pruning", cfg.pruning);
    r.nested("model", cfg.model);
    r.nested("optimizer", cfg.optimizer);
    r.nested("train", cfg.train);
    r.nested("sampler", cfg.sampler);
    r.nested("eval", cfg.eval);
    r.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Json j;
    try {
        j = Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

std::string dump_run_config(const RunConfig& cfg) { return run_config_to_json(cfg).dump(2) + "\n"; }

}  // namespace lightmover
