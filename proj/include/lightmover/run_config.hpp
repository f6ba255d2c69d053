#pragma once

#include <filesystem>
#include <string>

#include "lightmover/config_io.hpp"
#include "lightmover/trainer.hpp"

namespace lightmover {

struct TokenizerConfig {
    int factor = 8;
    friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

struct EvalConfig {
    // 0 evaluates every sample of the manifest.
    int max_samples = 0;
    bool use_ema = true;
    bool similarity = true;
    // Writes one PNG per sample and predictor next to the report.
    bool dump_predictions = false;
    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Everything a CLI run needs. The defaults reproduce the desk-scale
/// light-movement experiment.
struct RunConfig {
    SceneConfig scene;
    DatasetConfig dataset = default_dataset();
    TokenizerConfig tokenizer;
    PruningPolicy pruning = default_pruning();
    ToyDitConfig model;
    OptimizerConfig optimizer = default_optimizer();
    TrainConfig train;
    SamplerConfig sampler = default_sampler();
    EvalConfig eval;

    static DatasetConfig default_dataset();
    static PruningPolicy default_pruning();
    static OptimizerConfig default_optimizer();
    static SamplerConfig default_sampler();

    /// Dataset config with the scene section and resolution applied.
    DatasetConfig dataset_config(int jobs) const;
    TrainingSetup training_setup(const NormalizationStats& stats) const;
    void validate() const;
};

void config_from_json(const Json& j, TokenizerConfig& out, const std::string& path);
void config_from_json(const Json& j, EvalConfig& out, const std::string& path);

Json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

}  // namespace lightmover
