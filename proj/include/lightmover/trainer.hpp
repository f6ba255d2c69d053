#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "lightmover/flowmatch.hpp"

namespace lightmover {

struct LogRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct TrainingSetup {
    ToyDitConfig model;
    OptimizerConfig optimizer;
    TrainConfig train;
    PruningPolicy policy = PruningPolicy::defaults();
    NormalizationStats stats;
    int factor = 8;
};

/// Fresh checkpoint: initialized weights, zero moments, EMA equal to weights.
Checkpoint initial_checkpoint(const TrainingSetup& setup, std::uint64_t seed);

/// Runs `setup.train.steps` optimizer steps starting from `ckpt` (which is
/// updated in place). Batches are drawn with replacement from a stream keyed
/// by (seed, step), so a resumed run continues the same sequence.
void run_training(Checkpoint& ckpt, const std::vector<TrainingExample>& examples, const TrainConfig& train,
                  std::uint64_t seed, const std::function<void(const LogRow&)>& on_log = {});

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LogRow& row);

}  // namespace lightmover
