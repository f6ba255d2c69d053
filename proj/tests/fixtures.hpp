#pragma once

#include <filesystem>
#include <string>

#include "lightmover/dataset.hpp"
#include "lightmover/flowmatch.hpp"

namespace lmtest {

/// Small in-memory example rendered without touching disk.
inline lightmover::TrainingExample make_example(int size, std::uint64_t seed, int index,
                                                lightmover::TaskType task = lightmover::TaskType::light_move,
                                                int factor = 8) {
    using namespace lightmover;
    DatasetConfig cfg;
    cfg.width = size;
    cfg.height = size;
    const SampleRender r = render_sample(cfg, seed, index, task);
    const RelitPair pair = relight_pair(r.record, r.frame_a, r.frame_b);
    NormalizationStats stats;
    stats.mean = {0.3, 0.3, 0.3};
    stats.stddev = {0.25, 0.25, 0.25};
    return build_example(r.record, pair, factor, stats);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lightmover_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace lmtest
