#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lightmover/bounding_box.hpp"
#include "lightmover/minirender.hpp"
#include "lightmover/radiometry.hpp"

namespace lightmover {

enum class TaskType : std::uint8_t {
    light_move = 0,
    object_move,
    color,
    intensity,
    joint,
    removal,
    insertion,
};
inline constexpr int kTaskTypeCount = 7;

std::string_view to_string(TaskType t) noexcept;
TaskType task_from_string(std::string_view name);

/// Relative task frequencies. The published mix lists six ratios for seven
/// categories; the trailing weight of 1 for insertion is ours.
struct TaskMix {
    std::array<double, kTaskTypeCount> weights{6, 3, 3, 3, 1, 1, 1};

    void validate() const;
    /// Largest-remainder apportionment of n samples; sums to n exactly.
    std::array<int, kTaskTypeCount> apportion(int n) const;
};

struct DatasetConfig {
    int count = 32;
    int width = 64;
    int height = 64;
    TaskMix mix;
    SceneConfig scene;
    Range alpha{0.5, 1.0};
    Range stops_magnitude{0.5, 3.0};
    Range tint_component{0.2, 1.0};
    Range object_shift{0.4, 1.2};
    double min_light_travel = 0.5;
    int max_attempts = 64;
    int jobs = 1;
    bool write_images = true;

    void validate() const;
};

struct SampleFiles {
    std::string amb_a;
    std::string light_a;
    std::string amb_b;
    std::string light_b;
};

/// One paired edit. Frame A is the source, frame B the ground-truth target:
///   A = relight(amb_a, light_a, alpha, 1, white)
///   B = relight(amb_b, light_b, alpha, 2^stops, tint)
struct SampleRecord {
    int index = 0;
    TaskType task = TaskType::light_move;
    std::uint64_t seed = 0;
    SampleFiles files;
    BoundingBox src_box;
    BoundingBox tgt_box;
    double alpha = 1.0;
    double stops = 0.0;
    Tint tint;
};

inline constexpr int kManifestVersion = 1;

struct DatasetManifest {
    int version = kManifestVersion;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    std::vector<SampleRecord> samples;
    // Directory the relative file paths resolve against; not serialized.
    std::filesystem::path root;

    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Rendered linear components of one sample, before relighting.
struct SampleRender {
    SampleRecord record;
    DisentangledFrame frame_a;
    DisentangledFrame frame_b;
};

/// Deterministically renders sample `index` of a dataset. Retries with fresh
/// derived seeds when the drawn configuration cannot be boxed on screen.
SampleRender render_sample(const DatasetConfig& config, std::uint64_t seed, int index, TaskType task);

/// Task label for every index, a seeded shuffle of the apportioned mix.
std::vector<TaskType> task_schedule(const DatasetConfig& config, std::uint64_t seed);

/// Renders all samples, writes four PFM files per sample under out_dir and
/// the manifest at out_dir/manifest.json.
DatasetManifest generate_dataset(const DatasetConfig& config, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

/// Source and target frames after relighting and tone mapping.
struct RelitPair {
    LinearImage linear_a;
    LinearImage linear_b;
    ToneMappedImage display_a;
    ToneMappedImage display_b;
};

RelitPair relight_pair(const SampleRecord& record, const DisentangledFrame& a, const DisentangledFrame& b);
RelitPair load_relit_pair(const DatasetManifest& manifest, const SampleRecord& record);

}  // namespace lightmover
