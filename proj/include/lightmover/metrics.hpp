#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lightmover/flowmatch.hpp"
#include "lightmover/image.hpp"

namespace lightmover {

/// Reported in place of +inf for identical images.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all pixels and channels of unit-range images.
double psnr(const ToneMappedImage& a, const ToneMappedImage& b);

/// Pluggable image-pair scorer restricted to a region of interest.
class SimilarityBackend {
public:
    virtual ~SimilarityBackend() = default;
    virtual std::string name() const = 0;
    virtual double score(const ToneMappedImage& a, const ToneMappedImage& b, const BoundingBox& region) const = 0;
};

/// Stand-in for learned embedding scores: cosine similarity of the region
/// resized to size x size. Identical inputs score 1.
class CosineSimilarityStub final : public SimilarityBackend {
public:
    explicit CosineSimilarityStub(int size = 8) : size_(size) {}
    std::string name() const override { return "cosine_stub"; }
    double score(const ToneMappedImage& a, const ToneMappedImage& b, const BoundingBox& region) const override;

private:
    int size_;
};

/// Smallest box containing both.
BoundingBox box_union(const BoundingBox& a, const BoundingBox& b);

struct Predictor {
    std::string name;
    std::function<ToneMappedImage(const TrainingExample&)> predict;
};

Predictor copy_input_predictor();
/// Returns the ground truth; useful to check the harness itself.
Predictor oracle_predictor();
/// Samples the model with a per-sample seed derived from (seed, index) and
/// decodes the latent, clamped to [0, 1].
Predictor model_predictor(const ToyDiT<float>& model, const PruningPolicy& policy, const SamplerConfig& sampler,
                          std::uint64_t seed, std::string name = "model");

struct SampleScore {
    int index = 0;
    TaskType task = TaskType::light_move;
    std::string predictor;
    double psnr = 0.0;
    std::vector<double> similarity;
};

struct ReportRow {
    std::string predictor;
    std::string task;  // a task name or "all"
    int n = 0;
    double psnr_mean = 0.0;
    double psnr_std = 0.0;
    std::vector<double> similarity_mean;
};

struct EvalReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::string> backends;
    std::vector<ReportRow> rows;
    std::vector<SampleScore> samples;

    const ReportRow& row(const std::string& predictor, const std::string& task) const;
};

/// Scores every predictor on every example. The copy-input baseline is added
/// when absent. Per-sample work runs on `jobs` threads; results are assembled
/// in index order so the report does not depend on scheduling.
EvalReport run_benchmark(const std::vector<TrainingExample>& examples, std::vector<Predictor> predictors,
                         const std::vector<const SimilarityBackend*>& backends, std::uint64_t seed,
                         std::string config_hash, int jobs = 1);

std::string report_to_json(const EvalReport& report);
/// One line per (sample, predictor).
std::string report_samples_csv(const EvalReport& report);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace lightmover
