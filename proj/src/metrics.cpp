#include "lightmover/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "lightmover/control_frames.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

double psnr(const ToneMappedImage& a, const ToneMappedImage& b) {
    require_same_shape(a.image, b.image, "psnr");
    const auto va = a.image.values();
    const auto vb = b.image.values();
    if (va.empty()) throw ShapeError("psnr: empty image");
    double sum = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = va[i] - vb[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(va.size());
    if (!std::isfinite(mse)) throw DomainError("psnr: non-finite pixel values");
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

BoundingBox box_union(const BoundingBox& a, const BoundingBox& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

double CosineSimilarityStub::score(const ToneMappedImage& a, const ToneMappedImage& b,
                                   const BoundingBox& region) const {
    require_same_shape(a.image, b.image, "similarity");
    const Resolution res{size_, size_};
    const Image ra = crop_object_frame(a, region, res).image;
    const Image rb = crop_object_frame(b, region, res).image;
    double dot = 0.0, na = 0.0, nb = 0.0;
    const auto va = ra.values();
    const auto vb = rb.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        dot += va[i] * vb[i];
        na += va[i] * va[i];
        nb += vb[i] * vb[i];
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

Predictor copy_input_predictor() {
    return {"copy_input", [](const TrainingExample& ex) { return ex.source_display; }};
}

Predictor oracle_predictor() {
    return {"oracle", [](const TrainingExample& ex) { return ex.target_display; }};
}

Predictor model_predictor(const ToyDiT<float>& model, const PruningPolicy& policy, const SamplerConfig& sampler,
                          std::uint64_t seed, std::string name) {
    return {std::move(name), [&model, policy, sampler, seed](const TrainingExample& ex) {
                SamplerConfig cfg = sampler;
                cfg.seed = derive_seed({seed, sampler.seed, static_cast<std::uint64_t>(ex.index)});
                Image img = decode_frame(sample(model, ex, policy, cfg));
                for (auto& v : img.values()) v = std::clamp(v, 0.0, 1.0);
                return ToneMappedImage{std::move(img)};
            }};
}

const ReportRow& EvalReport::row(const std::string& predictor, const std::string& task) const {
    for (const auto& r : rows) {
        if (r.predictor == predictor && r.task == task) return r;
    }
    throw IndexError("no report row for " + predictor + "/" + task);
}

EvalReport run_benchmark(const std::vector<TrainingExample>& examples, std::vector<Predictor> predictors,
                         const std::vector<const SimilarityBackend*>& backends, std::uint64_t seed,
                         std::string config_hash, int jobs) {
    if (examples.empty()) throw DomainError("run_benchmark: no samples");
    if (jobs < 1) throw ConfigError("run_benchmark: jobs must be >= 1");
    const bool has_copy = std::any_of(predictors.begin(), predictors.end(),
                                      [](const Predictor& p) { return p.name == "copy_input"; });
    if (!has_copy) predictors.insert(predictors.begin(), copy_input_predictor());

    EvalReport report;
    report.config_hash = std::move(config_hash);
    report.seed = seed;
    for (const auto* b : backends) report.backends.push_back(b->name());

    const std::size_t n_pred = predictors.size();
    std::vector<SampleScore> scores(examples.size() * n_pred);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < examples.size(); i += stride) {
            try {
                const auto& ex = examples[i];
                const BoundingBox region = box_union(ex.conditions.src_box, ex.conditions.tgt_box);
                for (std::size_t p = 0; p < n_pred; ++p) {
                    const ToneMappedImage pred = predictors[p].predict(ex);
                    SampleScore s{ex.index, ex.task, predictors[p].name, psnr(pred, ex.target_display), {}};
                    for (const auto* b : backends) s.similarity.push_back(b->score(pred, ex.target_display, region));
                    scores[i * n_pred + p] = std::move(s);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const auto n_threads = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(jobs), examples.size()));
    if (n_threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    report.samples = std::move(scores);

    for (const auto& pred : predictors) {
        std::vector<std::string> groups;
        for (int t = 0; t < kTaskTypeCount; ++t) groups.emplace_back(to_string(static_cast<TaskType>(t)));
        groups.emplace_back("all");
        for (const auto& g : groups) {
            ReportRow row{pred.name, g, 0, 0.0, 0.0, std::vector<double>(backends.size(), 0.0)};
            std::vector<double> values;
            for (const auto& s : report.samples) {
                if (s.predictor != pred.name || (g != "all" && to_string(s.task) != g)) continue;
                values.push_back(s.psnr);
                for (std::size_t b = 0; b < backends.size(); ++b) row.similarity_mean[b] += s.similarity[b];
            }
            if (values.empty()) continue;
            row.n = static_cast<int>(values.size());
            double sum = 0.0;
            for (double v : values) sum += v;
            row.psnr_mean = sum / row.n;
            double ss = 0.0;
            for (double v : values) ss += (v - row.psnr_mean) * (v - row.psnr_mean);
            row.psnr_std = std::sqrt(ss / row.n);
            for (double& m : row.similarity_mean) m /= row.n;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["backends"] = report.backends;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["predictor"] = r.predictor;
        row["task"] = r.task;
        row["n"] = r.n;
        row["psnr_mean"] = r.psnr_mean;
        row["psnr_std"] = r.psnr_std;
        nlohmann::ordered_json sim = nlohmann::ordered_json::object();
        for (std::size_t b = 0; b < report.backends.size(); ++b) sim[report.backends[b]] = r.similarity_mean[b];
        row["similarity"] = sim;
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j.dump(1) + "\n";
}

std::string report_samples_csv(const EvalReport& report) {
    std::string out = "index,task,predictor,psnr";
    for (const auto& b : report.backends) out += "," + b;
    out += "\n";
    char buf[64];
    for (const auto& s : report.samples) {
        out += std::to_string(s.index) + "," + std::string(to_string(s.task)) + "," + s.predictor;
        std::snprintf(buf, sizeof buf, ",%.17g", s.psnr);
        out += buf;
        for (double v : s.similarity) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace lightmover
