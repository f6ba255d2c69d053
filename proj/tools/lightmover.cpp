// Command-line front end. Exit codes:
//   0 success, 1 unexpected failure, 2 invalid config or arguments,
//   3 I/O error, 4 non-finite training loss, 5 checkpoint version mismatch.

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lightmover/control_frames.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/image_io.hpp"
#include "lightmover/metrics.hpp"
#include "lightmover/random.hpp"
#include "lightmover/run_config.hpp"

using namespace lightmover;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kTraining = 4, kVersion = 5 };

RunConfig config_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return load_run_config(path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

Tint parse_tint(const std::string& text) {
    std::array<double, 3> v{};
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !in.eof()) {
        throw ConfigError("--tint expects r,g,b");
    }
    Tint t{{v[0], v[1], v[2]}};
    t.validate();
    return t;
}

int cmd_gen_data(const std::string& config_path, const fs::path& out, std::uint64_t seed, int jobs) {
    const RunConfig cfg = config_or_default(config_path);
    const DatasetConfig dcfg = cfg.dataset_config(jobs);
    const DatasetManifest m = generate_dataset(dcfg, seed, out);
    const fs::path manifest = out / "manifest.json";
    std::cout << "manifest: " << manifest.string() << "\n";
    std::cout << "manifest_hash: " << fnv1a_hex(read_file(manifest)) << "\n";
    std::array<int, kTaskTypeCount> counts{};
    for (const auto& s : m.samples) ++counts[static_cast<std::size_t>(s.task)];
    std::cout << "task mix:";
    for (int t = 0; t < kTaskTypeCount; ++t) {
        std::cout << " " << to_string(static_cast<TaskType>(t)) << "=" << counts[static_cast<std::size_t>(t)];
    }
    std::cout << "\n";
    return kOk;
}

int cmd_relight(const fs::path& amb_path, const fs::path& light_path, double alpha, double stops,
                const std::string& tint_text, const fs::path& out, std::uint64_t seed, bool debug_linear) {
    const Tint tint = parse_tint(tint_text);
    const AmbientScale a{alpha};
    a.validate();
    const LinearImage amb{read_pfm(amb_path)};
    const DirectLightImage light{read_pfm(light_path)};
    const IlluminationGain gain = illumination_gain(ExposureStops{stops});
    const LinearImage relit = relight(amb, light, a, gain, tint);
    write_png(out, tone_map_auto(relit, seed).image);
    if (debug_linear) {
        // Direct term alone: zero ambient scale isolates gain * (light * tint).
        LinearImage zero{Image(amb.image.width(), amb.image.height())};
        const LinearImage direct = relight(zero, light, AmbientScale{0.0}, gain, tint);
        write_pfm(fs::path(out.string() + ".linear.pfm"), relit.image);
        write_pfm(fs::path(out.string() + ".direct.pfm"), direct.image);
    }
    std::cout << "wrote " << out.string() << "\n";
    return kOk;
}

int cmd_train(const std::string& config_path, const fs::path& data, const fs::path& out, std::uint64_t seed,
              int steps_override) {
    RunConfig cfg = config_or_default(config_path);
    if (steps_override >= 0) cfg.train.steps = steps_override;
    cfg.validate();
    const DatasetManifest manifest = load_manifest(data);
    const NormalizationStats stats = fit_manifest_stats(manifest);
    const auto examples = load_examples(manifest, cfg.tokenizer.factor, stats);
    ensure_dir(out);
    Checkpoint ckpt = initial_checkpoint(cfg.training_setup(stats), seed);

    const fs::path log_path = out / "train_log.csv";
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write " + log_path.string());
    write_log_header(log);
    run_training(ckpt, examples, cfg.train, seed, [&](const LogRow& row) {
        write_log_row(log, row);
        if (row.step % 500 == 0) {
            std::printf("step %lld loss %.6f grad_norm %.4f\n", static_cast<long long>(row.step), row.loss,
                        row.grad_norm);
            std::fflush(stdout);
        }
    });
    log.close();
    if (!log) throw IoError("failed writing " + log_path.string());
    save_checkpoint(ckpt, out / "checkpoint.bin");
    write_file(out / "config.json", dump_run_config(cfg));
    std::cout << "checkpoint: " << (out / "checkpoint.bin").string() << "\n";
    return kOk;
}

int cmd_eval(const std::string& config_path, const fs::path& data, const std::string& checkpoint, bool oracle,
             const fs::path& out, std::uint64_t seed, int jobs) {
    const RunConfig cfg = config_or_default(config_path);
    if (checkpoint.empty() && !oracle) throw ConfigError("eval needs --checkpoint or --oracle");
    const DatasetManifest manifest = load_manifest(data);

    std::optional<Checkpoint> ckpt;
    NormalizationStats stats;
    int factor = cfg.tokenizer.factor;
    if (!checkpoint.empty()) {
        ckpt = load_checkpoint(checkpoint);
        stats = ckpt->stats;
        factor = ckpt->factor;
    } else {
        stats = fit_manifest_stats(manifest);
    }
    DatasetManifest subset = manifest;
    if (cfg.eval.max_samples > 0 && static_cast<int>(subset.samples.size()) > cfg.eval.max_samples) {
        subset.samples.resize(static_cast<std::size_t>(cfg.eval.max_samples));
    }
    const auto examples = load_examples(subset, factor, stats);

    std::optional<ToyDiT<float>> model;
    std::vector<Predictor> predictors{copy_input_predictor()};
    if (ckpt) {
        model = model_from_checkpoint(*ckpt, cfg.eval.use_ema);
        predictors.push_back(model_predictor(*model, ckpt->policy, cfg.sampler, seed));
    }
    if (oracle) predictors.push_back(oracle_predictor());

    const CosineSimilarityStub stub;
    std::vector<const SimilarityBackend*> backends;
    if (cfg.eval.similarity) backends.push_back(&stub);

    std::string hash_input = dump_run_config(cfg) + read_file(data);
    if (!checkpoint.empty()) hash_input += read_file(checkpoint);
    const EvalReport report = run_benchmark(examples, predictors, backends, seed, fnv1a_hex(hash_input), jobs);

    ensure_dir(out);
    write_file(out / "report.json", report_to_json(report));
    write_file(out / "samples.csv", report_samples_csv(report));
    if (cfg.eval.dump_predictions) {
        const fs::path dir = out / "predictions";
        ensure_dir(dir);
        for (const auto& p : predictors) {
            for (const auto& ex : examples) {
                char name[96];
                std::snprintf(name, sizeof name, "s%05d_%s.png", ex.index, p.name.c_str());
                write_png(dir / name, p.predict(ex).image);
            }
        }
    }
    for (const auto& r : report.rows) {
        if (r.task != "all") continue;
        std::printf("%-12s n=%d psnr=%.3f +- %.3f\n", r.predictor.c_str(), r.n, r.psnr_mean, r.psnr_std);
    }
    std::cout << "report: " << (out / "report.json").string() << "\n";
    return kOk;
}

int cmd_inspect_seq(const std::string& config_path, const fs::path& data, int index) {
    const RunConfig cfg = config_or_default(config_path);
    DatasetManifest manifest = load_manifest(data);
    if (index < 0 || index >= static_cast<int>(manifest.samples.size())) {
        throw ConfigError("--index " + std::to_string(index) + " is outside the manifest (" +
                          std::to_string(manifest.samples.size()) + " samples)");
    }
    const NormalizationStats stats = fit_manifest_stats(manifest);
    DatasetManifest one = manifest;
    one.samples = {manifest.samples[static_cast<std::size_t>(index)]};
    const TrainingExample ex = load_examples(one, cfg.tokenizer.factor, stats).front();
    const TokenSequence seq = build_sequence(ex, ex.target.tokens, cfg.pruning);
    std::printf("sample %d (%s): %d tokens of width %d\n", ex.index, std::string(to_string(ex.task)).c_str(),
                seq.size(), static_cast<int>(seq.tokens.cols()));
    for (const auto& b : seq.blocks) {
        std::printf("  t=%d %-10s start=%3d count=%3d grid=%dx%d pool=%d%s\n", frame_slot(b.type),
                    std::string(to_string(b.type)).c_str(), b.start, b.count, b.grid_w, b.grid_h, b.pool,
                    b.soft ? " soft" : "");
    }
    const auto [kept, full] = condition_token_counts(cfg.pruning, seq.full_grid_w, seq.full_grid_h,
                                                     ex.conditions.src_box, ex.conditions.tgt_box);
    std::printf("condition tokens: %d of %d (%.2f%% reduction)\n", kept, full, 100.0 * (1.0 - double(kept) / full));
    return kOk;
}

int cmd_prune_report(const std::string& config_path, const std::string& data, int count, const fs::path& out,
                     std::uint64_t seed) {
    const RunConfig cfg = config_or_default(config_path);
    DatasetManifest workload;
    int factor = cfg.tokenizer.factor;
    if (!data.empty()) {
        workload = load_manifest(data);
    } else {
        // Library-default workload: 64x64 frames, full task mix.
        DatasetConfig dcfg;
        dcfg.count = count;
        dcfg.validate();
        workload.seed = seed;
        workload.width = dcfg.width;
        workload.height = dcfg.height;
        const auto tasks = task_schedule(dcfg, seed);
        for (int i = 0; i < dcfg.count; ++i) {
            workload.samples.push_back(render_sample(dcfg, seed, i, tasks[static_cast<std::size_t>(i)]).record);
        }
    }
    // Without a config the library policy applies; the run config's own
    // default is narrowed to the 32x32 training grid.
    const PruningPolicy policy = config_path.empty() ? PruningPolicy::defaults() : cfg.pruning;
    const ReductionReport r = reduction_report(policy, workload, factor);
    nlohmann::ordered_json j;
    j["samples"] = r.samples;
    j["factor"] = factor;
    j["tau"] = policy.tau;
    j["mean_reduction"] = r.mean_reduction;
    j["mean_reduction_percent"] = 100.0 * r.mean_reduction;
    j["per_task_reduction"] = r.per_task_reduction;
    if (!out.empty()) write_file(out, j.dump(1) + "\n");
    std::printf("mean condition-token reduction: %.2f%% over %zu samples\n", 100.0 * r.mean_reduction, r.samples);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lightmover: light-editing data, training and evaluation pipeline"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string config;

    auto add_common = [&](CLI::App* sub, bool with_jobs) {
        sub->add_option("--config", config, "Run config JSON (defaults when omitted)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Random seed")->capture_default_str();
        if (with_jobs) sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    };

    std::string out;
    auto* gen = app.add_subcommand("gen-data", "Render a paired dataset and write its manifest");
    add_common(gen, true);
    gen->add_option("--out", out, "Output directory")->required();

    std::string amb, light, tint = "1,1,1";
    double alpha = 1.0, stops = 0.0;
    bool debug_linear = false;
    auto* rel = app.add_subcommand("relight", "Relight an ambient/direct PFM pair and tone map to PNG");
    rel->add_option("--amb", amb, "Ambient PFM")->required();
    rel->add_option("--light", light, "Direct-light PFM")->required();
    rel->add_option("--alpha", alpha, "Ambient scale in [0, 1]")->capture_default_str();
    rel->add_option("--stops", stops, "Exposure change in stops")->capture_default_str();
    rel->add_option("--tint", tint, "Light tint r,g,b in [0, 1]")->capture_default_str();
    rel->add_option("--out", out, "Output PNG")->required();
    rel->add_option("--seed", seed, "Seed for percentile sampling")->capture_default_str();
    rel->add_flag("--debug-linear", debug_linear, "Also write <out>.linear.pfm and <out>.direct.pfm");

    std::string data;
    int steps = -1;
    auto* train = app.add_subcommand("train", "Train the toy transformer on a manifest");
    add_common(train, false);
    train->add_option("--data", data, "Training manifest.json")->required();
    train->add_option("--out", out, "Output directory")->required();
    train->add_option("--steps", steps, "Override train.steps");

    std::string checkpoint;
    bool oracle = false;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint against ground truth and the copy baseline");
    add_common(eval, true);
    eval->add_option("--data", data, "Evaluation manifest.json")->required();
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
    eval->add_flag("--oracle", oracle, "Also score a predictor that returns the ground truth");
    eval->add_option("--out", out, "Output directory")->required();

    int count = 500;
    auto* prune = app.add_subcommand("prune-report", "Condition-token reduction of the pruning policy");
    add_common(prune, false);
    prune->add_option("--data", data, "Workload manifest (default: generated in memory)");
    prune->add_option("--count", count, "Size of the generated workload")->capture_default_str();
    prune->add_option("--out", out, "Write the report JSON here");

    int index = 0;
    auto* inspect = app.add_subcommand("inspect-seq", "Show the token sequence layout of one sample");
    inspect->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
    inspect->add_option("--data", data, "Dataset manifest.json")->required();
    inspect->add_option("--index", index, "Sample index")->capture_default_str();

    auto* show = app.add_subcommand("print-config", "Print the effective run config as JSON");
    show->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*gen) return cmd_gen_data(config, out, seed, jobs);
        if (*rel) return cmd_relight(amb, light, alpha, stops, tint, out, seed, debug_linear);
        if (*train) return cmd_train(config, data, out, seed, steps);
        if (*eval) return cmd_eval(config, data, checkpoint, oracle, out, seed, jobs);
        if (*prune) return cmd_prune_report(config, data, count, out, seed);
        if (*inspect) return cmd_inspect_seq(config, data, index);
        if (*show) {
            std::cout << dump_run_config(config_or_default(config));
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kTraining;
    } catch (const CheckpointVersionError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kVersion;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
