#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "lightmover/image_io.hpp"
#include "lightmover/run_config.hpp"

using namespace lightmover;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    static int counter = 0;
    const auto log = fs::temp_directory_path() / ("lightmover_cli_" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string(LIGHTMOVER_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough for a few seconds per command.
std::string tiny_config() {
    return R"({
  "dataset": {"count": 3, "width": 16, "height": 16},
  "tokenizer": {"factor": 4},
  "model": {"latent_dim": 48, "model_dim": 32, "heads": 2, "blocks": 1, "time_embed_dim": 8,
            "mspe": {"head_dim": 16, "dim_w": 6, "dim_h": 6, "dim_t": 4}},
  "train": {"steps": 3, "batch_size": 2},
  "sampler": {"num_steps": 2}
})";
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("argument and config errors exit with 2") {
    const auto dir = lmtest::scratch_dir("cli_args");
    CHECK(run("").code == 2);
    CHECK(run("gen-data").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("gen-data --out " + dir.string() + " --bogus").code == 2);
    const auto bad = write_config(dir, "bad.json", R"({"dataset": {"cuont": 3}})");
    const Run r = run("gen-data --config " + bad.string() + " --out " + (dir / "d").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("dataset.cuont") != std::string::npos);
    CHECK(run("print-config").code == 0);
    CHECK(run("--help").code == 0);
}

TEST_CASE("pipeline commands, exit codes and artifacts") {
    const auto dir = lmtest::scratch_dir("cli_pipe");
    const auto cfg = write_config(dir, "tiny.json", tiny_config());
    const std::string c = " --config " + cfg.string();

    const Run gen = run("gen-data" + c + " --seed 7 --out " + (dir / "data").string());
    REQUIRE(gen.code == 0);
    CHECK(gen.out.find("manifest_hash:") != std::string::npos);
    CHECK(gen.out.find("light_move=3") != std::string::npos);
    const auto manifest = (dir / "data" / "manifest.json").string();

    CHECK(run("inspect-seq" + c + " --data " + manifest + " --index 1").code == 0);
    CHECK(run("inspect-seq" + c + " --data " + manifest + " --index 9").code == 2);

    // Zero steps: the checkpoint holds the initialization.
    REQUIRE(run("train" + c + " --seed 3 --steps 0 --data " + manifest + " --out " + (dir / "t0").string()).code == 0);
    const Checkpoint init = load_checkpoint(dir / "t0" / "checkpoint.bin");
    TrainingSetup setup = load_run_config(cfg).training_setup(init.stats);
    CHECK(init.params == initial_checkpoint(setup, 3).params);
    CHECK(init.optimizer.step == 0);

    REQUIRE(run("train" + c + " --seed 3 --data " + manifest + " --out " + (dir / "t").string()).code == 0);
    const std::string log = slurp(dir / "t" / "train_log.csv");
    CHECK(log.rfind("step,loss,lr,grad_norm\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
    CHECK(fs::exists(dir / "t" / "config.json"));

    const auto ckpt = (dir / "t" / "checkpoint.bin").string();
    REQUIRE(run("eval" + c + " --data " + manifest + " --checkpoint " + ckpt + " --oracle --out " +
                (dir / "e").string()).code == 0);
    const auto report = Json::parse(slurp(dir / "e" / "report.json"));
    bool oracle_capped = false;
    for (const auto& row : report["rows"]) {
        if (row["predictor"] == "oracle" && row["task"] == "all") oracle_capped = row["psnr_mean"] == 99.0;
    }
    CHECK(oracle_capped);
    CHECK(run("eval" + c + " --data " + manifest + " --out " + (dir / "e2").string()).code == 2);

    // Version mismatch.
    std::string bytes = slurp(ckpt);
    bytes[8] = 7;
    std::ofstream(dir / "v7.bin", std::ios::binary) << bytes;
    CHECK(run("eval" + c + " --data " + manifest + " --checkpoint " + (dir / "v7.bin").string() + " --out " +
              (dir / "e3").string()).code == 5);

    // Missing inputs.
    CHECK(run("train" + c + " --data " + (dir / "nope.json").string() + " --out " + (dir / "t2").string()).code == 3);
    CHECK(run("relight --amb " + (dir / "x.pfm").string() + " --light " + (dir / "y.pfm").string() + " --out " +
              (dir / "z.png").string()).code == 3);

    // A learning rate this large overflows the weights and the loss.
    auto blow = Json::parse(tiny_config());
    blow["optimizer"]["lr"] = 1e30;
    blow["train"]["steps"] = 20;
    const auto blow_cfg = write_config(dir, "blow.json", blow.dump());
    CHECK(run("train --config " + blow_cfg.string() + " --data " + manifest + " --out " + (dir / "t3").string()).code ==
          4);

    const Run pr = run("prune-report" + c + " --data " + manifest + " --out " + (dir / "prune.json").string());
    CHECK(pr.code == 0);
    CHECK(Json::parse(slurp(dir / "prune.json")).contains("mean_reduction"));
}

TEST_CASE("relight command with linear dumps") {
    const auto dir = lmtest::scratch_dir("cli_relight");
    const auto cfg = write_config(dir, "tiny.json", tiny_config());
    REQUIRE(run("gen-data --config " + cfg.string() + " --seed 2 --out " + (dir / "data").string()).code == 0);
    const auto m = load_manifest(dir / "data" / "manifest.json");
    const auto amb = m.resolve(m.samples[0].files.amb_a).string();
    const auto light = m.resolve(m.samples[0].files.light_a).string();
    const std::string base = "relight --amb " + amb + " --light " + light + " --alpha 1 --debug-linear";

    REQUIRE(run(base + " --stops 0 --tint 1,1,1 --out " + (dir / "s0.png").string()).code == 0);
    REQUIRE(run(base + " --stops 1 --tint 1,1,1 --out " + (dir / "s1.png").string()).code == 0);
    REQUIRE(run(base + " --stops 0 --tint 1,0,0 --out " + (dir / "red.png").string()).code == 0);
    CHECK(fs::exists(dir / "s0.png"));

    const Image a = read_pfm(amb);
    const Image l = read_pfm(light);
    const Image lin0 = read_pfm(dir / "s0.png.linear.pfm");
    const Image lin1 = read_pfm(dir / "s1.png.linear.pfm");
    int brighter = 0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        if (l.values()[i] == 0.0) {
            CHECK(lin1.values()[i] == lin0.values()[i]);
        } else {
            CHECK(lin1.values()[i] > lin0.values()[i]);
            ++brighter;
        }
    }
    CHECK(brighter > 0);
    const Image red = read_pfm(dir / "red.png.direct.pfm");
    for (int y = 0; y < red.height(); ++y)
        for (int x = 0; x < red.width(); ++x) {
            CHECK(red.at(x, y, 1) == 0.0);
            CHECK(red.at(x, y, 2) == 0.0);
        }
    CHECK(run(base + " --tint 1,2 --out " + (dir / "bad.png").string()).code == 2);
    CHECK(run(base + " --alpha 1.5 --out " + (dir / "bad.png").string()).code == 2);
}

TEST_CASE("identical seeds give identical bytes") {
    const auto dir = lmtest::scratch_dir("cli_det");
    const auto cfg = write_config(dir, "tiny.json", tiny_config());
    const std::string c = " --config " + cfg.string();
    for (const char* tag : {"a", "b"}) {
        const auto d = dir / tag;
        REQUIRE(run("gen-data" + c + " --seed 5 --jobs 2 --out " + (d / "data").string()).code == 0);
        const auto manifest = (d / "data" / "manifest.json").string();
        REQUIRE(run("train" + c + " --seed 5 --data " + manifest + " --out " + (d / "t").string()).code == 0);
        REQUIRE(run("eval" + c + " --seed 5 --jobs 2 --data " + manifest + " --checkpoint " +
                    (d / "t" / "checkpoint.bin").string() + " --out " + (d / "e").string()).code == 0);
    }
    for (const char* f : {"data/manifest.json", "t/train_log.csv", "t/checkpoint.bin", "e/report.json", "e/samples.csv"}) {
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    REQUIRE(run("gen-data" + c + " --seed 6 --out " + (dir / "c").string()).code == 0);
    const auto ma = load_manifest(dir / "a" / "data" / "manifest.json");
    CHECK(slurp(ma.resolve(ma.samples[0].files.light_a)) != slurp(dir / "c" / ma.samples[0].files.light_a));
}
