#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/run_config.hpp"

using namespace lightmover;

namespace {

std::string error_text(const std::string& json) {
    try {
        run_config_from_json(Json::parse(json));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("run config round-trips through json") {
    RunConfig cfg;
    cfg.train.steps = 17;
    cfg.pruning.mode = PruneMode::soft;
    cfg.sampler.num_steps = 3;
    cfg.dataset.mix.weights = {1, 2, 0, 0, 0, 0, 1};
    const auto text = dump_run_config(cfg);
    const auto back = run_config_from_json(Json::parse(text));
    CHECK(dump_run_config(back) == text);
    CHECK(back.train == cfg.train);
    CHECK(back.sampler == cfg.sampler);
    CHECK(back.model == cfg.model);

    CHECK(dump_run_config(run_config_from_json(Json::object())) == dump_run_config(RunConfig{}));
    CHECK(dump_run_config(run_config_from_json(Json::parse(R"({"train": {"steps": 5000}})"))) ==
          dump_run_config(RunConfig{}));
}

TEST_CASE("run defaults narrow the library defaults to the 32x32 experiment") {
    const RunConfig cfg;
    CHECK(OptimizerConfig{}.lr == 1e-4);
    CHECK(cfg.optimizer.lr == 1e-3);
    CHECK(cfg.optimizer.weight_decay == OptimizerConfig{}.weight_decay);
    CHECK(cfg.optimizer.ema_decay == 0.99);
    CHECK(SamplerConfig{}.num_steps == 20);
    CHECK(cfg.sampler.num_steps == 1);
    CHECK(cfg.dataset.width == 32);
    CHECK(cfg.dataset.width / cfg.tokenizer.factor % cfg.pruning.candidates.back() == 0);
    CHECK(PruningPolicy::defaults().candidates.back() == 8);
}

TEST_CASE("config errors name the offending key") {
    CHECK(error_text(R"({"train": {"stepz": 3}})").find("train.stepz") != std::string::npos);
    CHECK(error_text(R"({"bogus": 1})").find("bogus") != std::string::npos);
    CHECK(error_text(R"({"model": {"mspe": {"basis": 2}}})").find("model.mspe.basis") != std::string::npos);
    CHECK_FALSE(error_text(R"({"train": {"steps": "many"}})").empty());
    CHECK_FALSE(error_text(R"({"tokenizer": {"factor": 4}})").empty());
    CHECK_FALSE(error_text(R"({"pruning": {"tau": 0}})").empty());

    const auto dir = lmtest::scratch_dir("cfg");
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), IoError);
}

TEST_CASE("checkpoint round trip and version check") {
    TrainingSetup setup;
    setup.model.model_dim = 32;
    setup.model.heads = 2;
    setup.model.blocks = 1;
    setup.model.time_embed_dim = 8;
    setup.model.mspe.head_dim = 16;
    setup.model.mspe.dim_w = 6;
    setup.model.mspe.dim_h = 6;
    setup.model.mspe.dim_t = 4;
    setup.policy = RunConfig::default_pruning();
    setup.stats.mean = {0.1, 0.2, 0.3};
    Checkpoint ckpt = initial_checkpoint(setup, 5);
    ckpt.optimizer.step = 12;
    ckpt.optimizer.m.assign(ckpt.params.size(), 0.25f);
    ckpt.optimizer.ema[3] = -7.5f;
    ckpt.policy.color_logits[1] = 0.125;

    const auto dir = lmtest::scratch_dir("ckpt");
    save_checkpoint(ckpt, dir / "a.bin");
    const Checkpoint back = load_checkpoint(dir / "a.bin");
    CHECK(back.model == ckpt.model);
    CHECK(back.factor == ckpt.factor);
    CHECK(back.stats == ckpt.stats);
    CHECK(back.policy.color_logits == ckpt.policy.color_logits);
    CHECK(back.policy.candidates == ckpt.policy.candidates);
    CHECK(back.params == ckpt.params);
    CHECK(back.optimizer.ema == ckpt.optimizer.ema);
    CHECK(back.optimizer.m == ckpt.optimizer.m);
    CHECK(back.optimizer.v == ckpt.optimizer.v);
    CHECK(back.optimizer.step == 12);
    CHECK(back.optimizer.config == ckpt.optimizer.config);
    CHECK(model_from_checkpoint(back, true).params()[3] == -7.5f);
    CHECK(model_from_checkpoint(back, false).params() == ckpt.params);

    std::string bytes;
    {
        std::ifstream in(dir / "a.bin", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::string bumped = bytes;
    bumped[8] = 2;
    std::ofstream(dir / "v2.bin", std::ios::binary) << bumped;
    CHECK_THROWS_AS(load_checkpoint(dir / "v2.bin"), CheckpointVersionError);
    std::ofstream(dir / "cut.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), IoError);
    std::string magic = bytes;
    magic[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary) << magic;
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.bin"), IoError);
}
