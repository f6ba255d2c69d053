#include "lightmover/trainer.hpp"

#include <cstdio>
#include <ostream>

#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

Checkpoint initial_checkpoint(const TrainingSetup& setup, std::uint64_t seed) {
    if (setup.model.latent_dim != 3 * setup.factor * setup.factor) {
        throw ConfigError("model.latent_dim must equal 3 * tokenizer.factor^2 (" +
                          std::to_string(3 * setup.factor * setup.factor) + ")");
    }
    setup.policy.validate();
    Checkpoint ck;
    ck.model = setup.model;
    ck.factor = setup.factor;
    ck.stats = setup.stats;
    ck.policy = setup.policy;
    const ToyDiT<float> model(setup.model, derive_seed({seed, 0x1417ull}));
    ck.params = model.params();
    ck.optimizer = OptimizerState::init(setup.optimizer, ck.params);
    return ck;
}

void run_training(Checkpoint& ckpt, const std::vector<TrainingExample>& examples, const TrainConfig& train,
                  std::uint64_t seed, const std::function<void(const LogRow&)>& on_log) {
    train.validate();
    if (train.steps > 0 && examples.empty()) throw ContractError("run_training: no training examples");
    ToyDiT<float> model = model_from_checkpoint(ckpt, false);
    const std::int64_t first = ckpt.optimizer.step;
    for (int k = 0; k < train.steps; ++k) {
        const std::int64_t step = first + k;
        Rng rng(derive_seed({seed, static_cast<std::uint64_t>(step), 0xBA7Cull}));
        std::vector<const TrainingExample*> batch;
        batch.reserve(static_cast<std::size_t>(train.batch_size));
        for (int b = 0; b < train.batch_size; ++b) {
            batch.push_back(&examples[static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<int>(examples.size()) - 1))]);
        }
        const StepResult r = train_step(model, batch, ckpt.optimizer, ckpt.policy, train,
                                        derive_seed({seed, static_cast<std::uint64_t>(step)}));
        if (on_log && (step % train.log_every == 0 || k + 1 == train.steps)) {
            on_log({step, r.loss, ckpt.optimizer.config.lr, r.grad_norm});
        }
    }
    ckpt.params = model.params();
}

void write_log_header(std::ostream& out) { out << "step,loss,lr,grad_norm\n"; }

void write_log_row(std::ostream& out, const LogRow& row) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(row.step), row.loss, row.lr,
                  row.grad_norm);
    out << buf;
}

}  // namespace lightmover
