#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/flowmatch.hpp"
#include "lightmover/run_config.hpp"

using namespace lightmover;

namespace {

ToyDitConfig linear_only_config() {
    ToyDitConfig c;
    c.blocks = 0;
    c.final_norm = false;
    c.time_conditioning = false;
    return c;
}

ToyDitConfig small_config() {
    ToyDitConfig c;
    c.model_dim = 64;
    c.heads = 2;
    c.blocks = 2;
    c.time_embed_dim = 16;
    return c;
}

std::vector<FlowItem> make_batch(int n, const PruningPolicy& policy) {
    std::vector<FlowItem> batch;
    for (int i = 0; i < n; ++i) {
        batch.push_back(make_flow_item(lmtest::make_example(32, 11, i), policy, 100 + i));
    }
    return batch;
}

}  // namespace

TEST_CASE("interpolation endpoints and midpoint") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixXd x0(4, 6), x1(4, 6);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        x0.data()[i] = n(rng);
        x1.data()[i] = n(rng);
    }
    CHECK(interpolate_noisy(x1, x0, 0.0) == x0);
    CHECK(interpolate_noisy(x1, x0, 1.0) == x1);
    const MatrixXd zeros = MatrixXd::Zero(3, 3);
    const MatrixXd twos = MatrixXd::Constant(3, 3, 2.0);
    CHECK(interpolate_noisy(twos, zeros, 0.5) == MatrixXd::Ones(3, 3));
    CHECK_THROWS_AS(interpolate_noisy(x1, zeros, 0.5), ShapeError);
    CHECK_THROWS_AS(interpolate_noisy(x1, x0, 1.5), DomainError);
}

TEST_CASE("velocity is the exact derivative of the linear path") {
    CHECK(velocity_target(MatrixXd::Constant(2, 2, 3.0), MatrixXd::Zero(2, 2)) == MatrixXd::Constant(2, 2, 3.0));
    const MatrixXd same = MatrixXd::Constant(2, 3, 0.7);
    CHECK(velocity_target(same, same) == MatrixXd::Zero(2, 3));
    // Small integers and dyadic times keep every operation exact.
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> d(-8, 8);
    for (int trial = 0; trial < 50; ++trial) {
        MatrixXd x0(3, 4), x1(3, 4);
        for (Eigen::Index i = 0; i < x0.size(); ++i) {
            x0.data()[i] = d(rng);
            x1.data()[i] = d(rng);
        }
        const double t = (trial % 8) / 16.0;
        const double eps = 1.0 / 32.0;
        const MatrixXd fd = (interpolate_noisy(x1, x0, t + eps) - interpolate_noisy(x1, x0, t)) / eps;
        CHECK(fd == velocity_target(x1, x0));
    }
    CHECK_THROWS_AS(velocity_target(MatrixXd::Zero(2, 2), MatrixXd::Zero(3, 2)), ShapeError);
}

TEST_CASE("flow loss values") {
    const MatrixXd a = MatrixXd::Random(5, 7);
    CHECK(flow_loss(a, a) == 0.0);
    CHECK(flow_loss((a.array() + 1.0).matrix(), a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(flow_loss(a, MatrixXd::Zero(5, 7)) >= 0.0);
    CHECK_THROWS_AS(flow_loss(a, MatrixXd::Zero(5, 6)), ShapeError);
}

TEST_CASE("prediction covers the output block only and is deterministic") {
    const auto ex = lmtest::make_example(32, 3, 0);
    const ToyDiT<float> model(small_config(), 1, InitScheme::all_random);
    const auto policy = RunConfig::default_pruning();
    const auto seq = build_sequence(ex, ex.target.tokens, policy);
    const MatrixXd v1 = predict_velocity(model, seq, 0.3);
    const MatrixXd v2 = predict_velocity(model, seq, 0.3);
    CHECK(v1.rows() == ex.target.token_count());
    CHECK(v1.cols() == ex.target.token_dim());
    CHECK(v1 == v2);

    TokenSequence broken = seq;
    broken.blocks.pop_back();
    CHECK_THROWS_AS(model.forward(broken, 0.3), ContractError);
}

TEST_CASE("permuting tagged condition tokens leaves the prediction unchanged") {
    const auto ex = lmtest::make_example(32, 3, 1);
    const ToyDiT<double> model(small_config(), 2, InitScheme::all_random);
    const auto seq = build_sequence(ex, ex.target.tokens, RunConfig::default_pruning());
    TokenSequence swapped = seq;
    const int a = seq.blocks[0].start + 1;
    const int b = seq.blocks[1].start + 2;
    swapped.tokens.row(a) = seq.tokens.row(b);
    swapped.tokens.row(b) = seq.tokens.row(a);
    std::swap(swapped.tags[static_cast<std::size_t>(a)], swapped.tags[static_cast<std::size_t>(b)]);
    const MatrixXd v1 = model.forward(seq, 0.6);
    const MatrixXd v2 = model.forward(swapped, 0.6);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss attaches to output-role tokens only") {
    const auto ex = lmtest::make_example(32, 3, 2);
    const ToyDiT<double> model(small_config(), 4, InitScheme::all_random);
    const auto item = make_flow_item(ex, RunConfig::default_pruning(), 17);
    const auto& out = item.seq.output_block();
    MatrixXd full = item.seq.tokens;
    full.middleRows(out.start, out.count) = item.target;
    const MatrixXd pred = model.forward(item.seq, item.t);
    const double base = sequence_flow_loss(pred, item.seq, full);
    CHECK(base == flow_loss(pred, item.target));

    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 3.0);
    MatrixXd perturbed = full;
    for (Eigen::Index r = 0; r < out.start; ++r) {
        for (Eigen::Index c = 0; c < perturbed.cols(); ++c) perturbed(r, c) += n(rng);
    }
    CHECK(sequence_flow_loss(pred, item.seq, perturbed) == base);

    perturbed = full;
    perturbed(out.start, 0) += 1.0;
    CHECK(sequence_flow_loss(pred, item.seq, perturbed) != base);

    // Dropped optional frames move the output block; the loss follows it.
    const auto dropped = build_sequence(ex, item.seq.tokens.middleRows(out.start, out.count), RunConfig::default_pruning(),
                                        true, true);
    CHECK(dropped.output_block().start < out.start);
    MatrixXd full_dropped = dropped.tokens;
    full_dropped.middleRows(dropped.output_block().start, out.count) = item.target;
    const MatrixXd pred_dropped = model.forward(dropped, item.t);
    CHECK(sequence_flow_loss(pred_dropped, dropped, full_dropped) == flow_loss(pred_dropped, item.target));
}

TEST_CASE("gradient check on the linear-only model") {
    const auto policy = RunConfig::default_pruning();
    const ToyDiT<double> model(linear_only_config(), 7, InitScheme::all_random);
    const auto batch = make_batch(2, policy);
    // The loss is exactly quadratic in any single parameter here, so central
    // differences carry no truncation error; a wider step only shrinks the
    // cancellation error in L(p + eps) - L(p - eps).
    const auto r = grad_check(model, batch, 1e-3, 64, 1);
    CHECK(r.checked == 64);
    CHECK(r.max_rel_error < 1e-8);
    CHECK_THROWS_AS(grad_check(model, batch, 0.0), DomainError);
}

TEST_CASE("gradient check on a full model in double precision") {
    const auto policy = RunConfig::default_pruning();
    const ToyDiT<double> model(small_config(), 8, InitScheme::all_random);
    const auto batch = make_batch(2, policy);
    const auto r = grad_check(model, batch, 1e-4, 80, 2);
    MESSAGE("max relative error " << r.max_rel_error);
    CHECK(r.max_rel_error < 1e-5);
}
