#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <utility>
#include <vector>

#include "bidir/han.hpp"

using namespace bidir;

namespace {

DenseSpec dense(Index in, Index out, Activation disc_act = Activation::Identity,
                Activation gen_act = Activation::Identity, bool bias = false) {
    DenseSpec spec;
    spec.in = in;
    spec.out = out;
    spec.disc.act = disc_act;
    spec.gen.act = gen_act;
    spec.disc.bias = spec.gen.bias = bias;
    return spec;
}

Dataset toy_data(Index n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.classes = 3;
    d.images = Tensor<float>({n, 1, 2, 2});
    for (Index i = 0; i < n; ++i) {
        const Index label = Index(rng.below(3));
        d.labels.push_back(label);
        for (Index p = 0; p < 4; ++p) d.images[i * 4 + p] = float(rng.uniform(0.0, 0.25));
        d.images[i * 4 + label] = float(rng.uniform(0.75, 1.0));
    }
    return d;
}

// tied 4 <-> 3 hybrid; disc and gen get their own biases so parameter
// ownership per update is observable
BidirNetwork<double> toy_hybrid(std::uint64_t seed) {
    NetworkSpec ns;
    DenseSpec layer = dense(4, 3, Activation::Identity, Activation::Sigmoid, true);
    ns.layers = {layer};
    ns.input_shape = {1, 2, 2};
    Rng rng(seed);
    return BidirNetwork<double>(ns, rng);
}

BidirNetwork<double> toy_adversary(std::uint64_t seed, Index in = 4) {
    NetworkSpec ns;
    ns.layers = {dense(in, 5, Activation::LeakyRelu, Activation::Identity, true),
                 dense(5, 1)};
    ns.input_shape = {in};
    Rng rng(seed);
    return BidirNetwork<double>(ns, rng);
}

bool same_state(const std::vector<TensorD>& a, const std::vector<TensorD>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t t = 0; t < a.size(); ++t)
        for (Index i = 0; i < a[t].size(); ++i)
            if (a[t][i] != b[t][i]) return false;
    return true;
}

HanConfig quick_config(Index iterations, Index eval_every = 100) {
    HanConfig cfg;
    cfg.iterations = iterations;
    cfg.eval_every = eval_every;
    cfg.batch = 10;
    cfg.eval.chunk = 50;
    return cfg;
}

}  // namespace

TEST_CASE("han hooks fire classifier, adversary, generator in order") {
    Dataset train_set = toy_data(30, 201), test_set = toy_data(12, 202);

    auto record = [&](Regime regime, Index iterations) {
        BidirNetwork<double> hybrid = toy_hybrid(1);
        BidirNetwork<double> adversary = toy_adversary(2);
        std::vector<std::pair<Index, HanUpdate>> calls;
        HanConfig cfg = quick_config(iterations);
        cfg.regime = regime;
        train_han(hybrid, adversary, train_set, test_set, cfg,
                  [&](Index it, HanUpdate kind) { calls.emplace_back(it, kind); });
        return calls;
    };

    auto full = record(Regime::BL, 2);
    REQUIRE(full.size() == 6);
    const HanUpdate order[] = {HanUpdate::Classifier, HanUpdate::Adversary, HanUpdate::Generator};
    for (Index it = 0; it < 2; ++it)
        for (int k = 0; k < 3; ++k) {
            CHECK(full[std::size_t(3 * it + k)].first == it);
            CHECK(full[std::size_t(3 * it + k)].second == order[k]);
        }

    auto switched = record(Regime::BLThenBP, 4);
    REQUIRE(switched.size() == 8);  // 2 x (C,D,G) then 2 x C
    CHECK(switched[6] == std::make_pair(Index(2), HanUpdate::Classifier));
    CHECK(switched[7] == std::make_pair(Index(3), HanUpdate::Classifier));

    auto plain = record(Regime::BP, 3);
    REQUIRE(plain.size() == 3);
    for (const auto& call : plain) CHECK(call.second == HanUpdate::Classifier);
}

TEST_CASE("adversary step trains the adversary and never the hybrid") {
    Rng rng(203);
    BidirNetwork<double> hybrid = toy_hybrid(3);
    BidirNetwork<double> adversary = toy_adversary(4);
    AdamOptimizer<double> opt(adversary.params(Direction::Disc));

    TensorD x = sample_uniform<double>(rng, 0.0, 1.0, {6, 4});
    TensorD z = sample_uniform<double>(rng, 0.0, 1.0, {6, 3});

    auto hybrid_before = hybrid.snapshot_state();
    auto adv_before = adversary.snapshot_state();
    const double loss = han_step_adversary(hybrid, adversary, opt, x, z);
    CHECK(loss > 0.0);
    CHECK(same_state(hybrid.snapshot_state(), hybrid_before));
    CHECK_FALSE(same_state(adversary.snapshot_state(), adv_before));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("generator step trains gen parameters only") {
    Rng rng(204);
    BidirNetwork<double> hybrid = toy_hybrid(5);
    BidirNetwork<double> adversary = toy_adversary(6);
    AdamOptimizer<double> opt(hybrid.params(Direction::Gen));

    TensorD z = sample_uniform<double>(rng, 0.0, 1.0, {6, 3});

    // state layout of the single tied layer: weight, disc bias, gen bias
    auto before = hybrid.snapshot_state();
    REQUIRE(before.size() == 3);
    auto adv_before = adversary.snapshot_state();
    const double loss = han_step_generator(hybrid, adversary, opt, z);
    CHECK(loss > 0.0);
    auto after = hybrid.snapshot_state();

    CHECK(same_state(adversary.snapshot_state(), adv_before));
    bool weight_moved = false;
    for (Index i = 0; i < before[0].size(); ++i)
        weight_moved = weight_moved || before[0][i] != after[0][i];
    CHECK(weight_moved);
    bool disc_bias_moved = false;
    for (Index i = 0; i < before[1].size(); ++i)
        disc_bias_moved = disc_bias_moved || before[1][i] != after[1][i];
    CHECK_FALSE(disc_bias_moved);
    bool gen_bias_moved = false;
    for (Index i = 0; i < before[2].size(); ++i)
        gen_bias_moved = gen_bias_moved || before[2][i] != after[2][i];
    CHECK(gen_bias_moved);
}

TEST_CASE("repeated generator steps on one z reduce the adversary's veto") {
    Rng rng(205);
    BidirNetwork<double> hybrid = toy_hybrid(7);
    BidirNetwork<double> adversary = toy_adversary(8);
    AdamOptimizer<double> opt(hybrid.params(Direction::Gen));
    TensorD z = sample_uniform<double>(rng, 0.0, 1.0, {8, 3});

    double last = han_step_generator(hybrid, adversary, opt, z);
    double drop = 0;
    for (int i = 0; i < 5; ++i) {
        const double now = han_step_generator(hybrid, adversary, opt, z);
        drop += last - now;
        last = now;
    }
    CHECK(drop > 0.0);  // net improvement against a frozen adversary
}

TEST_CASE("han loop evaluates, tracks the best sweep, and restores it") {
    Dataset train_set = toy_data(60, 211), test_set = toy_data(24, 212);
    BidirNetwork<double> hybrid = toy_hybrid(9);
    BidirNetwork<double> adversary = toy_adversary(10);

    HanConfig cfg = quick_config(30, 10);
    cfg.regime = Regime::BL;
    TrainResult r = train_han(hybrid, adversary, train_set, test_set, cfg);
    REQUIRE(r.history.size() == 3);
    CHECK(r.history.back().iteration == 30);
    CHECK(r.final_.acc_test == r.history.back().metrics.acc_test);

    RobustnessReport again = evaluate_robustness(hybrid, test_set, cfg.eval);
    CHECK(again.acc_test == r.best.acc_test);
    CHECK(again.acc_adv == r.best.acc_adv);
}

TEST_CASE("identical seeded han runs agree sweep for sweep") {
    Dataset train_set = toy_data(40, 221), test_set = toy_data(16, 222);

    auto run_once = [&] {
        BidirNetwork<double> hybrid = toy_hybrid(11);
        BidirNetwork<double> adversary = toy_adversary(12);
        HanConfig cfg = quick_config(12, 4);
        cfg.regime = Regime::BLThenBP;
        return train_han(hybrid, adversary, train_set, test_set, cfg);
    };
    TrainResult a = run_once();
    TrainResult b = run_once();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].iteration == b.history[i].iteration);
        CHECK(a.history[i].metrics.acc_test == b.history[i].metrics.acc_test);
        CHECK(a.history[i].metrics.acc_adv == b.history[i].metrics.acc_adv);
        CHECK(a.history[i].metrics.sigmoid_rate == b.history[i].metrics.sigmoid_rate);
    }

    // the z stream is part of the seeded state
    BidirNetwork<double> hybrid = toy_hybrid(11);
    BidirNetwork<double> adversary = toy_adversary(12);
    HanConfig cfg = quick_config(12, 4);
    cfg.regime = Regime::BLThenBP;
    cfg.z_seed = 999;
    TrainResult c = train_han(hybrid, adversary, train_set, test_set, cfg);
    bool any_differs = false;
    for (std::size_t i = 0; i < c.history.size(); ++i)
        any_differs =
            any_differs || c.history[i].metrics.sigmoid_rate != a.history[i].metrics.sigmoid_rate;
    CHECK(any_differs);
}

TEST_CASE("train_han rejects a mismatched adversary or dataset") {
    Dataset train_set = toy_data(30, 231), test_set = toy_data(12, 232);
    BidirNetwork<double> hybrid = toy_hybrid(13);

    BidirNetwork<double> wide_head = toy_adversary(14);
    {
        // two output logits instead of one
        NetworkSpec ns;
        ns.layers = {dense(4, 2)};
        ns.input_shape = {4};
        Rng rng(15);
        BidirNetwork<double> two_logits(ns, rng);
        CHECK_THROWS_AS(
            train_han(hybrid, two_logits, train_set, test_set, quick_config(2)), ConfigError);
    }
    {
        BidirNetwork<double> narrow = toy_adversary(16, /*in=*/5);
        CHECK_THROWS_AS(
            train_han(hybrid, narrow, train_set, test_set, quick_config(2)), ConfigError);
    }

    HanConfig cfg = quick_config(0);
    CHECK_THROWS_AS(train_han(hybrid, wide_head, train_set, test_set, cfg), ConfigError);
    cfg = quick_config(2);
    cfg.eval_every = 0;
    CHECK_THROWS_AS(train_han(hybrid, wide_head, train_set, test_set, cfg), ConfigError);

    Dataset five_class = toy_data(30, 233);
    five_class.classes = 5;
    CHECK_THROWS_AS(
        train_han(hybrid, wide_head, five_class, test_set, quick_config(2)), ConfigError);
}
