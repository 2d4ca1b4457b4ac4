#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bidir/optim.hpp"
#include "bidir/rng.hpp"

using namespace bidir;

TEST_CASE("adam first step moves by lr * g / (|g| + eps)") {
    TensorD w = TensorD::vec({1.0, -2.0, 0.5});
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamOptimizer<double> opt({&w}, cfg);
    TensorD g = TensorD::vec({2.0, -3.0, 0.0});
    opt.step({g});
    // bias correction cancels exactly at t=1, so the closed form is sharp
    CHECK(std::abs(w[0] - (1.0 - 0.1 * 2.0 / (2.0 + 1e-8))) <= 1e-12);
    CHECK(std::abs(w[1] - (-2.0 + 0.1 * 3.0 / (3.0 + 1e-8))) <= 1e-12);
    CHECK(w[2] == 0.5);  // zero gradient, zero update
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam matches a plain reference implementation over many steps") {
    Rng rng(7);
    TensorD w = sample_normal<double>(rng, 0, 1, {11});
    TensorD ref = w;
    AdamConfig cfg;
    cfg.lr = 3e-3;
    AdamOptimizer<double> opt({&w}, cfg);

    // reference written out longhand, independent of the library kernels
    std::vector<double> m(11, 0.0), v(11, 0.0);
    for (int t = 1; t <= 40; ++t) {
        TensorD g = sample_normal<double>(rng, 0, 2, {11});
        opt.step({g});
        for (int i = 0; i < 11; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mhat = m[i] / (1.0 - std::pow(0.9, t));
            const double vhat = v[i] / (1.0 - std::pow(0.999, t));
            ref[i] -= 3e-3 * mhat / (std::sqrt(vhat) + 1e-8);
        }
        for (int i = 0; i < 11; ++i) CHECK(w[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("adam with lr = 0 leaves parameters untouched") {
    TensorD w = TensorD::vec({1.0, 2.0});
    TensorD before = w;
    AdamConfig cfg;
    cfg.lr = 0.0;
    AdamOptimizer<double> opt({&w}, cfg);
    for (int i = 0; i < 3; ++i) opt.step({TensorD::vec({5.0, -5.0})});
    CHECK(approx_equal(w, before, 0.0));
    CHECK(opt.step_count() == 3);
}

TEST_CASE("two optimizers over a shared tensor keep independent moments") {
    // the weight-tied training setup: disc and gen each own an optimizer,
    // both lists contain the same weight tensor
    TensorD w = TensorD::vec({0.0});
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamOptimizer<double> disc({&w}, cfg), gen({&w}, cfg);

    disc.step({TensorD::vec({1.0})});
    const double after_disc = w[0];
    CHECK(after_disc == doctest::Approx(-0.01).epsilon(1e-6));

    gen.step({TensorD::vec({-1.0})});
    CHECK(w[0] == doctest::Approx(after_disc + 0.01).epsilon(1e-6));

    // gen's step did not advance disc's clock or moments
    CHECK(disc.step_count() == 1);
    CHECK(gen.step_count() == 1);
    CHECK(disc.first_moment(0)[0] == doctest::Approx(0.1));
    CHECK(gen.first_moment(0)[0] == doctest::Approx(-0.1));
}

TEST_CASE("adam validates configuration and gradient lists") {
    TensorD w = TensorD::vec({1.0});
    AdamConfig bad;
    bad.lr = -1;
    CHECK_THROWS_AS(AdamOptimizer<double>({&w}, bad), ConfigError);
    bad = {};
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(AdamOptimizer<double>({&w}, bad), ConfigError);
    bad = {};
    bad.epsilon = 0;
    CHECK_THROWS_AS(AdamOptimizer<double>({&w}, bad), ConfigError);

    AdamOptimizer<double> opt({&w});
    CHECK_THROWS_AS(opt.step({}), ValueError);
    CHECK_THROWS_AS(opt.step({TensorD::vec({1.0, 2.0})}), ShapeError);

    TensorD inf_grad = TensorD::vec({std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(opt.step({inf_grad}), NumericError);
}

TEST_CASE("softmax cross entropy against hand-computed values") {
    TensorD logits = {{1.0, 2.0, 3.0}};
    TensorD target = {{0.0, 0.0, 1.0}};
    auto lg = softmax_cross_entropy(logits, target);
    // log(e^1 + e^2 + e^3) - 3
    CHECK(lg.loss == doctest::Approx(0.40760596444438).epsilon(1e-10));
    CHECK(lg.grad(0, 0) == doctest::Approx(0.09003057317038));
    CHECK(lg.grad(0, 1) == doctest::Approx(0.24472847105479));
    CHECK(lg.grad(0, 2) == doctest::Approx(-0.33475904422483));
}

TEST_CASE("softmax cross entropy equals -mean log p over random batches") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        TensorD logits = sample_normal<double>(rng, 0, 3, {6, 4});
        std::vector<Index> labels;
        for (int i = 0; i < 6; ++i) labels.push_back(Index(rng.below(4)));
        TensorD target = one_hot<double>(labels, 4);
        auto lg = softmax_cross_entropy(logits, target);

        TensorD p = softmax_rows(logits);
        double want = 0;
        for (Index r = 0; r < 6; ++r) want -= std::log(p(r, labels[size_t(r)]));
        CHECK(lg.loss == doctest::Approx(want / 6.0).epsilon(1e-10));
        // gradient sums to zero per row: moving all logits together is free
        for (Index r = 0; r < 6; ++r) {
            double row = 0;
            for (Index c = 0; c < 4; ++c) row += lg.grad(r, c);
            CHECK(row == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax cross entropy is stable for huge logits") {
    TensorD logits = {{5000.0, 0.0}, {-5000.0, 0.0}};
    TensorD target = {{1.0, 0.0}, {1.0, 0.0}};
    auto lg = softmax_cross_entropy(logits, target);
    CHECK(std::isfinite(lg.loss));
    CHECK(lg.loss == doctest::Approx(2500.0));  // second row pays 5000, first ~0
    CHECK(lg.grad.all_finite());
}

TEST_CASE("softmax cross entropy rejects malformed targets") {
    TensorD logits = {{1.0, 2.0}};
    CHECK_THROWS_AS(softmax_cross_entropy(logits, TensorD{{0.5, 0.5}}), ValueError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, TensorD{{1.0, 1.0}}), ValueError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, TensorD{{0.0, 0.0}}), ValueError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, TensorD{{1.0, 0.0, 0.0}}), ShapeError);
}

TEST_CASE("sigmoid cross entropy against hand-computed values") {
    TensorD logits = TensorD::vec({0.0, 2.0, -3.0});
    TensorD target = TensorD::vec({0.0, 1.0, 0.0});
    auto lg = sigmoid_cross_entropy(logits, target);
    const double want =
        (std::log(2.0) + std::log(1.0 + std::exp(-2.0)) + std::log(1.0 + std::exp(-3.0))) / 3.0;
    CHECK(lg.loss == doctest::Approx(want).epsilon(1e-12));
    CHECK(lg.grad[0] == doctest::Approx(0.5 / 3.0));
    CHECK(lg.grad[1] == doctest::Approx((1.0 / (1.0 + std::exp(-2.0)) - 1.0) / 3.0));
    CHECK(lg.grad[2] == doctest::Approx(1.0 / (1.0 + std::exp(3.0)) / 3.0));
}

TEST_CASE("sigmoid cross entropy matches the naive formula at moderate logits") {
    Rng rng(13);
    TensorD logits = sample_uniform<double>(rng, -5, 5, {4, 3});
    TensorD target = sample_uniform<double>(rng, 0, 1, {4, 3});
    auto lg = sigmoid_cross_entropy(logits, target);
    double want = 0;
    for (Index i = 0; i < logits.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-logits[i]));
        want -= target[i] * std::log(s) + (1.0 - target[i]) * std::log(1.0 - s);
    }
    CHECK(lg.loss == doctest::Approx(want / 12.0).epsilon(1e-10));
}

TEST_CASE("sigmoid cross entropy is stable and validates targets") {
    TensorD big = TensorD::vec({700.0, -700.0});
    TensorD t = TensorD::vec({1.0, 0.0});
    auto lg = sigmoid_cross_entropy(big, t);
    CHECK(std::isfinite(lg.loss));
    CHECK(lg.loss == doctest::Approx(0.0));

    CHECK_THROWS_AS(sigmoid_cross_entropy(big, TensorD::vec({1.5, 0.0})), ValueError);
    CHECK_THROWS_AS(sigmoid_cross_entropy(big, TensorD::vec({-0.1, 0.0})), ValueError);
    CHECK_THROWS_AS(sigmoid_cross_entropy(big, TensorD::vec({1.0})), ShapeError);
}

TEST_CASE("mse loss and gradient") {
    TensorD pred = TensorD::vec({1.0, 2.0});
    TensorD target = TensorD::vec({0.0, 0.0});
    auto lg = mse_loss(pred, target);
    CHECK(lg.loss == doctest::Approx(1.25));  // (1 + 4) / (2 * 2)
    CHECK(lg.grad[0] == doctest::Approx(0.5));
    CHECK(lg.grad[1] == doctest::Approx(1.0));
    CHECK(mse_loss(pred, pred).loss == doctest::Approx(0.0));
}

TEST_CASE("one-hot encoding and bounds") {
    TensorD y = one_hot<double>({2, 0}, 3);
    CHECK(approx_equal(y, TensorD{{0, 0, 1}, {1, 0, 0}}, 0.0));
    CHECK_THROWS_AS(one_hot<double>({3}, 3), ValueError);
    CHECK_THROWS_AS(one_hot<double>({-1}, 3), ValueError);
    CHECK_THROWS_AS(one_hot<double>({0}, 0), ValueError);
}
