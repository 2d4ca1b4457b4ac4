#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bidir/data.hpp"
#include "bidir/layers.hpp"
#include "bidir/optim.hpp"
#include "bidir/robustness.hpp"

namespace bidir {

/// How the tied network is trained: plain backpropagation of the classifier
/// (BP), classifier plus generator reconstruction every iteration (BL), or
/// BL for the first half of the run and BP for the rest (BLThenBP).
enum class Regime { BP, BL, BLThenBP };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::BP: return "bp";
        case Regime::BL: return "bl";
        case Regime::BLThenBP: return "bl-then-bp";
    }
    return "?";
}

inline Regime regime_from_name(const std::string& s) {
    if (s == "bp") return Regime::BP;
    if (s == "bl") return Regime::BL;
    if (s == "bl-then-bp") return Regime::BLThenBP;
    throw ConfigError("unknown regime: " + s + " (want bp, bl, or bl-then-bp)");
}

/// True when iteration `it` (0-based) of a `total`-iteration run trains the
/// generator too. BLThenBP switches to BP at floor(total / 2).
inline bool bidirectional_at(Regime r, Index it, Index total) {
    switch (r) {
        case Regime::BP: return false;
        case Regime::BL: return true;
        case Regime::BLThenBP: return it < total / 2;
    }
    return false;
}

/// Reconstruction objective for the generator update.
enum class ReconLoss { SigmoidCE, Mse };

inline const char* recon_loss_name(ReconLoss l) {
    return l == ReconLoss::SigmoidCE ? "sigmoid-ce" : "mse";
}

inline ReconLoss recon_loss_from_name(const std::string& s) {
    if (s == "sigmoid-ce") return ReconLoss::SigmoidCE;
    if (s == "mse") return ReconLoss::Mse;
    throw ConfigError("unknown reconstruction loss: " + s + " (want sigmoid-ce or mse)");
}

struct TrainConfig {
    Regime regime = Regime::BP;
    Index iterations = 50000;
    Index batch = 100;
    AdamConfig adam;
    ReconLoss recon = ReconLoss::SigmoidCE;
    Index eval_every = 1000;     // robustness sweep cadence on the test set
    std::uint64_t data_seed = 1; // minibatch shuffling
    EvalOptions eval;
    bool restore_best = true;    // end with the weights of the best test-acc sweep
};

/// Which half of the tied model an optimizer step just updated.
enum class UpdateKind { Disc, Gen };

using UpdateHook = std::function<void(Index iteration, UpdateKind kind)>;

/// One robustness sweep of the test set, taken at a training iteration.
struct MetricsRow {
    Index iteration = 0;
    RobustnessReport metrics;
};

/// Fires after every robustness sweep with the freshly appended history row.
using EvalHook = std::function<void(const MetricsRow&)>;

/// The pre-activation of the final layer of a recorded pass: the logits of a
/// disc pass, or the generator's pre-sigmoid output of a gen pass.
template <typename Scalar>
const Tensor<Scalar>& head_preact(const PassCache<Scalar>& cache) {
    if (cache.layers.empty()) throw ValueError("head_preact: empty cache");
    return cache.direction == Direction::Disc ? cache.layers.back().preact
                                              : cache.layers.front().preact;
}

/// One classifier update: softmax cross entropy on the disc pass.
template <typename Scalar>
Scalar train_step_disc(BidirNetwork<Scalar>& net, AdamOptimizer<Scalar>& opt,
                       const Tensor<Scalar>& x, const Tensor<Scalar>& y_onehot) {
    PassCache<Scalar> cache;
    Tensor<Scalar> logits = net.forward_disc(x, PassMode::Train, cache);
    auto loss = softmax_cross_entropy(logits, y_onehot);
    NetworkGrads<Scalar> grads = net.backward(cache, loss.grad, GradKind::Logits);
    opt.step(grads.tensors);
    return loss.loss;
}

/// One generator update: reconstruct the batch images from their one-hot
/// labels through the gen direction.
template <typename Scalar>
Scalar train_step_gen(BidirNetwork<Scalar>& net, AdamOptimizer<Scalar>& opt,
                      const Tensor<Scalar>& x, const Tensor<Scalar>& y_onehot, ReconLoss recon) {
    PassCache<Scalar> cache;
    Tensor<Scalar> out = net.forward_gen(y_onehot, PassMode::Train, cache);
    const Tensor<Scalar> target = x.reshaped(out.shape());
    LossGrad<Scalar> loss;
    GradKind kind;
    if (recon == ReconLoss::SigmoidCE) {
        // fused: the gen head is expected to be sigmoid, grade its logits
        loss = sigmoid_cross_entropy(head_preact(cache), target);
        kind = GradKind::Logits;
    } else {
        loss = mse_loss(out, target);
        kind = GradKind::Output;
    }
    NetworkGrads<Scalar> grads = net.backward(cache, loss.grad, kind);
    opt.step(grads.tensors);
    return loss.loss;
}

struct TrainResult {
    using Row = MetricsRow;
    std::vector<Row> history;
    Index best_iteration = 0;
    RobustnessReport best;   // sweep with the highest clean test accuracy
    RobustnessReport final_; // last sweep of the run
};

/// Runs the biprop training loop: every iteration updates the classifier,
/// and — when the regime says so — the generator on the same batch. The
/// test set is swept every eval_every iterations; the model ends at the
/// best-test-accuracy state unless restore_best is off.
template <typename Scalar>
TrainResult train(BidirNetwork<Scalar>& net, const Dataset& train_data,
                  const Dataset& test_data, const TrainConfig& cfg, const UpdateHook& hook = {},
                  const EvalHook& eval_hook = {}) {
    if (cfg.iterations < 1) throw ConfigError("train: iterations must be positive");
    if (cfg.eval_every < 1) throw ConfigError("train: eval_every must be positive");
    train_data.validate();
    test_data.validate();
    if (train_data.sample_size() != net.in_count())
        throw ConfigError("train: dataset samples have " +
                          std::to_string(train_data.sample_size()) + " values, network expects " +
                          std::to_string(net.in_count()));
    if (train_data.classes != net.out_count())
        throw ConfigError("train: dataset has " + std::to_string(train_data.classes) +
                          " classes, network emits " + std::to_string(net.out_count()));

    AdamOptimizer<Scalar> opt_disc(net.params(Direction::Disc), cfg.adam);
    AdamOptimizer<Scalar> opt_gen(net.params(Direction::Gen), cfg.adam);
    MinibatchStream stream(train_data, cfg.batch, cfg.data_seed);

    TrainResult result;
    std::vector<Tensor<Scalar>> best_state;
    double best_acc = -1;

    for (Index it = 0; it < cfg.iterations; ++it) {
        auto batch = stream.next();
        Tensor<Scalar> x = batch.images.template cast<Scalar>();
        Tensor<Scalar> y = one_hot<Scalar>(batch.labels, net.out_count());

        train_step_disc(net, opt_disc, x, y);
        if (hook) hook(it, UpdateKind::Disc);
        if (bidirectional_at(cfg.regime, it, cfg.iterations)) {
            train_step_gen(net, opt_gen, x, y, cfg.recon);
            if (hook) hook(it, UpdateKind::Gen);
        }

        if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) {
            RobustnessReport report = evaluate_robustness(net, test_data, cfg.eval);
            result.history.push_back({it + 1, report});
            if (eval_hook) eval_hook(result.history.back());
            result.final_ = report;
            if (report.acc_test > best_acc) {
                best_acc = report.acc_test;
                result.best = report;
                result.best_iteration = it + 1;
                if (cfg.restore_best) best_state = net.snapshot_state();
            }
        }
    }
    if (cfg.restore_best && !best_state.empty()) net.restore_state(best_state);
    return result;
}

}  // namespace bidir
