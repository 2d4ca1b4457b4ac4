#pragma once

#include <functional>

#include "bidir/train.hpp"

namespace bidir {

/// Hybrid adversarial networks: the tied model's gen direction becomes a GAN
/// generator fed with z ~ U(0,1) of width equal to the class count, judged
/// by a separate real/fake adversary. Per iteration the classifier trains
/// first, then (in bidirectional phases) the adversary, then the generator.
struct HanConfig {
    Regime regime = Regime::BLThenBP;
    Index iterations = 50000;
    Index batch = 100;
    AdamConfig adam;
    Index eval_every = 1000;
    std::uint64_t data_seed = 1;
    std::uint64_t z_seed = 2;
    EvalOptions eval;
    bool restore_best = true;
};

enum class HanUpdate { Classifier, Adversary, Generator };

using HanHook = std::function<void(Index iteration, HanUpdate kind)>;

/// One adversary update: real batch scored toward 1, a fresh generated
/// batch (held constant) toward 0.
template <typename Scalar>
Scalar han_step_adversary(BidirNetwork<Scalar>& hybrid, BidirNetwork<Scalar>& adversary,
                          AdamOptimizer<Scalar>& opt, const Tensor<Scalar>& x,
                          const Tensor<Scalar>& z) {
    const Index batch = x.dim(0);
    Tensor<Scalar> fake = hybrid.forward_gen(z, PassMode::Train);

    PassCache<Scalar> real_cache;
    auto real_loss = sigmoid_cross_entropy(
        adversary.forward_disc(x, PassMode::Train, real_cache), Tensor<Scalar>::full({batch, 1}, 1));
    NetworkGrads<Scalar> real_grads = adversary.backward(real_cache, real_loss.grad);

    PassCache<Scalar> fake_cache;
    auto fake_loss = sigmoid_cross_entropy(
        adversary.forward_disc(fake, PassMode::Train, fake_cache), Tensor<Scalar>::zeros({batch, 1}));
    NetworkGrads<Scalar> fake_grads = adversary.backward(fake_cache, fake_loss.grad);

    for (std::size_t i = 0; i < real_grads.tensors.size(); ++i)
        real_grads.tensors[i] = add(real_grads.tensors[i], fake_grads.tensors[i]);
    opt.step(real_grads.tensors);
    return real_loss.loss + fake_loss.loss;
}

/// One generator update with the non-saturating objective: push the
/// adversary's verdict on fresh fakes toward "real". Only the hybrid's gen
/// parameters move.
template <typename Scalar>
Scalar han_step_generator(BidirNetwork<Scalar>& hybrid, BidirNetwork<Scalar>& adversary,
                          AdamOptimizer<Scalar>& opt, const Tensor<Scalar>& z) {
    PassCache<Scalar> gen_cache;
    Tensor<Scalar> fake = hybrid.forward_gen(z, PassMode::Train, gen_cache);

    PassCache<Scalar> adv_cache;
    auto loss = sigmoid_cross_entropy(adversary.forward_disc(fake, PassMode::Train, adv_cache),
                                      Tensor<Scalar>::full({z.dim(0), 1}, 1));
    NetworkGrads<Scalar> through_adv = adversary.backward(adv_cache, loss.grad);
    NetworkGrads<Scalar> gen_grads = hybrid.backward(gen_cache, through_adv.input,
                                                     GradKind::Output);
    opt.step(gen_grads.tensors);
    return loss.loss;
}

/// Full HAN training loop. The adversary must score single logits over the
/// hybrid's input space; z width is the hybrid's class count.
template <typename Scalar>
TrainResult train_han(BidirNetwork<Scalar>& hybrid, BidirNetwork<Scalar>& adversary,
                      const Dataset& train_data, const Dataset& test_data, const HanConfig& cfg,
                      const HanHook& hook = {}, const EvalHook& eval_hook = {}) {
    if (cfg.iterations < 1) throw ConfigError("han: iterations must be positive");
    if (cfg.eval_every < 1) throw ConfigError("han: eval_every must be positive");
    if (adversary.out_count() != 1)
        throw ConfigError("han: adversary must emit a single logit, emits " +
                          std::to_string(adversary.out_count()));
    if (adversary.in_count() != hybrid.in_count())
        throw ConfigError("han: adversary reads " + std::to_string(adversary.in_count()) +
                          " features, hybrid generates " + std::to_string(hybrid.in_count()));
    train_data.validate();
    test_data.validate();
    if (train_data.sample_size() != hybrid.in_count() || train_data.classes != hybrid.out_count())
        throw ConfigError("han: dataset does not match the hybrid network");

    AdamOptimizer<Scalar> opt_c(hybrid.params(Direction::Disc), cfg.adam);
    AdamOptimizer<Scalar> opt_g(hybrid.params(Direction::Gen), cfg.adam);
    AdamOptimizer<Scalar> opt_d(adversary.params(Direction::Disc), cfg.adam);
    MinibatchStream stream(train_data, cfg.batch, cfg.data_seed);
    Rng z_rng(cfg.z_seed);
    const Index z_dim = hybrid.out_count();

    TrainResult result;
    std::vector<Tensor<Scalar>> best_state;
    double best_acc = -1;

    for (Index it = 0; it < cfg.iterations; ++it) {
        auto batch = stream.next();
        Tensor<Scalar> x = batch.images.template cast<Scalar>();
        Tensor<Scalar> y = one_hot<Scalar>(batch.labels, hybrid.out_count());

        train_step_disc(hybrid, opt_c, x, y);
        if (hook) hook(it, HanUpdate::Classifier);

        if (bidirectional_at(cfg.regime, it, cfg.iterations)) {
            Tensor<Scalar> z = sample_uniform<Scalar>(z_rng, 0, 1, {cfg.batch, z_dim});
            han_step_adversary(hybrid, adversary, opt_d, x, z);
            if (hook) hook(it, HanUpdate::Adversary);

            z = sample_uniform<Scalar>(z_rng, 0, 1, {cfg.batch, z_dim});
            han_step_generator(hybrid, adversary, opt_g, z);
            if (hook) hook(it, HanUpdate::Generator);
        }

        if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) {
            RobustnessReport report = evaluate_robustness(hybrid, test_data, cfg.eval);
            result.history.push_back({it + 1, report});
            if (eval_hook) eval_hook(result.history.back());
            result.final_ = report;
            if (report.acc_test > best_acc) {
                best_acc = report.acc_test;
                result.best = report;
                result.best_iteration = it + 1;
                if (cfg.restore_best) best_state = hybrid.snapshot_state();
            }
        }
    }
    if (cfg.restore_best && !best_state.empty()) hybrid.restore_state(best_state);
    return result;
}

}  // namespace bidir
