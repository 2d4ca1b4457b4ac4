#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bidir/activations.hpp"
#include "bidir/errors.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam over a fixed list of parameter tensors. Moment estimates live here,
/// so two optimizers over overlapping parameter lists (the weight-tied
/// setup: one per direction) keep independent moments for the shared
/// tensors.
template <typename Scalar>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor<Scalar>*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        if (!(cfg_.lr >= 0)) throw ConfigError("adam: negative learning rate");
        if (!(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1))
            throw ConfigError("adam: betas must lie in [0, 1)");
        if (!(cfg_.epsilon > 0)) throw ConfigError("adam: epsilon must be positive");
        for (auto* p : params_) {
            if (!p) throw ValueError("adam: null parameter");
            m_.push_back(Tensor<Scalar>::zeros(p->shape()));
            v_.push_back(Tensor<Scalar>::zeros(p->shape()));
        }
    }

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }
    std::size_t param_count() const { return params_.size(); }
    const Tensor<Scalar>& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor<Scalar>& second_moment(std::size_t i) const { return v_.at(i); }

    // Checkpoint plumbing: moments and step counter are the whole state.
    Tensor<Scalar>& first_moment(std::size_t i) { return m_.at(i); }
    Tensor<Scalar>& second_moment(std::size_t i) { return v_.at(i); }
    void set_step_count(long t) {
        if (t < 0) throw ValueError("adam: negative step count");
        t_ = t;
    }

    void step(const std::vector<Tensor<Scalar>>& grads) {
        if (grads.size() != params_.size())
            throw ValueError("adam: got " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params_.size()) + " parameters");
        ++t_;
        const Scalar c1 = Scalar(1.0 - std::pow(cfg_.beta1, double(t_)));
        const Scalar c2 = Scalar(1.0 - std::pow(cfg_.beta2, double(t_)));
        const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
        const Scalar lr = Scalar(cfg_.lr), eps = Scalar(cfg_.epsilon);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            require_same_shape(*params_[i], grads[i], "adam step");
            const auto& g = grads[i].array();
            m_[i].array() = b1 * m_[i].array() + (Scalar(1) - b1) * g;
            v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g * g;
            params_[i]->array() -=
                lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
            ensure_finite(*params_[i], "adam step");
        }
    }

private:
    std::vector<Tensor<Scalar>*> params_;
    AdamConfig cfg_;
    std::vector<Tensor<Scalar>> m_, v_;
    long t_ = 0;
};

/// Loss value plus its gradient w.r.t. the first argument of the loss.
template <typename Scalar>
struct LossGrad {
    Scalar loss = 0;
    Tensor<Scalar> grad;
};

namespace detail {
template <typename Scalar>
void require_one_hot(const Tensor<Scalar>& targets) {
    for (Index r = 0; r < targets.dim(0); ++r) {
        Index ones = 0;
        for (Index c = 0; c < targets.dim(1); ++c) {
            const Scalar v = targets(r, c);
            if (v == Scalar(1))
                ++ones;
            else if (v != Scalar(0))
                throw ValueError("cross entropy: target row " + std::to_string(r) +
                                 " is not one-hot");
        }
        if (ones != 1)
            throw ValueError("cross entropy: target row " + std::to_string(r) + " has " +
                             std::to_string(ones) + " ones");
    }
}
}  // namespace detail

/// Mean softmax cross entropy against one-hot targets; gradient w.r.t. the
/// logits is (softmax - target) / batch.
template <typename Scalar>
LossGrad<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                       const Tensor<Scalar>& targets) {
    logits.require_rank(2, "softmax cross entropy");
    require_same_shape(logits, targets, "softmax cross entropy");
    detail::require_one_hot(targets);

    const Index batch = logits.dim(0), k = logits.dim(1);
    LossGrad<Scalar> out;
    out.grad = softmax_rows(logits);
    Scalar loss = 0;
    for (Index r = 0; r < batch; ++r) {
        Scalar zmax = logits(r, 0);
        for (Index c = 1; c < k; ++c) zmax = std::max(zmax, logits(r, c));
        Scalar lse = 0, zy = 0;
        for (Index c = 0; c < k; ++c) {
            lse += std::exp(logits(r, c) - zmax);
            if (targets(r, c) == Scalar(1)) zy = logits(r, c);
        }
        loss += (zmax + std::log(lse)) - zy;
    }
    out.loss = loss / Scalar(batch);
    out.grad.array() = (out.grad.array() - targets.array()) / Scalar(batch);
    ensure_finite(out.loss, "softmax cross entropy");
    return out;
}

/// Mean (over every element) sigmoid cross entropy of logits against targets
/// in [0, 1], computed in the stable max(z,0) - z·t + log(1 + e^-|z|) form.
/// Gradient w.r.t. the logits is (sigmoid(z) - t) / count.
template <typename Scalar>
LossGrad<Scalar> sigmoid_cross_entropy(const Tensor<Scalar>& logits,
                                       const Tensor<Scalar>& targets) {
    require_same_shape(logits, targets, "sigmoid cross entropy");
    if (logits.size() == 0) throw ValueError("sigmoid cross entropy: empty input");
    if ((targets.array() < Scalar(0)).any() || (targets.array() > Scalar(1)).any())
        throw ValueError("sigmoid cross entropy: targets outside [0, 1]");

    const Scalar n = Scalar(logits.size());
    const auto& z = logits.array();
    LossGrad<Scalar> out;
    out.loss = (z.max(Scalar(0)) - z * targets.array() + (-z.abs()).exp().log1p()).sum() / n;
    out.grad = Tensor<Scalar>(logits.shape());
    out.grad.array() = (sigmoid(logits).array() - targets.array()) / n;
    ensure_finite(out.loss, "sigmoid cross entropy");
    return out;
}

/// Half mean squared error: loss = sum((a-b)^2) / (2n), gradient (a-b)/n.
template <typename Scalar>
LossGrad<Scalar> mse_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
    require_same_shape(pred, target, "mse");
    if (pred.size() == 0) throw ValueError("mse: empty input");
    const Scalar n = Scalar(pred.size());
    LossGrad<Scalar> out;
    out.grad = Tensor<Scalar>(pred.shape(), (pred.array() - target.array()) / n);
    out.loss = (pred.array() - target.array()).square().sum() / (2 * n);
    ensure_finite(out.loss, "mse");
    return out;
}

/// One-hot encodes integer labels into [n x classes].
template <typename Scalar>
Tensor<Scalar> one_hot(const std::vector<Index>& labels, Index classes) {
    if (classes < 1) throw ValueError("one_hot: non-positive class count");
    Tensor<Scalar> out({Index(labels.size()), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw ValueError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(classes) + ")");
        out(Index(i), labels[i]) = Scalar(1);
    }
    return out;
}

}  // namespace bidir
