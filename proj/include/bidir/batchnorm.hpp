#pragma once

#include <cmath>

#include "bidir/tensor.hpp"

namespace bidir {

/// Per-feature batch normalization. One instance serves exactly one direction
/// of a tied layer: the two directions of a layer keep separate affine
/// parameters and running statistics, only the linear weights are shared.
///
/// Data layout is (batch, features, inner): a dense activation [B x F] has
/// inner == 1, a conv activation [B x C x H x W] has inner == H*W with
/// statistics taken per channel over batch and space.
template <typename Scalar>
class BatchNorm {
public:
    BatchNorm() = default;

    explicit BatchNorm(Index features, Scalar epsilon = Scalar(1e-5), Scalar momentum = Scalar(0.1))
        : gamma_(Tensor<Scalar>::full({features}, Scalar(1))),
          beta_(Tensor<Scalar>({features})),
          running_mean_(Tensor<Scalar>({features})),
          running_var_(Tensor<Scalar>::full({features}, Scalar(1))),
          epsilon_(epsilon),
          momentum_(momentum) {
        if (!(epsilon > Scalar(0))) throw ValueError("batchnorm: epsilon must be positive");
        if (!(momentum > Scalar(0) && momentum < Scalar(1)))
            throw ValueError("batchnorm: momentum must be in (0,1)");
    }

    bool valid() const { return gamma_.size() > 0; }
    Index features() const { return gamma_.size(); }

    Tensor<Scalar>& gamma() { return gamma_; }
    Tensor<Scalar>& beta() { return beta_; }
    const Tensor<Scalar>& gamma() const { return gamma_; }
    const Tensor<Scalar>& beta() const { return beta_; }
    Tensor<Scalar>& running_mean() { return running_mean_; }
    Tensor<Scalar>& running_var() { return running_var_; }
    const Tensor<Scalar>& running_mean() const { return running_mean_; }
    const Tensor<Scalar>& running_var() const { return running_var_; }
    Scalar epsilon() const { return epsilon_; }

    struct Cache {
        Tensor<Scalar> xhat;      // normalized input, same shape as x
        Tensor<Scalar> invstd;    // per feature
        bool training = false;
        Index batch = 0, inner = 0;
    };

    /// `x` is [batch, features, ...inner]; training mode normalizes with batch
    /// statistics and folds them into the running estimates.
    Tensor<Scalar> forward(const Tensor<Scalar>& x, bool training, Cache& cache) {
        const auto [batch, inner] = split_dims(x);
        const Index F = features();
        const Scalar n = Scalar(batch * inner);

        Tensor<Scalar> mean({F}), var({F});
        if (training) {
            for (Index f = 0; f < F; ++f) {
                Scalar s = 0, s2 = 0;
                for (Index b = 0; b < batch; ++b) {
                    const Scalar* p = x.data() + (b * F + f) * inner;
                    for (Index k = 0; k < inner; ++k) {
                        s += p[k];
                        s2 += p[k] * p[k];
                    }
                }
                mean[f] = s / n;
                var[f] = s2 / n - mean[f] * mean[f];
                if (var[f] < Scalar(0)) var[f] = Scalar(0);
            }
            running_mean_.array() = (Scalar(1) - momentum_) * running_mean_.array() + momentum_ * mean.array();
            running_var_.array() = (Scalar(1) - momentum_) * running_var_.array() + momentum_ * var.array();
        } else {
            mean = running_mean_;
            var = running_var_;
        }

        cache.training = training;
        cache.batch = batch;
        cache.inner = inner;
        cache.invstd = Tensor<Scalar>({F});
        for (Index f = 0; f < F; ++f) cache.invstd[f] = Scalar(1) / std::sqrt(var[f] + epsilon_);

        Tensor<Scalar> out(x.shape());
        cache.xhat = Tensor<Scalar>(x.shape());
        for (Index b = 0; b < batch; ++b)
            for (Index f = 0; f < F; ++f) {
                const Scalar* p = x.data() + (b * F + f) * inner;
                Scalar* xh = cache.xhat.data() + (b * F + f) * inner;
                Scalar* o = out.data() + (b * F + f) * inner;
                const Scalar mu = mean[f], is = cache.invstd[f], g = gamma_[f], be = beta_[f];
                for (Index k = 0; k < inner; ++k) {
                    xh[k] = (p[k] - mu) * is;
                    o[k] = g * xh[k] + be;
                }
            }
        return out;
    }

    struct Grads {
        Tensor<Scalar> dx, dgamma, dbeta;
    };

    /// Exact Jacobian in training mode (batch statistics depend on x);
    /// running statistics are constants in inference mode.
    Grads backward(const Cache& cache, const Tensor<Scalar>& upstream) const {
        const Index F = features();
        const Index batch = cache.batch, inner = cache.inner;
        const Scalar n = Scalar(batch * inner);

        Grads g;
        g.dgamma = Tensor<Scalar>({F});
        g.dbeta = Tensor<Scalar>({F});
        g.dx = Tensor<Scalar>(cache.xhat.shape());

        for (Index f = 0; f < F; ++f) {
            Scalar sum_dy = 0, sum_dy_xhat = 0;
            for (Index b = 0; b < batch; ++b) {
                const Scalar* dy = upstream.data() + (b * F + f) * inner;
                const Scalar* xh = cache.xhat.data() + (b * F + f) * inner;
                for (Index k = 0; k < inner; ++k) {
                    sum_dy += dy[k];
                    sum_dy_xhat += dy[k] * xh[k];
                }
            }
            g.dgamma[f] = sum_dy_xhat;
            g.dbeta[f] = sum_dy;

            const Scalar gis = gamma_[f] * cache.invstd[f];
            for (Index b = 0; b < batch; ++b) {
                const Scalar* dy = upstream.data() + (b * F + f) * inner;
                const Scalar* xh = cache.xhat.data() + (b * F + f) * inner;
                Scalar* dx = g.dx.data() + (b * F + f) * inner;
                if (cache.training) {
                    for (Index k = 0; k < inner; ++k)
                        dx[k] = gis * (dy[k] - sum_dy / n - xh[k] * sum_dy_xhat / n);
                } else {
                    for (Index k = 0; k < inner; ++k) dx[k] = gis * dy[k];
                }
            }
        }
        return g;
    }

private:
    std::pair<Index, Index> split_dims(const Tensor<Scalar>& x) const {
        if (x.rank() < 2) throw ShapeError("batchnorm: needs at least [batch x features]");
        if (x.dim(1) != features())
            throw ShapeError("batchnorm: feature axis " + std::to_string(x.dim(1)) +
                             " does not match " + std::to_string(features()) + " features");
        Index inner = 1;
        for (Index a = 2; a < x.rank(); ++a) inner *= x.dim(a);
        return {x.dim(0), inner};
    }

    Tensor<Scalar> gamma_, beta_, running_mean_, running_var_;
    Scalar epsilon_ = Scalar(1e-5);
    Scalar momentum_ = Scalar(0.1);
};

}  // namespace bidir
