#pragma once

#include <cmath>
#include <string>

#include "bidir/errors.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

enum class Activation { Identity, Relu, LeakyRelu, Sigmoid, Softmax, Threshold };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
        case Activation::Threshold: return "threshold";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softmax") return Activation::Softmax;
    if (s == "threshold") return Activation::Threshold;
    throw ValueError("unknown activation: " + s);
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar z) {
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& z) {
    return Tensor<Scalar>(z.shape(),
                          z.array().unaryExpr([](Scalar v) { return sigmoid_scalar(v); }));
}

/// Row-wise softmax of [batch x classes] logits, max-shifted for stability.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& logits) {
    logits.require_rank(2, "softmax_rows");
    Tensor<Scalar> out(logits.shape());
    auto src = logits.mat();
    auto dst = out.mat();
    for (Index r = 0; r < src.rows(); ++r) {
        const Scalar m = src.row(r).maxCoeff();
        dst.row(r) = (src.row(r).array() - m).exp();
        dst.row(r) /= dst.row(r).sum();
    }
    return out;
}

/// Step function of the reconstruction identity: 0 for a <= 0, 1 for a > 0.
template <typename Scalar>
Tensor<Scalar> threshold(const Tensor<Scalar>& z) {
    return Tensor<Scalar>(z.shape(), z.array().unaryExpr([](Scalar v) {
        return v > Scalar(0) ? Scalar(1) : Scalar(0);
    }));
}

template <typename Scalar>
Tensor<Scalar> apply_activation(Activation act, const Tensor<Scalar>& preact, Scalar leaky_alpha) {
    switch (act) {
        case Activation::Identity: return preact;
        case Activation::Relu: return max_with_scalar(preact, Scalar(0));
        case Activation::LeakyRelu:
            return Tensor<Scalar>(preact.shape(), preact.array().unaryExpr([leaky_alpha](Scalar v) {
                return v > Scalar(0) ? v : leaky_alpha * v;
            }));
        case Activation::Sigmoid: return sigmoid(preact);
        case Activation::Softmax: return softmax_rows(preact);
        case Activation::Threshold: return threshold(preact);
    }
    throw ValueError("apply_activation: bad kind");
}

/// Pulls an upstream gradient back through the activation:
/// returns dL/d(preact) given dL/d(output).
template <typename Scalar>
Tensor<Scalar> activation_backward(Activation act, const Tensor<Scalar>& preact,
                                   const Tensor<Scalar>& output, const Tensor<Scalar>& upstream,
                                   Scalar leaky_alpha) {
    switch (act) {
        case Activation::Identity: return upstream;
        case Activation::Relu:
            return Tensor<Scalar>(upstream.shape(),
                                  upstream.array() * (preact.array() > Scalar(0)).template cast<Scalar>());
        case Activation::LeakyRelu:
            return Tensor<Scalar>(
                upstream.shape(),
                upstream.array() * preact.array().unaryExpr([leaky_alpha](Scalar v) {
                    return v > Scalar(0) ? Scalar(1) : leaky_alpha;
                }));
        case Activation::Sigmoid:
            return Tensor<Scalar>(upstream.shape(),
                                  upstream.array() * output.array() * (Scalar(1) - output.array()));
        case Activation::Softmax: {
            // Full Jacobian: dz_i = p_i * (g_i - sum_j g_j p_j), per row.
            upstream.require_rank(2, "softmax backward");
            Tensor<Scalar> grad(upstream.shape());
            auto p = output.mat();
            auto g = upstream.mat();
            auto d = grad.mat();
            for (Index r = 0; r < p.rows(); ++r) {
                const Scalar inner = (g.row(r).array() * p.row(r).array()).sum();
                d.row(r) = p.row(r).array() * (g.row(r).array() - inner);
            }
            return grad;
        }
        case Activation::Threshold:
            throw ValueError("threshold activation is evaluation-only and has no gradient");
    }
    throw ValueError("activation_backward: bad kind");
}

}  // namespace bidir
