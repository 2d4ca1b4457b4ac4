#pragma once

#include <algorithm>
#include <vector>

#include "bidir/data.hpp"
#include "bidir/layers.hpp"
#include "bidir/optim.hpp"

namespace bidir {

namespace detail {

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& t, Index begin, Index end) {
    const Index inner = t.size() / t.dim(0);
    Shape shape = t.shape();
    shape[0] = end - begin;
    Tensor<Scalar> out(shape);
    std::copy(t.data() + begin * inner, t.data() + end * inner, out.data());
    return out;
}

}  // namespace detail

/// Runs the classifier over `images` in fixed-size chunks (inference mode)
/// and returns the logits for the whole set.
template <typename Scalar>
Tensor<Scalar> classifier_logits(BidirNetwork<Scalar>& net, const Tensor<Scalar>& images,
                                 Index chunk = 200) {
    if (chunk < 1) throw ValueError("classifier_logits: chunk must be positive");
    const Index n = images.dim(0);
    Tensor<Scalar> logits({n, net.out_count()});
    for (Index i = 0; i < n; i += chunk) {
        const Index j = std::min(n, i + chunk);
        Tensor<Scalar> part = net.forward_disc(detail::slice_rows(images, i, j), PassMode::Eval);
        std::copy(part.data(), part.data() + part.size(), logits.data() + i * net.out_count());
    }
    return logits;
}

/// Fraction of samples whose top logit matches the label (ties toward the
/// lowest class index).
template <typename Scalar>
double accuracy(BidirNetwork<Scalar>& net, const Tensor<Scalar>& images,
                const std::vector<Index>& labels, Index chunk = 200) {
    if (labels.empty()) throw ValueError("accuracy: empty evaluation set");
    if (images.dim(0) != Index(labels.size()))
        throw ValueError("accuracy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(images.dim(0)) + " images");
    const auto pred = argmax_rows(classifier_logits(net, images, chunk));
    Index hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return double(hits) / double(labels.size());
}

/// Fast gradient sign attack: x + eps * sign of the input gradient of the
/// classifier's cross-entropy at the true label, clipped to [lo, hi].
template <typename Scalar>
Tensor<Scalar> fgsm(BidirNetwork<Scalar>& net, const Tensor<Scalar>& images,
                    const std::vector<Index>& labels, Scalar epsilon, Scalar lo = 0,
                    Scalar hi = 1, Index chunk = 200) {
    if (!(epsilon >= 0)) throw ValueError("fgsm: epsilon must be non-negative");
    if (images.dim(0) != Index(labels.size()))
        throw ValueError("fgsm: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(images.dim(0)) + " images");
    const Index n = images.dim(0);
    const Index inner = images.size() / n;
    Tensor<Scalar> adv(images.shape());
    for (Index i = 0; i < n; i += chunk) {
        const Index j = std::min(n, i + chunk);
        Tensor<Scalar> x = detail::slice_rows(images, i, j);
        PassCache<Scalar> cache;
        Tensor<Scalar> logits = net.forward_disc(x, PassMode::Eval, cache);
        std::vector<Index> part(labels.begin() + i, labels.begin() + j);
        auto loss = softmax_cross_entropy(logits, one_hot<Scalar>(part, net.out_count()));
        NetworkGrads<Scalar> grads =
            net.backward(cache, loss.grad, GradKind::Logits, GradScope::InputOnly);
        Tensor<Scalar> step = clip(
            add(x.reshaped({j - i, inner}), scale(sign(grads.input), epsilon)), lo, hi);
        std::copy(step.data(), step.data() + step.size(), adv.data() + i * inner);
    }
    return adv;
}

/// Pure white-noise images: every pixel uniform in [0, 1].
template <typename Scalar>
Tensor<Scalar> white_noise(Rng& rng, const Shape& shape) {
    return sample_uniform<Scalar>(rng, Scalar(0), Scalar(1), shape);
}

/// Additive noise: clip(x + level * u, 0, 1) with u uniform in [0, 1].
/// "10% noise" is level 0.1.
template <typename Scalar>
Tensor<Scalar> add_noise(const Tensor<Scalar>& images, Rng& rng, Scalar level) {
    if (!(level >= 0)) throw ValueError("add_noise: level must be non-negative");
    Tensor<Scalar> u = sample_uniform<Scalar>(rng, Scalar(0), Scalar(1), images.shape());
    return clip(add(images, scale(u, level)), Scalar(0), Scalar(1));
}

/// Convex blend alternative: (1 - level) * x + level * u.
template <typename Scalar>
Tensor<Scalar> blend_noise(const Tensor<Scalar>& images, Rng& rng, Scalar level) {
    if (!(level >= 0 && level <= 1)) throw ValueError("blend_noise: level outside [0, 1]");
    Tensor<Scalar> u = sample_uniform<Scalar>(rng, Scalar(0), Scalar(1), images.shape());
    return add(scale(images, Scalar(1) - level), scale(u, level));
}

/// max(head(noise set)) / max(head(test set)) where the head reads the
/// classifier logits. Sigmoid gauges raw output activity; softmax gauges
/// claimed class probability. An ideal classifier scores 0 (sigmoid) and
/// 1/classes (softmax): silent on noise, confident on data.
template <typename Scalar>
double output_rate(BidirNetwork<Scalar>& net, const Tensor<Scalar>& test_images,
                   const Tensor<Scalar>& noise_images, Activation head, Index chunk = 200) {
    if (head != Activation::Sigmoid && head != Activation::Softmax)
        throw ValueError("output_rate: head must be sigmoid or softmax");
    auto peak = [&](const Tensor<Scalar>& images) {
        Tensor<Scalar> logits = classifier_logits(net, images, chunk);
        Tensor<Scalar> out = head == Activation::Sigmoid ? sigmoid(logits) : softmax_rows(logits);
        return double(max(out));
    };
    const double denom = peak(test_images);
    const double numer = peak(noise_images);
    if (denom == 0.0) throw NumericError("output_rate: classifier is silent on test data");
    const double rate = numer / denom;
    ensure_finite(rate, "output_rate");
    return rate;
}

/// The five numbers reported for every trained classifier.
struct RobustnessReport {
    double acc_test = 0;
    double acc_noisy = 0;
    double acc_adv = 0;
    double sigmoid_rate = 0;
    double softmax_rate = 0;
};

struct EvalOptions {
    double epsilon = 0.3;      // FGSM budget (0.3 suits [0,1] grayscale)
    double noise_level = 0.1;  // additive noise for the noisy-accuracy column
    bool blend = false;        // use the convex-blend noise variant instead
    Index chunk = 200;
    std::uint64_t noise_seed = 9001;
};

/// Full robustness sweep of a classifier over a labeled set: clean and
/// noisy accuracy, FGSM accuracy, and both white-noise response rates.
/// Noise draws come from a stream seeded only by `opt.noise_seed`, so a
/// given options struct always grades on the same noise.
template <typename Scalar>
RobustnessReport evaluate_robustness(BidirNetwork<Scalar>& net, const Dataset& data,
                                     const EvalOptions& opt = {}) {
    Tensor<Scalar> images = data.images.template cast<Scalar>();
    Rng rng(opt.noise_seed);
    RobustnessReport r;
    r.acc_test = accuracy(net, images, data.labels, opt.chunk);
    Tensor<Scalar> noisy = opt.blend ? blend_noise(images, rng, Scalar(opt.noise_level))
                                     : add_noise(images, rng, Scalar(opt.noise_level));
    r.acc_noisy = accuracy(net, noisy, data.labels, opt.chunk);
    Tensor<Scalar> adv = fgsm(net, images, data.labels, Scalar(opt.epsilon), Scalar(0), Scalar(1),
                              opt.chunk);
    r.acc_adv = accuracy(net, adv, data.labels, opt.chunk);
    Tensor<Scalar> noise = white_noise<Scalar>(rng, images.shape());
    r.sigmoid_rate = output_rate(net, images, noise, Activation::Sigmoid, opt.chunk);
    r.softmax_rate = output_rate(net, images, noise, Activation::Softmax, opt.chunk);
    return r;
}

}  // namespace bidir
