#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bidir/activations.hpp"
#include "bidir/batchnorm.hpp"
#include "bidir/conv_ops.hpp"
#include "bidir/errors.hpp"
#include "bidir/rng.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

enum class Direction { Disc, Gen };
enum class PassMode { Train, Eval };

/// What the incoming gradient in backward() is taken with respect to:
/// the pre-activation of the final layer of the pass ("logits", the usual
/// fused-loss convention) or its post-activation output.
enum class GradKind { Logits, Output };

/// How much of the backward pass to compute: parameter and input gradients,
/// or only the input gradient (enough for input-space attacks, and cheaper).
enum class GradScope { All, InputOnly };

inline const char* direction_name(Direction d) { return d == Direction::Disc ? "disc" : "gen"; }

/// Per-direction layer configuration. `bias` and `batch_norm` are
/// independent switches; the activation applies after both.
struct DirectionSpec {
    Activation act = Activation::Identity;
    double leaky_alpha = 0.1;
    bool bias = false;
    bool batch_norm = false;
};

struct DenseSpec {
    Index in = 0, out = 0;
    DirectionSpec disc, gen;
};

struct ConvSpec {
    Index in_ch = 0, in_h = 0, in_w = 0;
    Index out_ch = 0, kh = 0, kw = 0;
    Index stride = 1, pad = 0;
    DirectionSpec disc, gen;
};

using LayerSpec = std::variant<DenseSpec, ConvSpec>;

/// Everything a backward pass needs from the matching forward. All tensors
/// are kept as [batch x features] rows.
template <typename Scalar>
struct LayerCache {
    Tensor<Scalar> input;    // input of the pass
    Tensor<Scalar> preact;   // value the activation saw (post-bias, post-BN)
    Tensor<Scalar> output;   // activation output
    typename BatchNorm<Scalar>::Cache bn;
    Tensor<Scalar> patches;  // conv disc train passes only: [R x batch*Q] im2col matrix
};

namespace detail {

/// Maps a grow-only scratch buffer as an [r x c] matrix.
template <typename Scalar>
MatrixMap<Scalar> scratch_mat(std::vector<Scalar>& buf, Index r, Index c) {
    const auto need = static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    if (buf.size() < need) buf.resize(need);
    return MatrixMap<Scalar>(buf.data(), r, c);
}

}  // namespace detail

namespace detail {

template <typename Scalar>
Tensor<Scalar> glorot_uniform(Index fan_in, Index fan_out, const Shape& shape, Rng& rng) {
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    return sample_uniform<Scalar>(rng, Scalar(-limit), Scalar(limit), shape);
}

inline void check_direction_spec(const DirectionSpec& s, const std::string& where) {
    if (s.act == Activation::LeakyRelu && !(s.leaky_alpha > 0))
        throw ConfigError(where + ": leaky relu slope must be positive");
}

}  // namespace detail

/// Fully connected layer with a single weight matrix W [out x in] read as
/// x·Wᵀ in the disc direction and h·W in the gen direction. Biases and batch
/// norm are per direction and never shared.
template <typename Scalar>
class SharedDenseLayer {
public:
    SharedDenseLayer(const DenseSpec& spec, Rng& rng) : spec_(spec) {
        if (spec.in < 1 || spec.out < 1) throw ConfigError("dense layer: non-positive size");
        detail::check_direction_spec(spec.disc, "dense disc");
        detail::check_direction_spec(spec.gen, "dense gen");
        weight_ = detail::glorot_uniform<Scalar>(spec.in, spec.out, {spec.out, spec.in}, rng);
        if (spec.disc.bias) bias_disc_ = Tensor<Scalar>::zeros({spec.out});
        if (spec.gen.bias) bias_gen_ = Tensor<Scalar>::zeros({spec.in});
        if (spec.disc.batch_norm) bn_disc_.emplace(spec.out);
        if (spec.gen.batch_norm) bn_gen_.emplace(spec.in);
    }

    const DenseSpec& spec() const { return spec_; }
    Index in_count() const { return spec_.in; }
    Index out_count() const { return spec_.out; }
    Tensor<Scalar>& weight() { return weight_; }
    const Tensor<Scalar>& weight() const { return weight_; }

    const DirectionSpec& dir_spec(Direction d) const {
        return d == Direction::Disc ? spec_.disc : spec_.gen;
    }

    Tensor<Scalar>& bias(Direction d) { return d == Direction::Disc ? bias_disc_ : bias_gen_; }

    std::optional<BatchNorm<Scalar>>& batch_norm(Direction d) {
        return d == Direction::Disc ? bn_disc_ : bn_gen_;
    }

    /// Parameter order per direction: weight, bias, gamma, beta (present ones
    /// only). The shared weight appears in both directions' lists.
    void collect_params(Direction d, std::vector<Tensor<Scalar>*>& out) {
        out.push_back(&weight_);
        auto& b = bias(d);
        if (b.size() > 0) out.push_back(&b);
        auto& bn = batch_norm(d);
        if (bn) {
            out.push_back(&bn->gamma());
            out.push_back(&bn->beta());
        }
    }

    /// Every tensor that defines the layer's behavior, including batch-norm
    /// running statistics; order is fixed for snapshots and serialization.
    void collect_state(std::vector<Tensor<Scalar>*>& out) {
        out.push_back(&weight_);
        for (Direction d : {Direction::Disc, Direction::Gen}) {
            auto& b = bias(d);
            if (b.size() > 0) out.push_back(&b);
            auto& bn = batch_norm(d);
            if (bn) {
                out.push_back(&bn->gamma());
                out.push_back(&bn->beta());
                out.push_back(&bn->running_mean());
                out.push_back(&bn->running_var());
            }
        }
    }

    Tensor<Scalar> forward(Direction d, PassMode mode, const Tensor<Scalar>& in,
                           LayerCache<Scalar>& cache) {
        const Index batch = in.dim(0);
        cache.input = in.reshaped({batch, d == Direction::Disc ? spec_.in : spec_.out});

        Tensor<Scalar> z({batch, d == Direction::Disc ? spec_.out : spec_.in});
        if (d == Direction::Disc)
            z.mat().noalias() = cache.input.mat() * weight_.mat().transpose();
        else
            z.mat().noalias() = cache.input.mat() * weight_.mat();

        auto& b = bias(d);
        if (b.size() > 0) z.mat().rowwise() += b.array().matrix().transpose();

        auto& bn = batch_norm(d);
        cache.preact = bn ? bn->forward(z, mode == PassMode::Train, cache.bn) : std::move(z);
        ensure_finite(cache.preact, "dense forward");

        const DirectionSpec& ds = dir_spec(d);
        cache.output = apply_activation(ds.act, cache.preact, Scalar(ds.leaky_alpha));
        return cache.output;
    }

    /// `grad` arrives w.r.t. this layer's pre-activation. Returns the
    /// gradient w.r.t. the layer input; parameter gradients are appended in
    /// collect_params order.
    Tensor<Scalar> backward(Direction d, const LayerCache<Scalar>& cache,
                            const Tensor<Scalar>& grad,
                            std::vector<Tensor<Scalar>>& param_grads,
                            GradScope scope = GradScope::All) {
        auto& bn = batch_norm(d);
        Tensor<Scalar> dz, dgamma, dbeta;
        if (bn) {
            auto g = bn->backward(cache.bn, grad);
            dz = std::move(g.dx);
            dgamma = std::move(g.dgamma);
            dbeta = std::move(g.dbeta);
        } else {
            dz = grad;
        }

        Tensor<Scalar> din({cache.input.dim(0), cache.input.dim(1)});
        if (d == Direction::Disc)
            din.mat().noalias() = dz.mat() * weight_.mat();
        else
            din.mat().noalias() = dz.mat() * weight_.mat().transpose();

        if (scope == GradScope::All) {
            Tensor<Scalar> dw({spec_.out, spec_.in});
            if (d == Direction::Disc)
                dw.mat().noalias() = dz.mat().transpose() * cache.input.mat();
            else
                dw.mat().noalias() = cache.input.mat().transpose() * dz.mat();
            ensure_finite(dw, "dense backward");

            param_grads.push_back(std::move(dw));
            auto& b = bias(d);
            if (b.size() > 0) {
                Tensor<Scalar> db({b.dim(0)});
                db.array() = dz.mat().colwise().sum().transpose().array();
                param_grads.push_back(std::move(db));
            }
            if (bn) {
                param_grads.push_back(std::move(dgamma));
                param_grads.push_back(std::move(dbeta));
            }
        }
        return din;
    }

private:
    DenseSpec spec_;
    Tensor<Scalar> weight_;
    Tensor<Scalar> bias_disc_, bias_gen_;
    std::optional<BatchNorm<Scalar>> bn_disc_, bn_gen_;
};

/// Convolution layer whose gen direction is the exact adjoint (transposed
/// convolution) of its disc direction, sharing the one kernel tensor
/// [out_ch x in_ch x kh x kw]. Both directions run per-sample im2col/col2im
/// GEMMs; activations and per-direction bias/BN behave as in the dense layer
/// with channels as the feature axis.
template <typename Scalar>
class SharedConv2D {
public:
    SharedConv2D(const ConvSpec& spec, Rng& rng) : spec_(spec) {
        dims_ = make_conv_dims(spec.in_ch, spec.in_h, spec.in_w, spec.out_ch, spec.kh, spec.kw,
                               spec.stride, spec.pad);
        detail::check_direction_spec(spec.disc, "conv disc");
        detail::check_direction_spec(spec.gen, "conv gen");
        const Index fan_in = spec.in_ch * spec.kh * spec.kw;
        const Index fan_out = spec.out_ch * spec.kh * spec.kw;
        weight_ = detail::glorot_uniform<Scalar>(
            fan_in, fan_out, {spec.out_ch, spec.in_ch, spec.kh, spec.kw}, rng);
        if (spec.disc.bias) bias_disc_ = Tensor<Scalar>::zeros({spec.out_ch});
        if (spec.gen.bias) bias_gen_ = Tensor<Scalar>::zeros({spec.in_ch});
        if (spec.disc.batch_norm) bn_disc_.emplace(spec.out_ch);
        if (spec.gen.batch_norm) bn_gen_.emplace(spec.in_ch);
    }

    const ConvSpec& spec() const { return spec_; }
    const ConvDims& dims() const { return dims_; }
    Index in_count() const { return dims_.in_size(); }
    Index out_count() const { return dims_.out_size(); }
    Tensor<Scalar>& weight() { return weight_; }
    const Tensor<Scalar>& weight() const { return weight_; }

    const DirectionSpec& dir_spec(Direction d) const {
        return d == Direction::Disc ? spec_.disc : spec_.gen;
    }

    Tensor<Scalar>& bias(Direction d) { return d == Direction::Disc ? bias_disc_ : bias_gen_; }

    std::optional<BatchNorm<Scalar>>& batch_norm(Direction d) {
        return d == Direction::Disc ? bn_disc_ : bn_gen_;
    }

    void collect_params(Direction d, std::vector<Tensor<Scalar>*>& out) {
        out.push_back(&weight_);
        auto& b = bias(d);
        if (b.size() > 0) out.push_back(&b);
        auto& bn = batch_norm(d);
        if (bn) {
            out.push_back(&bn->gamma());
            out.push_back(&bn->beta());
        }
    }

    void collect_state(std::vector<Tensor<Scalar>*>& out) {
        out.push_back(&weight_);
        for (Direction d : {Direction::Disc, Direction::Gen}) {
            auto& b = bias(d);
            if (b.size() > 0) out.push_back(&b);
            auto& bn = batch_norm(d);
            if (bn) {
                out.push_back(&bn->gamma());
                out.push_back(&bn->beta());
                out.push_back(&bn->running_mean());
                out.push_back(&bn->running_var());
            }
        }
    }

    Tensor<Scalar> forward(Direction d, PassMode mode, const Tensor<Scalar>& in,
                           LayerCache<Scalar>& cache) {
        const Index batch = in.dim(0);
        const Index R = dims_.cols_rows(), Q = dims_.cols_cols();
        const Index BQ = batch * Q;
        auto kernel = kernel_mat();

        Tensor<Scalar> z;
        if (d == Direction::Disc) {
            cache.input = in.reshaped({batch, dims_.in_size()});
            // one [R x batch*Q] patch matrix feeds a single batch-wide GEMM;
            // train passes keep it for the weight gradient
            static thread_local std::vector<Scalar> cols_buf, z_buf;
            MatrixMap<Scalar> cols = [&]() {
                if (mode == PassMode::Train) {
                    cache.patches = Tensor<Scalar>({R, BQ});
                    return view(cache.patches.data(), R, BQ);
                }
                return detail::scratch_mat(cols_buf, R, BQ);
            }();
            for (Index b = 0; b < batch; ++b)
                im2col(cache.input.data() + b * dims_.in_size(), dims_,
                       cols.data() + b * Q, BQ);
            auto zt = detail::scratch_mat(z_buf, dims_.oc, BQ);
            zt.noalias() = kernel * cols;
            z = Tensor<Scalar>({batch, dims_.out_size()});
            for (Index b = 0; b < batch; ++b)
                view(z.data() + b * dims_.out_size(), dims_.oc, Q) =
                    zt.middleCols(b * Q, Q);
        } else {
            cache.input = in.reshaped({batch, dims_.out_size()});
            static thread_local std::vector<Scalar> h_buf, cols_buf;
            auto h = detail::scratch_mat(h_buf, dims_.oc, BQ);
            for (Index b = 0; b < batch; ++b)
                h.middleCols(b * Q, Q) =
                    cview(cache.input.data() + b * dims_.out_size(), dims_.oc, Q);
            auto cols = detail::scratch_mat(cols_buf, R, BQ);
            cols.noalias() = kernel.transpose() * h;
            z = Tensor<Scalar>::zeros({batch, dims_.in_size()});
            for (Index b = 0; b < batch; ++b)
                col2im_add(cols.data() + b * Q, dims_, z.data() + b * dims_.in_size(), BQ);
        }

        add_channel_bias(d, z);
        auto& bn = batch_norm(d);
        if (bn) {
            const Index ch = bn->features();
            cache.preact = bn->forward(z.reshaped({batch, ch, z.dim(1) / ch}),
                                       mode == PassMode::Train, cache.bn)
                               .reshaped(z.shape());
        } else {
            cache.preact = std::move(z);
        }
        ensure_finite(cache.preact, "conv forward");

        const DirectionSpec& ds = dir_spec(d);
        cache.output = apply_activation(ds.act, cache.preact, Scalar(ds.leaky_alpha));
        return cache.output;
    }

    Tensor<Scalar> backward(Direction d, const LayerCache<Scalar>& cache,
                            const Tensor<Scalar>& grad,
                            std::vector<Tensor<Scalar>>& param_grads,
                            GradScope scope = GradScope::All) {
        const Index batch = cache.input.dim(0);
        const Index R = dims_.cols_rows(), Q = dims_.cols_cols();
        const Index BQ = batch * Q;
        auto kernel = kernel_mat();

        auto& bn = batch_norm(d);
        Tensor<Scalar> dz, dgamma, dbeta;
        if (bn) {
            // BN cache stores the [batch x ch x inner] view; layout matches.
            auto g = bn->backward(cache.bn, grad);
            dz = g.dx.reshaped(grad.shape());
            dgamma = std::move(g.dgamma);
            dbeta = std::move(g.dbeta);
        } else {
            dz = grad;
        }

        Tensor<Scalar> dkernel;
        Tensor<Scalar> din;
        if (d == Direction::Disc) {
            static thread_local std::vector<Scalar> dzt_buf, dcols_buf, patch_buf;
            auto dzt = detail::scratch_mat(dzt_buf, dims_.oc, BQ);
            for (Index b = 0; b < batch; ++b)
                dzt.middleCols(b * Q, Q) =
                    cview(dz.data() + b * dims_.out_size(), dims_.oc, Q);
            if (scope == GradScope::All) {
                // eval passes skip recording patches; rebuild them on demand
                ConstMatrixMap<Scalar> cols = [&]() -> ConstMatrixMap<Scalar> {
                    if (cache.patches.size() > 0)
                        return cview(cache.patches.data(), R, BQ);
                    auto p = detail::scratch_mat(patch_buf, R, BQ);
                    for (Index b = 0; b < batch; ++b)
                        im2col(cache.input.data() + b * dims_.in_size(), dims_,
                               p.data() + b * Q, BQ);
                    return ConstMatrixMap<Scalar>(p.data(), R, BQ);
                }();
                dkernel = Tensor<Scalar>({spec_.out_ch, spec_.in_ch, spec_.kh, spec_.kw});
                view(dkernel.data(), dims_.oc, R).noalias() = dzt * cols.transpose();
            }
            auto dcols = detail::scratch_mat(dcols_buf, R, BQ);
            dcols.noalias() = kernel.transpose() * dzt;
            din = Tensor<Scalar>::zeros({batch, dims_.in_size()});
            for (Index b = 0; b < batch; ++b)
                col2im_add(dcols.data() + b * Q, dims_, din.data() + b * dims_.in_size(), BQ);
        } else {
            static thread_local std::vector<Scalar> gcols_buf, h_buf, din_buf;
            auto gcols = detail::scratch_mat(gcols_buf, R, BQ);
            for (Index b = 0; b < batch; ++b)
                im2col(dz.data() + b * dims_.in_size(), dims_, gcols.data() + b * Q, BQ);
            if (scope == GradScope::All) {
                auto h = detail::scratch_mat(h_buf, dims_.oc, BQ);
                for (Index b = 0; b < batch; ++b)
                    h.middleCols(b * Q, Q) =
                        cview(cache.input.data() + b * dims_.out_size(), dims_.oc, Q);
                dkernel = Tensor<Scalar>({spec_.out_ch, spec_.in_ch, spec_.kh, spec_.kw});
                view(dkernel.data(), dims_.oc, R).noalias() = h * gcols.transpose();
            }
            auto dint = detail::scratch_mat(din_buf, dims_.oc, BQ);
            dint.noalias() = kernel * gcols;
            din = Tensor<Scalar>({batch, dims_.out_size()});
            for (Index b = 0; b < batch; ++b)
                view(din.data() + b * dims_.out_size(), dims_.oc, Q) =
                    dint.middleCols(b * Q, Q);
        }

        if (scope == GradScope::All) {
            ensure_finite(dkernel, "conv backward");
            param_grads.push_back(std::move(dkernel));
            auto& b = bias(d);
            if (b.size() > 0) {
                const Index ch = b.dim(0);
                const Index inner = dz.dim(1) / ch;
                Tensor<Scalar> db = Tensor<Scalar>::zeros({ch});
                for (Index s = 0; s < batch; ++s)
                    for (Index c = 0; c < ch; ++c)
                        db[c] += cview(dz.data() + (s * ch + c) * inner, 1, inner).sum();
                param_grads.push_back(std::move(db));
            }
            if (bn) {
                param_grads.push_back(std::move(dgamma));
                param_grads.push_back(std::move(dbeta));
            }
        }
        return din;
    }

private:
    static MatrixMap<Scalar> view(Scalar* p, Index r, Index c) {
        return MatrixMap<Scalar>(p, r, c);
    }
    static ConstMatrixMap<Scalar> cview(const Scalar* p, Index r, Index c) {
        return ConstMatrixMap<Scalar>(p, r, c);
    }

    ConstMatrixMap<Scalar> kernel_mat() const {
        return cview(weight_.data(), spec_.out_ch, dims_.cols_rows());
    }

    void add_channel_bias(Direction d, Tensor<Scalar>& z) {
        auto& b = bias(d);
        if (b.size() == 0) return;
        const Index batch = z.dim(0), ch = b.dim(0), inner = z.dim(1) / ch;
        for (Index s = 0; s < batch; ++s)
            for (Index c = 0; c < ch; ++c)
                view(z.data() + (s * ch + c) * inner, 1, inner).array() += b[c];
    }

    ConvSpec spec_;
    ConvDims dims_;
    Tensor<Scalar> weight_;
    Tensor<Scalar> bias_disc_, bias_gen_;
    std::optional<BatchNorm<Scalar>> bn_disc_, bn_gen_;
};

template <typename Scalar>
using Layer = std::variant<SharedDenseLayer<Scalar>, SharedConv2D<Scalar>>;

/// Record of one forward pass, tied to the producing network and direction
/// so stale reuse is caught instead of silently wrong.
template <typename Scalar>
struct PassCache {
    const void* owner = nullptr;
    Direction direction = Direction::Disc;
    PassMode mode = PassMode::Eval;
    Index batch = 0;
    std::vector<LayerCache<Scalar>> layers;
};

template <typename Scalar>
struct NetworkGrads {
    std::vector<Tensor<Scalar>> tensors;  // aligned with params(direction)
    Tensor<Scalar> input;                 // gradient w.r.t. the pass input
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    Shape input_shape;  // canonical sample shape, e.g. {784} or {1, 28, 28}
    Index classes = 0;  // optional check against the final layer width
};

/// A stack of weight-tied layers read in two directions: disc maps inputs to
/// class logits through layers 0..L-1, gen maps class-space vectors back to
/// input space through the same layers in reverse, each acting as the
/// adjoint of its disc form.
template <typename Scalar>
class BidirNetwork {
public:
    explicit BidirNetwork(NetworkSpec spec, Rng& rng) : spec_(std::move(spec)) {
        if (spec_.layers.empty()) throw ConfigError("network: no layers");
        if (spec_.input_shape.empty()) throw ConfigError("network: empty input shape");
        for (const auto& ls : spec_.layers)
            layers_.push_back(std::visit(
                [&rng](const auto& s) {
                    using L = std::conditional_t<std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>,
                                                 SharedDenseLayer<Scalar>, SharedConv2D<Scalar>>;
                    return Layer<Scalar>(std::in_place_type<L>, s, rng);
                },
                ls));

        Index count = shape_count(spec_.input_shape);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (layer_in(i) != count)
                throw ConfigError("network: layer " + std::to_string(i) + " expects " +
                                  std::to_string(layer_in(i)) + " features, got " +
                                  std::to_string(count));
            count = layer_out(i);
        }
        if (spec_.classes > 0 && count != spec_.classes)
            throw ConfigError("network: final layer emits " + std::to_string(count) +
                              " features, expected " + std::to_string(spec_.classes) + " classes");
    }

    const NetworkSpec& spec() const { return spec_; }
    Index layer_count() const { return Index(layers_.size()); }
    Index in_count() const { return layer_in(0); }
    Index out_count() const { return layer_out(layers_.size() - 1); }

    Layer<Scalar>& layer(Index i) { return layers_.at(std::size_t(i)); }
    const Layer<Scalar>& layer(Index i) const { return layers_.at(std::size_t(i)); }

    Tensor<Scalar>& weight(Index i) {
        return std::visit([](auto& l) -> Tensor<Scalar>& { return l.weight(); },
                          layers_.at(std::size_t(i)));
    }

    /// Disc order: layer 0 params, layer 1 params, ...; gen likewise (layer
    /// order, not traversal order). Each shared weight tensor shows up in
    /// both lists.
    std::vector<Tensor<Scalar>*> params(Direction d) {
        std::vector<Tensor<Scalar>*> out;
        for (auto& l : layers_)
            std::visit([&](auto& layer) { layer.collect_params(d, out); }, l);
        return out;
    }

    /// All stateful tensors (weights, both directions' biases, batch-norm
    /// affine and running stats) in a fixed order, for snapshots and
    /// serialization.
    std::vector<Tensor<Scalar>*> state_tensors() {
        std::vector<Tensor<Scalar>*> out;
        for (auto& l : layers_)
            std::visit([&](auto& layer) { layer.collect_state(out); }, l);
        return out;
    }

    /// Deep copy of the full model state.
    std::vector<Tensor<Scalar>> snapshot_state() {
        std::vector<Tensor<Scalar>> out;
        for (Tensor<Scalar>* t : state_tensors()) out.push_back(*t);
        return out;
    }

    void restore_state(const std::vector<Tensor<Scalar>>& saved) {
        auto live = state_tensors();
        if (saved.size() != live.size())
            throw ValueError("restore_state: snapshot has " + std::to_string(saved.size()) +
                             " tensors, model has " + std::to_string(live.size()));
        for (std::size_t i = 0; i < live.size(); ++i) {
            require_same_shape(*live[i], saved[i], "restore_state");
            *live[i] = saved[i];
        }
    }

    /// Classifier pass: input holding in_count() features per sample maps to
    /// logits [batch x out_count()].
    Tensor<Scalar> forward_disc(const Tensor<Scalar>& x, PassMode mode, PassCache<Scalar>& cache) {
        return run(Direction::Disc, x, mode, cache);
    }

    /// Generator pass: class-space input [batch x out_count()] maps back to
    /// input space [batch x in_count()], layers traversed last to first.
    Tensor<Scalar> forward_gen(const Tensor<Scalar>& y, PassMode mode, PassCache<Scalar>& cache) {
        return run(Direction::Gen, y, mode, cache);
    }

    Tensor<Scalar> forward_disc(const Tensor<Scalar>& x, PassMode mode = PassMode::Eval) {
        PassCache<Scalar> scratch;
        return forward_disc(x, mode, scratch);
    }

    Tensor<Scalar> forward_gen(const Tensor<Scalar>& y, PassMode mode = PassMode::Eval) {
        PassCache<Scalar> scratch;
        return forward_gen(y, mode, scratch);
    }

    /// Backpropagates `grad` — taken w.r.t. the final layer's logits or
    /// output per `kind` — through the recorded pass. Gradient tensors align
    /// with params(cache.direction).
    NetworkGrads<Scalar> backward(const PassCache<Scalar>& cache, const Tensor<Scalar>& grad,
                                  GradKind kind = GradKind::Logits,
                                  GradScope scope = GradScope::All) {
        if (cache.owner != this) throw ValueError("backward: cache from a different network");
        if (cache.layers.size() != layers_.size())
            throw ValueError("backward: incomplete pass cache");
        const Direction d = cache.direction;

        std::vector<std::vector<Tensor<Scalar>>> per_layer(layers_.size());
        Tensor<Scalar> g = grad.reshaped({cache.batch, grad.size() / cache.batch});
        bool at_head = true;
        auto step = [&](std::size_t i) {
            const LayerCache<Scalar>& lc = cache.layers[i];
            const bool skip_act = at_head && kind == GradKind::Logits;
            at_head = false;
            if (!skip_act)
                g = std::visit(
                    [&](auto& l) {
                        const DirectionSpec& ds = l.dir_spec(d);
                        return activation_backward(ds.act, lc.preact, lc.output, g,
                                                   Scalar(ds.leaky_alpha));
                    },
                    layers_[i]);
            g = std::visit([&](auto& l) { return l.backward(d, lc, g, per_layer[i], scope); },
                           layers_[i]);
        };

        if (d == Direction::Disc)
            for (std::size_t i = layers_.size(); i-- > 0;) step(i);
        else
            for (std::size_t i = 0; i < layers_.size(); ++i) step(i);

        NetworkGrads<Scalar> out;
        for (auto& grads : per_layer)
            for (auto& t : grads) out.tensors.push_back(std::move(t));
        out.input = std::move(g);
        return out;
    }

    /// Round trip x -> disc -> gen with the evaluation-only hard threshold
    /// replacing every activation, the fixed-point reading of the tied
    /// network. Returns {binary class vector, reconstruction}.
    std::pair<Tensor<Scalar>, Tensor<Scalar>> threshold_round_trip(const Tensor<Scalar>& x) {
        Tensor<Scalar> cur = x.reshaped({x.dim(0), in_count()});
        for (std::size_t i = 0; i < layers_.size(); ++i)
            cur = threshold_step(Direction::Disc, i, cur);
        Tensor<Scalar> y = cur;
        for (std::size_t i = layers_.size(); i-- > 0;)
            cur = threshold_step(Direction::Gen, i, cur);
        return {std::move(y), std::move(cur)};
    }

private:
    Index layer_in(std::size_t i) const {
        return std::visit([](const auto& l) { return l.in_count(); }, layers_[i]);
    }
    Index layer_out(std::size_t i) const {
        return std::visit([](const auto& l) { return l.out_count(); }, layers_[i]);
    }

    Tensor<Scalar> run(Direction d, const Tensor<Scalar>& in, PassMode mode,
                       PassCache<Scalar>& cache) {
        if (in.rank() < 1 || in.dim(0) < 1) throw ShapeError("forward: empty batch");
        const Index batch = in.dim(0);
        const Index want = d == Direction::Disc ? in_count() : out_count();
        if (in.size() != batch * want)
            throw ShapeError("forward " + std::string(direction_name(d)) + ": input " +
                             shape_str(in.shape()) + " does not hold " + std::to_string(want) +
                             " features per sample");
        cache.owner = this;
        cache.direction = d;
        cache.mode = mode;
        cache.batch = batch;
        cache.layers.assign(layers_.size(), {});

        Tensor<Scalar> cur = in.reshaped({batch, want});
        if (d == Direction::Disc)
            for (std::size_t i = 0; i < layers_.size(); ++i)
                cur = std::visit(
                    [&](auto& l) { return l.forward(d, mode, cur, cache.layers[i]); }, layers_[i]);
        else
            for (std::size_t i = layers_.size(); i-- > 0;)
                cur = std::visit(
                    [&](auto& l) { return l.forward(d, mode, cur, cache.layers[i]); }, layers_[i]);
        return cur;
    }

    Tensor<Scalar> threshold_step(Direction d, std::size_t i, const Tensor<Scalar>& in) {
        LayerCache<Scalar> scratch;
        return std::visit(
            [&](auto& l) {
                l.forward(d, PassMode::Eval, in, scratch);
                return threshold(scratch.preact);
            },
            layers_[i]);
    }

    NetworkSpec spec_;
    std::vector<Layer<Scalar>> layers_;
};

/// The single-perceptron reconstruction identity behind the tied design: for
/// a bias-free threshold unit with sign weights w (at least one positive),
/// the input x̂ = 1[w > 0] satisfies x̂ = f(wᵀ · f(w · x̂)) — reading the
/// weights backwards reproduces exactly the pattern the unit fires on.
template <typename Scalar>
bool reconstruction_fixed_point(const Tensor<Scalar>& w) {
    w.require_rank(1, "reconstruction_fixed_point");
    bool any_positive = false;
    for (Index i = 0; i < w.size(); ++i) {
        if (w[i] != Scalar(1) && w[i] != Scalar(-1))
            throw ValueError("reconstruction_fixed_point: weights must be -1 or 1");
        any_positive |= w[i] > 0;
    }
    if (!any_positive)
        throw ValueError("reconstruction_fixed_point: needs at least one positive weight");

    Tensor<Scalar> xhat = threshold(w);              // candidate fixed point
    const Scalar y = dot(w, xhat) > 0 ? 1 : 0;       // f(w · x̂)
    Tensor<Scalar> recon = threshold(scale(w, y));   // f(wᵀ y), elementwise
    return approx_equal(recon, xhat, Scalar(0));
}

}  // namespace bidir
