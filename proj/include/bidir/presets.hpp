#pragma once

#include <string>
#include <vector>

#include "bidir/layers.hpp"

namespace bidir {

/// Named model presets. The five `nn-`/`cnn-` presets train with the biprop
/// loop (train); the two `han-` presets train as hybrid adversarial networks
/// (train_han) and come with a matching adversary architecture.
///
///   nn-none      no hidden layer (linear classifier)
///   nn-1x16      one hidden layer of 16
///   nn-2x16      two hidden layers of 16
///   nn-4deep     hidden layers 200, 100, 60, 30
///   cnn-3conv    conv 4(5x5 s1), 8(5x5 s2), 12(4x4 s2), dense 200
///   han-nn-128   one hidden layer of 128, GAN-trained generator
///   han-infogan  conv 64(4x4 s2), 128(4x4 s2) + BN, dense 1024 + BN
inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"nn-none",   "nn-1x16",    "nn-2x16",
                                                   "nn-4deep",  "cnn-3conv",  "han-nn-128",
                                                   "han-infogan"};
    return names;
}

inline bool is_preset(const std::string& name) {
    for (const auto& n : preset_names())
        if (n == name) return true;
    return false;
}

inline bool is_han_preset(const std::string& name) {
    return name == "han-nn-128" || name == "han-infogan";
}

inline void require_preset(const std::string& name) {
    if (is_preset(name)) return;
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset: " + name + " (valid: " + all + ")");
}

namespace detail {

/// Hidden dense layer: relu both ways, optional bias per direction.
inline DenseSpec hidden_dense(Index in, Index out, bool bias, Activation act = Activation::Relu,
                              double alpha = 0.1) {
    DenseSpec s;
    s.in = in;
    s.out = out;
    s.disc.act = s.gen.act = act;
    s.disc.leaky_alpha = s.gen.leaky_alpha = alpha;
    s.disc.bias = s.gen.bias = bias;
    return s;
}

inline ConvSpec conv(Index in_ch, Index h, Index w, Index out_ch, Index k, Index stride,
                     Index pad, bool bias, Activation act = Activation::Relu,
                     double alpha = 0.1) {
    ConvSpec s;
    s.in_ch = in_ch;
    s.in_h = h;
    s.in_w = w;
    s.out_ch = out_ch;
    s.kh = s.kw = k;
    s.stride = stride;
    s.pad = pad;
    s.disc.act = s.gen.act = act;
    s.disc.leaky_alpha = s.gen.leaky_alpha = alpha;
    s.disc.bias = s.gen.bias = bias;
    return s;
}

/// The first layer writes images on the way back; the last layer emits raw
/// logits on the way forward.
inline void finish_spec(NetworkSpec& spec) {
    std::visit([](auto& s) { s.gen.act = Activation::Sigmoid; }, spec.layers.front());
    std::visit([](auto& s) { s.disc.act = Activation::Identity; }, spec.layers.back());
}

}  // namespace detail

/// Builds the classifier/generator network spec for a preset over images of
/// shape {channels, height, width}.
inline NetworkSpec make_network_spec(const std::string& preset, const Shape& input_shape,
                                     Index classes, bool bias) {
    require_preset(preset);
    if (input_shape.size() != 3)
        throw ConfigError("preset: input shape must be {channels, height, width}");
    const Index c = input_shape[0], h = input_shape[1], w = input_shape[2];
    const Index flat = c * h * w;

    NetworkSpec spec;
    spec.input_shape = input_shape;
    spec.classes = classes;
    using detail::conv;
    using detail::hidden_dense;

    if (preset == "nn-none") {
        spec.layers = {hidden_dense(flat, classes, bias)};
    } else if (preset == "nn-1x16") {
        spec.layers = {hidden_dense(flat, 16, bias), hidden_dense(16, classes, bias)};
    } else if (preset == "nn-2x16") {
        spec.layers = {hidden_dense(flat, 16, bias), hidden_dense(16, 16, bias),
                       hidden_dense(16, classes, bias)};
    } else if (preset == "nn-4deep") {
        spec.layers = {hidden_dense(flat, 200, bias), hidden_dense(200, 100, bias),
                       hidden_dense(100, 60, bias), hidden_dense(60, 30, bias),
                       hidden_dense(30, classes, bias)};
    } else if (preset == "cnn-3conv") {
        ConvSpec c1 = conv(c, h, w, 4, 5, 1, 0, bias);
        ConvDims d1 = make_conv_dims(c, h, w, 4, 5, 5, 1, 0);
        ConvSpec c2 = conv(4, d1.oh, d1.ow, 8, 5, 2, 0, bias);
        ConvDims d2 = make_conv_dims(4, d1.oh, d1.ow, 8, 5, 5, 2, 0);
        ConvSpec c3 = conv(8, d2.oh, d2.ow, 12, 4, 2, 0, bias);
        ConvDims d3 = make_conv_dims(8, d2.oh, d2.ow, 12, 4, 4, 2, 0);
        spec.layers = {c1, c2, c3, hidden_dense(d3.out_size(), 200, bias),
                       hidden_dense(200, classes, bias)};
    } else if (preset == "han-nn-128") {
        spec.layers = {hidden_dense(flat, 128, bias), hidden_dense(128, classes, bias)};
    } else {  // han-infogan
        ConvSpec c1 = conv(c, h, w, 64, 4, 2, 1, bias, Activation::LeakyRelu);
        ConvDims d1 = make_conv_dims(c, h, w, 64, 4, 4, 2, 1);
        ConvSpec c2 = conv(64, d1.oh, d1.ow, 128, 4, 2, 1, bias, Activation::LeakyRelu);
        c2.disc.batch_norm = true;
        ConvDims d2 = make_conv_dims(64, d1.oh, d1.ow, 128, 4, 4, 2, 1);
        DenseSpec f3 = hidden_dense(d2.out_size(), 1024, bias, Activation::LeakyRelu);
        f3.disc.batch_norm = true;
        DenseSpec f4 = hidden_dense(1024, classes, bias, Activation::LeakyRelu);
        // generator side mirrors the infoGAN decoder: batch norm after every
        // tied linear map except the image-producing head
        f4.gen.batch_norm = true;   // over the 1024 features it emits
        f3.gen.batch_norm = true;   // over the flattened conv volume
        c2.gen.batch_norm = true;   // over the 64 channels it emits
        spec.layers = {c1, c2, f3, f4};
    }

    detail::finish_spec(spec);
    return spec;
}

/// Builds the real/fake adversary for a HAN preset: the disc trunk of the
/// hybrid with a single-logit head. It has its own weights and only its disc
/// direction is ever used.
inline NetworkSpec make_adversary_spec(const std::string& preset, const Shape& input_shape,
                                       bool bias) {
    require_preset(preset);
    if (!is_han_preset(preset))
        throw ConfigError("preset " + preset + " trains without an adversary");
    NetworkSpec spec = make_network_spec(preset, input_shape, 10, bias);
    // swap the class head for a single logit
    std::visit(
        [](auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>)
                s.out = 1;
            else
                throw ConfigError("adversary head must be dense");
        },
        spec.layers.back());
    // the adversary is never read backwards; keep its gen side inert
    for (auto& layer : spec.layers)
        std::visit([](auto& s) { s.gen = DirectionSpec{}; }, layer);
    spec.classes = 1;
    return spec;
}

}  // namespace bidir
