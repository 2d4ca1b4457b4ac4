#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bidir/layers.hpp"
#include "bidir/optim.hpp"

namespace bidir {

/// Checkpoint container: magic + version, a JSON descriptor (architecture,
/// iteration, seed, optimizer clocks), then every model tensor — and, when
/// optimizer state is included, the Adam moments — as little-endian float32.
/// save -> load -> save reproduces the file byte for byte.

inline constexpr char kCheckpointMagic[8] = {'B', 'D', 'I', 'R', 'N', 'E', 'T', '\n'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
    AdamConfig config;
    long disc_step = 0;
    long gen_step = 0;
    std::vector<TensorF> disc_m, disc_v;  // aligned with params(Disc)
    std::vector<TensorF> gen_m, gen_v;    // aligned with params(Gen)
};

struct CheckpointData {
    NetworkSpec spec;
    std::vector<TensorF> state;  // aligned with state_tensors()
    long iteration = 0;
    std::uint64_t seed = 0;
    std::optional<OptimizerState> optimizer;
};

namespace detail {

inline nlohmann::json direction_to_json(const DirectionSpec& d) {
    return {{"act", activation_name(d.act)},
            {"alpha", d.leaky_alpha},
            {"bias", d.bias},
            {"bn", d.batch_norm}};
}

inline DirectionSpec direction_from_json(const nlohmann::json& j) {
    DirectionSpec d;
    d.act = activation_from_name(j.at("act").get<std::string>());
    d.leaky_alpha = j.at("alpha").get<double>();
    d.bias = j.at("bias").get<bool>();
    d.batch_norm = j.at("bn").get<bool>();
    return d;
}

inline nlohmann::json layer_to_json(const LayerSpec& ls) {
    return std::visit(
        [](const auto& s) -> nlohmann::json {
            nlohmann::json j;
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, DenseSpec>) {
                j["type"] = "dense";
                j["in"] = s.in;
                j["out"] = s.out;
            } else {
                j["type"] = "conv";
                j["in_ch"] = s.in_ch;
                j["in_h"] = s.in_h;
                j["in_w"] = s.in_w;
                j["out_ch"] = s.out_ch;
                j["kh"] = s.kh;
                j["kw"] = s.kw;
                j["stride"] = s.stride;
                j["pad"] = s.pad;
            }
            j["disc"] = direction_to_json(s.disc);
            j["gen"] = direction_to_json(s.gen);
            return j;
        },
        ls);
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "dense") {
        DenseSpec s;
        s.in = j.at("in").get<Index>();
        s.out = j.at("out").get<Index>();
        s.disc = direction_from_json(j.at("disc"));
        s.gen = direction_from_json(j.at("gen"));
        return s;
    }
    if (type == "conv") {
        ConvSpec s;
        s.in_ch = j.at("in_ch").get<Index>();
        s.in_h = j.at("in_h").get<Index>();
        s.in_w = j.at("in_w").get<Index>();
        s.out_ch = j.at("out_ch").get<Index>();
        s.kh = j.at("kh").get<Index>();
        s.kw = j.at("kw").get<Index>();
        s.stride = j.at("stride").get<Index>();
        s.pad = j.at("pad").get<Index>();
        s.disc = direction_from_json(j.at("disc"));
        s.gen = direction_from_json(j.at("gen"));
        return s;
    }
    throw ParseError("checkpoint: unknown layer type: " + type);
}

}  // namespace detail

inline nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& ls : spec.layers) layers.push_back(detail::layer_to_json(ls));
    return {{"classes", spec.classes}, {"input_shape", spec.input_shape}, {"layers", layers}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.classes = j.at("classes").get<Index>();
    spec.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& lj : j.at("layers")) spec.layers.push_back(detail::layer_from_json(lj));
    return spec;
}

/// True when two specs describe the same architecture (compared via their
/// canonical JSON form, so activations, biases and batch-norm flags count).
inline bool same_architecture(const NetworkSpec& a, const NetworkSpec& b) {
    return spec_to_json(a) == spec_to_json(b);
}

namespace detail {

inline void write_f32_le(std::ostream& out, const TensorF& t) {
    static_assert(sizeof(float) == 4);
    // this library targets little-endian hosts; IEEE-754 floats stream as-is
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
}

inline void read_f32_le(std::istream& in, TensorF& t, std::uint64_t& offset,
                        const std::string& what) {
    const std::streamsize bytes = static_cast<std::streamsize>(t.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(t.data()), bytes);
    if (in.gcount() != bytes)
        throw ParseError("checkpoint: truncated " + what + " at byte " + std::to_string(offset) +
                         ": wanted " + std::to_string(bytes) + " bytes, got " +
                         std::to_string(in.gcount()));
    offset += static_cast<std::uint64_t>(bytes);
}

template <typename T>
void write_scalar_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_scalar_le(std::istream& in, std::uint64_t& offset, const std::string& what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw ParseError("checkpoint: truncated " + what + " at byte " + std::to_string(offset));
    offset += sizeof(T);
    return value;
}

inline nlohmann::json checkpoint_header(const CheckpointData& data) {
    nlohmann::json j;
    j["arch"] = spec_to_json(data.spec);
    j["iteration"] = data.iteration;
    j["seed"] = data.seed;
    if (data.optimizer) {
        const auto& o = *data.optimizer;
        j["optimizer"] = {{"lr", o.config.lr},
                          {"beta1", o.config.beta1},
                          {"beta2", o.config.beta2},
                          {"epsilon", o.config.epsilon},
                          {"disc_step", o.disc_step},
                          {"gen_step", o.gen_step},
                          {"disc_params", o.disc_m.size()},
                          {"gen_params", o.gen_m.size()}};
    } else {
        j["optimizer"] = nullptr;
    }
    return j;
}

}  // namespace detail

inline void save_checkpoint(const CheckpointData& data, const std::string& path) {
    if (data.optimizer) {
        const auto& o = *data.optimizer;
        if (o.disc_m.size() != o.disc_v.size() || o.gen_m.size() != o.gen_v.size())
            throw ValueError("checkpoint: optimizer moment lists disagree");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("checkpoint: cannot open for writing: " + path);

    const std::string header = detail::checkpoint_header(data).dump();
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_scalar_le(out, kCheckpointVersion);
    detail::write_scalar_le(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    for (const auto& t : data.state) detail::write_f32_le(out, t);
    if (data.optimizer) {
        const auto& o = *data.optimizer;
        for (const auto& t : o.disc_m) detail::write_f32_le(out, t);
        for (const auto& t : o.disc_v) detail::write_f32_le(out, t);
        for (const auto& t : o.gen_m) detail::write_f32_le(out, t);
        for (const auto& t : o.gen_v) detail::write_f32_le(out, t);
    }
    out.flush();
    if (!out) throw ParseError("checkpoint: write failed: " + path);
}

/// Reads a checkpoint written by save_checkpoint. Tensor shapes are derived
/// from the architecture descriptor by instantiating the network once, so a
/// tampered header surfaces as a shape or truncation error.
inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("checkpoint: cannot open: " + path);
    std::uint64_t offset = 0;

    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError("checkpoint: bad magic at byte 0: not a checkpoint file");
    offset += sizeof(magic);

    const auto version = detail::read_scalar_le<std::uint32_t>(in, offset, "version");
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version) +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");

    const auto header_len = detail::read_scalar_le<std::uint64_t>(in, offset, "header length");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (in.gcount() != static_cast<std::streamsize>(header_len))
        throw ParseError("checkpoint: truncated header at byte " + std::to_string(offset));
    offset += header_len;

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint: corrupt header JSON at byte " +
                         std::to_string(sizeof(magic) + sizeof(version) + sizeof(header_len)) +
                         ": " + e.what());
    }

    CheckpointData data;
    try {
        data.spec = spec_from_json(j.at("arch"));
        data.iteration = j.at("iteration").get<long>();
        data.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
    }

    // instantiate once to learn the shapes of every state tensor
    Rng shape_rng(0);
    BidirNetwork<float> probe(data.spec, shape_rng);
    for (auto* t : probe.state_tensors()) data.state.emplace_back(TensorF::zeros(t->shape()));
    for (auto& t : data.state) detail::read_f32_le(in, t, offset, "model state");

    const auto& oj = j.at("optimizer");
    if (!oj.is_null()) {
        OptimizerState o;
        try {
            o.config.lr = oj.at("lr").get<double>();
            o.config.beta1 = oj.at("beta1").get<double>();
            o.config.beta2 = oj.at("beta2").get<double>();
            o.config.epsilon = oj.at("epsilon").get<double>();
            o.disc_step = oj.at("disc_step").get<long>();
            o.gen_step = oj.at("gen_step").get<long>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("checkpoint: malformed optimizer section: ") + e.what());
        }
        const auto disc_params = probe.params(Direction::Disc);
        const auto gen_params = probe.params(Direction::Gen);
        if (oj.at("disc_params").get<std::size_t>() != disc_params.size() ||
            oj.at("gen_params").get<std::size_t>() != gen_params.size())
            throw ParseError("checkpoint: optimizer parameter count mismatch");
        auto read_moments = [&](const auto& params, std::vector<TensorF>& dst,
                                const std::string& what) {
            for (auto* p : params) dst.emplace_back(TensorF::zeros(p->shape()));
            for (auto& t : dst) detail::read_f32_le(in, t, offset, what);
        };
        read_moments(disc_params, o.disc_m, "disc first moments");
        read_moments(disc_params, o.disc_v, "disc second moments");
        read_moments(gen_params, o.gen_m, "gen first moments");
        read_moments(gen_params, o.gen_v, "gen second moments");
        data.optimizer = std::move(o);
    }

    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw ParseError("checkpoint: trailing bytes after byte " + std::to_string(offset));
    return data;
}

/// Captures a network (and optionally its two Adam optimizers) for saving.
inline CheckpointData make_checkpoint(BidirNetwork<float>& net, long iteration,
                                      std::uint64_t seed,
                                      const AdamOptimizer<float>* disc_opt = nullptr,
                                      const AdamOptimizer<float>* gen_opt = nullptr) {
    CheckpointData data;
    data.spec = net.spec();
    data.state = net.snapshot_state();
    data.iteration = iteration;
    data.seed = seed;
    if (disc_opt != nullptr || gen_opt != nullptr) {
        if (disc_opt == nullptr || gen_opt == nullptr)
            throw ValueError("checkpoint: need both optimizers or neither");
        OptimizerState o;
        o.config = disc_opt->config();
        o.disc_step = disc_opt->step_count();
        o.gen_step = gen_opt->step_count();
        for (std::size_t i = 0; i < disc_opt->param_count(); ++i) {
            o.disc_m.push_back(disc_opt->first_moment(i));
            o.disc_v.push_back(disc_opt->second_moment(i));
        }
        for (std::size_t i = 0; i < gen_opt->param_count(); ++i) {
            o.gen_m.push_back(gen_opt->first_moment(i));
            o.gen_v.push_back(gen_opt->second_moment(i));
        }
        data.optimizer = std::move(o);
    }
    return data;
}

/// Rebuilds the network a checkpoint describes. Throws ConfigError when
/// `expected` is given and the stored architecture differs from it.
inline BidirNetwork<float> restore_network(const CheckpointData& data, Rng& rng,
                                           const NetworkSpec* expected = nullptr) {
    if (expected != nullptr && !same_architecture(data.spec, *expected))
        throw ConfigError("checkpoint: stored architecture does not match the requested one");
    BidirNetwork<float> net(data.spec, rng);
    net.restore_state(data.state);
    return net;
}

/// Pours saved Adam moments back into a freshly built optimizer pair.
inline void restore_optimizers(const CheckpointData& data, AdamOptimizer<float>& disc_opt,
                               AdamOptimizer<float>& gen_opt) {
    if (!data.optimizer) throw ValueError("checkpoint: no optimizer section to restore");
    const auto& o = *data.optimizer;
    if (disc_opt.param_count() != o.disc_m.size() || gen_opt.param_count() != o.gen_m.size())
        throw ValueError("checkpoint: optimizer parameter count mismatch");
    auto pour = [](AdamOptimizer<float>& opt, const std::vector<TensorF>& m,
                   const std::vector<TensorF>& v, long step) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            require_same_shape(opt.first_moment(i), m[i], "restore optimizer");
            opt.first_moment(i) = m[i];
            opt.second_moment(i) = v[i];
        }
        opt.set_step_count(step);
    };
    pour(disc_opt, o.disc_m, o.disc_v, o.disc_step);
    pour(gen_opt, o.gen_m, o.gen_v, o.gen_step);
}

}  // namespace bidir
