// bidir — train and probe weight-tied bidirectional networks.
//
// Subcommands: train, eval, attack, rates, dump. Dataset files are looked up
// under --data-root, the BIDIR_DATA environment variable, or ./data.
// Exit codes: 0 success, 2 configuration error, 3 data/file error,
// 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bidir/checkpoint.hpp"
#include "bidir/data.hpp"
#include "bidir/han.hpp"
#include "bidir/image_io.hpp"
#include "bidir/metrics_csv.hpp"
#include "bidir/presets.hpp"
#include "bidir/robustness.hpp"
#include "bidir/train.hpp"

namespace fs = std::filesystem;
using namespace bidir;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct DataOptions {
    std::string dataset = "mnist";
    std::string root;  // empty -> BIDIR_DATA env -> ./data
    Index train_count = 0;  // 0 = all
    Index test_count = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool with_train_count) {
    cmd->add_option("--dataset", d.dataset, "Dataset: mnist or cifar10")
        ->check(CLI::IsMember({"mnist", "cifar10"}));
    cmd->add_option("--data-root", d.root,
                    "Directory holding mnist/ and cifar10/ (default: $BIDIR_DATA or ./data)");
    if (with_train_count)
        cmd->add_option("--train-count", d.train_count,
                        "Use only the first N training samples (0 = all)");
    cmd->add_option("--test-count", d.test_count, "Use only the first N test samples (0 = all)");
}

fs::path dataset_dir(const DataOptions& d) {
    std::string root = d.root;
    if (root.empty()) {
        if (const char* env = std::getenv("BIDIR_DATA"); env != nullptr && *env != '\0')
            root = env;
        else
            root = "data";
    }
    return fs::path(root) / d.dataset;
}

Dataset load_split(const DataOptions& d, bool train) {
    const fs::path dir = dataset_dir(d);
    Dataset data = d.dataset == "mnist" ? load_mnist(dir.string(), train)
                                        : load_cifar10(dir.string(), train);
    const Index count = train ? d.train_count : d.test_count;
    if (count > 0) data = data.take(count);
    return data;
}

Shape sample_shape(const DataOptions& d) {
    return d.dataset == "mnist" ? Shape{1, 28, 28} : Shape{3, 32, 32};
}

double default_epsilon(const std::string& dataset) { return dataset == "mnist" ? 0.3 : 0.03; }

struct EvalFlags {
    double epsilon = -1;  // <0 -> dataset default
    double noise_level = 0.1;
    bool blend = false;
    Index chunk = 200;
};

void add_eval_options(CLI::App* cmd, EvalFlags& e) {
    cmd->add_option("--epsilon", e.epsilon,
                    "FGSM budget (default 0.3 for mnist, 0.03 for cifar10)");
    cmd->add_option("--noise-level", e.noise_level, "White-noise level for the noisy column");
    cmd->add_flag("--blend", e.blend, "Blend noise into the image instead of adding it");
    cmd->add_option("--chunk", e.chunk, "Evaluation minibatch size")->check(CLI::PositiveNumber);
}

EvalOptions resolve_eval(const EvalFlags& e, const std::string& dataset) {
    EvalOptions opt;
    opt.epsilon = e.epsilon < 0 ? default_epsilon(dataset) : e.epsilon;
    opt.noise_level = e.noise_level;
    opt.blend = e.blend;
    opt.chunk = e.chunk;
    return opt;
}

std::string image_ext(Index channels) { return channels == 3 ? ".ppm" : ".pgm"; }

void dump_network_art(BidirNetwork<float>& net, const fs::path& dir) {
    TensorF weights = first_layer_weight_images(net);
    dump_image_grid(weights, (dir / ("weights" + image_ext(weights.dim(1)))).string(),
                    std::min<Index>(weights.dim(0), 10));

    const Shape& in_shape = net.spec().input_shape;
    if (in_shape.size() == 3) {
        TensorF labels = TensorF::identity(net.out_count());
        TensorF images = net.forward_gen(labels, PassMode::Eval);
        TensorF grid = images.reshaped(
            {net.out_count(), in_shape[0], in_shape[1], in_shape[2]});
        dump_image_grid(grid, (dir / ("generated" + image_ext(in_shape[0]))).string());
    }
}

void print_report(Index iteration, const RobustnessReport& m, std::ostream& out) {
    out << kMetricsHeader << '\n' << format_metrics_row(iteration, m) << '\n';
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
    std::string preset;
    bool bias = true;
    std::string regime;  // empty -> bp (biprop) / bl-then-bp (han)
    std::string recon = "sigmoid-ce";
    Index iterations = 0;  // 0 -> 50000 biprop / 500000 han
    Index batch = 100;
    Index eval_every = 1000;
    std::uint64_t seed = 1;
    AdamConfig adam;
    DataOptions data;
    EvalFlags eval;
    std::string out_dir;
    bool no_restore_best = false;
    bool quiet = false;
};

nlohmann::json train_config_json(const TrainArgs& a, Regime regime, Index iterations,
                                 const EvalOptions& eval) {
    return {{"preset", a.preset},
            {"bias", a.bias},
            {"regime", regime_name(regime)},
            {"recon", a.recon},
            {"iterations", iterations},
            {"batch", a.batch},
            {"eval_every", a.eval_every},
            {"seed", a.seed},
            {"adam", {{"lr", a.adam.lr},
                      {"beta1", a.adam.beta1},
                      {"beta2", a.adam.beta2},
                      {"epsilon", a.adam.epsilon}}},
            {"dataset", a.data.dataset},
            {"train_count", a.data.train_count},
            {"test_count", a.data.test_count},
            {"attack_epsilon", eval.epsilon},
            {"noise_level", eval.noise_level},
            {"blend_noise", eval.blend},
            {"restore_best", !a.no_restore_best}};
}

int run_train(const TrainArgs& a) {
    require_preset(a.preset);
    const bool han = is_han_preset(a.preset);
    const Regime regime = regime_from_name(
        a.regime.empty() ? (han ? std::string("bl-then-bp") : std::string("bp")) : a.regime);
    const Index iterations = a.iterations > 0 ? a.iterations : (han ? 500000 : 50000);
    const ReconLoss recon = recon_loss_from_name(a.recon);
    const EvalOptions eval = resolve_eval(a.eval, a.data.dataset);

    fs::path out_dir = a.out_dir;
    if (out_dir.empty())
        out_dir = fs::path("runs") / (a.preset + (a.bias ? "" : "-nobias") + "-" +
                                      regime_name(regime) + "-seed" + std::to_string(a.seed));
    fs::create_directories(out_dir);

    Dataset train_data = load_split(a.data, true);
    Dataset test_data = load_split(a.data, false);

    Rng rng(a.seed);
    NetworkSpec spec = make_network_spec(a.preset, sample_shape(a.data), train_data.classes,
                                         a.bias);
    BidirNetwork<float> net(spec, rng);

    {
        std::ofstream cfg(out_dir / "config.json", std::ios::trunc);
        cfg << train_config_json(a, regime, iterations, eval).dump(2) << '\n';
    }

    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw ParseError("cannot open for writing: " + (out_dir / "metrics.csv").string());
    csv << kMetricsHeader << '\n';
    EvalHook on_eval = [&](const MetricsRow& row) {
        csv << format_metrics_row(row.iteration, row.metrics) << '\n';
        csv.flush();
        if (!a.quiet)
            std::cout << format_metrics_row(row.iteration, row.metrics) << std::endl;
    };
    if (!a.quiet) std::cout << kMetricsHeader << std::endl;

    TrainResult result;
    if (han) {
        NetworkSpec adv_spec = make_adversary_spec(a.preset, sample_shape(a.data), a.bias);
        Rng adv_rng(a.seed + 7);
        BidirNetwork<float> adversary(adv_spec, adv_rng);

        HanConfig cfg;
        cfg.regime = regime;
        cfg.iterations = iterations;
        cfg.batch = a.batch;
        cfg.adam = a.adam;
        cfg.eval_every = a.eval_every;
        cfg.data_seed = a.seed;
        cfg.z_seed = a.seed + 1000003;
        cfg.eval = eval;
        cfg.restore_best = !a.no_restore_best;
        result = train_han(net, adversary, train_data, test_data, cfg, {}, on_eval);

        save_checkpoint(make_checkpoint(adversary, iterations, a.seed),
                        (out_dir / "adversary.ckpt").string());
    } else {
        TrainConfig cfg;
        cfg.regime = regime;
        cfg.iterations = iterations;
        cfg.batch = a.batch;
        cfg.adam = a.adam;
        cfg.recon = recon;
        cfg.eval_every = a.eval_every;
        cfg.data_seed = a.seed;
        cfg.eval = eval;
        cfg.restore_best = !a.no_restore_best;
        result = train(net, train_data, test_data, cfg, {}, on_eval);
    }

    csv.close();
    const Index ckpt_iter = a.no_restore_best ? iterations : result.best_iteration;
    save_checkpoint(make_checkpoint(net, ckpt_iter, a.seed),
                    (out_dir / "model.ckpt").string());
    dump_network_art(net, out_dir);

    if (!a.quiet) {
        std::cout << "best iteration " << result.best_iteration << ":\n";
        print_report(result.best_iteration, result.best, std::cout);
        std::cout << "artifacts in " << out_dir.string() << '\n';
    }
    return kExitOk;
}

// ------------------------------------------------- checkpoint consumers ---

struct CkptArgs {
    std::string checkpoint;
    DataOptions data;
    EvalFlags eval;
    std::string out;
};

BidirNetwork<float> load_network(const std::string& path) {
    CheckpointData data = load_checkpoint(path);
    Rng rng(0);
    return restore_network(data, rng);
}

int run_eval(const CkptArgs& a) {
    CheckpointData ckpt = load_checkpoint(a.checkpoint);
    Rng rng(0);
    BidirNetwork<float> net = restore_network(ckpt, rng);
    Dataset test = load_split(a.data, false);
    RobustnessReport report = evaluate_robustness(net, test, resolve_eval(a.eval, a.data.dataset));
    print_report(ckpt.iteration, report, std::cout);
    if (!a.out.empty()) {
        std::vector<MetricsRow> series{{Index(ckpt.iteration), report}};
        write_metrics_csv(series, a.out);
    }
    return kExitOk;
}

int run_attack(const CkptArgs& a, Index count) {
    CheckpointData ckpt = load_checkpoint(a.checkpoint);
    Rng rng(0);
    BidirNetwork<float> net = restore_network(ckpt, rng);
    Dataset test = load_split(a.data, false);
    const EvalOptions eval = resolve_eval(a.eval, a.data.dataset);

    TensorF images = test.images;
    TensorF adv = fgsm(net, images, test.labels, float(eval.epsilon), 0.0f, 1.0f, eval.chunk);
    const double acc_clean = accuracy(net, images, test.labels, eval.chunk);
    const double acc_adv = accuracy(net, adv, test.labels, eval.chunk);
    std::cout << "epsilon " << eval.epsilon << '\n'
              << "acc_test " << acc_clean << '\n'
              << "acc_adv " << acc_adv << '\n';

    if (!a.out.empty()) {
        fs::create_directories(a.out);
        const Index n = std::min<Index>(count, test.count());
        Shape tile{n, test.channels(), test.height(), test.width()};
        TensorF clean_n = TensorF::zeros(tile), adv_n = TensorF::zeros(tile);
        std::copy_n(images.data(), shape_count(tile), clean_n.data());
        std::copy_n(adv.data(), shape_count(tile), adv_n.data());
        const std::string ext = image_ext(test.channels());
        dump_image_grid(clean_n, (fs::path(a.out) / ("clean" + ext)).string());
        dump_image_grid(adv_n, (fs::path(a.out) / ("adversarial" + ext)).string());
        std::cout << "grids in " << a.out << '\n';
    }
    return kExitOk;
}

int run_rates(const CkptArgs& a, std::uint64_t noise_seed) {
    CheckpointData ckpt = load_checkpoint(a.checkpoint);
    Rng rng(0);
    BidirNetwork<float> net = restore_network(ckpt, rng);
    Dataset test = load_split(a.data, false);
    const EvalOptions eval = resolve_eval(a.eval, a.data.dataset);

    Rng noise_rng(noise_seed);
    TensorF noise = white_noise<float>(noise_rng, test.images.shape());
    std::cout << "sigmoid_rate "
              << output_rate(net, test.images, noise, Activation::Sigmoid, eval.chunk) << '\n'
              << "softmax_rate "
              << output_rate(net, test.images, noise, Activation::Softmax, eval.chunk) << '\n';
    return kExitOk;
}

int run_dump(const CkptArgs& a) {
    BidirNetwork<float> net = load_network(a.checkpoint);
    fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
    fs::create_directories(dir);
    dump_network_art(net, dir);
    std::cout << "artifacts in " << dir.string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bidirectional-learning networks: train, evaluate, attack"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "bidir 1.0");
    app.set_config("--config", "",
                   "Key=value config file; [train] etc. sections hold subcommand options, "
                   "command-line flags override");

    TrainArgs targs;
    CLI::App* tcmd = app.add_subcommand("train", "Train a preset and write run artifacts");
    tcmd->fallthrough();
    tcmd->add_option("--preset", targs.preset, "Architecture preset")
        ->required()
        ->check(CLI::IsMember(preset_names()));
    tcmd->add_flag("--bias,!--no-bias", targs.bias, "Per-direction bias terms (default on)");
    tcmd->add_option("--regime", targs.regime,
                     "bp, bl, or bl-then-bp (default bp; han presets default bl-then-bp)")
        ->check(CLI::IsMember({"bp", "bl", "bl-then-bp"}));
    tcmd->add_option("--recon", targs.recon, "Generator reconstruction loss")
        ->check(CLI::IsMember({"sigmoid-ce", "mse"}));
    tcmd->add_option("--iters", targs.iterations,
                     "Training iterations (default 50000; han presets 500000)");
    tcmd->add_option("--batch", targs.batch, "Minibatch size")->check(CLI::PositiveNumber);
    tcmd->add_option("--eval-every", targs.eval_every, "Robustness sweep cadence")
        ->check(CLI::PositiveNumber);
    tcmd->add_option("--seed", targs.seed, "Master seed (weights, batches, z)");
    tcmd->add_option("--lr", targs.adam.lr, "Adam learning rate");
    tcmd->add_option("--beta1", targs.adam.beta1, "Adam beta1");
    tcmd->add_option("--beta2", targs.adam.beta2, "Adam beta2");
    tcmd->add_option("--adam-eps", targs.adam.epsilon, "Adam epsilon");
    tcmd->add_option("--out", targs.out_dir, "Output directory (default runs/<name>)");
    tcmd->add_flag("--no-restore-best", targs.no_restore_best,
                   "Keep the final weights instead of the best-accuracy sweep");
    tcmd->add_flag("--quiet", targs.quiet, "No per-sweep stdout");
    add_data_options(tcmd, targs.data, true);
    add_eval_options(tcmd, targs.eval);

    CkptArgs eargs;
    CLI::App* ecmd = app.add_subcommand("eval", "Robustness sweep of a checkpoint");
    ecmd->fallthrough();
    ecmd->add_option("--checkpoint", eargs.checkpoint, "Model checkpoint")->required();
    ecmd->add_option("--out", eargs.out, "Also write the row to this CSV file");
    add_data_options(ecmd, eargs.data, false);
    add_eval_options(ecmd, eargs.eval);

    CkptArgs aargs;
    Index attack_count = 10;
    CLI::App* acmd = app.add_subcommand("attack", "FGSM attack, accuracy and example grids");
    acmd->fallthrough();
    acmd->add_option("--checkpoint", aargs.checkpoint, "Model checkpoint")->required();
    acmd->add_option("--out", aargs.out, "Directory for clean/adversarial grids");
    acmd->add_option("--count", attack_count, "Grid tile count")->check(CLI::PositiveNumber);
    add_data_options(acmd, aargs.data, false);
    add_eval_options(acmd, aargs.eval);

    CkptArgs rargs;
    std::uint64_t rates_seed = 9001;
    CLI::App* rcmd = app.add_subcommand("rates", "Noise-to-test output rates of a checkpoint");
    rcmd->fallthrough();
    rcmd->add_option("--checkpoint", rargs.checkpoint, "Model checkpoint")->required();
    rcmd->add_option("--noise-seed", rates_seed, "Seed for the uniform-noise probe set");
    add_data_options(rcmd, rargs.data, false);
    add_eval_options(rcmd, rargs.eval);

    CkptArgs dargs;
    CLI::App* dcmd = app.add_subcommand("dump", "Weight and generated-image grids");
    dcmd->fallthrough();
    dcmd->add_option("--checkpoint", dargs.checkpoint, "Model checkpoint")->required();
    dcmd->add_option("--out", dargs.out, "Output directory (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (tcmd->parsed()) return run_train(targs);
        if (ecmd->parsed()) return run_eval(eargs);
        if (acmd->parsed()) return run_attack(aargs, attack_count);
        if (rcmd->parsed()) return run_rates(rargs, rates_seed);
        if (dcmd->parsed()) return run_dump(dargs);
        throw ConfigError("no subcommand");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ValueError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
