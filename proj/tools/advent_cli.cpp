// advent: generate synthetic benchmarks, train, evaluate, run ablation suites
// and re-render plots.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advent/ablation.hpp"
#include "advent/error.hpp"
#include "advent/plot.hpp"
#include "advent/run_config.hpp"
#include "advent/synthetic.hpp"
#include "advent/trainer.hpp"

namespace fs = std::filesystem;

namespace {

/// Flags shared by train and ablate; each maps onto a RunConfig key.
struct RunFlags {
    std::string config_file;
    std::vector<std::string> sets;
    bool fast = false;
    advent::kv::Record overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "Key-value run configuration file");
        auto opt = [&](const char* flag, const char* key, const char* help) {
            cmd->add_option_function<std::string>(
                flag, [this, key](const std::string& v) { overrides[key] = v; }, help);
        };
        opt("--train-manifest", "train_manifest", "Training manifest (sequence paths relative to it)");
        opt("--val-manifest", "val_manifest", "Validation manifest (optional)");
        opt("--num-classes", "num_classes", "Class count [default: 8]");
        opt("--depth", "depth", "LSM depth, past frames per window [default: 3]");
        opt("--policy", "policy", "Fusion policy CE or FI [default: FI]");
        opt("--gsm", "gsm", "Global shuffling on/off [default: on]");
        opt("--loss", "loss", "ce, vrs or urs [default: urs]");
        opt("--K", "K", "Unrolled layers for urs [default: 5]");
        opt("--tau", "tau", "InfoNCE temperature [default: 0.1]");
        opt("--anchors", "anchors", "Anchors per image [default: 16]");
        opt("--positives", "positives", "Positives per anchor [default: 32]");
        opt("--negatives", "negatives", "Negatives per anchor [default: 32]");
        opt("--lr", "lr", "Adam learning rate [default: 3e-4]");
        opt("--weight-decay", "weight_decay", "Adam weight decay [default: 1e-4]");
        opt("--batch-size", "batch_size", "Mini-batch size [default: 8]");
        opt("--epochs", "epochs", "Epochs [default: 200]");
        opt("--seeds", "seeds", "Comma-separated seeds [default: 0,1,2]");
        opt("--width", "backbone_width", "Backbone width [default: 16]");
        opt("--backbone-depth", "backbone_depth", "Encoder stages [default: 2]");
        opt("--out", "output_dir", "Output directory [default: runs]");
        cmd->add_option("--set", sets, "Extra key=value overrides (repeatable)");
        cmd->add_flag("--fast", fast, "CI mode: 20 epochs");
    }

    advent::RunConfig resolve() {
        auto base = config_file.empty() ? advent::RunConfig{} : advent::RunConfig::from_file(config_file);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw advent::ConfigError("--set expects key=value, got '" + s + "'");
            overrides[s.substr(0, eq)] = s.substr(eq + 1);
        }
        auto c = base.with(overrides);
        if (fast) c.epochs = advent::RunConfig::kFastEpochs;
        c.validate();
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"advent: weather-robust segmentation with temporal windows and unrolled regularizers"};
    app.require_subcommand(1);

    std::string profile_path, gen_root;
    auto* gen = app.add_subcommand("generate", "Write a synthetic weather benchmark");
    gen->add_option("--profile", profile_path, "Key-value benchmark profile (defaults when omitted)");
    gen->add_option("--root", gen_root, "Output directory")->required();

    RunFlags train_flags;
    std::optional<std::uint64_t> train_seed;
    auto* train = app.add_subcommand("train", "Train one model");
    train_flags.attach(train);
    train->add_option("--seed", train_seed, "Seed for this run [default: first of --seeds]");

    std::string ckpt, eval_manifest;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
    eval->add_option("--checkpoint", ckpt, "Checkpoint written by train")->required();
    eval->add_option("--manifest", eval_manifest, "Manifest to evaluate")->required();

    RunFlags ablate_flags;
    std::string suite_name;
    auto* ablate = app.add_subcommand("ablate", "Run an ablation suite over several seeds");
    ablate->add_option("--suite", suite_name, "depth, fusion, gsm or regularizer")->required();
    ablate_flags.attach(ablate);

    std::string plot_dir;
    auto* plot = app.add_subcommand("plot", "Re-render SVG curves for a run or ablation directory");
    plot->add_option("--dir", plot_dir, "Run directory or ablation suite directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    advent::RunConfig config;
    try {
        if (*train) config = train_flags.resolve();
        if (*ablate) {
            config = ablate_flags.resolve();
            (void)advent::parse_ablation_suite(suite_name);
        }
        if (*gen && !profile_path.empty()) (void)advent::BenchmarkProfile::from_file(profile_path);
    } catch (const advent::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*gen) {
            const auto profile = profile_path.empty() ? advent::BenchmarkProfile{}
                                                      : advent::BenchmarkProfile::from_file(profile_path);
            const auto m = advent::generate_benchmark(gen_root, profile);
            std::cout << "train_manifest=" << m.train.string() << "\n"
                      << "val_manifest=" << m.val.string() << "\n";
        } else if (*train) {
            const auto seed = train_seed.value_or(config.seeds.front());
            const auto dir = config.output_dir / ("seed-" + std::to_string(seed));
            const auto result = advent::run_training(config, seed, dir, nullptr, &std::cout);
            advent::render_plots(dir);
            std::cout << "run_dir=" << result.run_dir.string() << "\n";
        } else if (*eval) {
            const auto m = advent::evaluate_checkpoint(ckpt, eval_manifest);
            std::cout << advent::format_metrics(m) << "\n";
        } else if (*ablate) {
            const auto suite = advent::parse_ablation_suite(suite_name);
            const auto report = advent::run_ablation(suite, config, config.output_dir, &std::cout);
            std::cout << report.table();
        } else if (*plot) {
            for (const auto& p : advent::render_plots(plot_dir)) std::cout << p.string() << "\n";
        }
    } catch (const advent::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
