#include "advent/trainer.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <torch/torch.h>

#include "advent/checkpoint.hpp"
#include "advent/error.hpp"
#include "advent/random.hpp"

namespace fs = std::filesystem;

namespace advent {

namespace {

constexpr std::uint64_t kEvalTag = 0xe7a1'5eedULL;

SegmentationMetrics metrics_from(const kv::Record& r, const std::string& prefix) {
    return {kv::get_double(r, prefix + "mIoU", 0.0), kv::get_double(r, prefix + "mPre", 0.0),
            kv::get_double(r, prefix + "mRec", 0.0), kv::get_double(r, prefix + "mF1", 0.0)};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<LsmWindow> windows_from(const fs::path& manifest, const RunConfig& c) {
    auto seqs = ingest_dataset(manifest.parent_path(), manifest, c.num_classes);
    auto spec = c.network_spec();
    for (const auto& s : seqs) {
        spec.validate_input(s.height(), s.width());
        if (s.channels() != spec.input_channels) {
            throw ConfigError("sequence '" + s.sequence_id + "' has " + std::to_string(s.channels()) +
                              " channels, expected " + std::to_string(spec.input_channels));
        }
    }
    return build_windows(seqs, c.depth);
}

}  // namespace

std::string EpochRecord::to_line() const {
    std::string s = "epoch=" + std::to_string(epoch) + " loss=" + fmt(loss) + " " + format_metrics(train, "train_");
    if (val) s += " " + format_metrics(*val, "val_");
    return s;
}

EpochRecord EpochRecord::from_line(const std::string& line) {
    const auto r = kv::parse_line(line);
    if (!r.count("epoch")) throw ContractError("metrics line without an epoch: " + line);
    EpochRecord e;
    e.epoch = kv::get_int(r, "epoch", 0);
    e.loss = kv::get_double(r, "loss", 0.0);
    e.train = metrics_from(r, "train_");
    if (r.count("val_mIoU")) e.val = metrics_from(r, "val_");
    return e;
}

std::vector<EpochRecord> read_metrics_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<EpochRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(EpochRecord::from_line(line));
    }
    return out;
}

Dataset load_dataset(const RunConfig& c) {
    Dataset d;
    d.train = windows_from(c.train_manifest, c);
    if (!c.val_manifest.empty()) d.val = windows_from(c.val_manifest, c);
    return d;
}

SegmentationMetrics evaluate(TrainState& state, const std::vector<LsmWindow>& windows, std::int64_t batch_size) {
    ConfusionMatrix cm(state.spec.num_classes);
    const auto n = static_cast<std::int64_t>(windows.size());
    for (std::int64_t start = 0; start < n; start += batch_size) {
        std::vector<std::int64_t> idx;
        for (auto i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
        auto batch = stack_windows(windows, idx);
        auto logits = infer(batch, state, derive_seed(state.seed ^ kEvalTag, static_cast<std::uint64_t>(start)));
        accumulate(cm, logits, batch.labels);
    }
    return compute_metrics(cm);
}

RunResult run_training(const RunConfig& config, std::uint64_t seed, const fs::path& run_dir, const Dataset* data,
                       std::ostream* log) {
    config.validate();
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + run_dir.string() + ": " + ec.message());

    Dataset owned;
    if (!data) {
        owned = load_dataset(config);
        data = &owned;
    }
    if (data->train.empty()) throw ContractError("no training windows");

    auto resolved = config.to_record();
    resolved["seeds"] = std::to_string(seed);
    // Absolute paths so the file can be re-used from any directory.
    resolved["train_manifest"] = fs::absolute(config.train_manifest).string();
    if (!config.val_manifest.empty()) resolved["val_manifest"] = fs::absolute(config.val_manifest).string();
    resolved["output_dir"] = fs::absolute(config.output_dir).string();
    kv::write_file(run_dir / "config.kv", resolved, "resolved run configuration");
    kv::write_file(run_dir / "run.info",
                   {{"seed", std::to_string(seed)},
                    {"advent_version", ADVENT_VERSION},
                    {"torch_version", TORCH_VERSION},
                    {"train_windows", std::to_string(data->train.size())},
                    {"val_windows", std::to_string(data->val.size())},
                    {"deterministic", "true"},
                    {"threads", "1"}},
                   "re-run with: advent train --config config.kv");

    torch::set_num_threads(1);
    auto state = TrainState::create(config.network_spec(), config.loss, config.optim, seed);

    std::ofstream metrics(run_dir / "metrics.log");
    std::ofstream batches(run_dir / "batches.log");
    if (!metrics || !batches) throw IoError("cannot open logs in " + run_dir.string());

    const auto n = static_cast<std::int64_t>(data->train.size());
    RunResult result;
    result.run_dir = run_dir;
    for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        state.epoch = epoch;
        const auto plan = config.gsm ? gsm_shuffle(n, seed, epoch, config.batch_size)
                                     : sequential_plan(n, config.batch_size);
        double loss_sum = 0.0;
        std::int64_t batch_no = 0;
        for (const auto& mb : make_batches(plan, n)) {
            batches << "epoch=" << epoch << " batch=" << batch_no++ << " windows=";
            for (std::size_t i = 0; i < mb.indices.size(); ++i) batches << (i ? "," : "") << mb.indices[i];
            batches << "\n";
            try {
                loss_sum += train_step(stack_windows(data->train, mb.indices), state).loss;
            } catch (const DivergenceError& e) {
                metrics.flush();
                throw DivergenceError(std::string(e.what()) + " [run directory: " + run_dir.string() + "]",
                                      e.layer());
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(batch_no);
        rec.train = evaluate(state, data->train, config.batch_size);
        if (!data->val.empty()) rec.val = evaluate(state, data->val, config.batch_size);
        metrics << rec.to_line() << "\n";
        metrics.flush();
        if (log) *log << "[seed " << seed << "] " << rec.to_line() << "\n" << std::flush;
        result.history.push_back(rec);
    }

    CheckpointMetadata meta = resolved;
    save_checkpoint(run_dir / "checkpoint.ckpt", state, meta);

    const auto& last = result.history.back();
    kv::Record summary{{"epochs", std::to_string(config.epochs)}, {"final_loss", fmt(last.loss)},
                       {"train_mIoU", fmt(last.train.miou)}, {"train_mF1", fmt(last.train.mf1)}};
    if (last.val) {
        summary["val_mIoU"] = fmt(last.val->miou);
        summary["val_mPre"] = fmt(last.val->mpre);
        summary["val_mRec"] = fmt(last.val->mrec);
        summary["val_mF1"] = fmt(last.val->mf1);
    }
    if (state.unfold.layers() > 0) {
        std::ostringstream a, g, e;
        for (std::int64_t k = 0; k < state.unfold.layers(); ++k) {
            a << (k ? "," : "") << state.unfold.alpha[k].item<double>();
            g << (k ? "," : "") << state.unfold.gamma[k].item<double>();
            e << (k ? "," : "") << state.unfold.eta[k].item<double>();
        }
        summary["alpha"] = a.str();
        summary["gamma"] = g.str();
        summary["eta"] = e.str();
    }
    kv::write_file(run_dir / "summary.kv", summary, "final epoch summary");
    return result;
}

SegmentationMetrics evaluate_checkpoint(const fs::path& checkpoint, const fs::path& manifest) {
    if (!fs::exists(checkpoint)) throw IoError("checkpoint " + checkpoint.string() + " does not exist");
    CheckpointMetadata meta;
    auto state = load_checkpoint(checkpoint, &meta);
    RunConfig c;
    try {
        c = RunConfig::from_record(meta);
    } catch (const ConfigError& e) {
        throw VersionError(checkpoint.string() + ": run metadata unreadable: " + e.what());
    }
    const auto& ns = state.spec;
    if (c.num_classes != ns.num_classes || c.backbone_width != ns.backbone_width ||
        c.backbone_depth != ns.backbone_depth || c.policy != *ns.policy) {
        throw VersionError(checkpoint.string() + ": run metadata disagrees with the stored network spec");
    }
    torch::set_num_threads(1);
    auto windows = windows_from(manifest, c);
    return evaluate(state, windows, c.batch_size);
}

}  // namespace advent
