#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "advent/metrics.hpp"
#include "advent/run_config.hpp"
#include "advent/sequence.hpp"
#include "advent/unfold.hpp"

namespace advent {

/// One line of metrics.log.
struct EpochRecord {
    std::int64_t epoch = 0;
    double loss = 0.0;
    SegmentationMetrics train;
    std::optional<SegmentationMetrics> val;

    /// "epoch=3 loss=... train_mIoU=... ... val_mF1=..."
    std::string to_line() const;
    static EpochRecord from_line(const std::string& line);
};

std::vector<EpochRecord> read_metrics_log(const std::filesystem::path& path);

struct Dataset {
    std::vector<LsmWindow> train;
    std::vector<LsmWindow> val;
};

/// Ingests the manifests named by the config and builds windows at its depth.
Dataset load_dataset(const RunConfig& config);

struct RunResult {
    std::filesystem::path run_dir;
    std::vector<EpochRecord> history;
};

/// Ingest, window, shuffle (or not), train, evaluate each epoch. Writes into
/// run_dir: config.kv, run.info, metrics.log, batches.log, checkpoint.ckpt and
/// summary.kv. Pass `data` to reuse windows across runs.
RunResult run_training(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& run_dir,
                       const Dataset* data = nullptr, std::ostream* log = nullptr);

/// Confusion-matrix metrics of `state` over `windows` in fixed batches.
SegmentationMetrics evaluate(TrainState& state, const std::vector<LsmWindow>& windows, std::int64_t batch_size);

/// Loads a checkpoint written by run_training and evaluates every window of
/// `manifest`. Throws IoError when the checkpoint is missing and VersionError
/// when it is incompatible.
SegmentationMetrics evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& manifest);

}  // namespace advent
