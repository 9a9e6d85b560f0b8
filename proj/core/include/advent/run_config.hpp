#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advent/kv.hpp"
#include "advent/network.hpp"
#include "advent/unfold.hpp"

namespace advent {

/// Resolved settings for one training run or ablation arm.
///
/// Serialized as plain "key = value" text; see RunConfig::to_record for the
/// full key list. Sequence paths inside a manifest are relative to the
/// manifest's own directory.
struct RunConfig {
    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;  // optional
    std::int64_t num_classes = 8;
    std::int64_t depth = 3;
    FusionPolicy policy = FusionPolicy::FI;
    bool gsm = true;
    LossConfig loss;
    OptimizerConfig optim;
    std::int64_t batch_size = 8;
    std::int64_t epochs = 200;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::int64_t backbone_width = 16;
    std::int64_t backbone_depth = 2;
    std::filesystem::path output_dir = "runs";

    static constexpr std::int64_t kFastEpochs = 20;

    NetworkSpec network_spec() const;

    /// Rejects the first invalid field with a message naming it.
    void validate() const;

    kv::Record to_record() const;
    /// Unknown keys are rejected. Missing keys keep their defaults.
    static RunConfig from_record(const kv::Record& r);
    static RunConfig from_file(const std::filesystem::path& path);

    /// Applies `overrides` on top of this config (same keys as the file format).
    RunConfig with(const kv::Record& overrides) const;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::string format_seed_list(const std::vector<std::uint64_t>& seeds);

}  // namespace advent
