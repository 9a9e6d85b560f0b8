#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "advent/unfold.hpp"

namespace advent {

/// Archive layout (little-endian):
///
///   8 bytes   magic "ADVENTCK"
///   4 bytes   format version
///   8 bytes   manifest length M
///   M bytes   JSON manifest: network spec, loss and optimizer settings, seed,
///             epoch/step counters, free-form metadata, and a tensor table
///             {name, dtype, shape, offset, bytes}
///   ...       raw tensor payload, offsets relative to the payload start
///
/// Tensors are stored under "net/<parameter or buffer>", "unfold/{alpha,gamma,eta}"
/// and "adam/<param>/{exp_avg,exp_avg_sq}", so a reload reproduces the next
/// optimizer update bit-for-bit.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using CheckpointMetadata = std::map<std::string, std::string>;

/// Throws IoError when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const CheckpointMetadata& metadata = {});

/// Throws IoError for unreadable files and VersionError for foreign or
/// incompatible archives.
TrainState load_checkpoint(const std::filesystem::path& path, CheckpointMetadata* metadata = nullptr);

}  // namespace advent
