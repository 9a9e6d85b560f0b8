#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/types.h>

namespace advent {

/// One drive: co-registered frames and their per-frame class-index maps.
///
/// frames is a float32 tensor shaped [L, C_img, H, W] with values in [0, 1];
/// labels is an int64 tensor shaped [L, H, W] with values in [0, num_classes).
struct FrameSequence {
    std::string sequence_id;
    torch::Tensor frames;
    torch::Tensor labels;
    std::int64_t num_classes = 0;

    std::int64_t length() const { return frames.defined() ? frames.size(0) : 0; }
    std::int64_t channels() const { return frames.size(1); }
    std::int64_t height() const { return frames.size(2); }
    std::int64_t width() const { return frames.size(3); }

    /// Throws IngestionError describing the first violated invariant.
    void validate() const;
};

/// A training unit anchored at frame t: the instant frame, the mean of the
/// previous `depth` frames, and their difference.
struct LsmWindow {
    std::string sequence_id;
    std::int64_t anchor_index = 0;
    std::int64_t depth = 1;
    torch::Tensor insu;   // [C_img, H, W]
    torch::Tensor intu;   // [C_img, H, W]
    torch::Tensor du;     // [C_img, H, W]
    torch::Tensor label;  // [H, W] int64
};

/// Returns L - depth windows anchored at depth, depth+1, ..., L-1.
/// Throws ConfigError for depth < 1 and ContractError when L <= depth.
std::vector<LsmWindow> build_windows(const FrameSequence& seq, std::int64_t depth);

/// Windows of several sequences, concatenated in sequence-then-anchor order.
std::vector<LsmWindow> build_windows(const std::vector<FrameSequence>& seqs, std::int64_t depth);

struct ShufflePlan {
    std::uint64_t base_seed = 0;
    std::int64_t epoch = 0;
    std::vector<std::int64_t> order;
    std::int64_t batch_size = 8;
};

/// Seeded global permutation of n_windows indices; a pure function of
/// (base_seed, epoch).
ShufflePlan gsm_shuffle(std::int64_t n_windows, std::uint64_t base_seed, std::int64_t epoch,
                        std::int64_t batch_size = 8);

/// Identity order over n_windows. This is the unshuffled baseline, which walks
/// windows in sequence-then-anchor order.
ShufflePlan sequential_plan(std::int64_t n_windows, std::int64_t batch_size = 8);

struct MiniBatch {
    std::vector<std::int64_t> indices;
};

/// Splits plan.order into ceil(N / B) consecutive batches; the last may be short.
/// Throws ContractError when the plan does not cover exactly `n_windows`.
std::vector<MiniBatch> make_batches(const ShufflePlan& plan, std::int64_t n_windows);

inline std::vector<MiniBatch> make_batches(const ShufflePlan& plan,
                                           const std::vector<LsmWindow>& windows) {
    return make_batches(plan, static_cast<std::int64_t>(windows.size()));
}

/// Batched tensors for a mini-batch: insu/intu/du are [B, C_img, H, W],
/// labels [B, H, W].
struct WindowBatch {
    torch::Tensor insu;
    torch::Tensor intu;
    torch::Tensor du;
    torch::Tensor labels;

    std::int64_t size() const { return labels.size(0); }
};

WindowBatch stack_windows(const std::vector<LsmWindow>& windows,
                          const std::vector<std::int64_t>& indices);

/// Reads the sequences listed in `manifest` (one path per line, relative to
/// root; blank lines and '#' comments ignored). Each sequence directory holds
/// frames/NNNN.png and labels/NNNN.png. Throws IngestionError naming the
/// offending sequence or frame.
std::vector<FrameSequence> ingest_dataset(const std::filesystem::path& root,
                                          const std::filesystem::path& manifest,
                                          std::int64_t num_classes);

/// Writes one sequence in the on-disk layout read by ingest_dataset. Frames are
/// quantized to 8 bits.
void write_sequence(const FrameSequence& seq, const std::filesystem::path& dir);

/// Parses a manifest into relative sequence paths.
std::vector<std::string> read_manifest(const std::filesystem::path& manifest);

}  // namespace advent
