#pragma once

// Image-level Bhattacharyya regularizer and grouped InfoNCE regularizer, each
// with its closed-form gradient. Functions are dtype-generic: pass float64
// tensors when checking against finite differences.

#include <cstdint>
#include <vector>

#include <torch/types.h>

namespace advent {

inline constexpr double kDefaultEpsilon = 1e-8;

/// A distribution over (pixel, class) entries, stored flat.
///
/// Only the prediction side is clamped: clamped() floors entries at epsilon so
/// 1/sqrt(p) stays finite. Target distributions are used as given so that
/// zero-mass entries contribute exactly nothing.
struct ImageDistribution {
    torch::Tensor p;
    double epsilon = kDefaultEpsilon;

    torch::Tensor clamped() const;

    /// Per-pixel softmax over `class_dim`, then divided by the pixel count so
    /// the whole table sums to 1.
    static ImageDistribution from_logits(const torch::Tensor& logits, std::int64_t class_dim,
                                         double epsilon = kDefaultEpsilon);
    /// One-hot label table divided by the pixel count. Layout is [H*W, C] flattened
    /// (pixel-major) to match from_logits on an [H, W, C] tensor.
    static ImageDistribution from_labels(const torch::Tensor& labels, std::int64_t num_classes);
};

/// -ln(sum_x sqrt(P_X(x) P_Y(x))) with P_X clamped.
double bd_loss(const ImageDistribution& px, const ImageDistribution& py);

/// Entry x: -(1/2) (1 / BC) sqrt(P_Y(x)) / sqrt(P_X(x)), derivative of bd_loss
/// with respect to P_X. Entries with P_Y(x) = 0 are exactly zero.
torch::Tensor bd_grad(const ImageDistribution& px, const ImageDistribution& py);

/// Tensor-level forms. `px` and `py` are [..., E]; the reduction runs over the
/// last dimension so a batch of images can be evaluated at once. Autograd
/// flows through both.
torch::Tensor bd_distance(const torch::Tensor& px, const torch::Tensor& py,
                          double epsilon = kDefaultEpsilon);
torch::Tensor bd_gradient(const torch::Tensor& px, const torch::Tensor& py,
                          double epsilon = kDefaultEpsilon);

/// One anchor with its positive and negative embeddings.
struct ContrastSample {
    torch::Tensor anchor;     // [C]
    torch::Tensor positives;  // [M, C], M >= 1
    torch::Tensor negatives;  // [N, C], N may be 0
    double temperature = 0.1;
};

/// -log(A / B), A = sum_m exp(<x, u_m> / tau), B = A + sum_n exp(<x, v_n> / tau).
/// Throws ContractError when there are no positives or tau <= 0.
double infonce_loss(const ContrastSample& s);

/// grad_x B / B - grad_x A / A. Evaluated through softmax weights, which is the
/// same quantity without overflowing exp().
torch::Tensor infonce_grad(const ContrastSample& s);

struct ContrastConfig {
    double temperature = 0.1;
    std::int64_t max_anchors = 16;
    std::int64_t max_positives = 32;
    std::int64_t max_negatives = 32;
};

/// Pixel indices (flat, row-major over H*W) for one image's contrast sets.
struct ContrastIndices {
    std::vector<std::int64_t> anchors;
    std::vector<std::vector<std::int64_t>> positives;
    std::vector<std::vector<std::int64_t>> negatives;

    std::size_t size() const { return anchors.size(); }
    bool empty() const { return anchors.empty(); }
};

/// Draws up to max_anchors distinct anchors. Positives share the anchor's
/// class (anchor excluded), negatives come from every other class. Anchors
/// whose class has fewer than two pixels, or which would have no negatives,
/// are never drawn.
ContrastIndices draw_contrast_indices(const torch::Tensor& labels, const ContrastConfig& cfg,
                                      std::uint64_t seed);

/// Gathers per-pixel embeddings from `prediction` ([C, H, W] logits) at the
/// drawn indices.
std::vector<ContrastSample> sample_contrast_sets(const torch::Tensor& prediction,
                                                 const torch::Tensor& labels,
                                                 const ContrastConfig& cfg, std::uint64_t seed);

/// Padded tensor form of ContrastIndices used by the batched kernels.
struct PackedContrast {
    torch::Tensor anchors;        // [A] int64
    torch::Tensor positives;      // [A, Mp] int64, padded with 0
    torch::Tensor positive_mask;  // [A, Mp] bool
    torch::Tensor negatives;      // [A, Mn] int64
    torch::Tensor negative_mask;  // [A, Mn] bool

    std::int64_t size() const { return anchors.defined() ? anchors.size(0) : 0; }
};

PackedContrast pack(const ContrastIndices& idx);

/// Mean InfoNCE over anchors for one image. `embeddings` is [N_pixels, C].
/// Returns a zero scalar when there are no anchors. Differentiable.
torch::Tensor contrast_loss(const torch::Tensor& embeddings, const PackedContrast& sets,
                            double temperature);

/// Gradient of contrast_loss with respect to the anchor embeddings only, i.e.
/// infonce_grad / A at every anchor row and zero elsewhere. Shape [N_pixels, C].
/// Differentiable in `embeddings`.
torch::Tensor contrast_gradient(const torch::Tensor& embeddings, const PackedContrast& sets,
                                double temperature);

}  // namespace advent
