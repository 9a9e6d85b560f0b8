#pragma once

// K-layer unrolled descent on the two regularizers, the x0 + xK aggregation,
// and the training step that learns network weights together with the
// per-layer coefficients.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/optim/adam.h>

#include "advent/network.hpp"
#include "advent/regularizers.hpp"
#include "advent/sequence.hpp"

namespace advent {

/// Per-layer weights (alpha, gamma) and step sizes (eta), each a trainable
/// 1-D tensor of length K.
struct UnfoldParams {
    torch::Tensor alpha;
    torch::Tensor gamma;
    torch::Tensor eta;

    std::int64_t layers() const { return alpha.defined() ? alpha.numel() : 0; }

    /// Throws ConfigError when the three lengths disagree.
    void validate() const;

    std::vector<torch::Tensor> tensors() const;

    static UnfoldParams constant(std::int64_t layers, double alpha0, double gamma0, double eta0,
                                 torch::Dtype dtype = torch::kFloat32);
};

struct RegularizerConfig {
    ContrastConfig contrast;
    double epsilon = kDefaultEpsilon;
};

/// Contrast sets for each image of a batch (one entry per image).
std::vector<PackedContrast> draw_batch_contrast(const torch::Tensor& labels, const ContrastConfig& cfg,
                                                std::uint64_t seed);

/// BD descent direction on logits [B, C, H, W]: the probability-space
/// gradient of each image's table, placed at the matching logit positions.
torch::Tensor bd_direction(const torch::Tensor& logits, const torch::Tensor& labels, double epsilon);

/// InfoNCE descent direction on logits [B, C, H, W]; nonzero only at anchors.
torch::Tensor contrast_direction(const torch::Tensor& logits, const std::vector<PackedContrast>& sets,
                                 double temperature);

/// x(k) = x(k-1) - eta_k (alpha_k dBD(x(k-1)) + gamma_k dCon(x(k-1))), k = 1..K.
/// x0 is [B, C, H, W] logits, labels [B, H, W]. K = 0 returns x0 itself.
/// Throws DivergenceError naming the first layer that produced a non-finite value.
torch::Tensor unroll(const torch::Tensor& x0, const torch::Tensor& labels, const UnfoldParams& params,
                     const std::vector<PackedContrast>& sets, const RegularizerConfig& cfg);

/// Elementwise x0 + xK. Throws ShapeError on mismatched shapes.
torch::Tensor aggregate(const torch::Tensor& x0, const torch::Tensor& xk);

/// Mean pixelwise cross-entropy of logits [B, C, H, W] against labels [B, H, W].
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);

/// L_CE + alpha * L_BD + gamma * L_con with fixed weights. L_BD and L_con are
/// averaged over the batch; images without anchors contribute zero to L_con.
torch::Tensor vanilla_regularized_loss(const torch::Tensor& x0, const torch::Tensor& labels, double alpha,
                                       double gamma, const std::vector<PackedContrast>& sets,
                                       const RegularizerConfig& cfg);

enum class LossMode { CrossEntropy, Vanilla, Unfolded };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct LossConfig {
    LossMode mode = LossMode::Unfolded;
    std::int64_t layers = 5;
    // Initial values for the unrolled coefficients; the fixed weights in Vanilla mode.
    double alpha0 = 0.1;
    double gamma0 = 0.1;
    double eta0 = 0.01;
    RegularizerConfig reg;

    /// Number of unrolled layers actually built (0 outside Unfolded mode).
    std::int64_t unrolled_layers() const { return mode == LossMode::Unfolded ? layers : 0; }
    void validate() const;
};

struct OptimizerConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double eps = 1e-8;
};

/// Everything needed to continue training bit-for-bit.
struct TrainState {
    NetworkSpec spec;
    LossConfig loss;
    OptimizerConfig optim;
    SegmentationNet net{nullptr};
    UnfoldParams unfold;
    std::unique_ptr<torch::optim::Adam> optimizer;
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    /// Seeds libtorch, builds the network and coefficients, and the optimizer
    /// over both.
    static TrainState create(const NetworkSpec& spec, const LossConfig& loss, const OptimizerConfig& optim,
                             std::uint64_t seed);

    std::vector<torch::Tensor> trainable() const;
    void rebuild_optimizer();
};

struct StepResult {
    double loss = 0.0;
};

/// One optimizer update on a mini-batch. Gradients are left in place on the
/// parameters so callers can inspect them.
/// Throws DivergenceError (with a state snapshot in the message) on a
/// non-finite loss.
StepResult train_step(const WindowBatch& batch, TrainState& state);

/// The loss train_step would minimise, without touching the optimizer.
torch::Tensor training_loss(const WindowBatch& batch, TrainState& state, std::uint64_t sample_seed);

/// Logits used for evaluation. In Unfolded mode the unroll runs on the
/// network's own argmax labels, since ground truth is unavailable at test time.
torch::Tensor infer(const WindowBatch& batch, TrainState& state, std::uint64_t sample_seed);

}  // namespace advent
