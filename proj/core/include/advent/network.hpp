#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <torch/nn/module.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>

#include "advent/sequence.hpp"

namespace advent {

/// How the three window units reach the head.
///   CE: concatenate insu|intu|du on channels, one shared backbone.
///   FI: one backbone per unit, features concatenated and mixed by a 1x1 conv.
enum class FusionPolicy { CE, FI };

std::string to_string(FusionPolicy p);
FusionPolicy parse_fusion_policy(const std::string& s);

struct NetworkSpec {
    std::optional<FusionPolicy> policy = FusionPolicy::FI;
    std::int64_t num_classes = 8;
    std::int64_t backbone_width = 16;
    std::int64_t backbone_depth = 2;
    std::int64_t input_channels = 3;  // per unit
    std::string backbone = "conv";

    /// Product of the encoder strides; input H and W must be multiples of it.
    std::int64_t total_stride() const { return std::int64_t{1} << backbone_depth; }

    /// Throws ConfigError on an unset policy or out-of-range sizes.
    void validate() const;
    /// Throws ConfigError when H or W is not a multiple of total_stride().
    void validate_input(std::int64_t height, std::int64_t width) const;
};

/// Encoder interface. Implementations downsample by stride() and emit
/// out_channels() feature maps.
class Backbone : public torch::nn::Module {
public:
    virtual torch::Tensor forward(torch::Tensor x) = 0;
    virtual std::int64_t out_channels() const = 0;
    virtual std::int64_t stride() const = 0;
};

/// Strided conv encoder: `depth` stages of (3x3 stride-2 conv, GroupNorm, ReLU,
/// 3x3 conv, GroupNorm, ReLU).
class ConvEncoder : public Backbone {
public:
    ConvEncoder(std::int64_t in_channels, std::int64_t width, std::int64_t depth);

    torch::Tensor forward(torch::Tensor x) override;
    std::int64_t out_channels() const override { return width_; }
    std::int64_t stride() const override { return std::int64_t{1} << depth_; }

private:
    std::int64_t width_;
    std::int64_t depth_;
    torch::nn::ModuleList stages_;
};

/// Builds the backbone named by spec.backbone. Only "conv" ships by default.
std::shared_ptr<Backbone> make_backbone(const NetworkSpec& spec, std::int64_t in_channels);

/// 3x3 conv + ReLU, 1x1 classifier, bilinear upsampling back to input size.
class SegmentationHeadImpl : public torch::nn::Module {
public:
    SegmentationHeadImpl(std::int64_t in_channels, std::int64_t num_classes);

    torch::Tensor forward(torch::Tensor features, std::int64_t height, std::int64_t width);

    torch::nn::Conv2d& classifier() { return classifier_; }

private:
    torch::nn::Conv2d refine_{nullptr};
    torch::nn::Conv2d classifier_{nullptr};
};
TORCH_MODULE(SegmentationHead);

class SegmentationNetImpl : public torch::nn::Module {
public:
    explicit SegmentationNetImpl(NetworkSpec spec);

    /// Logits [B, C, H, W] for the configured policy.
    torch::Tensor forward(const WindowBatch& batch);

    torch::Tensor forward_ce(const WindowBatch& batch);
    torch::Tensor forward_fi(const WindowBatch& batch);

    struct BranchFeatures {
        torch::Tensor insu;
        torch::Tensor intu;
        torch::Tensor du;
    };
    /// FI internals, split out so a branch can be inspected or zeroed.
    BranchFeatures branch_features(const WindowBatch& batch);
    torch::Tensor fuse_and_decode(const BranchFeatures& f, std::int64_t height, std::int64_t width);

    const NetworkSpec& spec() const { return spec_; }
    SegmentationHead& head() { return head_; }
    std::int64_t parameter_count() const;

private:
    void check_batch(const WindowBatch& batch) const;

    NetworkSpec spec_;
    std::shared_ptr<Backbone> shared_;                      // CE
    std::shared_ptr<Backbone> insu_, intu_, du_;            // FI
    torch::nn::Conv2d mixer_{nullptr};                      // FI
    SegmentationHead head_{nullptr};
};
TORCH_MODULE(SegmentationNet);

/// Dispatches on spec.policy. Throws ConfigError when the policy is unset or
/// does not match the network's architecture.
torch::Tensor predict(SegmentationNet& net, const WindowBatch& batch, const NetworkSpec& spec);

/// Single-window conveniences returning [C, H, W] logits.
torch::Tensor forward_ce(SegmentationNet& net, const LsmWindow& window);
torch::Tensor forward_fi(SegmentationNet& net, const LsmWindow& window);
torch::Tensor predict(SegmentationNet& net, const LsmWindow& window, const NetworkSpec& spec);

WindowBatch single_batch(const LsmWindow& window);

}  // namespace advent
