#include "advent/network.hpp"

#include <numeric>

#include <torch/torch.h>

#include "advent/error.hpp"

namespace F = torch::nn::functional;

namespace advent {

std::string to_string(FusionPolicy p) { return p == FusionPolicy::CE ? "CE" : "FI"; }

FusionPolicy parse_fusion_policy(const std::string& s) {
    if (s == "CE" || s == "ce") return FusionPolicy::CE;
    if (s == "FI" || s == "fi") return FusionPolicy::FI;
    throw ConfigError("unknown fusion policy '" + s + "' (expected CE or FI)");
}

void NetworkSpec::validate() const {
    if (!policy) throw ConfigError("network policy is unset (expected CE or FI)");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (backbone_width < 1) throw ConfigError("backbone_width must be >= 1");
    if (backbone_depth < 1 || backbone_depth > 6) throw ConfigError("backbone_depth must lie in [1, 6]");
    if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
    if (backbone != "conv") throw ConfigError("unknown backbone '" + backbone + "'");
}

void NetworkSpec::validate_input(std::int64_t height, std::int64_t width) const {
    const auto s = total_stride();
    if (height % s != 0 || width % s != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by the encoder stride " + std::to_string(s));
    }
}

ConvEncoder::ConvEncoder(std::int64_t in_channels, std::int64_t width, std::int64_t depth)
    : width_(width), depth_(depth) {
    std::int64_t c = in_channels;
    // GroupNorm keeps every sample independent of the rest of its batch.
    const auto groups = std::gcd(width, std::int64_t{4});
    for (std::int64_t i = 0; i < depth; ++i) {
        torch::nn::Sequential stage(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(c, width, 3).stride(2).padding(1)),
            torch::nn::GroupNorm(groups, width),
            torch::nn::ReLU(),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1)),
            torch::nn::GroupNorm(groups, width),
            torch::nn::ReLU());
        stages_->push_back(stage);
        c = width;
    }
    register_module("stages", stages_);
}

torch::Tensor ConvEncoder::forward(torch::Tensor x) {
    for (auto& stage : *stages_) x = stage->as<torch::nn::Sequential>()->forward(x);
    return x;
}

std::shared_ptr<Backbone> make_backbone(const NetworkSpec& spec, std::int64_t in_channels) {
    if (spec.backbone == "conv") {
        return std::make_shared<ConvEncoder>(in_channels, spec.backbone_width, spec.backbone_depth);
    }
    throw ConfigError("unknown backbone '" + spec.backbone + "'");
}

SegmentationHeadImpl::SegmentationHeadImpl(std::int64_t in_channels, std::int64_t num_classes) {
    refine_ = register_module(
        "refine", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, in_channels, 3).padding(1)));
    classifier_ = register_module(
        "classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, num_classes, 1)));
}

torch::Tensor SegmentationHeadImpl::forward(torch::Tensor features, std::int64_t height,
                                            std::int64_t width) {
    auto x = torch::relu(refine_->forward(features));
    x = classifier_->forward(x);
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

SegmentationNetImpl::SegmentationNetImpl(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto w = spec_.backbone_width;
    if (*spec_.policy == FusionPolicy::CE) {
        shared_ = register_module("backbone", make_backbone(spec_, 3 * spec_.input_channels));
    } else {
        insu_ = register_module("backbone_insu", make_backbone(spec_, spec_.input_channels));
        intu_ = register_module("backbone_intu", make_backbone(spec_, spec_.input_channels));
        du_ = register_module("backbone_du", make_backbone(spec_, spec_.input_channels));
        mixer_ = register_module("mixer", torch::nn::Conv2d(torch::nn::Conv2dOptions(3 * w, w, 1)));
    }
    head_ = register_module("head", SegmentationHead(w, spec_.num_classes));
}

void SegmentationNetImpl::check_batch(const WindowBatch& batch) const {
    for (const auto* t : {&batch.insu, &batch.intu, &batch.du}) {
        if (!t->defined() || t->dim() != 4 || t->size(1) != spec_.input_channels) {
            throw ShapeError("window unit must be [B, " + std::to_string(spec_.input_channels) +
                             ", H, W]");
        }
        if (!t->sizes().equals(batch.insu.sizes())) throw ShapeError("window units differ in shape");
    }
    spec_.validate_input(batch.insu.size(2), batch.insu.size(3));
}

torch::Tensor SegmentationNetImpl::forward_ce(const WindowBatch& batch) {
    if (!shared_) throw ConfigError("forward_ce called on an FI network");
    check_batch(batch);
    auto x = torch::cat({batch.insu, batch.intu, batch.du}, 1);
    return head_->forward(shared_->forward(x), x.size(2), x.size(3));
}

SegmentationNetImpl::BranchFeatures SegmentationNetImpl::branch_features(const WindowBatch& batch) {
    if (!mixer_) throw ConfigError("forward_fi called on a CE network");
    check_batch(batch);
    return {insu_->forward(batch.insu), intu_->forward(batch.intu), du_->forward(batch.du)};
}

torch::Tensor SegmentationNetImpl::fuse_and_decode(const BranchFeatures& f, std::int64_t height,
                                                   std::int64_t width) {
    auto mixed = torch::relu(mixer_->forward(torch::cat({f.insu, f.intu, f.du}, 1)));
    return head_->forward(mixed, height, width);
}

torch::Tensor SegmentationNetImpl::forward_fi(const WindowBatch& batch) {
    auto f = branch_features(batch);
    return fuse_and_decode(f, batch.insu.size(2), batch.insu.size(3));
}

torch::Tensor SegmentationNetImpl::forward(const WindowBatch& batch) {
    return *spec_.policy == FusionPolicy::CE ? forward_ce(batch) : forward_fi(batch);
}

std::int64_t SegmentationNetImpl::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

torch::Tensor predict(SegmentationNet& net, const WindowBatch& batch, const NetworkSpec& spec) {
    if (!spec.policy) throw ConfigError("network policy is unset (expected CE or FI)");
    if (*spec.policy != *net->spec().policy) {
        throw ConfigError("requested policy " + to_string(*spec.policy) + " but network was built for " +
                          to_string(*net->spec().policy));
    }
    return *spec.policy == FusionPolicy::CE ? net->forward_ce(batch) : net->forward_fi(batch);
}

WindowBatch single_batch(const LsmWindow& w) {
    return {w.insu.unsqueeze(0), w.intu.unsqueeze(0), w.du.unsqueeze(0), w.label.unsqueeze(0)};
}

torch::Tensor forward_ce(SegmentationNet& net, const LsmWindow& window) {
    return net->forward_ce(single_batch(window)).squeeze(0);
}

torch::Tensor forward_fi(SegmentationNet& net, const LsmWindow& window) {
    return net->forward_fi(single_batch(window)).squeeze(0);
}

torch::Tensor predict(SegmentationNet& net, const LsmWindow& window, const NetworkSpec& spec) {
    return predict(net, single_batch(window), spec).squeeze(0);
}

}  // namespace advent
