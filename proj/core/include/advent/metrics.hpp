#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/types.h>

namespace advent {

/// counts[g * C + p] = pixels with ground truth g predicted as p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::int64_t num_classes);

    std::int64_t num_classes() const { return classes_; }
    std::int64_t at(std::int64_t truth, std::int64_t predicted) const;
    std::int64_t total() const;
    const std::vector<std::int64_t>& counts() const { return counts_; }

    void add(std::int64_t truth, std::int64_t predicted, std::int64_t n = 1);

    /// Elementwise sum. Throws ShapeError when class counts differ.
    ConfusionMatrix& merge(const ConfusionMatrix& other);

private:
    std::int64_t classes_;
    std::vector<std::int64_t> counts_;
};

/// Per-pixel argmax over the class axis with ties going to the lowest index.
/// scores is [C, H, W] or [B, C, H, W]; result drops the class axis.
torch::Tensor argmax_lowest(const torch::Tensor& scores);

/// Adds every pixel of `scores` (logits or probabilities, [C, H, W] or
/// [B, C, H, W]) against `labels` ([H, W] or [B, H, W]).
void accumulate(ConfusionMatrix& cm, const torch::Tensor& scores, const torch::Tensor& labels);

struct SegmentationMetrics {
    double miou = 0.0;
    double mpre = 0.0;
    double mrec = 0.0;
    double mf1 = 0.0;
};

/// Macro averages over classes present in ground truth or prediction; a zero
/// denominator scores 0. Throws ContractError on an empty matrix.
SegmentationMetrics compute_metrics(const ConfusionMatrix& cm);

/// "mIoU=... mPre=... mRec=... mF1=..." with round-trip precision.
std::string format_metrics(const SegmentationMetrics& m, const std::string& prefix = "");

}  // namespace advent
