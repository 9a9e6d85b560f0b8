#include "advent/metrics.hpp"

#include <cstdio>

#include <torch/torch.h>

#include "advent/error.hpp"

namespace advent {

ConfusionMatrix::ConfusionMatrix(std::int64_t num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
    if (num_classes < 1) throw ContractError("confusion matrix needs at least one class");
}

std::int64_t ConfusionMatrix::at(std::int64_t truth, std::int64_t predicted) const {
    return counts_.at(static_cast<std::size_t>(truth * classes_ + predicted));
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
}

void ConfusionMatrix::add(std::int64_t truth, std::int64_t predicted, std::int64_t n) {
    if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
        throw ShapeError("class index outside the confusion matrix");
    }
    counts_[static_cast<std::size_t>(truth * classes_ + predicted)] += n;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

torch::Tensor argmax_lowest(const torch::Tensor& scores) {
    auto s = scores.dim() == 3 ? scores.unsqueeze(0) : scores;
    if (s.dim() != 4) throw ShapeError("argmax_lowest expects [C, H, W] or [B, C, H, W]");
    s = s.detach().to(torch::kFloat64).contiguous();
    const auto b = s.size(0), c = s.size(1), hw = s.size(2) * s.size(3);
    auto out = torch::empty({b, s.size(2), s.size(3)}, torch::kInt64);
    const auto* src = s.data_ptr<double>();
    auto* dst = out.data_ptr<std::int64_t>();
    for (std::int64_t i = 0; i < b; ++i) {
        for (std::int64_t p = 0; p < hw; ++p) {
            std::int64_t best = 0;
            double best_v = src[(i * c) * hw + p];
            for (std::int64_t k = 1; k < c; ++k) {
                const double v = src[(i * c + k) * hw + p];
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            dst[i * hw + p] = best;
        }
    }
    return scores.dim() == 3 ? out.squeeze(0) : out;
}

void accumulate(ConfusionMatrix& cm, const torch::Tensor& scores, const torch::Tensor& labels) {
    const auto expected_label_dim = scores.dim() - 1;
    if (labels.dim() != expected_label_dim) throw ShapeError("accumulate: label rank does not match scores");
    if (scores.size(-3) != cm.num_classes()) throw ShapeError("accumulate: class axis does not match matrix");
    if (scores.size(-1) != labels.size(-1) || scores.size(-2) != labels.size(-2) ||
        (scores.dim() == 4 && scores.size(0) != labels.size(0))) {
        throw ShapeError("accumulate: scores and labels are not aligned");
    }
    auto pred = argmax_lowest(scores).reshape({-1}).contiguous();
    auto truth = labels.to(torch::kInt64).reshape({-1}).contiguous();
    const auto* p = pred.data_ptr<std::int64_t>();
    const auto* g = truth.data_ptr<std::int64_t>();
    for (std::int64_t i = 0; i < pred.numel(); ++i) cm.add(g[i], p[i]);
}

SegmentationMetrics compute_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ContractError("compute_metrics: no evaluated pixels");
    const auto c = cm.num_classes();
    SegmentationMetrics m;
    std::int64_t present = 0;
    for (std::int64_t k = 0; k < c; ++k) {
        std::int64_t row = 0, col = 0;
        for (std::int64_t j = 0; j < c; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        if (row == 0 && col == 0) continue;
        ++present;
        const auto tp = static_cast<double>(cm.at(k, k));
        const auto fn = static_cast<double>(row) - tp;
        const auto fp = static_cast<double>(col) - tp;
        auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
        const double iou = ratio(tp, tp + fp + fn);
        const double pre = ratio(tp, tp + fp);
        const double rec = ratio(tp, tp + fn);
        const double f1 = ratio(2.0 * pre * rec, pre + rec);
        m.miou += iou;
        m.mpre += pre;
        m.mrec += rec;
        m.mf1 += f1;
    }
    const auto n = static_cast<double>(present);
    m.miou /= n;
    m.mpre /= n;
    m.mrec /= n;
    m.mf1 /= n;
    return m;
}

std::string format_metrics(const SegmentationMetrics& m, const std::string& prefix) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%smIoU=%.17g %smPre=%.17g %smRec=%.17g %smF1=%.17g", prefix.c_str(), m.miou,
                  prefix.c_str(), m.mpre, prefix.c_str(), m.mrec, prefix.c_str(), m.mf1);
    return buf;
}

}  // namespace advent
