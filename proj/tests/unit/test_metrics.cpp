#include "doctest_torch.hpp"

#include <algorithm>
#include <numeric>

#include "advent/error.hpp"
#include "advent/metrics.hpp"
#include "support.hpp"

using namespace advent;

namespace {

// Per-pixel brute force: count TP/FP/FN per class straight from the label
// and prediction arrays, without a confusion matrix.
SegmentationMetrics brute_force(const std::vector<std::int64_t>& gt, const std::vector<std::int64_t>& pred,
                                std::int64_t classes) {
    SegmentationMetrics m;
    int present = 0;
    for (std::int64_t k = 0; k < classes; ++k) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            tp += gt[i] == k && pred[i] == k;
            fp += gt[i] != k && pred[i] == k;
            fn += gt[i] == k && pred[i] != k;
        }
        if (tp + fp + fn == 0) continue;
        ++present;
        const double t = static_cast<double>(tp), p = static_cast<double>(fp), n = static_cast<double>(fn);
        const double iou = t / (t + p + n);
        const double pre = t + p > 0 ? t / (t + p) : 0.0;
        const double rec = t + n > 0 ? t / (t + n) : 0.0;
        const double f1 = pre + rec > 0 ? 2.0 * pre * rec / (pre + rec) : 0.0;
        m.miou += iou;
        m.mpre += pre;
        m.mrec += rec;
        m.mf1 += f1;
    }
    m.miou /= present;
    m.mpre /= present;
    m.mrec /= present;
    m.mf1 /= present;
    return m;
}

torch::Tensor one_hot_scores(const std::vector<std::int64_t>& pred, std::int64_t classes, std::int64_t h,
                             std::int64_t w) {
    auto idx = torch::tensor(pred, torch::kInt64).reshape({h, w});
    return torch::one_hot(idx, classes).permute({2, 0, 1}).to(torch::kFloat32);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand-counted two-class example") {
    ConfusionMatrix cm(2);
    accumulate(cm, one_hot_scores({0, 1, 1, 1}, 2, 1, 4), torch::tensor({0, 0, 1, 1}, torch::kInt64).reshape({1, 4}));
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 0) == 0);
    CHECK(cm.at(1, 1) == 2);
    const auto m = compute_metrics(cm);
    CHECK(m.miou == doctest::Approx(0.5833333333333334).epsilon(1e-15));
    CHECK(m.mpre == doctest::Approx(0.8333333333333334).epsilon(1e-15));
    CHECK(m.mrec == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(m.mf1 == doctest::Approx(0.7333333333333333).epsilon(1e-15));
}

TEST_CASE("perfect and all-wrong predictions") {
    Rng rng(1);
    std::vector<std::int64_t> gt(30);
    for (auto& g : gt) g = static_cast<std::int64_t>(rng.below(5));
    ConfusionMatrix cm(5);
    accumulate(cm, one_hot_scores(gt, 5, 5, 6), torch::tensor(gt, torch::kInt64).reshape({5, 6}));
    for (int a = 0; a < 5; ++a) {
        for (int b = 0; b < 5; ++b) {
            if (a != b) CHECK(cm.at(a, b) == 0);
        }
    }
    const auto m = compute_metrics(cm);
    CHECK(m.miou == 1.0);
    CHECK(m.mpre == 1.0);
    CHECK(m.mrec == 1.0);
    CHECK(m.mf1 == 1.0);

    ConfusionMatrix wrong(2);
    wrong.add(0, 1, 3);
    wrong.add(1, 0, 4);
    CHECK(compute_metrics(wrong).miou == 0.0);
}

TEST_CASE("brute-force agreement on 100 random instances") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = 2 + static_cast<std::int64_t>(rng.below(6));
        const auto h = 1 + static_cast<std::int64_t>(rng.below(6));
        const auto w = 1 + static_cast<std::int64_t>(rng.below(6));
        std::vector<std::int64_t> gt(static_cast<std::size_t>(h * w)), pred(gt.size());
        for (std::size_t i = 0; i < gt.size(); ++i) {
            gt[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(c)));
            pred[i] = rng.below(3) == 0 ? gt[i] : static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(c)));
        }
        ConfusionMatrix cm(c);
        accumulate(cm, one_hot_scores(pred, c, h, w), torch::tensor(gt, torch::kInt64).reshape({h, w}));
        const auto got = compute_metrics(cm);
        const auto want = brute_force(gt, pred, c);
        CHECK(got.miou == want.miou);
        CHECK(got.mpre == want.mpre);
        CHECK(got.mrec == want.mrec);
        CHECK(got.mf1 == want.mf1);
        for (double v : {got.miou, got.mpre, got.mrec, got.mf1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("class relabeling leaves the means unchanged") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t c = 5;
        ConfusionMatrix cm(c);
        for (int i = 0; i < 40; ++i) cm.add(static_cast<std::int64_t>(rng.below(c)), static_cast<std::int64_t>(rng.below(c)));
        std::vector<std::int64_t> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        ConfusionMatrix moved(c);
        for (std::int64_t a = 0; a < c; ++a) {
            for (std::int64_t b = 0; b < c; ++b) moved.add(perm[a], perm[b], cm.at(a, b));
        }
        const auto x = compute_metrics(cm), y = compute_metrics(moved);
        CHECK(x.miou == doctest::Approx(y.miou).epsilon(1e-14));
        CHECK(x.mpre == doctest::Approx(y.mpre).epsilon(1e-14));
        CHECK(x.mrec == doctest::Approx(y.mrec).epsilon(1e-14));
        CHECK(x.mf1 == doctest::Approx(y.mf1).epsilon(1e-14));
    }
}

TEST_CASE("accumulation is additive and merge sums matrices") {
    Rng rng(4);
    auto scores = torch::randn({4, 6, 6});
    auto labels = torch::randint(0, 4, {6, 6}, torch::kInt64);
    ConfusionMatrix whole(4), halves(4), other(4);
    accumulate(whole, scores, labels);
    accumulate(halves, scores.narrow(1, 0, 3), labels.narrow(0, 0, 3));
    accumulate(other, scores.narrow(1, 3, 3), labels.narrow(0, 3, 3));
    halves.merge(other);
    CHECK(halves.counts() == whole.counts());
    CHECK(whole.total() == 36);
    ConfusionMatrix three(3);
    CHECK_THROWS_AS(whole.merge(three), ShapeError);
}

TEST_CASE("ties go to the lowest class") {
    auto scores = torch::zeros({3, 1, 2});
    scores[1][0][1] = 1.0;
    scores[2][0][1] = 1.0;
    auto a = argmax_lowest(scores);
    CHECK(a[0][0].item<std::int64_t>() == 0);
    CHECK(a[0][1].item<std::int64_t>() == 1);
}

TEST_CASE("errors") {
    ConfusionMatrix cm(3);
    CHECK_THROWS_AS(compute_metrics(cm), ContractError);
    CHECK_THROWS_AS(accumulate(cm, torch::zeros({3, 2, 2}), torch::zeros({2, 3}, torch::kInt64)), ShapeError);
    CHECK_THROWS_AS(accumulate(cm, torch::zeros({2, 2, 2}), torch::zeros({2, 2}, torch::kInt64)), ShapeError);
}

TEST_CASE("format is machine readable") {
    SegmentationMetrics m{0.5, 0.25, 1.0, 0.125};
    CHECK(format_metrics(m, "val_") == "val_mIoU=0.5 val_mPre=0.25 val_mRec=1 val_mF1=0.125");
}

}  // TEST_SUITE
