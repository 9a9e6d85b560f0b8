#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>

#include "advent/checkpoint.hpp"
#include "advent/error.hpp"
#include "advent/synthetic.hpp"
#include "advent/unfold.hpp"
#include "support.hpp"

using namespace advent;

namespace {

UnfoldParams fixed(std::int64_t k, double a, double g, double e) {
    return UnfoldParams::constant(k, a, g, e, torch::kFloat64);
}

RegularizerConfig small_reg(double tau = 0.5) {
    RegularizerConfig cfg;
    cfg.contrast.temperature = tau;
    cfg.contrast.max_anchors = 4;
    return cfg;
}

WindowBatch synthetic_batch(std::int64_t n, std::uint64_t seed, std::int64_t size = 16) {
    SceneConfig sc;
    sc.height = size;
    sc.width = size;
    sc.length = 5;
    sc.seed = seed;
    sc.weather.fog = 0.4;
    auto w = build_windows(generate_sequence(sc), 3);
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < n; ++i) idx.push_back(i % static_cast<std::int64_t>(w.size()));
    return stack_windows(w, idx);
}

NetworkSpec small_spec(FusionPolicy p) {
    NetworkSpec s;
    s.policy = p;
    s.backbone_width = 8;
    return s;
}

void check_same_parameters(const TrainState& a, const TrainState& b) {
    auto pa = a.trainable(), pb = b.trainable();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
}

}  // namespace

TEST_SUITE("unfold") {

TEST_CASE("identity family leaves x0 unchanged") {
    Rng rng(1);
    auto x0 = testing::random_normal(rng, {2, 3, 4, 4});
    auto labels = torch::randint(0, 3, {2, 4, 4}, torch::kInt64);
    auto cfg = small_reg();
    auto sets = draw_batch_contrast(labels, cfg.contrast, 3);
    CHECK(torch::equal(unroll(x0, labels, fixed(4, 0.5, 0.5, 0.0), sets, cfg), x0));
    CHECK(torch::equal(unroll(x0, labels, fixed(4, 0.0, 0.0, 0.3), sets, cfg), x0));
    CHECK(torch::equal(unroll(x0, labels, UnfoldParams{}, sets, cfg), x0));
    CHECK_FALSE(torch::equal(unroll(x0, labels, fixed(1, 0.5, 0.5, 0.3), sets, cfg), x0));
}

TEST_CASE("one layer matches a hand-stepped update") {
    // Oracle: an independent scalar evaluation of the BD and InfoNCE
    // directions on this instance followed by one descent step.
    auto x0 = torch::tensor({0.3, -0.2, 0.9, 0.1, -0.4, 0.5, 0.2, 0.7}, torch::kFloat64).reshape({1, 2, 2, 2});
    auto labels = torch::tensor({0, 0, 1, 1}, torch::kInt64).reshape({1, 2, 2});
    auto cfg = small_reg(0.5);
    auto sets = draw_batch_contrast(labels, cfg.contrast, 17);
    REQUIRE(sets[0].size() == 4);
    auto x1 = unroll(x0, labels, fixed(1, 0.7, 0.3, 0.05), sets, cfg).reshape({-1});
    const double expect[8] = {0.3258393373509527,   -0.1564530513066381, 0.8999291770702591,
                              0.10453081844539477,  -0.39910625451764864, 0.49414551605023854,
                              0.2472450613132971,   0.7310219171511763};
    for (int i = 0; i < 8; ++i) CHECK(std::abs(x1[i].item<double>() - expect[i]) <= 1e-9);
}

TEST_CASE("gradient with respect to the first step size matches finite differences") {
    Rng rng(2);
    auto x0 = testing::random_normal(rng, {1, 2, 2, 2});
    auto labels = torch::tensor({0, 1, 1, 0}, torch::kInt64).reshape({1, 2, 2});
    auto cfg = small_reg(0.5);
    auto sets = draw_batch_contrast(labels, cfg.contrast, 3);
    auto loss_at = [&](double eta) {
        auto p = fixed(1, 0.8, 0.4, eta);
        return cross_entropy(aggregate(x0, unroll(x0, labels, p, sets, cfg)), labels);
    };
    auto p = fixed(1, 0.8, 0.4, 0.2);
    cross_entropy(aggregate(x0, unroll(x0, labels, p, sets, cfg)), labels).backward();
    const double analytic = p.eta.grad()[0].item<double>();
    const double h = 1e-6;
    const double fd = (loss_at(0.2 + h).item<double>() - loss_at(0.2 - h).item<double>()) / (2 * h);
    CHECK(std::abs(analytic) > 0.0);
    CHECK(testing::close_rel(analytic, fd, 1e-3));
}

TEST_CASE("divergence names the layer") {
    auto x0 = torch::zeros({1, 2, 2, 2}, torch::kFloat64);
    auto labels = torch::zeros({1, 2, 2}, torch::kInt64);
    auto cfg = small_reg();
    auto sets = draw_batch_contrast(labels, cfg.contrast, 1);
    auto p = fixed(3, 1.0, 0.0, 1.0);
    p.eta.data()[1] = std::numeric_limits<double>::infinity();
    try {
        unroll(x0, labels, p, sets, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.layer() == 2);
    }
}

TEST_CASE("mismatched coefficient lengths are rejected") {
    auto p = fixed(2, 0.1, 0.1, 0.1);
    p.eta = torch::zeros({3}, torch::kFloat64);
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("aggregate") {
    Rng rng(3);
    auto a = testing::random_normal(rng, {2, 4, 3, 3});
    auto b = testing::random_normal(rng, {2, 4, 3, 3});
    CHECK(torch::equal(aggregate(a, b), aggregate(b, a)));
    CHECK(torch::equal(aggregate(a, torch::zeros_like(a)), a));
    CHECK(torch::equal(aggregate(a, a), 2 * a));
    CHECK(torch::equal(aggregate(a, a).argmax(1), a.argmax(1)));
    CHECK_THROWS_AS(aggregate(a, b[0]), ShapeError);
}

TEST_CASE("vanilla loss composition") {
    Rng rng(4);
    auto x0 = testing::random_normal(rng, {1, 3, 5, 5});
    auto labels = torch::randint(0, 3, {1, 5, 5}, torch::kInt64);
    RegularizerConfig cfg;
    cfg.contrast.temperature = 0.2;
    const std::uint64_t seed = 9;
    auto sets = draw_batch_contrast(labels, cfg.contrast, seed);

    CHECK(vanilla_regularized_loss(x0, labels, 0.0, 0.0, sets, cfg).item<double>() ==
          cross_entropy(x0, labels).item<double>());

    const double alpha = 0.6, gamma = 0.25;
    const double ce = cross_entropy(x0, labels).item<double>();
    const double bd = bd_loss(ImageDistribution::from_logits(x0[0].permute({1, 2, 0}), 2),
                              ImageDistribution::from_labels(labels[0], 3));
    double con = 0.0;
    auto samples = sample_contrast_sets(x0[0], labels[0], cfg.contrast, derive_seed(seed, 0));
    REQUIRE_FALSE(samples.empty());
    for (const auto& s : samples) con += infonce_loss(s);
    con /= static_cast<double>(samples.size());
    CHECK(vanilla_regularized_loss(x0, labels, alpha, gamma, sets, cfg).item<double>() ==
          doctest::Approx(ce + alpha * bd + gamma * con).epsilon(1e-12));

    // A prediction matching the one-hot labels has no BD term.
    auto sharp = torch::one_hot(labels, 3).permute({0, 3, 1, 2}).to(torch::kFloat64) * 60.0;
    const double only_ce = cross_entropy(sharp, labels).item<double>();
    CHECK(vanilla_regularized_loss(sharp, labels, 1.0, 0.0, sets, cfg).item<double>() ==
          doctest::Approx(only_ce).epsilon(1e-9));
}

TEST_CASE("one training step reaches every unrolled coefficient") {
    LossConfig loss;
    loss.layers = 5;
    auto state = TrainState::create(small_spec(FusionPolicy::FI), loss, {}, 3);
    auto batch = synthetic_batch(2, 11);
    const auto r = train_step(batch, state);
    CHECK(std::isfinite(r.loss));
    double norm = 0.0;
    for (const auto& t : state.unfold.tensors()) {
        REQUIRE(t.grad().defined());
        CHECK(torch::isfinite(t.grad()).all().item<bool>());
        norm += t.grad().pow(2).sum().item<double>();
    }
    CHECK(norm > 0.0);
    CHECK(state.step == 1);
}

TEST_CASE("zero unrolled layers reduce to cross-entropy") {
    LossConfig urs;
    urs.layers = 0;
    LossConfig ce;
    ce.mode = LossMode::CrossEntropy;
    auto a = TrainState::create(small_spec(FusionPolicy::CE), urs, {}, 5);
    auto b = TrainState::create(small_spec(FusionPolicy::CE), ce, {}, 5);
    auto batch = synthetic_batch(2, 12);
    const double la = training_loss(batch, a, 1).item<double>();
    const double lb = training_loss(batch, b, 1).item<double>();
    CHECK(std::abs(la - lb) <= 1e-6);
}

TEST_CASE("training steps are deterministic") {
    auto batch = synthetic_batch(2, 13);
    auto a = TrainState::create(small_spec(FusionPolicy::FI), {}, {}, 7);
    auto b = TrainState::create(small_spec(FusionPolicy::FI), {}, {}, 7);
    for (int i = 0; i < 2; ++i) CHECK(train_step(batch, a).loss == train_step(batch, b).loss);
    check_same_parameters(a, b);
}

TEST_CASE("checkpoint round trip continues bit for bit") {
    testing::TempDir dir("ckpt");
    auto batch = synthetic_batch(2, 14);
    auto a = TrainState::create(small_spec(FusionPolicy::FI), {}, {}, 8);
    train_step(batch, a);
    train_step(batch, a);
    save_checkpoint(dir.path() / "s.ckpt", a, {{"note", "x"}});
    CheckpointMetadata meta;
    auto b = load_checkpoint(dir.path() / "s.ckpt", &meta);
    CHECK(meta.at("note") == "x");
    CHECK(b.step == a.step);
    check_same_parameters(a, b);
    const double la = train_step(batch, a).loss;
    const double lb = train_step(batch, b).loss;
    CHECK(la == lb);
    check_same_parameters(a, b);
}

TEST_CASE("checkpoint errors") {
    testing::TempDir dir("ckpt-bad");
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.ckpt"), IoError);
    std::ofstream(dir.path() / "junk.ckpt") << "not a checkpoint at all";
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "junk.ckpt"), VersionError);
}

TEST_CASE("loss falls on a fixed tiny batch") {
    auto batch = synthetic_batch(2, 15);
    for (auto policy : {FusionPolicy::CE, FusionPolicy::FI}) {
        CAPTURE(to_string(policy));
        auto state = TrainState::create(small_spec(policy), {}, {}, 0);
        const double first = train_step(batch, state).loss;
        double last = first;
        for (int i = 1; i < 50; ++i) last = train_step(batch, state).loss;
        CHECK(last <= 0.9 * first);
    }
}

}  // TEST_SUITE
