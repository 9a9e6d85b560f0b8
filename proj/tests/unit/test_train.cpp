#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "advent/ablation.hpp"
#include "advent/error.hpp"
#include "advent/kv.hpp"
#include "advent/plot.hpp"
#include "advent/run_config.hpp"
#include "advent/synthetic.hpp"
#include "advent/trainer.hpp"
#include "support.hpp"

using namespace advent;
namespace fs = std::filesystem;

namespace {

BenchmarkManifests tiny_benchmark(const fs::path& root) {
    BenchmarkProfile p;
    p.height = 16;
    p.width = 16;
    p.length = 6;
    p.train_sequences = 3;
    p.val_sequences = 2;
    return generate_benchmark(root, p);
}

RunConfig tiny_config(const BenchmarkManifests& m, const fs::path& out) {
    RunConfig c;
    c.train_manifest = m.train;
    c.val_manifest = m.val;
    c.epochs = 2;
    c.batch_size = 4;
    c.backbone_width = 8;
    c.seeds = {0};
    c.output_dir = out;
    return c;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("key-value parsing") {
    auto r = kv::parse("# comment\n a = 1 \n\nname=x y\n");
    CHECK(r.at("a") == "1");
    CHECK(r.at("name") == "x y");
    CHECK_THROWS_AS(kv::parse("novalue\n"), ConfigError);
    CHECK(kv::get_bool({{"g", "off"}}, "g", true) == false);
    CHECK_THROWS_WITH_AS(kv::get_int({{"depth", "three"}}, "depth", 0), doctest::Contains("depth"), ConfigError);
    auto line = kv::parse_line("epoch=3 loss=0.5");
    CHECK(line.at("epoch") == "3");
}

TEST_CASE("run config round trip and validation") {
    RunConfig c;
    c.train_manifest = "t.manifest";
    c.loss.mode = LossMode::Vanilla;
    c.seeds = {4, 9};
    c.gsm = false;
    auto back = RunConfig::from_record(c.to_record());
    CHECK(back.to_record() == c.to_record());
    CHECK(parse_seed_list(" 1, 2 ,3") == std::vector<std::uint64_t>{1, 2, 3});

    CHECK_THROWS_WITH_AS(c.with({{"depth", "0"}}).validate(), doctest::Contains("depth"), ConfigError);
    CHECK_THROWS_WITH_AS(c.with({{"tau", "-1"}}).validate(), doctest::Contains("tau"), ConfigError);
    CHECK_THROWS_WITH_AS(c.with({{"policy", "XX"}}), doctest::Contains("policy"), ConfigError);
    CHECK_THROWS_WITH_AS(c.with({{"colour", "red"}}), doctest::Contains("colour"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig{}.validate(), doctest::Contains("train_manifest"), ConfigError);
}

TEST_CASE("config file manifests resolve against the file") {
    testing::TempDir dir("cfg");
    fs::create_directories(dir.path() / "sub");
    std::ofstream(dir.path() / "sub" / "run.kv") << "train_manifest = data/train.manifest\nepochs = 3\n";
    auto c = RunConfig::from_file(dir.path() / "sub" / "run.kv");
    CHECK(c.train_manifest == dir.path() / "sub" / "data/train.manifest");
    CHECK(c.epochs == 3);
}

TEST_CASE("training run writes a self-describing directory") {
    testing::TempDir dir("run");
    auto m = tiny_benchmark(dir.path() / "data");
    auto cfg = tiny_config(m, dir.path() / "out");
    auto run = run_training(cfg, 0, dir.path() / "out" / "a");
    CHECK(run.history.size() == 2);
    for (const char* f : {"config.kv", "run.info", "metrics.log", "batches.log", "checkpoint.ckpt", "summary.kv"}) {
        CHECK(fs::exists(run.run_dir / f));
    }
    auto log = read_metrics_log(run.run_dir / "metrics.log");
    REQUIRE(log.size() == 2);
    CHECK(log[1].epoch == 2);
    REQUIRE(log[1].val.has_value());
    CHECK(log[1].train.miou == run.history[1].train.miou);
    auto summary = kv::read_file(run.run_dir / "summary.kv");
    CHECK(kv::get_string(summary, "alpha", "").find(',') != std::string::npos);

    SUBCASE("same seed reproduces the metrics") {
        auto again = run_training(cfg, 0, dir.path() / "out" / "b");
        CHECK(again.history.back().train.miou == run.history.back().train.miou);
        CHECK(again.history.back().val->mf1 == run.history.back().val->mf1);
        CHECK(again.history.back().loss == run.history.back().loss);
    }
    SUBCASE("the saved config re-runs identically") {
        auto saved = RunConfig::from_file(run.run_dir / "config.kv");
        auto again = run_training(saved, saved.seeds.front(), dir.path() / "out" / "c");
        CHECK(again.history.back().loss == run.history.back().loss);
    }
    SUBCASE("checkpoint evaluation on the training set matches the last log line") {
        auto m2 = evaluate_checkpoint(run.run_dir / "checkpoint.ckpt", m.train);
        CHECK(std::abs(m2.miou - log[1].train.miou) <= 1e-6);
        CHECK(std::abs(m2.mpre - log[1].train.mpre) <= 1e-6);
        CHECK(std::abs(m2.mrec - log[1].train.mrec) <= 1e-6);
        CHECK(std::abs(m2.mf1 - log[1].train.mf1) <= 1e-6);
        CHECK_THROWS_AS(evaluate_checkpoint(run.run_dir / "nope.ckpt", m.train), IoError);
    }
    SUBCASE("plots render from the run directory") {
        auto plots = render_plots(run.run_dir);
        REQUIRE(plots.size() == 2);
        std::ifstream svg(plots[0]);
        std::string head;
        std::getline(svg, head);
        CHECK(head.find("<svg") == 0);
    }
}

TEST_CASE("without shuffling batches walk windows in order") {
    testing::TempDir dir("noshuffle");
    auto m = tiny_benchmark(dir.path() / "data");
    auto cfg = tiny_config(m, dir.path() / "out");
    cfg.epochs = 1;
    cfg.gsm = false;
    cfg.loss.mode = LossMode::CrossEntropy;
    run_training(cfg, 0, dir.path() / "out" / "off");
    auto lines = lines_of(dir.path() / "out" / "off" / "batches.log");
    REQUIRE(lines.size() == 3);  // 9 windows in batches of 4
    CHECK(lines[0] == "epoch=1 batch=0 windows=0,1,2,3");
    CHECK(lines[2] == "epoch=1 batch=2 windows=8");

    cfg.gsm = true;
    run_training(cfg, 0, dir.path() / "out" / "on");
    CHECK(lines_of(dir.path() / "out" / "on" / "batches.log")[0] != lines[0]);
}

TEST_CASE("training beats an untrained model") {
    testing::TempDir dir("trained");
    auto m = tiny_benchmark(dir.path() / "data");
    auto cfg = tiny_config(m, dir.path() / "out");
    cfg.loss.mode = LossMode::CrossEntropy;
    cfg.optim.learning_rate = 3e-3;
    cfg.epochs = 1;
    auto untrained = TrainState::create(cfg.network_spec(), cfg.loss, cfg.optim, 0);
    auto data = load_dataset(cfg);
    const auto before = evaluate(untrained, data.val, cfg.batch_size);
    cfg.epochs = 15;
    auto run = run_training(cfg, 0, dir.path() / "out" / "t", &data);
    CHECK(run.history.back().val->miou > before.miou);
}

TEST_CASE("ablation suites emit tables of the expected shape") {
    testing::TempDir dir("ablate");
    auto m = tiny_benchmark(dir.path() / "data");
    auto cfg = tiny_config(m, dir.path() / "out");
    cfg.epochs = 1;
    cfg.seeds = {0, 1};
    auto report = run_ablation(AblationSuite::Regularizer, cfg, dir.path() / "out");
    REQUIRE(report.arms.size() == 4);
    auto table = report.table();
    CHECK(table.find("| Loss | mIoU | mPre | mRec | mF1 |") == 0);
    for (const char* arm : {"| CE |", "| VRs |", "| URs (2) |", "| URs (5) |"}) CHECK(table.find(arm) != std::string::npos);
    CHECK(table.find("±") != std::string::npos);
    CHECK(fs::exists(dir.path() / "out" / "regularizer" / "miou.svg"));
    CHECK(fs::exists(dir.path() / "out" / "regularizer" / "table.csv"));
    CHECK(lines_of(dir.path() / "out" / "regularizer" / "table.md").size() == 6);

    auto again = run_ablation(AblationSuite::Regularizer, cfg, dir.path() / "again");
    CHECK(again.table() == table);
    CHECK(render_plots(dir.path() / "out" / "regularizer").size() == 2);

    CHECK(suite_arms(AblationSuite::Depth, cfg).size() == 4);
    CHECK(suite_arms(AblationSuite::Gsm, cfg).size() == 2);
    CHECK(suite_arms(AblationSuite::Fusion, cfg).size() == 2);
    CHECK_THROWS_AS(parse_ablation_suite("width"), ConfigError);
}

TEST_CASE("sample standard deviation") {
    auto s = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
    CHECK(mean_std({0.7}).std == 0.0);
}

}  // TEST_SUITE
