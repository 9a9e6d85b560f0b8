#include <benchmark/benchmark.h>

#include <torch/torch.h>

#include "advent/metrics.hpp"
#include "advent/network.hpp"
#include "advent/random.hpp"
#include "advent/sequence.hpp"
#include "advent/synthetic.hpp"
#include "advent/unfold.hpp"

using namespace advent;

namespace {

WindowBatch batch_of(std::int64_t n, std::int64_t size) {
    SceneConfig sc;
    sc.height = size;
    sc.width = size;
    sc.length = 3 + n;
    sc.weather = {0.4, 0.4, 0.2, 0.2};
    auto w = build_windows(generate_sequence(sc), 3);
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < n; ++i) idx.push_back(i);
    return stack_windows(w, idx);
}

void BM_BdGradient(benchmark::State& state) {
    const auto n = state.range(0);
    auto px = torch::rand({n}, torch::kFloat64) + 0.01;
    px /= px.sum();
    auto py = torch::rand({n}, torch::kFloat64);
    py /= py.sum();
    for (auto _ : state) benchmark::DoNotOptimize(bd_gradient(px, py));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BdGradient)->Arg(1 << 10)->Arg(1 << 13)->Arg(1 << 16);

void BM_Unroll(benchmark::State& state) {
    const auto k = state.range(0);
    torch::manual_seed(0);
    auto x0 = torch::randn({8, 8, 32, 32});
    auto labels = torch::randint(0, 8, {8, 32, 32}, torch::kInt64);
    RegularizerConfig cfg;
    auto sets = draw_batch_contrast(labels, cfg.contrast, 1);
    auto params = UnfoldParams::constant(k, 0.1, 0.1, 0.01);
    torch::NoGradGuard g;
    for (auto _ : state) benchmark::DoNotOptimize(unroll(x0, labels, params, sets, cfg));
}
BENCHMARK(BM_Unroll)->Arg(1)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
    NetworkSpec spec;
    spec.policy = state.range(0) == 0 ? FusionPolicy::CE : FusionPolicy::FI;
    torch::manual_seed(0);
    SegmentationNet net(spec);
    auto batch = batch_of(8, 32);
    torch::NoGradGuard g;
    for (auto _ : state) benchmark::DoNotOptimize(net->forward(batch));
    state.SetLabel(to_string(*spec.policy));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    LossConfig loss;
    loss.mode = state.range(0) == 0 ? LossMode::CrossEntropy : LossMode::Unfolded;
    auto ts = TrainState::create(NetworkSpec{}, loss, {}, 0);
    auto batch = batch_of(8, 32);
    for (auto _ : state) benchmark::DoNotOptimize(train_step(batch, ts).loss);
    state.SetLabel(to_string(loss.mode));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Shuffle(benchmark::State& state) {
    std::int64_t epoch = 0;
    for (auto _ : state) benchmark::DoNotOptimize(gsm_shuffle(state.range(0), 7, epoch++));
}
BENCHMARK(BM_Shuffle)->Arg(1000)->Arg(100000);

void BM_Metrics(benchmark::State& state) {
    torch::manual_seed(0);
    auto scores = torch::randn({8, 8, 64, 64});
    auto labels = torch::randint(0, 8, {8, 64, 64}, torch::kInt64);
    for (auto _ : state) {
        ConfusionMatrix cm(8);
        accumulate(cm, scores, labels);
        benchmark::DoNotOptimize(compute_metrics(cm));
    }
}
BENCHMARK(BM_Metrics)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
