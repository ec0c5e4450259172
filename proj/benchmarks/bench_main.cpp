#include <benchmark/benchmark.h>

#include "lab/geometry.hpp"
#include "lab/lenses.hpp"
#include "lab/linalg.hpp"
#include "lab/planted.hpp"
#include "lab/rng.hpp"
#include "lab/stats.hpp"
#include "lab/svm.hpp"
#include "lab/toy_model.hpp"
#include "lab/tsne.hpp"

using namespace lab;

namespace {

num::Matrix gaussian(num::Index rows, num::Index cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    num::Matrix m(rows, cols);
    for (num::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

const std::string kPrompt = "The atomic number of Mg is ";

void BM_ToyForwardCapture(benchmark::State& state) {
    auto model = build_toy_model(1, {.layers = static_cast<int>(state.range(0))});
    CaptureSpec spec;
    spec.positions = PositionMode::all;
    for (auto _ : state) benchmark::DoNotOptimize(model->forward_capture(kPrompt, spec));
}
BENCHMARK(BM_ToyForwardCapture)->Arg(4)->Arg(8);

void BM_LogitLens(benchmark::State& state) {
    auto model = build_toy_model(1);
    for (auto _ : state) benchmark::DoNotOptimize(lens_distributions(*model, kPrompt));
}
BENCHMARK(BM_LogitLens);

void BM_PcaFit(benchmark::State& state) {
    const num::Matrix x = gaussian(550, state.range(0), 1);
    for (auto _ : state) benchmark::DoNotOptimize(num::pca_fit(x, 30));
}
BENCHMARK(BM_PcaFit)->Arg(64)->Arg(256);

void BM_Pinv(benchmark::State& state) {
    const num::Matrix head = gaussian(state.range(0), 64, 2);
    for (auto _ : state) benchmark::DoNotOptimize(num::pinv(head));
}
BENCHMARK(BM_Pinv)->Arg(128)->Arg(1024);

void BM_SvrFit(benchmark::State& state) {
    const num::Matrix x = gaussian(550, state.range(0), 3);
    const num::Matrix w = gaussian(state.range(0), 1, 4);
    const num::Vector y = x * w.col(0);
    for (auto _ : state) benchmark::DoNotOptimize(num::svr_fit(x, y));
}
BENCHMARK(BM_SvrFit)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_SvmFit(benchmark::State& state) {
    const num::Matrix x = gaussian(550, 32, 5);
    std::vector<int> labels(550);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = x(static_cast<num::Index>(i), 0) > 0 ? 1 : 0;
    for (auto _ : state) benchmark::DoNotOptimize(num::svm_fit(x, labels));
}
BENCHMARK(BM_SvmFit)->Unit(benchmark::kMillisecond);

void BM_Tsne(benchmark::State& state) {
    const num::Matrix x = gaussian(state.range(0), 30, 6);
    for (auto _ : state) benchmark::DoNotOptimize(num::tsne_2d(x, {.iterations = 250}));
}
BENCHMARK(BM_Tsne)->Arg(150)->Arg(550)->Unit(benchmark::kMillisecond);

void BM_MannKendall(benchmark::State& state) {
    SplitMix64 rng(7);
    std::vector<double> x(static_cast<std::size_t>(state.range(0)));
    for (auto& v : x) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(num::mann_kendall(x));
}
BENCHMARK(BM_MannKendall)->Arg(7)->Arg(50);

void BM_CosineBand(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(num::random_cosine_band(8192, 0.999, 100000));
}
BENCHMARK(BM_CosineBand)->Unit(benchmark::kMillisecond);

void BM_InterventionPlanted(benchmark::State& state) {
    const auto& table = ElementTable::builtin();
    const auto space = build_space(3, table);
    auto runner = build_planted_runner(table, {.points = space.points, .noise_rel = 0.05, .seed = 1});
    const auto baselines = capture_baselines(*runner, table, PromptMode::element);
    for (auto _ : state) benchmark::DoNotOptimize(run_intervention(*runner, baselines, space, {}));
}
BENCHMARK(BM_InterventionPlanted)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
