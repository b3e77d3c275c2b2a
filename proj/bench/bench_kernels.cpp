// Serial reference kernels against their OpenMP counterparts on batch sizes around the
// parallel cutoff, plus one full training step per backend.

#include <benchmark/benchmark.h>

#include <random>

#include "tcbc/kernels.hpp"
#include "tcbc/model.hpp"
#include "tcbc/trainer.hpp"

namespace {

using tcbc::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = normal(rng);
    return m;
}

constexpr std::size_t kIn = 64;
constexpr std::size_t kOut = 64;

template <auto Affine>
void BM_Affine(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto in = random_matrix(rows, kIn, 1);
    const auto w = random_matrix(kOut, kIn, 2);
    const std::vector<double> b(kOut, 0.1);
    Matrix out(rows, kOut);
    for (auto _ : state) {
        Affine(in, w, b, out);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

template <auto Gradient>
void BM_WeightGradient(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto delta = random_matrix(rows, kOut, 3);
    const auto in = random_matrix(rows, kIn, 4);
    Matrix gw(kOut, kIn);
    std::vector<double> gb(kOut);
    for (auto _ : state) {
        Gradient(delta, in, gw, gb);
        benchmark::DoNotOptimize(gw.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

template <auto Backprop>
void BM_BackpropRelu(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto delta = random_matrix(rows, kOut, 5);
    const auto w = random_matrix(kOut, kIn, 6);
    const auto pre = random_matrix(rows, kIn, 7);
    Matrix prev(rows, kIn);
    for (auto _ : state) {
        Backprop(delta, w, pre, prev);
        benchmark::DoNotOptimize(prev.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

void BM_TrainStep(benchmark::State& state) {
    const auto backend = state.range(0) ? tcbc::Backend::OpenMP : tcbc::Backend::Serial;
    const auto batch = static_cast<std::size_t>(state.range(1));
    tcbc::ImbalanceSpec spec{10, 500, 1000, 10.0, 10.0, 0};
    tcbc::GenerateOptions options{16, 3.0, 10};
    const auto data = tcbc::generate(spec, options);
    tcbc::TrainConfig config;
    config.hidden = 64;
    config.labeled_batch = batch;
    config.unlabeled_batch = batch;
    config.backend = backend;
    auto st = tcbc::make_state(config, {options.dim, config.hidden, spec.classes});
    const auto [labeled, unlabeled] = tcbc::sample_batches(data, config, 0);
    for (auto _ : state) {
        auto out = tcbc::train_step(st, labeled, unlabeled, config);
        benchmark::DoNotOptimize(out.trace.loss_s);
    }
}

} // namespace

BENCHMARK(BM_Affine<tcbc::kernels::serial::affine>)->Name("affine/serial")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_Affine<tcbc::kernels::omp::affine>)->Name("affine/omp")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_WeightGradient<tcbc::kernels::serial::weight_gradient>)
    ->Name("weight_gradient/serial")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_WeightGradient<tcbc::kernels::omp::weight_gradient>)
    ->Name("weight_gradient/omp")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_BackpropRelu<tcbc::kernels::serial::backprop_relu>)
    ->Name("backprop_relu/serial")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_BackpropRelu<tcbc::kernels::omp::backprop_relu>)
    ->Name("backprop_relu/omp")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_TrainStep)->Name("train_step")->ArgNames({"omp", "batch"})
    ->ArgsProduct({{0, 1}, {64, 1024, 4096}});

BENCHMARK_MAIN();
