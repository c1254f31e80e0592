#include <map>

#include <benchmark/benchmark.h>

#include "qdiv/backtest.hpp"
#include "qdiv/synthgen.hpp"

namespace {

const qdiv::ReturnsPanel& panel(int months, int assets) {
    static std::map<std::pair<int, int>, qdiv::ReturnsPanel> cache;
    auto it = cache.find({months, assets});
    if (it == cache.end()) {
        qdiv::SynthSpec spec;
        spec.n_months = months;
        spec.n_assets = assets;
        it = cache.emplace(std::pair{months, assets}, qdiv::generate(spec).first).first;
    }
    return it->second;
}

void run(benchmark::State& state, qdiv::ExecutionOptions exec) {
    const auto& p = panel(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(qdiv::run_matrix(p, qdiv::BacktestConfig{}, exec));
    state.counters["months"] = static_cast<double>(p.months() - 61);
}

void BM_MatrixSerial(benchmark::State& state) { run(state, {qdiv::ExecutionMode::serial}); }

void BM_MatrixParallel(benchmark::State& state) { run(state, {qdiv::ExecutionMode::parallel, 0}); }

void BM_SingleBacktest(benchmark::State& state) {
    const auto& p = panel(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    qdiv::BacktestConfig cfg;
    cfg.strategy = static_cast<qdiv::StrategyKind>(state.range(2));
    for (auto _ : state) benchmark::DoNotOptimize(qdiv::run_backtest(p, cfg, {qdiv::ExecutionMode::serial}));
}

}  // namespace

BENCHMARK(BM_MatrixSerial)->Args({120, 50})->Args({600, 100})->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_MatrixParallel)->Args({120, 50})->Args({600, 100})->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_SingleBacktest)
    ->ArgsProduct({{240}, {100}, {0, 1, 2}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
