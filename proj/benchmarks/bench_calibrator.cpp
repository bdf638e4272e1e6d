#include <benchmark/benchmark.h>

#include <vector>

#include "udistill/calibrator.hpp"
#include "udistill/hashing.hpp"

using namespace udistill;

static std::vector<CalibrationPair> make_pairs(std::size_t n) {
  SplitMix64 rng(n);
  std::vector<CalibrationPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = static_cast<double>(rng.below(101)) / 100.0;
    pairs.push_back({f, rng.uniform() < f * f ? 1 : 0});
  }
  return pairs;
}

static void BM_FitIsotonic(benchmark::State& state) {
  const auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_isotonic(pairs));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitIsotonic)->Range(1 << 10, 1 << 18);

static void BM_FitTemperature(benchmark::State& state) {
  const auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_temperature(pairs));
  }
}
BENCHMARK(BM_FitTemperature)->Range(1 << 10, 1 << 16);

static void BM_Ece(benchmark::State& state) {
  const auto pairs = make_pairs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ece(pairs, 30));
  }
}
BENCHMARK(BM_Ece)->Arg(10000);
