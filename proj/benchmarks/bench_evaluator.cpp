#include <benchmark/benchmark.h>

#include <vector>

#include "udistill/evaluator.hpp"
#include "udistill/hashing.hpp"

using namespace udistill;

static void BM_Auroc(benchmark::State& state) {
  SplitMix64 rng(7);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(static_cast<double>(1 + rng.below(5)));
    y.push_back(static_cast<int>(rng.below(2)));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(auroc(s, y));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auroc)->Range(1 << 8, 1 << 16);
