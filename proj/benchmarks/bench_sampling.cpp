#include <benchmark/benchmark.h>

#include "udistill/mc_sampler.hpp"
#include "udistill/mock_model.hpp"
#include "udistill/prompts.hpp"
#include "udistill/semantic_norm.hpp"
#include "udistill/synthetic.hpp"

using namespace udistill;

namespace {

SyntheticBenchmark bench() {
  SyntheticOptions opts;
  opts.n_items = 64;
  opts.seed = 3;
  opts.with_logprobs = false;
  return make_synthetic_mcq(opts);
}

}  // namespace

// N draws from the mock for one item, no cache.
static void BM_SampleMock(benchmark::State& state) {
  const auto b = bench();
  MockModel model(b.spec);
  GenParams params;
  params.seed = 1;
  const auto n = static_cast<std::size_t>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& item = b.dataset[i++ % b.dataset.size()];
    benchmark::DoNotOptimize(sample_n(model, item, prompts::sampling_prompt(item), n, params, {}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleMock)->Arg(100)->Arg(1000);

static void BM_ClusterExact(benchmark::State& state) {
  const auto b = bench();
  MockModel model(b.spec);
  GenParams params;
  params.seed = 1;
  const auto& item = b.dataset.front();
  const auto set = sample_n(model, item, prompts::sampling_prompt(item), static_cast<std::size_t>(state.range(0)),
                            params, {});
  ExactJudge judge;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cluster_samples(set, item, judge));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ClusterExact)->Arg(100)->Arg(1000);
