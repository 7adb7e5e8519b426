#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moesim/utility_estimator.hpp"

using namespace moesim;

static void BM_observe_step(benchmark::State& state) {
  const int n_experts = static_cast<int>(state.range(0));
  EstimatorConfig cfg;
  cfg.utility_cap = 4;
  cfg.gamma = 8;
  LayerEstimator est(n_experts, cfg);
  std::mt19937_64 rng(1);
  std::vector<std::vector<int>> freqs(16, std::vector<int>(n_experts));
  for (auto& f : freqs)
    for (int& v : f) v = static_cast<int>(rng() % 10);
  size_t i = 0;
  for (auto _ : state) {
    est.observe_step(freqs[i++ % freqs.size()]);
  }
  state.SetItemsProcessed(state.iterations() * n_experts);
}
BENCHMARK(BM_observe_step)->Arg(64)->Arg(128)->Arg(512);

static void BM_snapshot_scores(benchmark::State& state) {
  const int n_experts = static_cast<int>(state.range(0));
  EstimatorConfig cfg;
  cfg.utility_cap = 4;
  cfg.gamma = 8;
  LayerEstimator est(n_experts, cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(est.snapshot_scores());
  }
}
BENCHMARK(BM_snapshot_scores)->Arg(128);
