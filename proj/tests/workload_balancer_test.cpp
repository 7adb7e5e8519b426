#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <random>
#include <vector>

#include "moesim/workload_balancer.hpp"

using namespace moesim;

namespace {

HardwareProfile basic_profile() {
  HardwareProfile p;
  p.t_cpu_unit_ns = 1'000'000;
  p.t_gpu_unit_ns = 1'000'000;
  p.t_io_unit_ns = 1'000'000;
  p.t_draft_unit_ns = 1'000'000;
  p.expert_bytes = 1'000'000;
  p.n_layers = 1;
  p.vram_capacity_bytes = 1'000'000'000;
  return p;
}

// Reference solver: evaluate every threshold, apply both constraints
// directly, take the smallest-|T_cpu - T_gpu| feasible threshold with
// ties toward smaller tau.
struct BruteForce {
  std::optional<int> tau;
  std::int64_t objective = 0;
};

BruteForce brute_force(const BalancerInput& in) {
  BruteForce best;
  for (int tau = 1; tau <= in.utility_cap; ++tau) {
    const PredictedTimes t = predicted_times(tau, in);
    const int n = count_prefetch(tau, in.scores, *in.resident);
    const std::int64_t window = std::max(t.cpu_ns, t.gpu_ns) + in.draft_credit_ns;
    if (in.profile->t_io_unit_ns * n > window) continue;
    if (in.profile->expert_bytes * static_cast<std::int64_t>(n) >
        in.vram_left_bytes)
      continue;
    const std::int64_t obj = std::llabs(t.cpu_ns - t.gpu_ns);
    if (!best.tau || obj < best.objective) {
      best.tau = tau;
      best.objective = obj;
    }
  }
  return best;
}

} // namespace

TEST_CASE("predicted_times formula") {
  HardwareProfile p = basic_profile();
  RatioEstimates r = RatioEstimates::uniform(3);
  r.cpu_ratio = {0.0, 0.5, 1.0};
  r.gpu_ratio = {1.0, 1.0 / 3.0, 0.0};
  std::vector<int> scores(4, 0);
  std::unordered_set<int> resident;
  BalancerInput in;
  in.scores = scores;
  in.resident = &resident;
  in.gamma = 2;
  in.top_k = 2;
  in.b_est = 3;
  in.ratios = &r;
  in.profile = &p;
  in.utility_cap = 3;

  // r_c=0.5 of gamma*k = 4 token-activations at 1 ms each -> 2 ms.
  CHECK(predicted_times(2, in).cpu_ns == 2'000'000);
  // r_g=1/3 of b=3 experts at 1 ms each -> 1 ms.
  CHECK(predicted_times(2, in).gpu_ns == 1'000'000);
  CHECK(predicted_times(1, in).cpu_ns == 0);
  CHECK(predicted_times(3, in).gpu_ns == 0);
  CHECK_THROWS(predicted_times(0, in));
  CHECK_THROWS(predicted_times(4, in));
}

TEST_CASE("count_prefetch censuses hot non-residents") {
  const std::vector<int> scores = {4, 2, 4, 3};
  std::unordered_set<int> none;
  CHECK(count_prefetch(3, scores, none) == 3);
  CHECK(count_prefetch(1, scores, none) == 4);
  CHECK(count_prefetch(5, scores, none) == 0); // above the cap: empty hot set
  std::unordered_set<int> resident = {0, 2};
  CHECK(count_prefetch(3, scores, resident) == 1);
  std::unordered_set<int> all = {0, 1, 2, 3};
  CHECK(count_prefetch(1, scores, all) == 0);
}

TEST_CASE("solve_threshold crosses monotone time curves") {
  HardwareProfile p = basic_profile();
  // T_cpu rises 1,2,3,4 ms; T_gpu falls 4,3,2,1 ms across tau=1..4.
  RatioEstimates r;
  r.cpu_ratio = {0.25, 0.5, 0.75, 1.0};
  r.gpu_ratio = {1.0, 0.75, 0.5, 0.25};
  std::vector<int> scores(8, 0); // nothing to prefetch: all feasible
  std::unordered_set<int> resident;
  BalancerInput in;
  in.scores = scores;
  in.resident = &resident;
  in.gamma = 2;
  in.top_k = 2;
  in.b_est = 4;
  in.ratios = &r;
  in.profile = &p;
  in.vram_left_bytes = p.vram_capacity_bytes;
  in.utility_cap = 4;

  const ThresholdDecision d = solve_threshold(in);
  // |diff| = 3,1,1,3 ms: tie between tau=2 and tau=3 resolves low.
  CHECK(d.tau == 2);
  CHECK_FALSE(d.fallback);
  CHECK(d.predicted_t_cpu_ns == 2'000'000);
  CHECK(d.predicted_t_gpu_ns == 3'000'000);
  CHECK(d.n_prefetch == 0);
}

TEST_CASE("solve_threshold finds an exact balance") {
  HardwareProfile p = basic_profile();
  RatioEstimates r;
  r.cpu_ratio = {0.0, 0.75, 1.0};
  r.gpu_ratio = {1.0, 0.75, 0.5};
  std::vector<int> scores(4, 0);
  std::unordered_set<int> resident;
  BalancerInput in;
  in.scores = scores;
  in.resident = &resident;
  in.gamma = 2;
  in.top_k = 2;
  in.b_est = 4;
  in.ratios = &r;
  in.profile = &p;
  in.vram_left_bytes = p.vram_capacity_bytes;
  in.utility_cap = 3;
  const ThresholdDecision d = solve_threshold(in);
  CHECK(d.tau == 2); // 3 ms == 3 ms, objective zero
  CHECK(d.predicted_t_cpu_ns == d.predicted_t_gpu_ns);
}

TEST_CASE("solve_threshold falls back when nothing is feasible") {
  HardwareProfile p = basic_profile();
  RatioEstimates r = RatioEstimates::uniform(4);
  std::vector<int> scores(8, 4); // everything hot at every tau
  std::unordered_set<int> resident;
  BalancerInput in;
  in.scores = scores;
  in.resident = &resident;
  in.gamma = 2;
  in.top_k = 2;
  in.b_est = 4;
  in.ratios = &r;
  in.profile = &p;
  in.vram_left_bytes = 0; // no room for any prefetch
  in.utility_cap = 4;
  const ThresholdDecision d = solve_threshold(in);
  CHECK(d.fallback);
  CHECK(d.tau == 4);
}

TEST_CASE("solver matches brute force on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int checked_feasible = 0, checked_fallback = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const int cap = 2 + static_cast<int>(rng() % 7); // K in 2..8
    const int n_experts = 4 + static_cast<int>(rng() % 29);

    RatioEstimates r;
    r.cpu_ratio.resize(cap);
    r.gpu_ratio.resize(cap);
    for (int i = 0; i < cap; ++i) {
      r.cpu_ratio[i] = u01(rng);
      r.gpu_ratio[i] = u01(rng);
    }
    std::sort(r.cpu_ratio.begin(), r.cpu_ratio.end());
    std::sort(r.gpu_ratio.begin(), r.gpu_ratio.end(), std::greater<>());

    HardwareProfile p = basic_profile();
    p.t_cpu_unit_ns = 1 + static_cast<std::int64_t>(rng() % 2000);
    p.t_gpu_unit_ns = 1 + static_cast<std::int64_t>(rng() % 2000);
    p.t_io_unit_ns = 1 + static_cast<std::int64_t>(rng() % 4000);
    p.expert_bytes = 1 + static_cast<std::int64_t>(rng() % 100);

    std::vector<int> scores(n_experts);
    for (int& s : scores) s = static_cast<int>(rng() % (cap + 1));
    std::unordered_set<int> resident;
    for (int e = 0; e < n_experts; ++e)
      if (rng() % 3 == 0) resident.insert(e);

    BalancerInput in;
    in.scores = scores;
    in.resident = &resident;
    in.gamma = 1 + static_cast<int>(rng() % 8);
    in.top_k = 1 + static_cast<int>(rng() % 8);
    in.b_est = 1 + static_cast<int>(rng() % 16);
    in.ratios = &r;
    in.profile = &p;
    // Random tightness: sometimes roomy, sometimes strangling.
    in.vram_left_bytes = static_cast<std::int64_t>(rng() % (n_experts + 1)) *
                         p.expert_bytes;
    in.draft_credit_ns = static_cast<std::int64_t>(rng() % 5000);
    in.utility_cap = cap;

    int evals = 0;
    const ThresholdDecision got = solve_threshold(in, &evals);
    const BruteForce want = brute_force(in);

    if (!want.tau) {
      CHECK(got.fallback);
      CHECK(got.tau == cap);
      ++checked_fallback;
    } else {
      CHECK_FALSE(got.fallback);
      const PredictedTimes t = predicted_times(got.tau, in);
      CHECK(std::llabs(t.cpu_ns - t.gpu_ns) == want.objective);
      ++checked_feasible;
    }
    const int budget = 2 * static_cast<int>(std::ceil(std::log2(cap))) + 8;
    CHECK(evals <= budget);
  }
  // The generator must exercise both outcomes.
  CHECK(checked_feasible > 100);
  CHECK(checked_fallback > 10);
}

TEST_CASE("objective is unimodal for monotone ratio curves") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int cap = 2 + static_cast<int>(rng() % 7);
    RatioEstimates r;
    r.cpu_ratio.resize(cap);
    r.gpu_ratio.resize(cap);
    for (int i = 0; i < cap; ++i) {
      r.cpu_ratio[i] = u01(rng);
      r.gpu_ratio[i] = u01(rng);
    }
    std::sort(r.cpu_ratio.begin(), r.cpu_ratio.end());
    std::sort(r.gpu_ratio.begin(), r.gpu_ratio.end(), std::greater<>());
    HardwareProfile p = basic_profile();
    std::vector<int> scores(4, 0);
    std::unordered_set<int> resident;
    BalancerInput in;
    in.scores = scores;
    in.resident = &resident;
    in.gamma = 4;
    in.top_k = 4;
    in.b_est = 8;
    in.ratios = &r;
    in.profile = &p;
    in.vram_left_bytes = p.vram_capacity_bytes;
    in.utility_cap = cap;

    // diff = T_cpu - T_gpu is non-decreasing, so |diff| dips once.
    std::int64_t prev_diff = predicted_times(1, in).cpu_ns -
                             predicted_times(1, in).gpu_ns;
    for (int tau = 2; tau <= cap; ++tau) {
      const PredictedTimes t = predicted_times(tau, in);
      CHECK(t.cpu_ns - t.gpu_ns >= prev_diff);
      prev_diff = t.cpu_ns - t.gpu_ns;
    }
  }
}

TEST_CASE("ratio updates keep estimates monotone") {
  RatioEstimates r;
  r.cpu_ratio = {0.1, 0.2, 0.3};
  r.gpu_ratio = {0.9, 0.8, 0.7};

  // Full-weight update at tau=2 jumps above its neighbor; the anchored
  // clip drags the tail up with it.
  update_ratio_estimates(r, 2, 0.9, 0.1, 1.0);
  CHECK(r.cpu_ratio[1] == doctest::Approx(0.9));
  CHECK(r.cpu_ratio[2] == doctest::Approx(0.9)); // clipped up
  CHECK(r.cpu_ratio[0] == doctest::Approx(0.1)); // already below
  CHECK(r.gpu_ratio[1] == doctest::Approx(0.1));
  CHECK(r.gpu_ratio[2] == doctest::Approx(0.1)); // clipped down
  CHECK_NOTHROW(r.validate());

  // EMA blend at partial weight.
  RatioEstimates r2;
  r2.cpu_ratio = {0.2, 0.4};
  r2.gpu_ratio = {0.8, 0.6};
  update_ratio_estimates(r2, 1, 1.0, 0.0, 0.5);
  CHECK(r2.cpu_ratio[0] == doctest::Approx(0.6));
  CHECK(r2.gpu_ratio[0] == doctest::Approx(0.4));
  // tau=1 anchored: later entries clamp against it.
  CHECK(r2.cpu_ratio[1] == doctest::Approx(0.6));
  CHECK(r2.gpu_ratio[1] == doctest::Approx(0.4));
  CHECK_NOTHROW(r2.validate());

  CHECK_THROWS(update_ratio_estimates(r2, 0, 0.5, 0.5, 0.5));
  CHECK_THROWS(update_ratio_estimates(r2, 1, 1.5, 0.5, 0.5));
  CHECK_THROWS(update_ratio_estimates(r2, 1, 0.5, 0.5, 1.5));
}

TEST_CASE("fuzzed ratio updates always re-validate") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  RatioEstimates r = RatioEstimates::uniform(6);
  for (int i = 0; i < 2000; ++i) {
    const int tau = 1 + static_cast<int>(rng() % 6);
    update_ratio_estimates(r, tau, u01(rng), u01(rng), u01(rng));
    CHECK_NOTHROW(r.validate());
  }
}

TEST_CASE("input validation") {
  HardwareProfile p; // all zeros
  CHECK_THROWS(p.validate());
  RatioEstimates bad;
  bad.cpu_ratio = {0.5, 0.4}; // non-monotone
  bad.gpu_ratio = {0.5, 0.5};
  CHECK_THROWS(bad.validate());
  RatioEstimates range;
  range.cpu_ratio = {1.5};
  range.gpu_ratio = {0.5};
  CHECK_THROWS(range.validate());
}
