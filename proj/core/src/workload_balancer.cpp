#include "moesim/workload_balancer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <stdexcept>

namespace moesim {

void HardwareProfile::validate() const {
  if (t_cpu_unit_ns <= 0 || t_gpu_unit_ns <= 0 || t_io_unit_ns <= 0 ||
      t_draft_unit_ns <= 0 || expert_bytes <= 0 || vram_capacity_bytes <= 0)
    throw std::invalid_argument("HardwareProfile: all units must be positive");
  if (n_layers < 1)
    throw std::invalid_argument("HardwareProfile: n_layers must be >= 1");
}

void RatioEstimates::validate() const {
  if (cpu_ratio.empty() || cpu_ratio.size() != gpu_ratio.size())
    throw std::invalid_argument("RatioEstimates: shape mismatch");
  for (size_t i = 0; i < cpu_ratio.size(); ++i) {
    if (cpu_ratio[i] < 0.0 || cpu_ratio[i] > 1.0 || gpu_ratio[i] < 0.0 ||
        gpu_ratio[i] > 1.0)
      throw std::invalid_argument("RatioEstimates: ratios must be in [0,1]");
    if (i > 0 && (cpu_ratio[i] < cpu_ratio[i - 1] ||
                  gpu_ratio[i] > gpu_ratio[i - 1]))
      throw std::invalid_argument("RatioEstimates: non-monotone estimate");
  }
}

RatioEstimates RatioEstimates::uniform(int cap, double rc, double rg) {
  RatioEstimates r;
  r.cpu_ratio.assign(cap, rc);
  r.gpu_ratio.assign(cap, rg);
  return r;
}

PredictedTimes predicted_times(int tau, const BalancerInput& input) {
  if (tau < 1 || tau > input.utility_cap)
    throw std::out_of_range("predicted_times: tau out of [1,K]");
  const RatioEstimates& r = *input.ratios;
  const HardwareProfile& p = *input.profile;
  const double rc = r.cpu_ratio.at(tau - 1);
  const double rg = r.gpu_ratio.at(tau - 1);
  PredictedTimes t;
  t.cpu_ns = std::llround(rc * input.gamma * input.top_k *
                          static_cast<double>(p.t_cpu_unit_ns));
  t.gpu_ns = std::llround(rg * input.b_est *
                          static_cast<double>(p.t_gpu_unit_ns));
  return t;
}

int count_prefetch(int tau, std::span<const int> scores,
                   const std::unordered_set<int>& resident) {
  int n = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= tau && !resident.contains(static_cast<int>(i))) ++n;
  return n;
}

namespace {

// Memoizing evaluator so bisection plus the feasibility walks never pay
// for a threshold twice.
class Evaluator {
public:
  explicit Evaluator(const BalancerInput& input)
      : input_(input), cache_(input.utility_cap) {}

  const PredictedTimes& times(int tau) {
    auto& slot = cache_.at(tau - 1);
    if (!slot) {
      slot = predicted_times(tau, input_);
      ++evals_;
    }
    return *slot;
  }

  std::int64_t diff(int tau) {
    const PredictedTimes& t = times(tau);
    return t.cpu_ns - t.gpu_ns;
  }

  bool feasible(int tau) {
    const PredictedTimes& t = times(tau);
    const HardwareProfile& p = *input_.profile;
    const int n = count_prefetch(tau, input_.scores, *input_.resident);
    const std::int64_t t_total = std::max(t.cpu_ns, t.gpu_ns);
    if (p.t_io_unit_ns * n > t_total + input_.draft_credit_ns) return false;
    if (p.expert_bytes * static_cast<std::int64_t>(n) > input_.vram_left_bytes)
      return false;
    return true;
  }

  int evals() const { return evals_; }

private:
  const BalancerInput& input_;
  std::vector<std::optional<PredictedTimes>> cache_;
  int evals_ = 0;
};

} // namespace

ThresholdDecision solve_threshold(const BalancerInput& input, int* eval_count) {
  input.ratios->validate();
  input.profile->validate();
  const int cap = input.utility_cap;
  Evaluator ev(input);

  // T_cpu is non-decreasing and T_gpu non-increasing in tau, so their
  // difference is monotone. Bisect to the first tau with diff >= 0; the
  // objective |diff| then decreases up to the crossing and increases after.
  int lo = 1, hi = cap + 1;
  while (lo < hi) {
    int mid = lo + (hi - lo) / 2;
    if (ev.diff(mid) >= 0)
      hi = mid;
    else
      lo = mid + 1;
  }
  const int first_nonneg = lo; // cap+1 when diff stays negative

  // Nearest feasible threshold on each arm of the crossing.
  std::optional<int> below, above;
  for (int tau = std::min(first_nonneg - 1, cap); tau >= 1; --tau)
    if (ev.feasible(tau)) {
      below = tau;
      break;
    }
  for (int tau = first_nonneg; tau <= cap; ++tau)
    if (ev.feasible(tau)) {
      above = tau;
      break;
    }

  ThresholdDecision d;
  if (!below && !above) {
    d.tau = cap;
    d.fallback = true;
    const PredictedTimes& t = ev.times(cap);
    d.predicted_t_cpu_ns = t.cpu_ns;
    d.predicted_t_gpu_ns = t.gpu_ns;
    d.n_prefetch = count_prefetch(cap, input.scores, *input.resident);
    if (eval_count) *eval_count = ev.evals();
    return d;
  }

  int best;
  if (below && above) {
    const std::int64_t ob = std::llabs(ev.diff(*below));
    const std::int64_t oa = std::llabs(ev.diff(*above));
    best = (ob <= oa) ? *below : *above; // ties toward smaller tau
  } else {
    best = below ? *below : *above;
  }

  d.tau = best;
  d.fallback = false;
  const PredictedTimes& t = ev.times(best);
  d.predicted_t_cpu_ns = t.cpu_ns;
  d.predicted_t_gpu_ns = t.gpu_ns;
  d.n_prefetch = count_prefetch(best, input.scores, *input.resident);
  if (eval_count) *eval_count = ev.evals();
  return d;
}

void update_ratio_estimates(RatioEstimates& ratios, int tau_used,
                            double observed_rc, double observed_rg,
                            double smoothing) {
  ratios.validate();
  if (tau_used < 1 || tau_used > ratios.cap())
    throw std::out_of_range("update_ratio_estimates: tau out of range");
  if (observed_rc < 0.0 || observed_rc > 1.0 || observed_rg < 0.0 ||
      observed_rg > 1.0)
    throw std::invalid_argument("update_ratio_estimates: observations in [0,1]");
  if (smoothing < 0.0 || smoothing > 1.0)
    throw std::invalid_argument("update_ratio_estimates: smoothing in [0,1]");

  const int idx = tau_used - 1;
  ratios.cpu_ratio[idx] =
      (1.0 - smoothing) * ratios.cpu_ratio[idx] + smoothing * observed_rc;
  ratios.gpu_ratio[idx] =
      (1.0 - smoothing) * ratios.gpu_ratio[idx] + smoothing * observed_rg;

  // Clip pass anchored at the updated index; only that entry moved, so
  // clamping each side against it restores monotonicity.
  const double rc = ratios.cpu_ratio[idx];
  const double rg = ratios.gpu_ratio[idx];
  for (int i = 0; i < idx; ++i) {
    ratios.cpu_ratio[i] = std::min(ratios.cpu_ratio[i], rc);
    ratios.gpu_ratio[i] = std::max(ratios.gpu_ratio[i], rg);
  }
  for (int i = idx + 1; i < ratios.cap(); ++i) {
    ratios.cpu_ratio[i] = std::max(ratios.cpu_ratio[i], rc);
    ratios.gpu_ratio[i] = std::min(ratios.gpu_ratio[i], rg);
  }
}

} // namespace moesim
