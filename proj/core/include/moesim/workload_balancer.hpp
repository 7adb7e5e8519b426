#ifndef MOESIM_WORKLOAD_BALANCER_HPP
#define MOESIM_WORKLOAD_BALANCER_HPP

// Per-layer, per-step choice of the global utility threshold partitioning
// hot (GPU) from cold (CPU) experts, under I/O and VRAM constraints.

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

namespace moesim {

// All times are integer nanoseconds so downstream accounting is exact.
struct HardwareProfile {
  std::int64_t t_cpu_unit_ns = 0;   // sequential CPU pass of one expert
  std::int64_t t_gpu_unit_ns = 0;   // parallel GPU pass of one expert
  std::int64_t t_io_unit_ns = 0;    // transfer of one expert's weights
  std::int64_t t_draft_unit_ns = 0; // one draft token
  std::int64_t expert_bytes = 0;
  int n_layers = 1;
  std::int64_t vram_capacity_bytes = 0;

  void validate() const;
};

// Learned per-threshold work ratios, indexed tau in [1, K] (stored 0-based).
struct RatioEstimates {
  std::vector<double> cpu_ratio; // non-decreasing in tau
  std::vector<double> gpu_ratio; // non-increasing in tau

  int cap() const { return static_cast<int>(cpu_ratio.size()); }
  void validate() const;

  // Flat warm-start estimates for a cap of K levels.
  static RatioEstimates uniform(int cap, double rc = 0.5, double rg = 0.5);
};

struct BalancerInput {
  std::span<const int> scores;
  const std::unordered_set<int>* resident = nullptr; // expert ids on GPU
  int gamma = 1;
  int top_k = 1;
  int b_est = 1; // estimated de-duplicated activated experts
  const RatioEstimates* ratios = nullptr;
  const HardwareProfile* profile = nullptr;
  std::int64_t vram_left_bytes = 0;
  int utility_cap = 1; // K
  // Extra prefetch window granted by the overlapped draft phase,
  // gamma * T_draft / L_target per layer; 0 when there is no draft phase.
  std::int64_t draft_credit_ns = 0;

  static std::int64_t default_draft_credit(int gamma,
                                           const HardwareProfile& profile) {
    return gamma * profile.t_draft_unit_ns / profile.n_layers;
  }
};

struct ThresholdDecision {
  int tau = 1;
  bool fallback = false;
  std::int64_t predicted_t_cpu_ns = 0;
  std::int64_t predicted_t_gpu_ns = 0;
  int n_prefetch = 0;
};

struct PredictedTimes {
  std::int64_t cpu_ns = 0;
  std::int64_t gpu_ns = 0;
};

// T_cpu = r_c(tau) * gamma * k * T_cpu_unit; T_gpu = r_g(tau) * b * T_gpu_unit.
PredictedTimes predicted_times(int tau, const BalancerInput& input);

// |{i : scores[i] >= tau}| minus those already resident. tau above the cap
// yields 0 (empty hot set).
int count_prefetch(int tau, std::span<const int> scores,
                   const std::unordered_set<int>& resident);

// Minimizes |T_cpu(tau) - T_gpu(tau)| over the feasible thresholds in
// [1, K]; falls back to tau = K when no threshold is feasible. The two
// time curves are monotone, so the search bisects to their crossing and
// walks outward to the nearest feasible point on each side.
// eval_count, when given, receives the number of distinct
// predicted_times evaluations performed.
ThresholdDecision solve_threshold(const BalancerInput& input,
                                  int* eval_count = nullptr);

// EMA update of the ratio estimates at the threshold actually used, then a
// clip pass anchored at that index to restore monotonicity.
void update_ratio_estimates(RatioEstimates& ratios, int tau_used,
                            double observed_rc, double observed_rg,
                            double smoothing);

} // namespace moesim

#endif
