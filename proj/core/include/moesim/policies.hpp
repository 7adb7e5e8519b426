#ifndef MOESIM_POLICIES_HPP
#define MOESIM_POLICIES_HPP

// Scheduling policy selection and the pieces that differ between the
// utility-guided scheduler and the baseline cache disciplines.

#include <cstdint>
#include <list>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "moesim/utility_estimator.hpp"
#include "moesim/workload_balancer.hpp"

namespace moesim {

enum class PolicyKind {
  moe_spac,
  on_demand_gpu,
  lru_cache,
  static_split,
  ar_mode,
  fixed_tau,
  fixed_boundaries,
  binary_utility,
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::moe_spac;
  int fixed_tau = 2;  // for PolicyKind::fixed_tau
  int fixed_up = 3;   // for PolicyKind::fixed_boundaries
  int fixed_down = 1;

  void validate(int utility_cap) const;
};

PolicyKind parse_policy_kind(const std::string& name);
std::string policy_kind_name(PolicyKind kind);

// Policies that run the estimator/balancer/engine stack (including the
// ablation variants and AR mode).
bool is_utility_family(PolicyKind kind);

// Estimator configuration after applying the policy's ablation knobs.
EstimatorConfig estimator_config_for(const PolicySpec& spec,
                                     EstimatorConfig base);

// Threshold decision for the utility family: the online solve, or the
// pinned threshold for the static-threshold ablation.
ThresholdDecision choose_threshold(const PolicySpec& spec,
                                   const BalancerInput& input);

// Simulated-time LRU over expert ids, for the lru_cache baseline. Ties
// within one timestamp are broken by eviction of the least recently
// touched entry in update order.
class LruExpertCache {
public:
  explicit LruExpertCache(int capacity_experts);

  bool contains(int expert) const { return index_.contains(expert); }
  // Touch on hit; on miss, inserts and returns the evicted expert id (or
  // -1 when nothing was evicted). Returns whether it was a hit.
  bool access(int expert, std::int64_t now_ns, int* evicted = nullptr);
  std::size_t size() const { return index_.size(); }
  int capacity() const { return capacity_; }

private:
  int capacity_;
  std::list<int> order_; // most recent at front
  std::unordered_map<int, std::list<int>::iterator> index_;
};

// Arrival-order (FIFO) cache for the evictor-less ablation: retains
// experts until full, then drops the oldest arrival.
class FifoExpertCache {
public:
  explicit FifoExpertCache(int capacity_experts);

  bool contains(int expert) const { return index_.contains(expert); }
  bool access(int expert, int* evicted = nullptr);

private:
  int capacity_;
  std::list<int> arrivals_;
  std::unordered_set<int> index_;
};

} // namespace moesim

#endif
