#include "moesim/policies.hpp"

#include <stdexcept>

namespace moesim {

void PolicySpec::validate(int utility_cap) const {
  if (kind == PolicyKind::fixed_tau &&
      (fixed_tau < 1 || fixed_tau > utility_cap))
    throw std::invalid_argument("PolicySpec: fixed_tau must be in [1,K]");
  if (kind == PolicyKind::fixed_boundaries && (fixed_up < 1 || fixed_down < 1))
    throw std::invalid_argument("PolicySpec: fixed boundaries must be >= 1");
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "moe_spac") return PolicyKind::moe_spac;
  if (name == "on_demand_gpu") return PolicyKind::on_demand_gpu;
  if (name == "lru_cache") return PolicyKind::lru_cache;
  if (name == "static_split") return PolicyKind::static_split;
  if (name == "ar_mode") return PolicyKind::ar_mode;
  if (name == "fixed_tau") return PolicyKind::fixed_tau;
  if (name == "fixed_boundaries") return PolicyKind::fixed_boundaries;
  if (name == "binary_utility") return PolicyKind::binary_utility;
  throw std::invalid_argument("unknown policy: " + name);
}

std::string policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::moe_spac: return "moe_spac";
    case PolicyKind::on_demand_gpu: return "on_demand_gpu";
    case PolicyKind::lru_cache: return "lru_cache";
    case PolicyKind::static_split: return "static_split";
    case PolicyKind::ar_mode: return "ar_mode";
    case PolicyKind::fixed_tau: return "fixed_tau";
    case PolicyKind::fixed_boundaries: return "fixed_boundaries";
    case PolicyKind::binary_utility: return "binary_utility";
  }
  throw std::logic_error("unreachable");
}

bool is_utility_family(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::moe_spac:
    case PolicyKind::ar_mode:
    case PolicyKind::fixed_tau:
    case PolicyKind::fixed_boundaries:
    case PolicyKind::binary_utility:
      return true;
    default:
      return false;
  }
}

EstimatorConfig estimator_config_for(const PolicySpec& spec,
                                     EstimatorConfig base) {
  switch (spec.kind) {
    case PolicyKind::binary_utility:
      base.utility_cap = 1;
      break;
    case PolicyKind::fixed_boundaries:
      base.adaptive_boundaries = false;
      base.init_up = spec.fixed_up;
      base.init_down = spec.fixed_down;
      break;
    default:
      break;
  }
  return base;
}

ThresholdDecision choose_threshold(const PolicySpec& spec,
                                   const BalancerInput& input) {
  if (spec.kind == PolicyKind::fixed_tau) {
    ThresholdDecision d;
    d.tau = spec.fixed_tau;
    d.fallback = false;
    const PredictedTimes t = predicted_times(d.tau, input);
    d.predicted_t_cpu_ns = t.cpu_ns;
    d.predicted_t_gpu_ns = t.gpu_ns;
    d.n_prefetch = count_prefetch(d.tau, input.scores, *input.resident);
    return d;
  }
  return solve_threshold(input);
}

LruExpertCache::LruExpertCache(int capacity_experts)
    : capacity_(capacity_experts) {
  if (capacity_experts < 0)
    throw std::invalid_argument("LruExpertCache: negative capacity");
}

bool LruExpertCache::access(int expert, std::int64_t /*now_ns*/, int* evicted) {
  if (evicted) *evicted = -1;
  auto it = index_.find(expert);
  if (it != index_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    return true;
  }
  if (capacity_ == 0) return false;
  if (static_cast<int>(index_.size()) >= capacity_) {
    int victim = order_.back();
    order_.pop_back();
    index_.erase(victim);
    if (evicted) *evicted = victim;
  }
  order_.push_front(expert);
  index_[expert] = order_.begin();
  return false;
}

FifoExpertCache::FifoExpertCache(int capacity_experts)
    : capacity_(capacity_experts) {
  if (capacity_experts < 0)
    throw std::invalid_argument("FifoExpertCache: negative capacity");
}

bool FifoExpertCache::access(int expert, int* evicted) {
  if (evicted) *evicted = -1;
  if (index_.contains(expert)) return true;
  if (capacity_ == 0) return false;
  if (static_cast<int>(index_.size()) >= capacity_) {
    int victim = arrivals_.front();
    arrivals_.pop_front();
    index_.erase(victim);
    if (evicted) *evicted = victim;
  }
  arrivals_.push_back(expert);
  index_.insert(expert);
  return false;
}

} // namespace moesim
