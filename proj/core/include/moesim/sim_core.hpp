#ifndef MOESIM_SIM_CORE_HPP
#define MOESIM_SIM_CORE_HPP

// Discrete-event heartbeat: one verification step runs the draft phase,
// per-layer balancer decisions, engine actions, and heterogeneous compute
// with draft/IO overlap. All timestamps are integer nanoseconds so the
// time-conservation identity is exact.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "moesim/execution_engine.hpp"
#include "moesim/policies.hpp"
#include "moesim/trace_model.hpp"
#include "moesim/utility_estimator.hpp"
#include "moesim/workload_balancer.hpp"

namespace moesim {

struct SimConfig {
  TraceConfig trace;           // synthetic workload, used when trace_file empty
  std::string trace_file;      // replay source; overrides trace generation
  HardwareProfile profile;     // n_layers / vram capacity are derived below
  EstimatorConfig estimator;
  PolicySpec policy;
  double cache_ratio = 0.17;   // fraction of all expert bytes allowed on GPU
  std::int64_t token_budget = 512;
  int max_steps = 0;           // 0 = bounded by token budget / trace length
  double ratio_smoothing = 0.3;
  int warmup_steps = 32;       // static_split warm-up length

  void validate() const;
};

struct LayerTiming {
  std::int64_t t_cpu_ns = 0;
  std::int64_t t_gpu_ns = 0;
  std::int64_t t_io_used_ns = 0;
  std::int64_t stall_ns = 0;   // I/O beyond the overlap window
  std::int64_t bubble_ns = 0;  // |t_cpu - t_gpu| + stall
  std::int64_t wall_ns = 0;    // max(t_cpu, t_gpu) + stall
  int tau = 0;
  bool fallback = false;
  int n_prefetch = 0;
};

struct StepReport {
  std::vector<LayerTiming> layers;
  std::int64_t draft_ns = 0;
  int accepted_tokens = 0;
  std::int64_t cache_hits = 0;   // token-activations served from GPU cache
  std::int64_t cache_misses = 0;
  double accuracy = 0.0;         // hot/cold agreement at tau=1, mean over layers
  std::int64_t faults_fn = 0;    // activated but classified cold
  std::int64_t faults_fp = 0;    // prefetched but unactivated
  int n_experts = 0;
  std::int64_t step_wall_ns = 0; // draft + sum of layer walls
};

// Flat record stream sufficient to recompute the simulated clock:
// total = sum(draft) + sum_layers(max(cpu, gpu) + stall).
struct SimEvent {
  enum class Kind { draft, cpu, gpu, stall, load, evict };
  Kind kind;
  int step;
  int layer;  // -1 for draft
  int expert; // -1 for non-IO events
  std::int64_t start_ns;
  std::int64_t duration_ns;
};

std::int64_t recompute_total_time(const std::vector<SimEvent>& log);

class Simulation {
public:
  Simulation(SimConfig config, Trace trace);
  ~Simulation();
  Simulation(Simulation&&) noexcept;
  Simulation& operator=(Simulation&&) noexcept;

  // Advances one verification step (one token for AR mode); empty once the
  // trace or budgets are exhausted.
  std::optional<StepReport> run_step();

  std::int64_t total_time_ns() const { return clock_ns_; }
  std::int64_t total_tokens() const { return tokens_; }
  const std::vector<SimEvent>& event_log() const { return events_; }
  const SimConfig& config() const { return config_; }

private:
  struct LayerState;
  bool exhausted() const;
  StepReport run_utility_step();
  StepReport run_reactive_step();
  const StepActivations& current_step() const;

  SimConfig config_;
  Trace trace_;
  std::vector<std::unique_ptr<LayerState>> layers_;
  std::vector<SimEvent> events_;
  std::int64_t clock_ns_ = 0;
  std::int64_t tokens_ = 0;
  int step_index_ = 0;   // trace step cursor
  int token_cursor_ = 0; // within-step token cursor (AR mode)
  int sim_steps_ = 0;
  // static_split state
  bool pinned_ = false;
  std::vector<std::vector<std::int64_t>> warmup_counts_;
};

struct RunResult {
  std::vector<StepReport> reports;
  std::vector<SimEvent> events;
  std::int64_t total_time_ns = 0;
  std::int64_t total_tokens = 0;
};

// Loads or generates the trace, then loops run_step to the budget.
RunResult run_experiment(const SimConfig& config);

// Trace sized so the accepted tokens cover the config's token budget.
Trace make_trace(const SimConfig& config);

// Derived capacities: per-layer VRAM slice of the global expert-cache
// budget cache_ratio * n_layers * n_experts * expert_bytes.
std::int64_t layer_vram_bytes(const SimConfig& config);
int layer_capacity_experts(const SimConfig& config);

} // namespace moesim

#endif
