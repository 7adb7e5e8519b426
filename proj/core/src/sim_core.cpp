#include "moesim/sim_core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace moesim {

void SimConfig::validate() const {
  trace.validate();
  estimator.validate();
  if (cache_ratio <= 0.0 || cache_ratio > 1.0)
    throw std::invalid_argument("SimConfig: cache_ratio must be in (0,1]");
  if (token_budget < 0)
    throw std::invalid_argument("SimConfig: token_budget must be >= 0");
  if (max_steps < 0)
    throw std::invalid_argument("SimConfig: max_steps must be >= 0");
  if (ratio_smoothing < 0.0 || ratio_smoothing > 1.0)
    throw std::invalid_argument("SimConfig: ratio_smoothing in [0,1]");
  if (warmup_steps < 0)
    throw std::invalid_argument("SimConfig: warmup_steps must be >= 0");
}

std::int64_t layer_vram_bytes(const SimConfig& config) {
  return static_cast<std::int64_t>(layer_capacity_experts(config)) *
         config.profile.expert_bytes;
}

int layer_capacity_experts(const SimConfig& config) {
  return static_cast<int>(
      std::floor(config.cache_ratio * config.trace.n_experts + 1e-9));
}

std::int64_t recompute_total_time(const std::vector<SimEvent>& log) {
  std::int64_t total = 0;
  struct Segment {
    std::int64_t cpu = 0, gpu = 0, stall = 0;
  };
  std::map<std::pair<int, int>, Segment> segments;
  for (const SimEvent& e : log) {
    switch (e.kind) {
      case SimEvent::Kind::draft:
        total += e.duration_ns;
        break;
      case SimEvent::Kind::cpu:
        segments[{e.step, e.layer}].cpu += e.duration_ns;
        break;
      case SimEvent::Kind::gpu:
        segments[{e.step, e.layer}].gpu += e.duration_ns;
        break;
      case SimEvent::Kind::stall:
        segments[{e.step, e.layer}].stall += e.duration_ns;
        break;
      case SimEvent::Kind::load:
      case SimEvent::Kind::evict:
        break; // overlapped with compute; stalls are logged explicitly
    }
  }
  for (const auto& [key, seg] : segments)
    total += std::max(seg.cpu, seg.gpu) + seg.stall;
  return total;
}

struct Simulation::LayerState {
  // utility family
  std::optional<LayerEstimator> estimator;
  std::optional<RatioEstimates> ratios;
  std::optional<PrefetchQueues> queues;
  std::optional<ResidencyPool> pool;
  int b_est = 1;
  // reactive baselines
  std::optional<LruExpertCache> lru;
  std::vector<int> pinned; // static_split, sorted expert ids
};

Simulation::Simulation(SimConfig config, Trace trace)
    : config_(std::move(config)), trace_(std::move(trace)) {
  if (trace_.n_layers < 1 || trace_.n_experts < 1)
    throw std::invalid_argument("Simulation: empty trace");
  // The trace is the source of truth for workload dimensions.
  config_.trace.n_layers = trace_.n_layers;
  config_.trace.n_experts = trace_.n_experts;
  config_.trace.top_k = trace_.top_k;
  config_.trace.gamma = trace_.gamma;
  config_.profile.n_layers = trace_.n_layers;
  config_.profile.vram_capacity_bytes =
      static_cast<std::int64_t>(trace_.n_layers) * layer_vram_bytes(config_);
  config_.estimator.gamma = trace_.gamma;
  config_.validate();
  config_.profile.validate();
  config_.policy.validate(config_.estimator.utility_cap);

  const int cap_experts = layer_capacity_experts(config_);
  const PolicyKind kind = config_.policy.kind;
  for (int l = 0; l < trace_.n_layers; ++l) {
    auto state = std::make_unique<LayerState>();
    if (is_utility_family(kind)) {
      EstimatorConfig ec =
          estimator_config_for(config_.policy, config_.estimator);
      state->estimator.emplace(trace_.n_experts, ec);
      state->ratios = RatioEstimates::uniform(ec.utility_cap);
      state->queues.emplace(ec.utility_cap);
      state->pool.emplace(ec.utility_cap, config_.profile.expert_bytes,
                          layer_vram_bytes(config_));
      state->b_est = trace_.top_k;
      // Deterministic warm fill; pressure-driven eviction reclaims these
      // slots as soon as real demand needs them.
      for (int e = 0; e < cap_experts && e < trace_.n_experts; ++e)
        state->pool->admit({l, e}, 0);
    } else if (kind == PolicyKind::lru_cache) {
      state->lru.emplace(cap_experts);
    }
    layers_.push_back(std::move(state));
  }
  if (kind == PolicyKind::static_split)
    warmup_counts_.assign(trace_.n_layers,
                          std::vector<std::int64_t>(trace_.n_experts, 0));
}

Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;

bool Simulation::exhausted() const {
  if (step_index_ >= static_cast<int>(trace_.steps.size())) return true;
  if (config_.token_budget > 0 && tokens_ >= config_.token_budget) return true;
  if (config_.max_steps > 0 && sim_steps_ >= config_.max_steps) return true;
  return false;
}

const StepActivations& Simulation::current_step() const {
  return trace_.steps.at(step_index_);
}

std::optional<StepReport> Simulation::run_step() {
  if (exhausted()) return std::nullopt;
  StepReport rep = is_utility_family(config_.policy.kind)
                       ? run_utility_step()
                       : run_reactive_step();
  ++sim_steps_;
  return rep;
}

namespace {

std::vector<int> token_frequencies(const StepActivations& acts, int layer,
                                   int token, int n_experts) {
  std::vector<int> freqs(n_experts, 0);
  for (int e : acts.experts.at(layer).at(token)) ++freqs.at(e);
  return freqs;
}

} // namespace

StepReport Simulation::run_utility_step() {
  const bool ar = config_.policy.kind == PolicyKind::ar_mode;
  const StepActivations& acts = current_step();
  const HardwareProfile& prof = config_.profile;
  const int n_experts = trace_.n_experts;
  const int window_tokens = ar ? 1 : trace_.gamma + 1;

  StepReport rep;
  rep.n_experts = n_experts;
  rep.accepted_tokens = ar ? 1 : acts.accepted_count;
  rep.draft_ns = ar ? 0
                    : static_cast<std::int64_t>(trace_.gamma) *
                          prof.t_draft_unit_ns;
  if (rep.draft_ns > 0)
    events_.push_back({SimEvent::Kind::draft, sim_steps_, -1, -1, clock_ns_,
                       rep.draft_ns});

  std::int64_t t = clock_ns_ + rep.draft_ns;
  double accuracy_sum = 0.0;

  for (int l = 0; l < trace_.n_layers; ++l) {
    LayerState& L = *layers_[l];
    const std::vector<int> scores = L.estimator->snapshot_scores();
    const std::unordered_set<int> resident = L.pool->layer_residents(l);
    const std::vector<int> freqs =
        ar ? token_frequencies(acts, l, token_cursor_, n_experts)
           : activation_frequencies(acts, l, n_experts);

    BalancerInput input;
    input.scores = scores;
    input.resident = &resident;
    input.gamma = ar ? 1 : trace_.gamma;
    input.top_k = trace_.top_k;
    input.b_est = L.b_est;
    input.ratios = &*L.ratios;
    input.profile = &prof;
    // Residents below tau are reclaimable at zero cost, so the memory
    // constraint sees the whole non-frozen pool capacity.
    input.vram_left_bytes = L.pool->capacity_bytes();
    input.utility_cap = L.estimator->config().utility_cap;
    input.draft_credit_ns =
        ar ? 0 : BalancerInput::default_draft_credit(trace_.gamma, prof);
    const ThresholdDecision decision =
        choose_threshold(config_.policy, input);

    // Retag residents to the fresh snapshot, then reclaim just enough
    // low-score slots for the loads that can actually happen this step.
    for (int id : resident) L.pool->retag({l, id}, scores[id]);
    const std::int64_t io_budget =
        std::max(decision.predicted_t_cpu_ns, decision.predicted_t_gpu_ns) +
        input.draft_credit_ns;
    const std::int64_t loadable =
        std::min<std::int64_t>(decision.n_prefetch,
                               io_budget / prof.t_io_unit_ns);
    for (ExpertKey key :
         L.pool->evict_for_room(loadable * prof.expert_bytes, decision.tau))
      events_.push_back({SimEvent::Kind::evict, sim_steps_, l, key.expert, t, 0});

    // Refresh the request queues: drop requests whose level went stale,
    // enqueue the currently hot non-residents.
    L.queues->scrub([&](ExpertKey key, int level) {
      return scores[key.expert] == level && !L.pool->resident(key);
    });
    for (int e = 0; e < n_experts; ++e)
      if (scores[e] >= 1 && !L.pool->resident({l, e}))
        L.queues->enqueue({l, e}, scores[e]);

    const std::vector<IoEvent> loads =
        drain_prefetch(*L.queues, decision.tau, io_budget, prof, *L.pool, t);
    for (const IoEvent& ev : loads)
      events_.push_back({SimEvent::Kind::load, sim_steps_, l, ev.key.expert,
                         ev.start_ns, ev.duration_ns});
    const std::int64_t io_used =
        static_cast<std::int64_t>(loads.size()) * prof.t_io_unit_ns;

    // Realized compute split from the actual cache state.
    std::int64_t hit_tokens = 0, miss_tokens = 0;
    int distinct = 0, distinct_hits = 0;
    std::vector<int> used_residents;
    for (int e = 0; e < n_experts; ++e) {
      if (freqs[e] == 0) continue;
      ++distinct;
      if (L.pool->resident({l, e})) {
        ++distinct_hits;
        hit_tokens += freqs[e];
        used_residents.push_back(e);
      } else {
        miss_tokens += freqs[e];
      }
    }
    for (int e : used_residents) L.pool->freeze({l, e});

    LayerTiming lt;
    lt.tau = decision.tau;
    lt.fallback = decision.fallback;
    lt.n_prefetch = decision.n_prefetch;
    lt.t_cpu_ns = miss_tokens * prof.t_cpu_unit_ns;
    lt.t_gpu_ns = distinct_hits * prof.t_gpu_unit_ns;
    lt.t_io_used_ns = io_used;
    const std::int64_t realized_window =
        std::max(lt.t_cpu_ns, lt.t_gpu_ns) + input.draft_credit_ns;
    lt.stall_ns = std::max<std::int64_t>(0, io_used - realized_window);
    lt.wall_ns = std::max(lt.t_cpu_ns, lt.t_gpu_ns) + lt.stall_ns;
    lt.bubble_ns = std::llabs(lt.t_cpu_ns - lt.t_gpu_ns) + lt.stall_ns;

    if (lt.t_cpu_ns > 0)
      events_.push_back(
          {SimEvent::Kind::cpu, sim_steps_, l, -1, t, lt.t_cpu_ns});
    if (lt.t_gpu_ns > 0)
      events_.push_back(
          {SimEvent::Kind::gpu, sim_steps_, l, -1, t, lt.t_gpu_ns});
    if (lt.stall_ns > 0)
      events_.push_back({SimEvent::Kind::stall, sim_steps_, l, -1,
                         t + std::max(lt.t_cpu_ns, lt.t_gpu_ns), lt.stall_ns});
    t += lt.wall_ns;

    rep.cache_hits += hit_tokens;
    rep.cache_misses += miss_tokens;

    int agree = 0;
    for (int e = 0; e < n_experts; ++e) {
      if ((scores[e] >= 1) == (freqs[e] >= 1)) ++agree;
      if (freqs[e] >= 1 && scores[e] < decision.tau) ++rep.faults_fn;
    }
    for (const IoEvent& ev : loads)
      if (freqs[ev.key.expert] == 0) ++rep.faults_fp;
    accuracy_sum += static_cast<double>(agree) / n_experts;

    for (int e : used_residents) L.pool->thaw_and_recycle({l, e});

    // Observation phase: estimator, ratio estimates, next-step b.
    L.estimator->observe_step(freqs);
    const double rc_obs = std::clamp(
        static_cast<double>(miss_tokens) /
            (static_cast<double>(window_tokens) * trace_.top_k),
        0.0, 1.0);
    const double rg_obs =
        distinct > 0 ? static_cast<double>(distinct_hits) / distinct : 0.0;
    update_ratio_estimates(*L.ratios, decision.tau, rc_obs, rg_obs,
                           config_.ratio_smoothing);
    L.b_est = std::max(distinct, 1);

    rep.layers.push_back(lt);
  }

  rep.accuracy = accuracy_sum / trace_.n_layers;
  rep.step_wall_ns = t - clock_ns_;
  clock_ns_ = t;
  tokens_ += rep.accepted_tokens;

  if (ar) {
    if (++token_cursor_ >= acts.accepted_count) {
      token_cursor_ = 0;
      ++step_index_;
    }
  } else {
    ++step_index_;
  }
  return rep;
}

StepReport Simulation::run_reactive_step() {
  const PolicyKind kind = config_.policy.kind;
  const StepActivations& acts = current_step();
  const HardwareProfile& prof = config_.profile;
  const int n_experts = trace_.n_experts;

  StepReport rep;
  rep.n_experts = n_experts;
  rep.accepted_tokens = acts.accepted_count;
  rep.draft_ns =
      static_cast<std::int64_t>(trace_.gamma) * prof.t_draft_unit_ns;
  events_.push_back(
      {SimEvent::Kind::draft, sim_steps_, -1, -1, clock_ns_, rep.draft_ns});
  std::int64_t t = clock_ns_ + rep.draft_ns;
  double accuracy_sum = 0.0;

  const bool pin_now = kind == PolicyKind::static_split && !pinned_ &&
                       sim_steps_ >= config_.warmup_steps;
  if (pin_now) {
    const int cap_experts = layer_capacity_experts(config_);
    for (int l = 0; l < trace_.n_layers; ++l) {
      std::vector<int> ids(n_experts);
      std::iota(ids.begin(), ids.end(), 0);
      std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return warmup_counts_[l][a] > warmup_counts_[l][b];
      });
      ids.resize(std::min(cap_experts, n_experts));
      std::sort(ids.begin(), ids.end());
      layers_[l]->pinned = std::move(ids);
    }
    pinned_ = true;
  }

  for (int l = 0; l < trace_.n_layers; ++l) {
    LayerState& L = *layers_[l];
    const std::vector<int> freqs = activation_frequencies(acts, l, n_experts);

    LayerTiming lt;
    std::int64_t hit_tokens = 0, miss_tokens = 0;
    int distinct = 0, blocking_loads = 0, on_gpu = 0;
    std::vector<bool> predicted_hot(n_experts, false);

    if (kind == PolicyKind::lru_cache) {
      for (int e = 0; e < n_experts; ++e)
        predicted_hot[e] = L.lru->contains(e);
      for (int e = 0; e < n_experts; ++e) {
        if (freqs[e] == 0) continue;
        ++distinct;
        int evicted = -1;
        const bool hit = L.lru->access(e, t, &evicted);
        if (hit) {
          hit_tokens += freqs[e];
        } else {
          miss_tokens += freqs[e];
          ++blocking_loads;
          events_.push_back({SimEvent::Kind::load, sim_steps_, l, e, t,
                             prof.t_io_unit_ns});
          if (evicted >= 0)
            events_.push_back(
                {SimEvent::Kind::evict, sim_steps_, l, evicted, t, 0});
        }
      }
      on_gpu = distinct; // everything computes on GPU once loaded
    } else if (kind == PolicyKind::on_demand_gpu ||
               (kind == PolicyKind::static_split && !pinned_)) {
      // Pure on-demand: every activated expert pays a blocking transfer;
      // nothing is retained. static_split behaves this way while warming.
      for (int e = 0; e < n_experts; ++e) {
        if (freqs[e] == 0) continue;
        ++distinct;
        miss_tokens += freqs[e];
        ++blocking_loads;
        events_.push_back(
            {SimEvent::Kind::load, sim_steps_, l, e, t, prof.t_io_unit_ns});
        if (kind == PolicyKind::static_split) warmup_counts_[l][e] += freqs[e];
      }
      on_gpu = distinct;
    } else { // static_split, pinned
      for (int e : L.pinned) predicted_hot[e] = true;
      for (int e = 0; e < n_experts; ++e) {
        if (freqs[e] == 0) continue;
        ++distinct;
        if (predicted_hot[e]) {
          hit_tokens += freqs[e];
          ++on_gpu;
        } else {
          miss_tokens += freqs[e];
          lt.t_cpu_ns += freqs[e] * prof.t_cpu_unit_ns;
        }
      }
      if (pin_now) {
        // One-time bulk transfer of the pinned set.
        blocking_loads = static_cast<int>(L.pinned.size());
        for (int e : L.pinned)
          events_.push_back(
              {SimEvent::Kind::load, sim_steps_, l, e, t, prof.t_io_unit_ns});
      }
    }

    lt.t_gpu_ns = static_cast<std::int64_t>(on_gpu) * prof.t_gpu_unit_ns;
    lt.t_io_used_ns =
        static_cast<std::int64_t>(blocking_loads) * prof.t_io_unit_ns;
    lt.stall_ns = lt.t_io_used_ns; // demand-time loads do not overlap
    lt.wall_ns = std::max(lt.t_cpu_ns, lt.t_gpu_ns) + lt.stall_ns;
    lt.bubble_ns = std::llabs(lt.t_cpu_ns - lt.t_gpu_ns) + lt.stall_ns;
    if (lt.t_cpu_ns > 0)
      events_.push_back(
          {SimEvent::Kind::cpu, sim_steps_, l, -1, t, lt.t_cpu_ns});
    if (lt.t_gpu_ns > 0)
      events_.push_back(
          {SimEvent::Kind::gpu, sim_steps_, l, -1, t, lt.t_gpu_ns});
    if (lt.stall_ns > 0)
      events_.push_back({SimEvent::Kind::stall, sim_steps_, l, -1,
                         t + std::max(lt.t_cpu_ns, lt.t_gpu_ns), lt.stall_ns});
    t += lt.wall_ns;

    rep.cache_hits += hit_tokens;
    rep.cache_misses += miss_tokens;
    int agree = 0;
    for (int e = 0; e < n_experts; ++e) {
      const bool hot = freqs[e] >= 1;
      if (predicted_hot[e] == hot) ++agree;
      if (hot && !predicted_hot[e]) ++rep.faults_fn;
      if (!hot && predicted_hot[e]) ++rep.faults_fp;
    }
    accuracy_sum += static_cast<double>(agree) / n_experts;
    rep.layers.push_back(lt);
  }

  rep.accuracy = accuracy_sum / trace_.n_layers;
  rep.step_wall_ns = t - clock_ns_;
  clock_ns_ = t;
  tokens_ += rep.accepted_tokens;
  ++step_index_;
  return rep;
}

Trace make_trace(const SimConfig& config) {
  if (!config.trace_file.empty()) return read_trace(config.trace_file);
  TraceGenerator gen(config.trace);
  Trace trace;
  trace.n_layers = config.trace.n_layers;
  trace.n_experts = config.trace.n_experts;
  trace.top_k = config.trace.top_k;
  trace.gamma = config.trace.gamma;
  std::int64_t tokens = 0;
  int steps = 0;
  const std::int64_t budget = config.token_budget > 0 ? config.token_budget
                                                      : 512;
  while (tokens < budget &&
         (config.max_steps == 0 || steps < config.max_steps)) {
    trace.steps.push_back(gen.next_step());
    tokens += trace.steps.back().accepted_count;
    ++steps;
  }
  return trace;
}

RunResult run_experiment(const SimConfig& config) {
  Simulation sim(config, make_trace(config));
  RunResult result;
  while (auto rep = sim.run_step()) result.reports.push_back(std::move(*rep));
  result.events = sim.event_log();
  result.total_time_ns = sim.total_time_ns();
  result.total_tokens = sim.total_tokens();
  return result;
}

} // namespace moesim
