#ifndef MOESIM_METRICS_REPORT_HPP
#define MOESIM_METRICS_REPORT_HPP

// Aggregates step reports into the measured quantities (TPS, latency,
// hit rate, bubble ratio, hot/cold accuracy, scheduling-fault rates) and
// emits machine-readable results.

#include <span>
#include <string>
#include <vector>

#include "moesim/sim_core.hpp"

namespace moesim {

struct RunSummary {
  std::string axis_name;   // sweep axis, empty for single runs
  double axis_value = 0.0;
  double tps = 0.0;            // accepted tokens per simulated second
  double latency_s = 0.0;      // end-to-end time for the token budget
  double hit_rate = 0.0;
  double bubble_ratio = 0.0;   // bubble time / layer compute wall time
  double fault_rate = 0.0;     // (FN + FP) per expert-step
  double fn_rate = 0.0;
  double fp_rate = 0.0;
  double mean_accuracy = 0.0;
  std::vector<double> accuracy_series; // per-step hot/cold accuracy
  std::int64_t total_tokens = 0;
  std::int64_t total_time_ns = 0;
};

// Throws on empty input.
RunSummary summarize(std::span<const StepReport> reports);

enum class MetricsFormat { csv, jsonl };

// CSV: "#moesim-metrics v1" header, fixed column order, one row per
// summary (the accuracy series is reduced to its mean; full series lives
// in the JSONL form). Both formats re-parse to byte-identical re-emission.
void emit(std::span<const RunSummary> summaries, MetricsFormat format,
          const std::string& path);
std::vector<RunSummary> parse_metrics(const std::string& path);

} // namespace moesim

#endif
