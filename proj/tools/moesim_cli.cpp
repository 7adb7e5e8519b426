// Experiment runner: single runs, parameter sweeps, trace generation, and
// the closed-form analytics calculator.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moesim/config.hpp"
#include "moesim/metrics_report.hpp"
#include "moesim/sd_analytics.hpp"
#include "moesim/sim_core.hpp"
#include "moesim/trace_model.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "config file path");
  cmd->add_option("-D,--set", opts.overrides,
                  "override, section.key=value (repeatable)");
  cmd->add_option("-o,--out", opts.out_dir,
                  "output directory (default: MOESIM_OUT env or ./out)");
  cmd->add_option("--format", opts.format, "metrics format: csv | jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
}

fs::path resolve_out_dir(const CommonOpts& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv("MOESIM_OUT")) return env;
  return "out";
}

moesim::SimConfig resolve_config(const CommonOpts& opts) {
  if (opts.config_path.empty())
    return moesim::parse_config_text("", opts.overrides);
  return moesim::load_config(opts.config_path, opts.overrides);
}

moesim::MetricsFormat parse_format(const std::string& name) {
  return name == "jsonl" ? moesim::MetricsFormat::jsonl
                         : moesim::MetricsFormat::csv;
}

void write_outputs(const fs::path& dir, const moesim::SimConfig& config,
                   const std::vector<moesim::RunSummary>& summaries,
                   const std::string& format) {
  fs::create_directories(dir);
  {
    std::ofstream echo(dir / "config.resolved");
    moesim::echo_config(config, echo);
  }
  const std::string ext = format == "jsonl" ? "jsonl" : "csv";
  moesim::emit(summaries, parse_format(format),
               (dir / ("metrics." + ext)).string());
}

int cmd_run(const CommonOpts& opts) {
  moesim::SimConfig config = resolve_config(opts);
  moesim::RunResult result = moesim::run_experiment(config);
  moesim::RunSummary summary = moesim::summarize(result.reports);
  write_outputs(resolve_out_dir(opts), config, {summary}, opts.format);
  std::printf("policy=%s tokens=%lld time_s=%.6f tps=%.3f hit_rate=%.4f\n",
              moesim::policy_kind_name(config.policy.kind).c_str(),
              static_cast<long long>(summary.total_tokens), summary.latency_s,
              summary.tps, summary.hit_rate);
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis, double from,
              double to, double step, const std::string& values_csv) {
  std::vector<double> values;
  if (!values_csv.empty()) {
    std::string cell;
    std::istringstream vs(values_csv);
    while (std::getline(vs, cell, ',')) values.push_back(std::stod(cell));
  } else {
    if (step <= 0) throw std::runtime_error("sweep: step must be > 0");
    for (double v = from; v <= to + step * 1e-9; v += step)
      values.push_back(v);
  }
  if (values.empty()) throw std::runtime_error("sweep: no axis values");

  std::vector<moesim::RunSummary> summaries;
  moesim::SimConfig echoed = resolve_config(opts);
  for (double v : values) {
    // Integer axes get integer-rendered overrides.
    char rendered[64];
    if (std::abs(v - std::llround(v)) < 1e-12)
      std::snprintf(rendered, sizeof(rendered), "%lld",
                    static_cast<long long>(std::llround(v)));
    else
      std::snprintf(rendered, sizeof(rendered), "%.17g", v);
    CommonOpts point = opts;
    point.overrides.push_back(axis + "=" + std::string(rendered));
    moesim::SimConfig config = resolve_config(point);
    moesim::RunResult result = moesim::run_experiment(config);
    moesim::RunSummary summary = moesim::summarize(result.reports);
    summary.axis_name = axis;
    summary.axis_value = v;
    summaries.push_back(std::move(summary));
    std::printf("%s=%s tps=%.3f hit_rate=%.4f\n", axis.c_str(), rendered,
                summaries.back().tps, summaries.back().hit_rate);
  }
  write_outputs(resolve_out_dir(opts), echoed, summaries, opts.format);
  return 0;
}

int cmd_gen_trace(const CommonOpts& opts, const std::string& out_file,
                  int steps) {
  moesim::SimConfig config = resolve_config(opts);
  moesim::TraceGenerator gen(config.trace);
  moesim::Trace trace = gen.generate(steps);
  moesim::write_trace(trace, out_file);
  std::printf("wrote %zu steps to %s\n", trace.steps.size(), out_file.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"moesim: trace-driven MoE offloading scheduler simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run = app.add_subcommand("run", "run a single experiment");
  add_common(run, run_opts);

  CommonOpts sweep_opts;
  std::string axis;
  double from = 0, to = 0, step = 0;
  std::string values_csv;
  CLI::App* sweep = app.add_subcommand("sweep", "sweep one config axis");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "config key to sweep, e.g. sim.cache_ratio")
      ->required();
  sweep->add_option("--from", from, "axis start");
  sweep->add_option("--to", to, "axis end (inclusive)");
  sweep->add_option("--step", step, "axis increment");
  sweep->add_option("--values", values_csv, "explicit comma-separated values");

  CommonOpts gen_opts;
  std::string trace_out = "trace.txt";
  int gen_steps = 64;
  CLI::App* gen = app.add_subcommand("gen-trace", "generate a synthetic trace");
  add_common(gen, gen_opts);
  gen->add_option("--steps", gen_steps, "number of verification steps");
  gen->add_option("--trace-out", trace_out, "output trace file");

  CLI::App* calc = app.add_subcommand("calc", "closed-form analytics");
  int calc_gamma = 8, calc_window = 9, calc_freq = 0;
  double calc_alpha = 0.8, calc_cost = 0.0, calc_a = 1.0, calc_b = 1.0;
  double calc_p = 0.5, calc_threshold = 0.0;
  CLI::App* c_omega = calc->add_subcommand("omega", "expected tokens per step");
  c_omega->add_option("--gamma", calc_gamma)->required();
  c_omega->add_option("--alpha", calc_alpha)->required();
  CLI::App* c_speedup = calc->add_subcommand("speedup", "wall-clock speedup");
  c_speedup->add_option("--gamma", calc_gamma)->required();
  c_speedup->add_option("--alpha", calc_alpha)->required();
  c_speedup->add_option("--cost", calc_cost, "c = T_D/T_V");
  CLI::App* c_be = calc->add_subcommand("breakeven", "expert-reuse break-even");
  c_be->add_option("--gamma", calc_gamma)->required();
  c_be->add_option("--alpha", calc_alpha)->required();
  c_be->add_option("--a", calc_a)->required();
  c_be->add_option("--b", calc_b)->required();
  CLI::App* c_snr = calc->add_subcommand("snr", "SNR gain of a window");
  c_snr->add_option("--window", calc_window)->required();
  CLI::App* c_entropy = calc->add_subcommand("entropy", "binomial demand entropy");
  c_entropy->add_option("--p", calc_p)->required();
  c_entropy->add_option("--window", calc_window)->required();
  CLI::App* c_margin = calc->add_subcommand("margin", "scheduling safety margin");
  c_margin->add_option("--freq", calc_freq)->required();
  c_margin->add_option("--threshold", calc_threshold)->required();
  calc->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_opts);
    if (sweep->parsed())
      return cmd_sweep(sweep_opts, axis, from, to, step, values_csv);
    if (gen->parsed()) return cmd_gen_trace(gen_opts, trace_out, gen_steps);
    if (calc->parsed()) {
      using namespace moesim::sd;
      if (c_omega->parsed())
        std::printf("%.8f\n",
                    expected_tokens({calc_gamma, calc_alpha, 0.0}));
      else if (c_speedup->parsed())
        std::printf("%.8f\n",
                    speedup_factor({calc_gamma, calc_alpha, calc_cost}));
      else if (c_be->parsed())
        std::printf("%s\n", reuse_breakeven({calc_gamma, calc_alpha, 0.0},
                                            {calc_a, calc_b})
                                ? "true"
                                : "false");
      else if (c_snr->parsed())
        std::printf("%.8f\n", snr_gain(calc_window));
      else if (c_entropy->parsed())
        std::printf("%.8f\n", demand_entropy({calc_p, calc_window}));
      else if (c_margin->parsed())
        std::printf("%.8f\n", safety_margin(calc_freq, calc_threshold));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
