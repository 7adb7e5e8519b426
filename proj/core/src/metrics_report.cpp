#include "moesim/metrics_report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace moesim {

RunSummary summarize(std::span<const StepReport> reports) {
  if (reports.empty())
    throw std::invalid_argument("summarize: no step reports");

  RunSummary s;
  std::int64_t wall_sum = 0, bubble_sum = 0;
  std::int64_t hits = 0, misses = 0, fn = 0, fp = 0, expert_steps = 0;
  double accuracy_sum = 0.0;
  for (const StepReport& r : reports) {
    s.total_tokens += r.accepted_tokens;
    s.total_time_ns += r.step_wall_ns;
    hits += r.cache_hits;
    misses += r.cache_misses;
    fn += r.faults_fn;
    fp += r.faults_fp;
    expert_steps +=
        static_cast<std::int64_t>(r.layers.size()) * r.n_experts;
    for (const LayerTiming& lt : r.layers) {
      wall_sum += lt.wall_ns;
      bubble_sum += lt.bubble_ns;
    }
    s.accuracy_series.push_back(r.accuracy);
    accuracy_sum += r.accuracy;
  }
  if (s.total_time_ns <= 0)
    throw std::invalid_argument("summarize: run has no simulated time");

  const double seconds = static_cast<double>(s.total_time_ns) * 1e-9;
  s.tps = static_cast<double>(s.total_tokens) / seconds;
  s.latency_s = seconds;
  s.hit_rate = hits + misses > 0
                   ? static_cast<double>(hits) / static_cast<double>(hits + misses)
                   : 0.0;
  s.bubble_ratio = wall_sum > 0 ? static_cast<double>(bubble_sum) /
                                      static_cast<double>(wall_sum)
                                : 0.0;
  s.fn_rate = static_cast<double>(fn) / static_cast<double>(expert_steps);
  s.fp_rate = static_cast<double>(fp) / static_cast<double>(expert_steps);
  s.fault_rate = s.fn_rate + s.fp_rate;
  s.mean_accuracy = accuracy_sum / static_cast<double>(reports.size());
  return s;
}

namespace {

constexpr const char* kMagic = "#moesim-metrics v1";
constexpr const char* kCsvColumns =
    "axis,axis_value,tps,latency_s,hit_rate,bubble_ratio,fault_rate,"
    "fn_rate,fp_rate,mean_accuracy,total_tokens,total_time_ns";

// Shortest round-trip representation, so parse + re-emit is byte stable.
std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("fmt: to_chars failed");
  return {buf, ptr};
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("parse_metrics: bad number '" + s + "'");
  return v;
}

void emit_csv(std::span<const RunSummary> summaries, std::ostream& out) {
  out << kMagic << " csv\n" << kCsvColumns << '\n';
  for (const RunSummary& s : summaries) {
    out << s.axis_name << ',' << fmt(s.axis_value) << ',' << fmt(s.tps) << ','
        << fmt(s.latency_s) << ',' << fmt(s.hit_rate) << ','
        << fmt(s.bubble_ratio) << ',' << fmt(s.fault_rate) << ','
        << fmt(s.fn_rate) << ',' << fmt(s.fp_rate) << ','
        << fmt(s.mean_accuracy) << ',' << s.total_tokens << ','
        << s.total_time_ns << '\n';
  }
}

void emit_jsonl(std::span<const RunSummary> summaries, std::ostream& out) {
  out << kMagic << " jsonl\n";
  for (const RunSummary& s : summaries) {
    nlohmann::json j;
    j["axis"] = s.axis_name;
    j["axis_value"] = s.axis_value;
    j["tps"] = s.tps;
    j["latency_s"] = s.latency_s;
    j["hit_rate"] = s.hit_rate;
    j["bubble_ratio"] = s.bubble_ratio;
    j["fault_rate"] = s.fault_rate;
    j["fn_rate"] = s.fn_rate;
    j["fp_rate"] = s.fp_rate;
    j["mean_accuracy"] = s.mean_accuracy;
    j["accuracy_series"] = s.accuracy_series;
    j["total_tokens"] = s.total_tokens;
    j["total_time_ns"] = s.total_time_ns;
    out << j.dump() << '\n';
  }
}

} // namespace

void emit(std::span<const RunSummary> summaries, MetricsFormat format,
          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit: cannot open " + path);
  if (format == MetricsFormat::csv)
    emit_csv(summaries, out);
  else
    emit_jsonl(summaries, out);
  if (!out) throw std::runtime_error("emit: write failed on " + path);
}

std::vector<RunSummary> parse_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_metrics: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kMagic, 0) != 0)
    throw std::runtime_error("parse_metrics: missing schema header");
  const bool csv = line.find(" csv") != std::string::npos;

  std::vector<RunSummary> out;
  if (csv) {
    if (!std::getline(in, line) || line != kCsvColumns)
      throw std::runtime_error("parse_metrics: unexpected CSV columns");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (cells.size() != 12)
        throw std::runtime_error("parse_metrics: bad CSV row: " + line);
      RunSummary s;
      s.axis_name = cells[0];
      s.axis_value = parse_double(cells[1]);
      s.tps = parse_double(cells[2]);
      s.latency_s = parse_double(cells[3]);
      s.hit_rate = parse_double(cells[4]);
      s.bubble_ratio = parse_double(cells[5]);
      s.fault_rate = parse_double(cells[6]);
      s.fn_rate = parse_double(cells[7]);
      s.fp_rate = parse_double(cells[8]);
      s.mean_accuracy = parse_double(cells[9]);
      s.total_tokens = std::stoll(cells[10]);
      s.total_time_ns = std::stoll(cells[11]);
      out.push_back(std::move(s));
    }
  } else {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      RunSummary s;
      s.axis_name = j.at("axis").get<std::string>();
      s.axis_value = j.at("axis_value").get<double>();
      s.tps = j.at("tps").get<double>();
      s.latency_s = j.at("latency_s").get<double>();
      s.hit_rate = j.at("hit_rate").get<double>();
      s.bubble_ratio = j.at("bubble_ratio").get<double>();
      s.fault_rate = j.at("fault_rate").get<double>();
      s.fn_rate = j.at("fn_rate").get<double>();
      s.fp_rate = j.at("fp_rate").get<double>();
      s.mean_accuracy = j.at("mean_accuracy").get<double>();
      s.accuracy_series = j.at("accuracy_series").get<std::vector<double>>();
      s.total_tokens = j.at("total_tokens").get<std::int64_t>();
      s.total_time_ns = j.at("total_time_ns").get<std::int64_t>();
      out.push_back(std::move(s));
    }
  }
  return out;
}

} // namespace moesim
