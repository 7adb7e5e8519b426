#include "moesim/trace_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace moesim {

void TraceConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("TraceConfig: n_layers >= 1");
  if (n_experts < 1) throw std::invalid_argument("TraceConfig: n_experts >= 1");
  if (top_k < 1 || top_k > n_experts)
    throw std::invalid_argument("TraceConfig: requires 1 <= k <= N");
  if (gamma < 1) throw std::invalid_argument("TraceConfig: gamma >= 1");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("TraceConfig: alpha in [0,1]");
  if (drift_scale < 0.0 || route_noise < 0.0)
    throw std::invalid_argument("TraceConfig: noise scales must be >= 0");
  if (shift_period < 0)
    throw std::invalid_argument("TraceConfig: shift_period >= 0");
}

namespace {

// Hand-rolled transforms so traces are bit-identical across standard
// library implementations (std distributions are not pinned).
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; one draw per call keeps the stream simple.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  while (u1 == 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793 * u2);
}

double gumbel(std::mt19937_64& rng) {
  double u = uniform01(rng);
  while (u == 0.0) u = uniform01(rng);
  return -std::log(-std::log(u));
}

} // namespace

int sample_accept_length(double alpha, int gamma, std::mt19937_64& rng) {
  if (alpha < 0.0 || alpha > 1.0 || gamma < 0)
    throw std::invalid_argument("sample_accept_length: invalid parameters");
  int accepted = 0;
  while (accepted < gamma && uniform01(rng) < alpha) ++accepted;
  return accepted + 1;
}

TraceGenerator::TraceGenerator(TraceConfig config)
    : config_(config), rng_(config.seed) {
  config_.validate();
  logits_.resize(config_.n_layers);
  redraw_logits();
}

void TraceGenerator::redraw_logits() {
  for (auto& layer : logits_) {
    layer.resize(config_.n_experts);
    for (double& v : layer) v = gaussian(rng_);
  }
}

StepActivations TraceGenerator::next_step() {
  ++step_;
  if (config_.shift_period > 0 && step_ > 1 &&
      (step_ - 1) % config_.shift_period == 0)
    redraw_logits();

  if (config_.drift_scale > 0.0)
    for (auto& layer : logits_)
      for (double& v : layer) v += config_.drift_scale * gaussian(rng_);

  StepActivations acts;
  const int n_tokens = config_.gamma + 1;
  acts.experts.resize(config_.n_layers);
  std::vector<std::pair<double, int>> keyed(config_.n_experts);
  for (int l = 0; l < config_.n_layers; ++l) {
    acts.experts[l].resize(n_tokens);
    for (int t = 0; t < n_tokens; ++t) {
      for (int e = 0; e < config_.n_experts; ++e) {
        double noise = config_.route_noise > 0.0
                           ? config_.route_noise * gumbel(rng_)
                           : 0.0;
        keyed[e] = {logits_[l][e] + noise, e};
      }
      std::partial_sort(keyed.begin(), keyed.begin() + config_.top_k,
                        keyed.end(), [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                        });
      auto& tok = acts.experts[l][t];
      tok.resize(config_.top_k);
      for (int j = 0; j < config_.top_k; ++j) tok[j] = keyed[j].second;
      std::sort(tok.begin(), tok.end());
    }
  }
  acts.accepted_count = sample_accept_length(config_.alpha, config_.gamma, rng_);
  return acts;
}

Trace TraceGenerator::generate(int n_steps) {
  Trace trace;
  trace.n_layers = config_.n_layers;
  trace.n_experts = config_.n_experts;
  trace.top_k = config_.top_k;
  trace.gamma = config_.gamma;
  trace.steps.reserve(n_steps);
  for (int i = 0; i < n_steps; ++i) trace.steps.push_back(next_step());
  return trace;
}

std::vector<int> activation_frequencies(const StepActivations& acts, int layer,
                                        int n_experts) {
  if (layer < 0 || layer >= static_cast<int>(acts.experts.size()))
    throw std::out_of_range("activation_frequencies: layer out of range");
  std::vector<int> freqs(n_experts, 0);
  for (const auto& token : acts.experts[layer])
    for (int e : token) ++freqs.at(e);
  return freqs;
}

void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace: cannot open " + path);
  out << "#moetrace v1 layers=" << trace.n_layers << " experts="
      << trace.n_experts << " k=" << trace.top_k << " gamma=" << trace.gamma
      << '\n';
  for (size_t s = 0; s < trace.steps.size(); ++s) {
    const StepActivations& acts = trace.steps[s];
    for (int l = 0; l < trace.n_layers; ++l) {
      out << s << ' ' << l << ' ' << acts.accepted_count;
      for (const auto& token : acts.experts[l]) {
        out << ' ';
        for (size_t j = 0; j < token.size(); ++j) {
          if (j) out << ',';
          out << token[j];
        }
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write_trace: write failed on " + path);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line_no,
                             const std::string& what) {
  throw std::runtime_error("read_trace: " + path + ":" +
                           std::to_string(line_no) + ": " + what);
}

} // namespace

Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trace: cannot open " + path);

  Trace trace;
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) return trace; // empty file -> empty trace
  {
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != "#moetrace" || version != "v1")
      parse_fail(path, line_no, "bad header magic");
    std::string field;
    while (hs >> field) {
      auto eq = field.find('=');
      if (eq == std::string::npos) parse_fail(path, line_no, "bad header field");
      const std::string key = field.substr(0, eq);
      const int value = std::stoi(field.substr(eq + 1));
      if (key == "layers") trace.n_layers = value;
      else if (key == "experts") trace.n_experts = value;
      else if (key == "k") trace.top_k = value;
      else if (key == "gamma") trace.gamma = value;
      else parse_fail(path, line_no, "unknown header key " + key);
    }
    if (trace.n_layers < 1 || trace.n_experts < 1 || trace.top_k < 1 ||
        trace.gamma < 1)
      parse_fail(path, line_no, "incomplete header");
  }

  const int n_tokens = trace.gamma + 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int step, layer, accepted;
    if (!(ls >> step >> layer >> accepted))
      parse_fail(path, line_no, "malformed record prefix");
    if (step != static_cast<int>(trace.steps.size()) - 1 &&
        step != static_cast<int>(trace.steps.size()))
      parse_fail(path, line_no, "step index out of order");
    if (step == static_cast<int>(trace.steps.size())) {
      StepActivations acts;
      acts.experts.resize(trace.n_layers);
      acts.accepted_count = accepted;
      trace.steps.push_back(std::move(acts));
    }
    StepActivations& acts = trace.steps.back();
    if (layer < 0 || layer >= trace.n_layers)
      parse_fail(path, line_no, "layer out of range");
    if (accepted != acts.accepted_count)
      parse_fail(path, line_no, "inconsistent accepted count");
    if (accepted < 1 || accepted > n_tokens)
      parse_fail(path, line_no, "accepted count out of range");
    if (!acts.experts[layer].empty())
      parse_fail(path, line_no, "duplicate (step, layer) record");

    auto& tokens = acts.experts[layer];
    std::string group;
    while (ls >> group) {
      std::vector<int> ids;
      std::istringstream gs(group);
      std::string id;
      while (std::getline(gs, id, ',')) {
        try {
          ids.push_back(std::stoi(id));
        } catch (const std::exception&) {
          parse_fail(path, line_no, "bad expert id '" + id + "'");
        }
      }
      if (static_cast<int>(ids.size()) != trace.top_k)
        parse_fail(path, line_no, "token group is not top-k sized");
      for (int e : ids)
        if (e < 0 || e >= trace.n_experts)
          parse_fail(path, line_no, "expert id out of range");
      tokens.push_back(std::move(ids));
    }
    if (static_cast<int>(tokens.size()) != n_tokens)
      parse_fail(path, line_no, "expected gamma+1 token groups");
  }

  // Every step must carry all layers.
  for (size_t s = 0; s < trace.steps.size(); ++s)
    for (int l = 0; l < trace.n_layers; ++l)
      if (trace.steps[s].experts[l].empty())
        parse_fail(path, line_no, "missing layer " + std::to_string(l) +
                                      " in step " + std::to_string(s));
  return trace;
}

} // namespace moesim
