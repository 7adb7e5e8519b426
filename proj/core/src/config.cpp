#include "moesim/config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace moesim {

SimConfig default_sim_config() {
  SimConfig c;
  c.trace.n_layers = 48;
  c.trace.n_experts = 128;
  c.trace.top_k = 8;
  c.trace.gamma = 8;
  c.trace.alpha = 0.8;
  c.trace.drift_scale = 0.02;
  c.trace.route_noise = 0.2;
  c.trace.shift_period = 0;
  c.trace.seed = 1;

  c.profile.t_cpu_unit_ns = 100'000;    // per token-activation, sequential
  c.profile.t_gpu_unit_ns = 40'000;    // per distinct expert, batched pass
  c.profile.t_io_unit_ns = 400'000;    // full layer of experts = 10 GPU passes
  c.profile.t_draft_unit_ns = 300'000; // one draft-model token
  c.profile.expert_bytes = 25'000'000;
  c.profile.n_layers = c.trace.n_layers;
  c.profile.vram_capacity_bytes = 1; // derived by the simulation

  c.estimator.utility_cap = 4;
  c.estimator.forgetting = 0.1;
  c.estimator.gamma = c.trace.gamma;

  c.policy.kind = PolicyKind::moe_spac;
  c.cache_ratio = 0.17;
  c.token_budget = 512;
  return c;
}

namespace {

struct KeyRef {
  enum class Type { i32, i64, u64, f64, str, policy } type;
  void* ptr;
};

// The full key table over a config instance; parsing, override
// application, and echoing all walk the same list.
std::vector<std::pair<std::string, KeyRef>> key_table(SimConfig& c) {
  using T = KeyRef::Type;
  return {
      {"trace.file", {T::str, &c.trace_file}},
      {"trace.layers", {T::i32, &c.trace.n_layers}},
      {"trace.experts", {T::i32, &c.trace.n_experts}},
      {"trace.k", {T::i32, &c.trace.top_k}},
      {"trace.gamma", {T::i32, &c.trace.gamma}},
      {"trace.alpha", {T::f64, &c.trace.alpha}},
      {"trace.drift_scale", {T::f64, &c.trace.drift_scale}},
      {"trace.route_noise", {T::f64, &c.trace.route_noise}},
      {"trace.shift_period", {T::i32, &c.trace.shift_period}},
      {"trace.seed", {T::u64, &c.trace.seed}},
      {"profile.t_cpu_unit_ns", {T::i64, &c.profile.t_cpu_unit_ns}},
      {"profile.t_gpu_unit_ns", {T::i64, &c.profile.t_gpu_unit_ns}},
      {"profile.t_io_unit_ns", {T::i64, &c.profile.t_io_unit_ns}},
      {"profile.t_draft_unit_ns", {T::i64, &c.profile.t_draft_unit_ns}},
      {"profile.expert_bytes", {T::i64, &c.profile.expert_bytes}},
      {"estimator.utility_cap", {T::i32, &c.estimator.utility_cap}},
      {"estimator.lambda", {T::f64, &c.estimator.forgetting}},
      {"sim.policy", {T::policy, &c.policy.kind}},
      {"sim.fixed_tau", {T::i32, &c.policy.fixed_tau}},
      {"sim.fixed_up", {T::i32, &c.policy.fixed_up}},
      {"sim.fixed_down", {T::i32, &c.policy.fixed_down}},
      {"sim.cache_ratio", {T::f64, &c.cache_ratio}},
      {"sim.token_budget", {T::i64, &c.token_budget}},
      {"sim.max_steps", {T::i32, &c.max_steps}},
      {"sim.ratio_smoothing", {T::f64, &c.ratio_smoothing}},
      {"sim.warmup_steps", {T::i32, &c.warmup_steps}},
  };
}

void assign(const std::string& key, const KeyRef& ref,
            const std::string& value) {
  try {
    switch (ref.type) {
      case KeyRef::Type::i32:
        *static_cast<int*>(ref.ptr) = std::stoi(value);
        break;
      case KeyRef::Type::i64:
        *static_cast<std::int64_t*>(ref.ptr) = std::stoll(value);
        break;
      case KeyRef::Type::u64:
        *static_cast<std::uint64_t*>(ref.ptr) = std::stoull(value);
        break;
      case KeyRef::Type::f64:
        *static_cast<double*>(ref.ptr) = std::stod(value);
        break;
      case KeyRef::Type::str:
        *static_cast<std::string*>(ref.ptr) = value;
        break;
      case KeyRef::Type::policy:
        *static_cast<PolicyKind*>(ref.ptr) = parse_policy_kind(value);
        break;
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("config: bad value for " + key + ": " + value +
                             " (" + e.what() + ")");
  } catch (const std::out_of_range&) {
    throw std::runtime_error("config: value out of range for " + key);
  }
}

std::string render(const KeyRef& ref) {
  char buf[64];
  switch (ref.type) {
    case KeyRef::Type::i32:
      return std::to_string(*static_cast<int*>(ref.ptr));
    case KeyRef::Type::i64:
      return std::to_string(*static_cast<std::int64_t*>(ref.ptr));
    case KeyRef::Type::u64:
      return std::to_string(*static_cast<std::uint64_t*>(ref.ptr));
    case KeyRef::Type::f64: {
      auto [ptr, ec] =
          std::to_chars(buf, buf + sizeof(buf), *static_cast<double*>(ref.ptr));
      if (ec != std::errc{}) throw std::runtime_error("config: render failed");
      return {buf, ptr};
    }
    case KeyRef::Type::str:
      return *static_cast<std::string*>(ref.ptr);
    case KeyRef::Type::policy:
      return policy_kind_name(*static_cast<PolicyKind*>(ref.ptr));
  }
  throw std::logic_error("unreachable");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply(SimConfig& config, const std::string& full_key,
           const std::string& value) {
  for (auto& [name, ref] : key_table(config)) {
    if (name == full_key) {
      assign(name, ref, value);
      return;
    }
  }
  throw std::runtime_error("config: unknown key '" + full_key + "'");
}

} // namespace

SimConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides) {
  SimConfig config = default_sim_config();
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config:" + std::to_string(line_no) +
                                 ": malformed section header");
      section = line.substr(1, line.size() - 2);
      if (section != "trace" && section != "profile" &&
          section != "estimator" && section != "sim")
        throw std::runtime_error("config: unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config:" + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw std::runtime_error("config: key '" + key + "' outside a section");
    apply(config, section + "." + key, value);
  }
  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: override must be section.key=value: " +
                               ov);
    apply(config, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return config;
}

SimConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

void echo_config(const SimConfig& config, std::ostream& out) {
  SimConfig mutable_copy = config;
  std::string current_section;
  for (auto& [name, ref] : key_table(mutable_copy)) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current_section) {
      if (!current_section.empty()) out << '\n';
      out << '[' << section << "]\n";
      current_section = section;
    }
    out << name.substr(dot + 1) << " = " << render(ref) << '\n';
  }
}

std::string echo_config_string(const SimConfig& config) {
  std::ostringstream out;
  echo_config(config, out);
  return out.str();
}

} // namespace moesim
