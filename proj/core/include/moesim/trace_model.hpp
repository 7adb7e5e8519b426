#ifndef MOESIM_TRACE_MODEL_HPP
#define MOESIM_TRACE_MODEL_HPP

// Expert-activation workloads: a synthetic generator with controllable
// temporal drift over latent routing logits, a trace-file replayer, and
// the acceptance-length sampler for verification steps.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace moesim {

struct TraceConfig {
  int n_layers = 1;
  int n_experts = 8;  // N
  int top_k = 2;      // k
  int gamma = 8;      // draft length; each step carries gamma+1 tokens
  double alpha = 0.8; // draft acceptance probability
  double drift_scale = 0.02; // random-walk step size on latent logits
  double route_noise = 0.2;  // per-token Gumbel noise scale; 0 = deterministic
  int shift_period = 0;      // steps between abrupt regime redraws; 0 = never
  std::uint64_t seed = 1;

  void validate() const;
};

// One verification step: per-layer, per-token top-k expert selections over
// the gamma+1 verified tokens, plus how many tokens were accepted.
struct StepActivations {
  // experts[layer][token] is a list of top_k distinct expert ids.
  std::vector<std::vector<std::vector<int>>> experts;
  int accepted_count = 1; // in [1, gamma+1]

  bool operator==(const StepActivations&) const = default;
};

struct Trace {
  int n_layers = 0;
  int n_experts = 0;
  int top_k = 0;
  int gamma = 0;
  std::vector<StepActivations> steps;

  bool operator==(const Trace&) const = default;
};

// Leading accepted drafts + 1: each draft independently accepted with
// probability alpha, stopping at the first rejection.
int sample_accept_length(double alpha, int gamma, std::mt19937_64& rng);

// Gaussian random-walk latent logits per layer; per-token Gumbel-perturbed
// top-k realizes smooth activation probabilities. Sequential by nature
// (the walk is a chain).
class TraceGenerator {
public:
  explicit TraceGenerator(TraceConfig config);

  StepActivations next_step();
  Trace generate(int n_steps);

  const TraceConfig& config() const { return config_; }

private:
  void redraw_logits();

  TraceConfig config_;
  std::mt19937_64 rng_;
  std::vector<std::vector<double>> logits_; // [layer][expert]
  int step_ = 0;
};

// Per-expert activation counts over all gamma+1 verified tokens of one
// layer (the verification pass routes every draft regardless of acceptance).
std::vector<int> activation_frequencies(const StepActivations& acts, int layer,
                                        int n_experts);

// Line-delimited text format, bit-exact round trip:
//   #moetrace v1 layers=L experts=N k=K gamma=G
//   <step> <layer> <accepted> <e,e,..> <e,e,..> ...   (gamma+1 token groups)
Trace read_trace(const std::string& path);
void write_trace(const Trace& trace, const std::string& path);

} // namespace moesim

#endif
