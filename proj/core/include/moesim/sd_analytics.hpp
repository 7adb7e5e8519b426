#ifndef MOESIM_SD_ANALYTICS_HPP
#define MOESIM_SD_ANALYTICS_HPP

// Closed-form speculative-decoding economics: expected tokens per
// verification step, wall-clock speedup, expert-reuse break-even,
// signal quality (SNR, entropy) and fault-tolerance margins.

namespace moesim::sd {

struct SDParams {
  int gamma = 0;           // draft length, >= 0
  double alpha = 0.0;      // per-token acceptance probability, in [0,1]
  double cost_ratio_c = 0; // c = T_D / T_V, >= 0

  void validate() const;
};

// Per-window activation coefficients for SD (de-duplicated) and AR.
struct ReuseCoefficients {
  double a = 1.0; // SD de-duplicated activation coefficient
  double b = 1.0; // AR activation coefficient

  void validate() const;
};

struct DemandDistribution {
  double p = 0.0; // activation probability, in [0,1]
  int window = 1; // number of verified tokens (gamma + 1), >= 1

  void validate() const;
};

// Expected number of generated tokens per verification step,
// (1 - alpha^(gamma+1)) / (1 - alpha); gamma+1 in the alpha=1 limit.
double expected_tokens(const SDParams& params);

// Wall-clock speedup over autoregressive decoding,
// (1 - alpha^(gamma+1)) / ((1 - alpha) * (gamma*c + 1)).
double speedup_factor(const SDParams& params);

// Asymptotic bound 1/(1-alpha) as gamma grows. Throws for alpha = 1.
double omega_limit(double alpha);

// True iff expert reuse amortizes the loading cost: a/b strictly below
// the expected token count. The default ignores the draft-cost term.
bool reuse_breakeven(const SDParams& params, const ReuseCoefficients& coeffs);

// Exact per-output-token comparison including the draft-cost term
// gamma * draft_cost_over_z; reduces to the simple form at 0.
bool reuse_breakeven_exact(const SDParams& params, const ReuseCoefficients& coeffs,
                           double draft_cost_over_z);

// Multiplicative SNR advantage of a window-sized demand signal: sqrt(window).
double snr_gain(int window);

// Shannon entropy (bits) of Binomial(window, p) by exact summation.
double demand_entropy(const DemandDistribution& d);

// Distance |true_freq - freq_threshold| between realized demand and the
// frequency threshold; the estimation-error budget before a fault.
double safety_margin(int true_freq, double freq_threshold);

} // namespace moesim::sd

#endif
