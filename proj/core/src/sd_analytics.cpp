#include "moesim/sd_analytics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace moesim::sd {

void SDParams::validate() const {
  if (gamma < 0) throw std::invalid_argument("SDParams: gamma must be >= 0");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("SDParams: alpha must be in [0,1]");
  if (cost_ratio_c < 0.0)
    throw std::invalid_argument("SDParams: cost_ratio_c must be >= 0");
}

void ReuseCoefficients::validate() const {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("ReuseCoefficients: a and b must be > 0");
}

void DemandDistribution::validate() const {
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("DemandDistribution: p must be in [0,1]");
  if (window < 1)
    throw std::invalid_argument("DemandDistribution: window must be >= 1");
}

double expected_tokens(const SDParams& params) {
  params.validate();
  if (params.alpha == 1.0) return static_cast<double>(params.gamma + 1);
  return (1.0 - std::pow(params.alpha, params.gamma + 1)) / (1.0 - params.alpha);
}

double speedup_factor(const SDParams& params) {
  params.validate();
  return expected_tokens(params) / (params.gamma * params.cost_ratio_c + 1.0);
}

double omega_limit(double alpha) {
  if (alpha < 0.0 || alpha >= 1.0)
    throw std::domain_error("omega_limit: requires alpha in [0,1)");
  return 1.0 / (1.0 - alpha);
}

bool reuse_breakeven(const SDParams& params, const ReuseCoefficients& coeffs) {
  coeffs.validate();
  return coeffs.a / coeffs.b < expected_tokens(params);
}

bool reuse_breakeven_exact(const SDParams& params, const ReuseCoefficients& coeffs,
                           double draft_cost_over_z) {
  coeffs.validate();
  if (draft_cost_over_z < 0.0)
    throw std::invalid_argument("reuse_breakeven_exact: draft cost must be >= 0");
  return coeffs.a + params.gamma * draft_cost_over_z <
         coeffs.b * expected_tokens(params);
}

double snr_gain(int window) {
  if (window < 1) throw std::invalid_argument("snr_gain: window must be >= 1");
  return std::sqrt(static_cast<double>(window));
}

double demand_entropy(const DemandDistribution& d) {
  d.validate();
  // pmf via log-space binomial coefficients; stable for window <= a few
  // thousand, far beyond the gamma <= 64 regime this is used in.
  if (d.p == 0.0 || d.p == 1.0) return 0.0;
  const double log_p = std::log(d.p);
  const double log_q = std::log1p(-d.p);
  const double n = static_cast<double>(d.window);
  double h = 0.0;
  for (int k = 0; k <= d.window; ++k) {
    double log_pk = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                    std::lgamma(n - k + 1.0) + k * log_p + (n - k) * log_q;
    double pk = std::exp(log_pk);
    if (pk > 0.0) h -= pk * log_pk;
  }
  return h / std::log(2.0); // nats -> bits
}

double safety_margin(int true_freq, double freq_threshold) {
  if (true_freq < 0)
    throw std::invalid_argument("safety_margin: true_freq must be >= 0");
  return std::abs(static_cast<double>(true_freq) - freq_threshold);
}

} // namespace moesim::sd
