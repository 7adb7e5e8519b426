#include "moesim/utility_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace moesim {

void EstimatorConfig::validate() const {
  if (utility_cap < 1)
    throw std::invalid_argument("EstimatorConfig: utility cap K must be >= 1");
  if (forgetting < 0.0 || forgetting > 1.0)
    throw std::invalid_argument("EstimatorConfig: forgetting factor must be in [0,1]");
  if (gamma < 1)
    throw std::invalid_argument("EstimatorConfig: gamma must be >= 1");
  if (utility_cap > gamma)
    throw std::invalid_argument("EstimatorConfig: requires K <= gamma");
}

LayerEstimator::LayerEstimator(int n_experts, EstimatorConfig config)
    : config_(config) {
  config_.validate();
  if (n_experts < 1)
    throw std::invalid_argument("LayerEstimator: empty layer");
  ExpertUtilityState init;
  init.up_boundary = config_.init_up >= 0 ? config_.init_up : config_.gamma / 2;
  init.down_boundary =
      config_.init_down >= 0 ? config_.init_down : config_.gamma / 2;
  states_.assign(n_experts, init);
}

namespace {

// Moving-average recalibration with floor. Clamped to >= 1: a zero
// boundary would turn every nonzero fluctuation (and, under ">=", even
// a zero one) into a transition trigger, defeating the inertia.
int calibrate(int boundary, double lambda, int magnitude) {
  double next = (1.0 - lambda) * boundary + lambda * magnitude;
  return std::max(1, static_cast<int>(std::floor(next)));
}

} // namespace

void LayerEstimator::observe_step(std::span<const int> freqs) {
  if (static_cast<int>(freqs.size()) != n_experts())
    throw std::invalid_argument("observe_step: frequency vector shape mismatch");
  const int cap = config_.utility_cap;
  const double lambda = config_.forgetting;
  for (size_t i = 0; i < states_.size(); ++i) {
    ExpertUtilityState& st = states_[i];
    const int delta = freqs[i] - st.last_freq;

    // Inertial utility transition.
    if (delta >= st.up_boundary)
      st.score = std::min(cap, st.score + 1);
    else if (-delta >= st.down_boundary)
      st.score = std::max(0, st.score - 1);

    // Adaptive boundary calibration: only the boundary on the side of
    // the observed fluctuation moves.
    if (config_.adaptive_boundaries) {
      if (delta > 0)
        st.up_boundary = calibrate(st.up_boundary, lambda, delta);
      else if (delta < 0)
        st.down_boundary = calibrate(st.down_boundary, lambda, -delta);
    }
    st.last_freq = freqs[i];
  }
}

std::vector<int> LayerEstimator::snapshot_scores() const {
  std::vector<int> scores(states_.size());
  std::transform(states_.begin(), states_.end(), scores.begin(),
                 [](const ExpertUtilityState& st) { return st.score; });
  return scores;
}

void LayerEstimator::dump(std::ostream& out, int layer) const {
  for (size_t i = 0; i < states_.size(); ++i) {
    const ExpertUtilityState& st = states_[i];
    out << layer << ' ' << i << ' ' << st.score << ' ' << st.up_boundary << ' '
        << st.down_boundary << ' ' << st.last_freq << '\n';
  }
}

LayerEstimator LayerEstimator::load(std::istream& in, int n_experts,
                                    const EstimatorConfig& config) {
  LayerEstimator est(n_experts, config);
  for (int i = 0; i < n_experts; ++i) {
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("LayerEstimator::load: truncated checkpoint");
    std::istringstream ls(line);
    int layer, expert;
    ExpertUtilityState st;
    if (!(ls >> layer >> expert >> st.score >> st.up_boundary >>
          st.down_boundary >> st.last_freq))
      throw std::runtime_error("LayerEstimator::load: malformed record: " + line);
    if (expert < 0 || expert >= n_experts)
      throw std::runtime_error("LayerEstimator::load: expert id out of range");
    est.states_[expert] = st;
  }
  return est;
}

} // namespace moesim
