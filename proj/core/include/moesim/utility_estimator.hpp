#ifndef MOESIM_UTILITY_ESTIMATOR_HPP
#define MOESIM_UTILITY_ESTIMATOR_HPP

// Per-expert discrete utility scores evolved by inertial transitions with
// adaptively calibrated fluctuation boundaries.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace moesim {

struct EstimatorConfig {
  int utility_cap = 4;      // K, upper bound of the discrete utility space
  double forgetting = 0.1;  // lambda, moving-average forgetting factor
  int gamma = 8;            // draft length, used for boundary initialization
  bool adaptive_boundaries = true; // false: boundaries stay at their init values
  int init_up = -1;   // explicit initial theta-up; -1 = floor(gamma/2)
  int init_down = -1; // explicit initial theta-down; -1 = floor(gamma/2)

  void validate() const;
};

struct ExpertUtilityState {
  int score = 0;         // s in [0, K]
  int up_boundary = 0;   // theta-up
  int down_boundary = 0; // theta-down
  int last_freq = 0;     // f_{t-1}
};

// Utility states for the N experts of one layer.
class LayerEstimator {
public:
  LayerEstimator(int n_experts, EstimatorConfig config);

  // Ingest one verification step's activation frequencies (one count per
  // expert). Scores move by at most one level; exactly one boundary is
  // recalibrated per expert depending on the fluctuation sign.
  void observe_step(std::span<const int> freqs);

  // Current score vector; does not mutate state.
  std::vector<int> snapshot_scores() const;

  int n_experts() const { return static_cast<int>(states_.size()); }
  const EstimatorConfig& config() const { return config_; }
  const ExpertUtilityState& state(int expert) const { return states_.at(expert); }

  // Checkpoint format: one line per expert,
  // "<layer> <expert> <score> <up> <down> <last_freq>".
  void dump(std::ostream& out, int layer) const;
  static LayerEstimator load(std::istream& in, int n_experts,
                             const EstimatorConfig& config);

private:
  EstimatorConfig config_;
  std::vector<ExpertUtilityState> states_;
};

} // namespace moesim

#endif
