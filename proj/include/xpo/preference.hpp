#pragma once

#include <cstdint>
#include <vector>

#include "xpo/dcmdp.hpp"
#include "xpo/rng.hpp"

namespace xpo {

/// Stable sigmoid 1 / (1 + exp(-x)).
double sigmoid(double x);

/// Stable softplus log(1 + exp(x)); satisfies softplus(-x) - softplus(x) = -x
/// exactly in floating point.
double softplus(double x);

/// Bradley-Terry win probability exp(r1) / (exp(r1) + exp(r2)) = sigmoid(r1 -
/// r2).  bt_prob(a, b) + bt_prob(b, a) == 1 exactly.
double bt_prob(double r_tau, double r_other);

/// A labeled preference between two trajectories sharing an initial state.
/// raw_draw is 1 iff the first-sampled trajectory won the Bernoulli draw.
struct PreferencePair {
  Trajectory tau_plus;
  Trajectory tau_minus;
  StateId initial_state = -1;
  int raw_draw = 0;
  double p_win = 0.0;  // probability that the first-sampled trajectory wins
};

/// Draws y ~ Bernoulli(bt_prob(r(tau), r(tau_other))) and orders the pair.
/// Throws if the trajectories start from different initial states.
PreferencePair label_pair(const Dcmdp& mdp, const Trajectory& tau,
                          const Trajectory& tau_other, Rng& rng);

/// Append-only, deterministically ordered preference data.
class PreferenceDataset {
 public:
  void append(PreferencePair pair, int iteration) {
    pairs_.push_back(std::move(pair));
    iterations_.push_back(iteration);
  }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const PreferencePair& operator[](std::size_t i) const { return pairs_[i]; }
  int iteration_of(std::size_t i) const { return iterations_[i]; }

 private:
  std::vector<PreferencePair> pairs_;
  std::vector<int> iterations_;
};

}  // namespace xpo
