#include "xpo/preference.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace xpo {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double t = std::exp(x);
  return t / (1.0 + t);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double bt_prob(double r_tau, double r_other) {
  if (!std::isfinite(r_tau) || !std::isfinite(r_other))
    throw std::invalid_argument("bt_prob: rewards must be finite");
  // sigmoid(d) for d >= 0 lies in [1/2, 1], so the complement 1 - p is exact
  // and bt_prob(a, b) + bt_prob(b, a) == 1 holds bitwise.
  if (r_tau >= r_other) return sigmoid(r_tau - r_other);
  return 1.0 - sigmoid(r_other - r_tau);
}

PreferencePair label_pair(const Dcmdp& mdp, const Trajectory& tau,
                          const Trajectory& tau_other, Rng& rng) {
  check_admissible(mdp, tau);
  check_admissible(mdp, tau_other);
  if (tau.initial_state != tau_other.initial_state)
    throw std::invalid_argument(
        "label_pair: trajectories start from different initial states (" +
        std::to_string(tau.initial_state) + " vs " +
        std::to_string(tau_other.initial_state) + ")");

  PreferencePair pair;
  pair.initial_state = tau.initial_state;
  pair.p_win = bt_prob(tau.total_reward, tau_other.total_reward);
  pair.raw_draw = rng.bernoulli(pair.p_win) ? 1 : 0;
  if (pair.raw_draw) {
    pair.tau_plus = tau;
    pair.tau_minus = tau_other;
  } else {
    pair.tau_plus = tau_other;
    pair.tau_minus = tau;
  }
  return pair;
}

}  // namespace xpo
