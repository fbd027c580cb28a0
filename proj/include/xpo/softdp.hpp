#pragma once

#include <optional>
#include <vector>

#include "xpo/dcmdp.hpp"
#include "xpo/rng.hpp"

namespace xpo {

/// Dense real-valued function on state-action pairs.
class StateActionFn {
 public:
  StateActionFn() = default;
  StateActionFn(const Dcmdp& mdp, double fill = 0.0)
      : num_actions_(mdp.num_actions()),
        values_(static_cast<std::size_t>(mdp.num_states()) * num_actions_,
                fill) {}
  StateActionFn(const Dcmdp& mdp, std::vector<double> values);

  double operator()(StateId s, ActionId a) const {
    return values_[static_cast<std::size_t>(s) * num_actions_ + a];
  }
  double& at(StateId s, ActionId a) {
    return values_[static_cast<std::size_t>(s) * num_actions_ + a];
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  int num_actions() const { return num_actions_; }

  static StateActionFn random_uniform(const Dcmdp& mdp, double lo, double hi,
                                      Rng& rng);

 private:
  int num_actions_ = 0;
  std::vector<double> values_;
};

/// Output of exact KL-regularized backward induction.
struct SoftSolution {
  StateActionFn qstar;
  std::vector<double> vstar;  // per state
  TabularPolicy pistar;
  double beta = 0.0;
};

/// Soft value V_f(s) = beta * log sum_a piref(a|s) exp(f(s,a)/beta),
/// computed with max-subtraction.  Requires beta > 0.
double soft_value(const Dcmdp& mdp, const StateActionFn& f, StateId s,
                  double beta, const TabularPolicy& piref);

/// The policy attaining V_f's variational maximum:
/// pi_f(a|s) = piref(a|s) exp((f(s,a) - V_f(s)) / beta).
TabularPolicy boltzmann_policy(const Dcmdp& mdp, const StateActionFn& f,
                               double beta, const TabularPolicy& piref);

/// KL-regularized Bellman backup: (T f)(s,a) = r(s,a) + V_f(next(s,a)) for
/// non-terminal layers and r(s,a) at the last layer.
StateActionFn bellman_op(const Dcmdp& mdp, const StateActionFn& f, double beta,
                         const TabularPolicy& piref);

/// Exact backward induction for (Q*, V*, pi*) at regularization beta.
///
/// piref must put positive mass on every action at every reachable state
/// unless allow_partial_support is set; the returned solution is validated
/// against the fixed-point and normalization tolerances before return.
SoftSolution solve_soft_dp(const Dcmdp& mdp, double beta,
                           const TabularPolicy& piref,
                           bool allow_partial_support = false);

/// Result of evaluating the KL-regularized objective.  On a support
/// violation in exact mode, value is -inf and support_witness names an
/// offending trajectory.
struct JBetaResult {
  double value = 0.0;
  double std_error = 0.0;
  std::optional<Trajectory> support_witness;
};

/// Exact J_beta(pi) = sum_tau d^pi(tau) [r(tau) - beta log(pi/piref)(tau)]
/// over the enumeration.  OpenMP-parallel with a deterministic reduction;
/// j_beta_exact_serial is the reference twin.
JBetaResult j_beta_exact(const TrajectorySpace& space, const TabularPolicy& pi,
                         double beta, const TabularPolicy& piref);
JBetaResult j_beta_exact_serial(const TrajectorySpace& space,
                                const TabularPolicy& pi, double beta,
                                const TabularPolicy& piref);

/// Monte Carlo estimate from n rollouts; std_error is the sample standard
/// error of the mean.
JBetaResult j_beta_monte_carlo(const Dcmdp& mdp, const TabularPolicy& pi,
                               double beta, const TabularPolicy& piref,
                               std::int64_t n, Rng& rng);

/// J_beta(pi*_beta) - J_beta(pi), computed exactly; >= -1e-9.
double kl_regret(const TrajectorySpace& space, const TabularPolicy& pi,
                 double beta, const TabularPolicy& piref);

/// Writes (state, action, qstar, vstar, pistar) rows as delimiter-separated
/// text for inspection and regression snapshots.
std::string export_soft_solution(const Dcmdp& mdp, const SoftSolution& sol);

}  // namespace xpo
