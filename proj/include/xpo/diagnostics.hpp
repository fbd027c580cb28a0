#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xpo/policy.hpp"
#include "xpo/softdp.hpp"

namespace xpo {

/// Coverage coefficients of a finite policy set.
///
/// c_cov is computed by the closed form sum_tau max_pi d^pi(tau) with
/// mu_star proportional to the per-trajectory maxima; the test suite holds
/// an independent optimization oracle for it.  c_conc is
/// sup_tau sup_pi pi(tau)/piref(tau) (infinite on support violation).
struct CoefficientReport {
  double c_cov = 1.0;
  double c_conc = 0.0;
  std::vector<double> mu_star;  // over the canonical enumeration, may be empty
  std::int64_t witness_trajectory = -1;  // argmax of max_pi d^pi
  int witness_policy = -1;
};

CoefficientReport coverability(const TrajectorySpace& space,
                               std::span<const TabularPolicy> policies,
                               bool materialize_mu = true);

double concentrability(const TrajectorySpace& space,
                       std::span<const TabularPolicy> policies,
                       const TabularPolicy& piref);

/// Max over enumerated trajectories of the absolute defect in the
/// internal-reward identity
///   beta log(pi_f(tau)/piref(tau))
///     = r(tau) - V_f(s1) + sum_h (f - T f)(s_h, a_h).
/// Exact in exact arithmetic for any f; requires full-support piref.
double implicit_q_residual(const TrajectorySpace& space, const StateActionFn& f,
                           double beta, const TabularPolicy& piref);

struct RegretDecomposition {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

/// Exact two-sided evaluation of the regret decomposition
///   J(pi*) - J(pi) = E_nu[beta log pi] - E_nu[beta log pi*]
///                    + E_pi[beta log(pi/piref) - r] - E_nu[beta log(pi/piref) - r].
/// Throws on a support violation (pi zero on nu-support, etc.).
RegretDecomposition regret_decomposition_check(const TrajectorySpace& space,
                                               const TabularPolicy& pi,
                                               const TabularPolicy& nu,
                                               double beta,
                                               const TabularPolicy& piref);

/// J_beta evaluated through the per-step KL form (forward state-occupancy
/// recursion); an algebraically independent route from the trajectory sum.
double j_beta_stepwise(const Dcmdp& mdp, const TabularPolicy& pi, double beta,
                       const TabularPolicy& piref);

struct SecReport {
  double value = 0.0;
  double vmax = 0.0;
  std::vector<int> argmax_sequence;  // exhaustive mode only
};

/// Sequential extrapolation sum for a concrete policy sequence under the
/// reference comparator: per step, squared expected preference discrepancy
/// over pi^(t) x piref divided by max(vmax^2, sum over history of the
/// discrepancy's second moment).  The t = 1 summand uses the vmax^2 floor
/// alone, capped at 1.
SecReport sec_estimate_realized(const TrajectorySpace& space,
                                std::span<const TabularPolicy> sequence,
                                double beta, const TabularPolicy& piref,
                                std::optional<double> vmax = std::nullopt);

/// Maximum of the same sum over all member sequences of length T
/// (|class|^T sequences, capped).
SecReport sec_estimate_exhaustive(const TrajectorySpace& space,
                                  const FinitePolicyClass& klass, double beta,
                                  const TabularPolicy& piref, int T,
                                  std::int64_t cap = 1'000'000);

/// Worst ratio |x - y| / (8 (X + Y) e^{2Y} |sigma(x) - sigma(y)|) over an
/// n x n grid of [-X, X] x [-Y, Y], excluding x == y.  Requires Y >= 1; the
/// bound holds iff the result is <= 1.  OpenMP-parallel with a serial twin.
double sigmoid_gap_worst_ratio(double x_range, double y_range, int resolution);
double sigmoid_gap_worst_ratio_serial(double x_range, double y_range,
                                      int resolution);

/// Two-armed bandit on which passive preference optimization stalls:
/// rewards (1, 1/2), piref = (eps, 1 - eps) with eps = exp(-c/beta), and the
/// class {piref, pi*_beta} listed reference-first.
struct CounterexampleInstance {
  Dcmdp mdp;
  TabularPolicy piref;
  FinitePolicyClass klass;
  double epsilon = 0.0;
};

CounterexampleInstance counterexample_instance(double beta, double c);

/// One named identity / bound check with its witness.
struct DiagRecord {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

/// Runs the full identity battery on an instance: soft-DP fixed point,
/// internal-reward identities, regret decomposition, variational and shift
/// properties, objective-route agreement, coefficient bounds, the sigmoid
/// gap bound, and the extrapolation-vs-coverability bound.
std::vector<DiagRecord> identity_battery(const Dcmdp& mdp,
                                         const TrajectorySpace& space,
                                         const TabularPolicy& piref,
                                         double beta, std::uint64_t seed);

}  // namespace xpo
