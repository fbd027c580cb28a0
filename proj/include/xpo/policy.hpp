#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xpo/dcmdp.hpp"
#include "xpo/rng.hpp"

namespace xpo {

/// Clipping interval for log density ratios.  The default follows the
/// convention of clamping to [-500, 500]; clipping is applied only where a
/// caller asks for it (the optimism term), never inside the preference loss.
struct ClipBounds {
  double lo = -500.0;
  double hi = 500.0;
};

/// log pi(tau) = sum_h log pi(a_h | s_h); -inf when any factor is zero.
double log_prob(const TabularPolicy& pi, const Trajectory& tau);

/// Unclipped log(pi(tau)/piref(tau)), accumulated per step as a difference of
/// log probabilities.  Per-step conventions: both probabilities zero
/// contributes 0, pi > 0 = piref gives +inf (support violation), pi = 0 <
/// piref gives -inf.
double log_ratio(const TabularPolicy& pi, const TabularPolicy& piref,
                 const Trajectory& tau);

/// Clamped variant used by the optimism term.
double log_ratio(const TabularPolicy& pi, const TabularPolicy& piref,
                 const Trajectory& tau, ClipBounds clip);

/// Empirical bound beta * max |log(pi(tau)/piref(tau))| over the policies
/// and the enumerated trajectories.  Infinite when some policy escapes the
/// support of piref.
struct VmaxReport {
  double vmax = 0.0;
  bool finite = true;
  std::int64_t witness_trajectory = -1;
  int witness_policy = -1;
};

VmaxReport vmax_check(std::span<const TabularPolicy> policies, double beta,
                      const TabularPolicy& piref, const TrajectorySpace& space);

/// Explicit finite policy class with stable indices.
struct FinitePolicyClass {
  std::vector<TabularPolicy> members;
  std::vector<std::string> labels;  // optional, empty or one per member

  std::size_t size() const { return members.size(); }
};

/// Log-linear policy pi_theta(a|s) = piref(a|s) exp(<phi(s,a), theta>/beta) /
/// Z(s) over a fixed feature map.
class LogLinearPolicy {
 public:
  LogLinearPolicy(const Dcmdp& mdp, const FeatureMap& phi,
                  std::vector<double> theta, double beta,
                  const TabularPolicy& piref);

  const std::vector<double>& theta() const { return theta_; }
  double beta() const { return beta_; }
  const FeatureMap& features() const { return *phi_; }
  const TabularPolicy& piref() const { return *piref_; }
  const Dcmdp& mdp() const { return *mdp_; }

  /// Materialized row-stochastic form (stable softmax per row).
  const TabularPolicy& tabular() const { return tabular_; }

  /// Policy with updated parameters over the same family.
  LogLinearPolicy with_theta(std::vector<double> theta) const {
    return LogLinearPolicy(*mdp_, *phi_, std::move(theta), beta_, *piref_);
  }

 private:
  const Dcmdp* mdp_;
  const FeatureMap* phi_;
  std::vector<double> theta_;
  double beta_;
  const TabularPolicy* piref_;
  TabularPolicy tabular_;
};

/// Gradient of log pi_theta(tau) with respect to theta:
/// sum_h (phi(s_h, a_h) - E_{a ~ pi_theta(.|s_h)} phi(s_h, a)) / beta.
std::vector<double> grad_log_prob(const LogLinearPolicy& pi,
                                  const Trajectory& tau);

}  // namespace xpo
