#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "xpo/policy.hpp"
#include "xpo/preference.hpp"
#include "xpo/rng.hpp"

namespace xpo {

/// Settings for the first-order minimizer over log-linear families.
struct MinimizerConfig {
  int max_iterations = 2000;
  double step_scale = 0.1;   // initial step = step_scale * beta
  double backtrack = 0.5;    // geometric factor on objective increase
  double grad_tol = 1e-8;    // stop when ||grad|| <= grad_tol
  int restarts = 3;          // random restarts in addition to given starts
  double restart_radius = 1.0;
};

enum class TieBreak { first, last, random };

/// Coefficients and knobs shared by the loss family.
struct ObjectiveConfig {
  double beta = 0.1;
  double alpha = 0.0;
  ClipBounds clip{};
  MinimizerConfig minimizer{};
  TieBreak tie_break = TieBreak::first;
};

/// Preference loss: sum over pairs of -log sigmoid(beta log-ratio margin).
/// Uses unclipped log ratios; +inf when pi escapes the support of piref on a
/// winning trajectory.
double dpo_loss(const TabularPolicy& pi, const TabularPolicy& piref,
                double beta, const PreferenceDataset& data);

/// Optimism bonus value: sum over tau of clip(log pi - log piref) +
/// log piref(tau).  Equals sum log pi(tau) whenever no clipping binds; the
/// log piref offset is constant over the class and kept for value reporting.
double optimism_term(const TabularPolicy& pi, const TabularPolicy& piref,
                     std::span<const Trajectory> d_opt, ClipBounds clip);

/// alpha * optimism_term + dpo_loss.  With alpha = 0 the bonus is skipped
/// entirely and the value equals dpo_loss exactly.
double xpo_objective(const TabularPolicy& pi, const TabularPolicy& piref,
                     double beta, double alpha, const PreferenceDataset& data,
                     std::span<const Trajectory> d_opt, ClipBounds clip = {});

/// Analytic gradient of xpo_objective over a log-linear family.  Clamped
/// optimism terms contribute zero gradient.
std::vector<double> objective_gradient(const LogLinearPolicy& pi,
                                       double alpha,
                                       const PreferenceDataset& data,
                                       std::span<const Trajectory> d_opt,
                                       ClipBounds clip = {});

/// Exact minimization over a finite class by full evaluation.
struct FiniteMinResult {
  int index = -1;
  double value = 0.0;
  std::vector<double> values;  // objective per member
};

/// Ties (exact value equality) are broken per tie_break; `random` consumes
/// one draw from rng.  Throws when every member evaluates to +inf.
FiniteMinResult minimize_finite(
    const FinitePolicyClass& klass,
    const std::function<double(const TabularPolicy&)>& objective,
    TieBreak tie_break = TieBreak::first, Rng* rng = nullptr);

/// Index of the smallest finite value under the given tie-break rule.
int argmin_with_ties(std::span<const double> values, TieBreak tie_break,
                     Rng* rng = nullptr);

/// Gradient descent with fixed initial step and geometric backtracking,
/// multi-start; returns the best iterate by objective value.
struct GradMinResult {
  std::vector<double> theta;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<std::pair<double, double>> trace;  // (objective, grad norm)
};

GradMinResult minimize_log_linear(const LogLinearPolicy& start, double alpha,
                                  const PreferenceDataset& data,
                                  std::span<const Trajectory> d_opt,
                                  const MinimizerConfig& config,
                                  ClipBounds clip, Rng& rng,
                                  bool keep_trace = false);

}  // namespace xpo
