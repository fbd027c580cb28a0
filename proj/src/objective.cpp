#include "xpo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xpo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Margin beta * (log-ratio(tau+) - log-ratio(tau-)) with the +-inf
// conventions of log_ratio.  A -inf ratio on the winner dominates (+inf
// loss); -inf on the loser alone sends the margin to +inf (zero loss).
double pair_margin(const TabularPolicy& pi, const TabularPolicy& piref,
                   double beta, const PreferencePair& pair, bool* violation) {
  const double lr_plus = log_ratio(pi, piref, pair.tau_plus);
  const double lr_minus = log_ratio(pi, piref, pair.tau_minus);
  if (lr_plus == kInf || lr_minus == kInf) {
    *violation = true;
    return 0.0;
  }
  if (lr_plus == -kInf) return -kInf;
  if (lr_minus == -kInf) return kInf;
  return beta * (lr_plus - lr_minus);
}

}  // namespace

double dpo_loss(const TabularPolicy& pi, const TabularPolicy& piref,
                double beta, const PreferenceDataset& data) {
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_loss: beta must be > 0");
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool violation = false;
    const double m = pair_margin(pi, piref, beta, data[i], &violation);
    if (violation) return kInf;
    if (m == -kInf) return kInf;
    if (m == kInf) continue;  // -log sigmoid(+inf) = 0
    loss += softplus(-m);
  }
  return loss;
}

double optimism_term(const TabularPolicy& pi, const TabularPolicy& piref,
                     std::span<const Trajectory> d_opt, ClipBounds clip) {
  double total = 0.0;
  for (const Trajectory& tau : d_opt) {
    const double ref = log_prob(piref, tau);
    total += log_ratio(pi, piref, tau, clip) + ref;
  }
  return total;
}

double xpo_objective(const TabularPolicy& pi, const TabularPolicy& piref,
                     double beta, double alpha, const PreferenceDataset& data,
                     std::span<const Trajectory> d_opt, ClipBounds clip) {
  if (alpha < 0.0)
    throw std::invalid_argument("xpo_objective: alpha must be >= 0");
  const double loss = dpo_loss(pi, piref, beta, data);
  if (alpha == 0.0 || d_opt.empty()) return loss;
  return alpha * optimism_term(pi, piref, d_opt, clip) + loss;
}

std::vector<double> objective_gradient(const LogLinearPolicy& pi, double alpha,
                                       const PreferenceDataset& data,
                                       std::span<const Trajectory> d_opt,
                                       ClipBounds clip) {
  const double beta = pi.beta();
  const int d = pi.features().dim();
  std::vector<double> grad(d, 0.0);

  if (alpha > 0.0) {
    for (const Trajectory& tau : d_opt) {
      const double raw = log_ratio(pi.tabular(), pi.piref(), tau);
      if (raw <= clip.lo || raw >= clip.hi) continue;  // clamped: flat
      const std::vector<double> g = grad_log_prob(pi, tau);
      for (int k = 0; k < d; ++k) grad[k] += alpha * g[k];
    }
  }

  for (std::size_t i = 0; i < data.size(); ++i) {
    bool violation = false;
    const double m =
        pair_margin(pi.tabular(), pi.piref(), beta, data[i], &violation);
    if (violation || std::isinf(m))
      throw std::runtime_error(
          "objective_gradient: infinite margin; gradient undefined");
    const double w = -sigmoid(-m) * beta;
    const std::vector<double> gp = grad_log_prob(pi, data[i].tau_plus);
    const std::vector<double> gm = grad_log_prob(pi, data[i].tau_minus);
    for (int k = 0; k < d; ++k) grad[k] += w * (gp[k] - gm[k]);
  }
  return grad;
}

int argmin_with_ties(std::span<const double> values, TieBreak tie_break,
                     Rng* rng) {
  double best = kInf;
  int index = -1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const bool better = tie_break == TieBreak::last ? v <= best : v < best;
    if (better && v < kInf) {
      best = v;
      index = static_cast<int>(i);
    }
  }
  if (index < 0)
    throw std::runtime_error(
        "minimize: every class member evaluates to +inf (no member is "
        "absolutely continuous w.r.t. piref on the data)");
  if (tie_break == TieBreak::random) {
    if (rng == nullptr)
      throw std::invalid_argument("minimize: random tie-break needs an rng");
    std::vector<int> tied;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] == best) tied.push_back(static_cast<int>(i));
    index = tied[rng->uniform_int(tied.size())];
  }
  return index;
}

FiniteMinResult minimize_finite(
    const FinitePolicyClass& klass,
    const std::function<double(const TabularPolicy&)>& objective,
    TieBreak tie_break, Rng* rng) {
  if (klass.members.empty())
    throw std::invalid_argument("minimize: empty policy class");
  FiniteMinResult res;
  res.values.reserve(klass.members.size());
  for (const TabularPolicy& pi : klass.members)
    res.values.push_back(objective(pi));
  res.index = argmin_with_ties(res.values, tie_break, rng);
  res.value = res.values[res.index];
  return res;
}

GradMinResult minimize_log_linear(const LogLinearPolicy& start, double alpha,
                                  const PreferenceDataset& data,
                                  std::span<const Trajectory> d_opt,
                                  const MinimizerConfig& config,
                                  ClipBounds clip, Rng& rng, bool keep_trace) {
  const int d = start.features().dim();
  const double beta = start.beta();

  auto eval = [&](const std::vector<double>& theta, LogLinearPolicy* out) {
    const LogLinearPolicy pi = start.with_theta(theta);
    const double v = xpo_objective(pi.tabular(), pi.piref(), beta, alpha, data,
                                   d_opt, clip);
    if (out) *out = pi;
    return v;
  };

  // Starting points: the given parameters plus random restarts.
  std::vector<std::vector<double>> starts;
  starts.push_back(start.theta());
  for (int r = 0; r < config.restarts; ++r) {
    std::vector<double> theta(d);
    Rng stream = rng.fork("restart").fork(static_cast<std::uint64_t>(r));
    for (double& x : theta) x = config.restart_radius * stream.normal();
    starts.push_back(std::move(theta));
  }

  GradMinResult best;
  best.value = kInf;
  for (const auto& theta0 : starts) {
    std::vector<double> theta = theta0;
    LogLinearPolicy pi = start.with_theta(theta);
    double value = xpo_objective(pi.tabular(), pi.piref(), beta, alpha, data,
                                 d_opt, clip);
    double step = config.step_scale * beta;
    double gnorm = 0.0;
    int it = 0;
    std::vector<std::pair<double, double>> trace;
    for (; it < config.max_iterations; ++it) {
      const std::vector<double> g =
          objective_gradient(pi, alpha, data, d_opt, clip);
      gnorm = 0.0;
      for (double x : g) gnorm += x * x;
      gnorm = std::sqrt(gnorm);
      if (keep_trace) trace.emplace_back(value, gnorm);
      if (gnorm <= config.grad_tol) break;

      // Fixed step with geometric backtracking on increase.
      bool moved = false;
      double s = step;
      for (int bt = 0; bt < 40; ++bt) {
        std::vector<double> cand(d);
        for (int k = 0; k < d; ++k) cand[k] = theta[k] - s * g[k];
        const double cv = eval(cand, nullptr);
        if (cv < value) {
          theta = std::move(cand);
          pi = start.with_theta(theta);
          value = cv;
          moved = true;
          break;
        }
        s *= config.backtrack;
      }
      if (!moved) break;  // no descent direction at working precision
    }
    if (value < best.value) {
      best.theta = theta;
      best.value = value;
      best.grad_norm = gnorm;
      best.iterations = it;
      best.trace = std::move(trace);
    }
  }
  if (!std::isfinite(best.value) && best.value == kInf)
    throw std::runtime_error("minimize: objective is +inf at every start");
  return best;
}

}  // namespace xpo
