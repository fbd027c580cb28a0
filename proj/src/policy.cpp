#include "xpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "xpo/kernels.hpp"

namespace xpo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double log_prob(const TabularPolicy& pi, const Trajectory& tau) {
  double total = 0.0;
  for (const Step& st : tau.steps) {
    const double p = pi.prob(st.state, st.action);
    if (!(p > 0.0)) return -kInf;
    total += std::log(p);
  }
  return total;
}

double log_ratio(const TabularPolicy& pi, const TabularPolicy& piref,
                 const Trajectory& tau) {
  double total = 0.0;
  for (const Step& st : tau.steps) {
    const double p = pi.prob(st.state, st.action);
    const double q = piref.prob(st.state, st.action);
    if (p > 0.0 && q > 0.0) {
      total += std::log(p) - std::log(q);
    } else if (p > 0.0) {
      return kInf;  // support violation
    } else if (q > 0.0) {
      return -kInf;
    }
    // p == q == 0 contributes nothing.
  }
  return total;
}

double log_ratio(const TabularPolicy& pi, const TabularPolicy& piref,
                 const Trajectory& tau, ClipBounds clip) {
  return std::clamp(log_ratio(pi, piref, tau), clip.lo, clip.hi);
}

VmaxReport vmax_check(std::span<const TabularPolicy> policies, double beta,
                      const TabularPolicy& piref,
                      const TrajectorySpace& space) {
  if (!(beta > 0.0)) throw std::invalid_argument("vmax_check: beta must be > 0");
  VmaxReport report;
  report.vmax = 0.0;
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const TabularPolicy& pi = policies[k];
    // max_i |log ratio| over the enumeration, with the per-step conventions
    // of log_ratio inlined over the walk.
    auto abs_ratio = [&](std::int64_t i) {
      double total = 0.0;
      bool violated = false;
      space.walk(i, [&](int, StateId s, ActionId a) {
        const double p = pi.prob(s, a);
        const double q = piref.prob(s, a);
        if (p > 0.0 && q > 0.0) {
          total += std::log(p) - std::log(q);
        } else if (p > 0.0) {
          violated = true;
        } else if (q > 0.0) {
          total = -kInf;
        }
      });
      if (violated) return kInf;
      return std::abs(total);
    };
    const auto [value, index] = kernels::block_max(space.size(), abs_ratio);
    if (value * beta > report.vmax || std::isinf(value)) {
      report.vmax = value * beta;
      report.witness_trajectory = index;
      report.witness_policy = static_cast<int>(k);
      if (std::isinf(value)) {
        report.finite = false;
        report.vmax = kInf;
        return report;
      }
    }
  }
  return report;
}

LogLinearPolicy::LogLinearPolicy(const Dcmdp& mdp, const FeatureMap& phi,
                                 std::vector<double> theta, double beta,
                                 const TabularPolicy& piref)
    : mdp_(&mdp),
      phi_(&phi),
      theta_(std::move(theta)),
      beta_(beta),
      piref_(&piref) {
  if (!(beta_ > 0.0))
    throw std::invalid_argument("log-linear policy: beta must be > 0");
  if (static_cast<int>(theta_.size()) != phi.dim())
    throw std::invalid_argument("log-linear policy: theta dimension " +
                                std::to_string(theta_.size()) +
                                " does not match feature dim " +
                                std::to_string(phi.dim()));
  const int A = mdp.num_actions();
  std::vector<double> probs(static_cast<std::size_t>(mdp.num_states()) * A,
                            0.0);
  std::vector<double> score(A);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const auto ref = piref.row(s);
    double m = -kInf;
    for (ActionId a = 0; a < A; ++a) {
      const auto feats = phi.at(s, a);
      double dot = 0.0;
      for (int k = 0; k < phi.dim(); ++k) dot += feats[k] * theta_[k];
      score[a] = dot / beta_;
      if (ref[a] > 0.0) m = std::max(m, score[a]);
    }
    if (m == -kInf)
      throw std::runtime_error(
          "log-linear policy: reference row has no support at state " +
          std::to_string(s));
    double z = 0.0;
    for (ActionId a = 0; a < A; ++a) {
      if (ref[a] > 0.0) {
        const double w = ref[a] * std::exp(score[a] - m);
        probs[static_cast<std::size_t>(s) * A + a] = w;
        z += w;
      }
    }
    for (ActionId a = 0; a < A; ++a)
      probs[static_cast<std::size_t>(s) * A + a] /= z;
  }
  tabular_ = TabularPolicy(mdp, std::move(probs));
}

std::vector<double> grad_log_prob(const LogLinearPolicy& pi,
                                  const Trajectory& tau) {
  const Dcmdp& mdp = pi.mdp();
  check_admissible(mdp, tau);
  const FeatureMap& phi = pi.features();
  const int d = phi.dim();
  const int A = mdp.num_actions();
  std::vector<double> grad(d, 0.0);
  for (const Step& st : tau.steps) {
    const auto taken = phi.at(st.state, st.action);
    for (int k = 0; k < d; ++k) grad[k] += taken[k];
    for (ActionId a = 0; a < A; ++a) {
      const double p = pi.tabular().prob(st.state, a);
      if (p == 0.0) continue;
      const auto feats = phi.at(st.state, a);
      for (int k = 0; k < d; ++k) grad[k] -= p * feats[k];
    }
  }
  const double inv_beta = 1.0 / pi.beta();
  for (double& g : grad) g *= inv_beta;
  return grad;
}

}  // namespace xpo
