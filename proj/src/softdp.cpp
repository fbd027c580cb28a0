#include "xpo/softdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "xpo/kernels.hpp"

namespace xpo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_beta(double beta) {
  if (!(beta > 0.0))
    throw std::invalid_argument("softdp: beta must be > 0, got " +
                                std::to_string(beta));
}

// Soft value of one row, max-subtracted over the support of piref.
double row_soft_value(std::span<const double> f_row,
                      std::span<const double> ref_row, double beta) {
  double m = -kInf;
  for (std::size_t a = 0; a < ref_row.size(); ++a)
    if (ref_row[a] > 0.0) m = std::max(m, f_row[a]);
  if (m == -kInf)
    throw std::runtime_error("softdp: reference row has no support");
  double z = 0.0;
  for (std::size_t a = 0; a < ref_row.size(); ++a)
    if (ref_row[a] > 0.0) z += ref_row[a] * std::exp((f_row[a] - m) / beta);
  return m + beta * std::log(z);
}

}  // namespace

StateActionFn::StateActionFn(const Dcmdp& mdp, std::vector<double> values)
    : num_actions_(mdp.num_actions()), values_(std::move(values)) {
  if (values_.size() !=
      static_cast<std::size_t>(mdp.num_states()) * num_actions_)
    throw std::invalid_argument("state-action function: wrong table size");
}

StateActionFn StateActionFn::random_uniform(const Dcmdp& mdp, double lo,
                                            double hi, Rng& rng) {
  StateActionFn f(mdp);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

double soft_value(const Dcmdp& mdp, const StateActionFn& f, StateId s,
                  double beta, const TabularPolicy& piref) {
  require_beta(beta);
  const int A = mdp.num_actions();
  return row_soft_value({&f.values()[mdp.flat(s, 0)], size_t(A)},
                        piref.row(s), beta);
}

TabularPolicy boltzmann_policy(const Dcmdp& mdp, const StateActionFn& f,
                               double beta, const TabularPolicy& piref) {
  require_beta(beta);
  const int A = mdp.num_actions();
  std::vector<double> probs(static_cast<std::size_t>(mdp.num_states()) * A,
                            0.0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const auto ref = piref.row(s);
    double m = -kInf;
    for (ActionId a = 0; a < A; ++a)
      if (ref[a] > 0.0) m = std::max(m, f(s, a));
    if (m == -kInf)
      throw std::runtime_error("boltzmann: reference row has no support at state " +
                               std::to_string(s));
    double z = 0.0;
    for (ActionId a = 0; a < A; ++a) {
      if (ref[a] > 0.0) {
        const double w = ref[a] * std::exp((f(s, a) - m) / beta);
        probs[mdp.flat(s, a)] = w;
        z += w;
      }
    }
    for (ActionId a = 0; a < A; ++a) probs[mdp.flat(s, a)] /= z;
  }
  return TabularPolicy(mdp, std::move(probs));
}

StateActionFn bellman_op(const Dcmdp& mdp, const StateActionFn& f, double beta,
                         const TabularPolicy& piref) {
  require_beta(beta);
  const int H = mdp.horizon();
  StateActionFn out(mdp);
  // Successor soft values, shared across incoming pairs.
  std::vector<double> vf(mdp.num_states(), 0.0);
  for (int h = 1; h < H; ++h)
    for (StateId s : mdp.layer(h)) vf[s] = soft_value(mdp, f, s, beta, piref);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const int h = mdp.layer_of(s);
    for (ActionId a = 0; a < mdp.num_actions(); ++a)
      out.at(s, a) = mdp.reward(s, a) + (h + 1 < H ? vf[mdp.next(s, a)] : 0.0);
  }
  return out;
}

SoftSolution solve_soft_dp(const Dcmdp& mdp, double beta,
                           const TabularPolicy& piref,
                           bool allow_partial_support) {
  require_beta(beta);
  const int H = mdp.horizon();
  const int A = mdp.num_actions();

  if (!allow_partial_support) {
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (!mdp.reachable(s)) continue;
      for (ActionId a = 0; a < A; ++a)
        if (!(piref.prob(s, a) > 0.0))
          throw std::invalid_argument(
              "solve_soft_dp: piref has zero mass on reachable pair (" +
              std::to_string(s) + ", " + std::to_string(a) +
              "); log-ratios would be undefined");
    }
  }

  SoftSolution sol;
  sol.beta = beta;
  sol.qstar = StateActionFn(mdp);
  sol.vstar.assign(mdp.num_states(), 0.0);

  for (int h = H - 1; h >= 0; --h) {
    for (StateId s : mdp.layer(h)) {
      for (ActionId a = 0; a < A; ++a)
        sol.qstar.at(s, a) =
            mdp.reward(s, a) +
            (h + 1 < H ? sol.vstar[mdp.next(s, a)] : 0.0);
      sol.vstar[s] = soft_value(mdp, sol.qstar, s, beta, piref);
    }
  }
  sol.pistar = boltzmann_policy(mdp, sol.qstar, beta, piref);

  // Fixed-point and normalization validation.
  const StateActionFn tq = bellman_op(mdp, sol.qstar, beta, piref);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < A; ++a)
      if (std::abs(tq(s, a) - sol.qstar(s, a)) > 1e-9)
        throw std::runtime_error("solve_soft_dp: fixed-point residual " +
                                 std::to_string(tq(s, a) - sol.qstar(s, a)) +
                                 " at (" + std::to_string(s) + ", " +
                                 std::to_string(a) + ")");
    if (std::abs(soft_value(mdp, sol.qstar, s, beta, piref) - sol.vstar[s]) >
        1e-9)
      throw std::runtime_error("solve_soft_dp: V cross-check failed at state " +
                               std::to_string(s));
  }
  return sol;
}

namespace {

template <bool Parallel>
JBetaResult j_beta_exact_impl(const TrajectorySpace& space,
                              const TabularPolicy& pi, double beta,
                              const TabularPolicy& piref) {
  require_beta(beta);
  const Dcmdp& mdp = space.mdp();

  // Per-trajectory term d^pi(tau) * (r(tau) - beta * sum_h (log pi - log piref)).
  // A pair with pi > 0 = piref on a positive-mass trajectory poisons the sum
  // with -inf, which is detected afterwards and reported with a witness.
  auto term = [&](std::int64_t i) {
    double d = mdp.rho()[mdp.layer_pos(space.initial_state(i))];
    double reward = 0.0;
    double logratio = 0.0;
    bool violated = false;
    space.walk(i, [&](int, StateId s, ActionId a) {
      const double p = pi.prob(s, a);
      const double q = piref.prob(s, a);
      d *= p;
      reward += mdp.reward(s, a);
      if (p > 0.0) {
        if (q > 0.0) {
          logratio += std::log(p) - std::log(q);
        } else {
          violated = true;
        }
      }
    });
    if (d == 0.0) return 0.0;
    if (violated) return -kInf;
    return d * (reward - beta * logratio);
  };

  double value;
  if constexpr (Parallel) {
    value = kernels::block_sum(space.size(), term);
  } else {
    value = kernels::block_sum_serial(space.size(), term);
  }

  JBetaResult res;
  res.value = value;
  if (std::isnan(value) || value == -kInf) {
    res.value = -kInf;
    const auto [v, idx] = kernels::block_max_serial(
        space.size(), [&](std::int64_t i) { return term(i) == -kInf ? 1.0 : 0.0; });
    if (idx >= 0 && v > 0.0) res.support_witness = space.materialize(idx);
  }
  return res;
}

}  // namespace

JBetaResult j_beta_exact(const TrajectorySpace& space, const TabularPolicy& pi,
                         double beta, const TabularPolicy& piref) {
  return j_beta_exact_impl<true>(space, pi, beta, piref);
}

JBetaResult j_beta_exact_serial(const TrajectorySpace& space,
                                const TabularPolicy& pi, double beta,
                                const TabularPolicy& piref) {
  return j_beta_exact_impl<false>(space, pi, beta, piref);
}

JBetaResult j_beta_monte_carlo(const Dcmdp& mdp, const TabularPolicy& pi,
                               double beta, const TabularPolicy& piref,
                               std::int64_t n, Rng& rng) {
  require_beta(beta);
  if (n < 1) throw std::invalid_argument("j_beta: need at least one sample");
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const Trajectory tau = rollout(mdp, pi, rng);
    double logratio = 0.0;
    for (const Step& st : tau.steps) {
      const double p = pi.prob(st.state, st.action);
      const double q = piref.prob(st.state, st.action);
      if (!(q > 0.0)) {
        JBetaResult res;
        res.value = -kInf;
        res.support_witness = tau;
        return res;
      }
      logratio += std::log(p) - std::log(q);
    }
    const double x = tau.total_reward - beta * logratio;
    sum += x;
    sumsq += x * x;
  }
  JBetaResult res;
  res.value = sum / static_cast<double>(n);
  if (n > 1) {
    const double var =
        std::max(0.0, (sumsq - sum * sum / static_cast<double>(n)) /
                          static_cast<double>(n - 1));
    res.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return res;
}

double kl_regret(const TrajectorySpace& space, const TabularPolicy& pi,
                 double beta, const TabularPolicy& piref) {
  const SoftSolution sol = solve_soft_dp(space.mdp(), beta, piref);
  const double jstar = j_beta_exact(space, sol.pistar, beta, piref).value;
  const double j = j_beta_exact(space, pi, beta, piref).value;
  return jstar - j;
}

std::string export_soft_solution(const Dcmdp& mdp, const SoftSolution& sol) {
  std::string out = "state\taction\tqstar\tvstar\tpistar\n";
  char buf[128];
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      std::snprintf(buf, sizeof(buf), "%d\t%d\t%.17g\t%.17g\t%.17g\n", s, a,
                    sol.qstar(s, a), sol.vstar[s], sol.pistar.prob(s, a));
      out += buf;
    }
  }
  return out;
}

}  // namespace xpo
