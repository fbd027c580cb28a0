#include "xpo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "xpo/kernels.hpp"
#include "xpo/objective.hpp"

namespace xpo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double conditional_occupancy(const TrajectorySpace& space,
                             const TabularPolicy& pi, std::int64_t index) {
  double p = 1.0;
  space.walk(index, [&](int, StateId s, ActionId a) { p *= pi.prob(s, a); });
  return p;
}

// Trajectory log-ratio along the walk with the support conventions of
// log_ratio().
double walk_log_ratio(const TrajectorySpace& space, const TabularPolicy& pi,
                      const TabularPolicy& piref, std::int64_t index) {
  double total = 0.0;
  bool violated = false;
  space.walk(index, [&](int, StateId s, ActionId a) {
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
  return violated ? kInf : total;
}

}  // namespace

CoefficientReport coverability(const TrajectorySpace& space,
                               std::span<const TabularPolicy> policies,
                               bool materialize_mu) {
  if (policies.empty())
    throw std::invalid_argument("coverability: empty policy class");
  const Dcmdp& mdp = space.mdp();

  auto max_occupancy = [&](std::int64_t i) {
    const double rho = mdp.rho()[mdp.layer_pos(space.initial_state(i))];
    double best = 0.0;
    for (const TabularPolicy& pi : policies)
      best = std::max(best, rho * conditional_occupancy(space, pi, i));
    return best;
  };

  CoefficientReport report;
  report.c_cov = kernels::block_sum(space.size(), max_occupancy);
  const auto [peak, arg] = kernels::block_max(space.size(), max_occupancy);
  report.witness_trajectory = arg;
  // Which policy attains the peak.
  if (arg >= 0) {
    const double rho = mdp.rho()[mdp.layer_pos(space.initial_state(arg))];
    for (std::size_t k = 0; k < policies.size(); ++k) {
      if (rho * conditional_occupancy(space, policies[k], arg) == peak) {
        report.witness_policy = static_cast<int>(k);
        break;
      }
    }
  }
  if (materialize_mu && report.c_cov > 0.0) {
    report.mu_star.resize(static_cast<std::size_t>(space.size()));
    kernels::block_fill(space.size(), report.mu_star.data(),
                        [&](std::int64_t i) {
                          return max_occupancy(i) / report.c_cov;
                        });
  }
  return report;
}

double concentrability(const TrajectorySpace& space,
                       std::span<const TabularPolicy> policies,
                       const TabularPolicy& piref) {
  if (policies.empty())
    throw std::invalid_argument("concentrability: empty policy class");
  auto worst_log_ratio = [&](std::int64_t i) {
    double best = -kInf;
    for (const TabularPolicy& pi : policies)
      best = std::max(best, walk_log_ratio(space, pi, piref, i));
    return best;
  };
  const auto [value, arg] = kernels::block_max(space.size(), worst_log_ratio);
  (void)arg;
  return std::exp(value);
}

double implicit_q_residual(const TrajectorySpace& space, const StateActionFn& f,
                           double beta, const TabularPolicy& piref) {
  const Dcmdp& mdp = space.mdp();
  const TabularPolicy pi_f = boltzmann_policy(mdp, f, beta, piref);
  const StateActionFn tf = bellman_op(mdp, f, beta, piref);
  std::vector<double> vf(mdp.num_states(), 0.0);
  for (StateId s : mdp.layer(0)) vf[s] = soft_value(mdp, f, s, beta, piref);

  auto residual = [&](std::int64_t i) {
    double log_ratio_sum = 0.0;
    double reward = 0.0;
    double bellman_err = 0.0;
    StateId s1 = space.initial_state(i);
    space.walk(i, [&](int, StateId s, ActionId a) {
      log_ratio_sum += std::log(pi_f.prob(s, a)) - std::log(piref.prob(s, a));
      reward += mdp.reward(s, a);
      bellman_err += f(s, a) - tf(s, a);
    });
    return std::abs(beta * log_ratio_sum - (reward - vf[s1] + bellman_err));
  };
  return kernels::block_max(space.size(), residual).first;
}

RegretDecomposition regret_decomposition_check(const TrajectorySpace& space,
                                               const TabularPolicy& pi,
                                               const TabularPolicy& nu,
                                               double beta,
                                               const TabularPolicy& piref) {
  const Dcmdp& mdp = space.mdp();
  const SoftSolution sol = solve_soft_dp(mdp, beta, piref);

  const std::vector<double> d_pi = occupancy(space, pi);
  const std::vector<double> d_nu = occupancy(space, nu);

  auto log_of = [&](const TabularPolicy& p, std::int64_t i) {
    double total = 0.0;
    space.walk(i, [&](int, StateId s, ActionId a) {
      const double v = p.prob(s, a);
      total = v > 0.0 ? total + std::log(v) : -kInf;
    });
    return total;
  };

  auto expectation = [&](const std::vector<double>& weights, auto&& term) {
    return kernels::block_sum(space.size(), [&](std::int64_t i) {
      const double w = weights[static_cast<std::size_t>(i)];
      if (w == 0.0) return 0.0;
      return w * term(i);
    });
  };

  const double e_nu_log_pi =
      expectation(d_nu, [&](std::int64_t i) { return beta * log_of(pi, i); });
  const double e_nu_log_star = expectation(
      d_nu, [&](std::int64_t i) { return beta * log_of(sol.pistar, i); });
  auto centered = [&](std::int64_t i) {
    const double lr = walk_log_ratio(space, pi, piref, i);
    return beta * lr - space.total_reward(i);
  };
  const double on_policy = expectation(d_pi, centered);
  const double off_policy = expectation(d_nu, centered);

  RegretDecomposition out;
  const double j_star = j_beta_exact(space, sol.pistar, beta, piref).value;
  const double j_pi = j_beta_exact(space, pi, beta, piref).value;
  out.lhs = j_star - j_pi;
  out.rhs = e_nu_log_pi - e_nu_log_star + on_policy - off_policy;
  if (!std::isfinite(out.rhs) || !std::isfinite(out.lhs))
    throw std::runtime_error(
        "regret decomposition: support violation (a policy assigns zero mass "
        "on the comparator's support)");
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

double j_beta_stepwise(const Dcmdp& mdp, const TabularPolicy& pi, double beta,
                       const TabularPolicy& piref) {
  std::vector<double> d(mdp.num_states(), 0.0);
  const auto init = mdp.layer(0);
  for (std::size_t i = 0; i < init.size(); ++i) d[init[i]] = mdp.rho()[i];

  double value = 0.0;
  for (int h = 0; h < mdp.horizon(); ++h) {
    for (StateId s : mdp.layer(h)) {
      if (d[s] == 0.0) continue;
      double kl = 0.0;
      double mean_reward = 0.0;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        const double p = pi.prob(s, a);
        if (p == 0.0) continue;
        const double q = piref.prob(s, a);
        if (q == 0.0) return -kInf;
        kl += p * (std::log(p) - std::log(q));
        mean_reward += p * mdp.reward(s, a);
        if (h + 1 < mdp.horizon()) d[mdp.next(s, a)] += d[s] * p;
      }
      value += d[s] * (mean_reward - beta * kl);
    }
  }
  return value;
}

namespace {

// Per-member conditional moments of u_m(tau) = beta * log-ratio - r(tau),
// used by both extrapolation estimators.
struct SecTables {
  // first/second moments of u_m under sampler p, rho-weighted cross terms
  // folded per initial state.
  std::vector<std::vector<double>> mean_gap;     // N[m][p]
  std::vector<std::vector<double>> second_moment;  // Q[m][p]
  double vmax = 0.0;
};

SecTables build_sec_tables(const TrajectorySpace& space,
                           std::span<const TabularPolicy> members, double beta,
                           const TabularPolicy& piref) {
  const Dcmdp& mdp = space.mdp();
  const std::size_t M = members.size();
  const std::int64_t n = space.size();
  const std::size_t n_init = mdp.layer(0).size();
  const std::int64_t per_init = n / static_cast<std::int64_t>(n_init);

  // u values per member per trajectory.
  std::vector<std::vector<double>> u(M);
  double max_abs_lr = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    u[m].resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      const double lr = walk_log_ratio(space, members[m], piref, i);
      max_abs_lr = std::max(max_abs_lr, std::abs(lr));
      u[m][static_cast<std::size_t>(i)] = beta * lr - space.total_reward(i);
    }
  }

  // Conditional sampling probabilities per member and for piref.
  auto cond = [&](const TabularPolicy& pi, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)] = conditional_occupancy(space, pi, i);
  };
  std::vector<std::vector<double>> c(M);
  for (std::size_t m = 0; m < M; ++m) cond(members[m], c[m]);
  std::vector<double> c_ref;
  cond(piref, c_ref);

  // Per (m, p): conditional first/second moments per initial state, folded
  // with rho into the pair expectations.
  SecTables tables;
  tables.vmax = beta * max_abs_lr;
  tables.mean_gap.assign(M, std::vector<double>(M, 0.0));
  tables.second_moment.assign(M, std::vector<double>(M, 0.0));

  auto block_moments = [&](const std::vector<double>& weights,
                           const std::vector<double>& values,
                           std::size_t s1_pos, double* m1, double* m2) {
    const std::int64_t lo = static_cast<std::int64_t>(s1_pos) * per_init;
    double e1 = 0.0, e2 = 0.0;
    for (std::int64_t i = lo; i < lo + per_init; ++i) {
      const double w = weights[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      const double v = values[static_cast<std::size_t>(i)];
      e1 += w * v;
      e2 += w * v * v;
    }
    *m1 = e1;
    *m2 = e2;
  };

  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t p = 0; p < M; ++p) {
      double mean = 0.0, second = 0.0;
      for (std::size_t s1 = 0; s1 < n_init; ++s1) {
        const double rho = mdp.rho()[s1];
        if (rho == 0.0) continue;
        double p1, p2, r1, r2;
        block_moments(c[p], u[m], s1, &p1, &p2);
        block_moments(c_ref, u[m], s1, &r1, &r2);
        mean += rho * (p1 - r1);
        second += rho * (p2 - 2.0 * p1 * r1 + r2);
      }
      tables.mean_gap[m][p] = mean;
      tables.second_moment[m][p] = second;
    }
  }
  return tables;
}

double sec_of_sequence(const SecTables& tables, std::span<const int> seq) {
  const double vmax_sq = tables.vmax * tables.vmax;
  double total = 0.0;
  for (std::size_t t = 1; t <= seq.size(); ++t) {
    const int m = seq[t - 1];
    const double mean = tables.mean_gap[m][m];
    const double num = mean * mean;
    if (t == 1) {
      // The historical mixture is undefined at t = 1; use the floor alone,
      // capped at 1.
      total += vmax_sq > 0.0 ? std::min(1.0, num / vmax_sq)
                             : (num > 0.0 ? 1.0 : 0.0);
      continue;
    }
    double hist = 0.0;
    for (std::size_t i = 0; i + 1 < t; ++i)
      hist += tables.second_moment[m][seq[i]];
    const double den = std::max(vmax_sq, hist);
    if (den > 0.0) {
      total += num / den;
    } else if (num > 0.0) {
      total += kInf;
    }
  }
  return total;
}

}  // namespace

SecReport sec_estimate_realized(const TrajectorySpace& space,
                                std::span<const TabularPolicy> sequence,
                                double beta, const TabularPolicy& piref,
                                std::optional<double> vmax) {
  if (sequence.empty())
    throw std::invalid_argument("sec: empty policy sequence");
  SecTables tables = build_sec_tables(space, sequence, beta, piref);
  if (vmax) tables.vmax = *vmax;
  std::vector<int> seq(sequence.size());
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<int>(i);
  SecReport report;
  report.vmax = tables.vmax;
  report.value = sec_of_sequence(tables, seq);
  return report;
}

SecReport sec_estimate_exhaustive(const TrajectorySpace& space,
                                  const FinitePolicyClass& klass, double beta,
                                  const TabularPolicy& piref, int T,
                                  std::int64_t cap) {
  if (klass.members.empty())
    throw std::invalid_argument("sec: empty policy class");
  if (T < 1) throw std::invalid_argument("sec: T must be >= 1");
  const std::size_t M = klass.size();
  double count = std::pow(static_cast<double>(M), T);
  if (count > static_cast<double>(cap))
    throw std::invalid_argument(
        "sec: |class|^T = " + std::to_string(count) + " exceeds cap " +
        std::to_string(cap) + "; use realized mode");
  const std::int64_t n_seq = static_cast<std::int64_t>(count + 0.5);

  const SecTables tables = build_sec_tables(space, klass.members, beta, piref);

  auto value_of = [&](std::int64_t code) {
    std::vector<int> seq(static_cast<std::size_t>(T));
    for (int t = T - 1; t >= 0; --t) {
      seq[static_cast<std::size_t>(t)] = static_cast<int>(code % M);
      code /= static_cast<std::int64_t>(M);
    }
    return sec_of_sequence(tables, seq);
  };
  const auto [best, arg] = kernels::block_max(n_seq, value_of);

  SecReport report;
  report.vmax = tables.vmax;
  report.value = best;
  report.argmax_sequence.resize(static_cast<std::size_t>(T));
  std::int64_t code = arg;
  for (int t = T - 1; t >= 0; --t) {
    report.argmax_sequence[static_cast<std::size_t>(t)] =
        static_cast<int>(code % M);
    code /= static_cast<std::int64_t>(M);
  }
  return report;
}

namespace {

double sigma_diff(double x, double y) {
  // sigma(x) - sigma(y) = expm1(x - y) * sigma(y) * sigma(-x), stable for
  // nearby arguments.
  return std::expm1(x - y) * sigmoid(y) * sigmoid(-x);
}

template <bool Parallel>
double sigmoid_gap_impl(double x_range, double y_range, int resolution) {
  if (y_range < 1.0)
    throw std::invalid_argument("sigmoid gap bound: requires Y >= 1");
  if (resolution < 2)
    throw std::invalid_argument("sigmoid gap bound: resolution must be >= 2");
  const double scale =
      8.0 * (x_range + y_range) * std::exp(2.0 * y_range);
  const std::int64_t n = resolution;
  auto ratio = [&](std::int64_t flat) {
    const std::int64_t i = flat / n;
    const std::int64_t j = flat % n;
    const double x = -x_range + 2.0 * x_range * static_cast<double>(i) /
                                    static_cast<double>(n - 1);
    const double y = -y_range + 2.0 * y_range * static_cast<double>(j) /
                                    static_cast<double>(n - 1);
    if (x == y) return 0.0;  // excluded (0/0)
    return std::abs(x - y) / (scale * std::abs(sigma_diff(x, y)));
  };
  if constexpr (Parallel) {
    return kernels::block_max(n * n, ratio).first;
  } else {
    return kernels::block_max_serial(n * n, ratio).first;
  }
}

}  // namespace

double sigmoid_gap_worst_ratio(double x_range, double y_range,
                               int resolution) {
  return sigmoid_gap_impl<true>(x_range, y_range, resolution);
}

double sigmoid_gap_worst_ratio_serial(double x_range, double y_range,
                                      int resolution) {
  return sigmoid_gap_impl<false>(x_range, y_range, resolution);
}

CounterexampleInstance counterexample_instance(double beta, double c) {
  const double beta_max = std::log(2.0) / 8.0;
  if (!(beta > 0.0) || !(beta < beta_max))
    throw std::invalid_argument(
        "counterexample: beta must lie in (0, log(2)/8 = " +
        std::to_string(beta_max) + "), got " + std::to_string(beta));
  if (!(c > 0.0) || c > 0.125)
    throw std::invalid_argument("counterexample: c must lie in (0, 1/8]");
  const double epsilon = std::exp(-c / beta);
  if (epsilon > 0.5)
    throw std::invalid_argument(
        "counterexample: eps = exp(-c/beta) = " + std::to_string(epsilon) +
        " exceeds 1/2");

  DcmdpData d;
  d.horizon = 1;
  d.layers = {{0}};
  d.num_actions = 2;
  d.rho = {1.0};
  d.next = {-1, -1};
  d.reward = {1.0, 0.5};
  d.rmax = 1.0;
  d.state_names = {"s"};
  Dcmdp mdp(std::move(d));

  TabularPolicy piref(mdp, {epsilon, 1.0 - epsilon});
  const SoftSolution sol = solve_soft_dp(mdp, beta, piref);

  CounterexampleInstance out{std::move(mdp), piref,
                             FinitePolicyClass{{piref, sol.pistar},
                                               {"piref", "pistar"}},
                             epsilon};
  return out;
}

std::vector<DiagRecord> identity_battery(const Dcmdp& mdp,
                                         const TrajectorySpace& space,
                                         const TabularPolicy& piref,
                                         double beta, std::uint64_t seed) {
  std::vector<DiagRecord> records;
  Rng rng(seed);
  char buf[160];

  auto add = [&](const std::string& name, bool pass, double value,
                 const std::string& detail) {
    records.push_back(DiagRecord{name, pass, value, detail});
  };

  const SoftSolution sol = solve_soft_dp(mdp, beta, piref);

  // Fixed point of the regularized backup.
  {
    const StateActionFn tq = bellman_op(mdp, sol.qstar, beta, piref);
    double residual = 0.0;
    for (StateId s = 0; s < mdp.num_states(); ++s)
      for (ActionId a = 0; a < mdp.num_actions(); ++a)
        residual = std::max(residual, std::abs(tq(s, a) - sol.qstar(s, a)));
    add("soft_dp_fixed_point", residual <= 1e-9, residual,
        "max |Q - TQ| over state-action pairs");
  }

  // Internal reward model: optimal policy.
  {
    const double r = implicit_q_residual(space, sol.qstar, beta, piref);
    add("implicit_q_optimal", r <= 1e-8, r,
        "max |beta log(pi*/piref) - (r - V*(s1))| over trajectories");
  }

  // Internal reward model: random functions.
  {
    Rng stream = rng.fork("implicit_q");
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const StateActionFn f =
          StateActionFn::random_uniform(mdp, -2.0, 2.0, stream);
      worst = std::max(worst, implicit_q_residual(space, f, beta, piref));
    }
    add("implicit_q_random", worst <= 1e-8, worst,
        "max residual over 100 random f");
  }

  // Regret decomposition.
  {
    Rng stream = rng.fork("regret_decomp");
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const TabularPolicy pi = TabularPolicy::random(mdp, stream);
      const TabularPolicy nu = TabularPolicy::random(mdp, stream);
      worst = std::max(
          worst, regret_decomposition_check(space, pi, nu, beta, piref).gap);
    }
    add("regret_decomposition", worst <= 1e-8, worst,
        "max |lhs - rhs| over 50 random (pi, nu) pairs");
  }

  // Variational characterization of the soft value.
  {
    Rng stream = rng.fork("variational");
    double worst = -kInf;
    StateActionFn f = StateActionFn::random_uniform(mdp, -1.0, 1.0, stream);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      const double vf = soft_value(mdp, f, s, beta, piref);
      for (int k = 0; k < 100; ++k) {
        // Random row distribution.
        std::vector<double> q(mdp.num_actions());
        double z = 0.0;
        for (double& x : q) z += (x = -std::log(1.0 - stream.next_double()));
        double gain = 0.0;
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
          q[a] /= z;
          if (q[a] > 0.0)
            gain += q[a] * (f(s, a) -
                            beta * (std::log(q[a]) -
                                    std::log(piref.prob(s, a))));
        }
        worst = std::max(worst, gain - vf);
      }
    }
    add("soft_value_variational", worst <= 1e-9, worst,
        "max over random rows q of E_q[f - beta log(q/piref)] - V_f");
  }

  // Shift covariance: f + c shifts V_f and leaves pi_f unchanged.
  {
    Rng stream = rng.fork("shift");
    StateActionFn f = StateActionFn::random_uniform(mdp, -1.0, 1.0, stream);
    StateActionFn g = f;
    const double shift = 0.7;
    for (double& v : g.values()) v += shift;
    const TabularPolicy pf = boltzmann_policy(mdp, f, beta, piref);
    const TabularPolicy pg = boltzmann_policy(mdp, g, beta, piref);
    double worst = 0.0;
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      worst = std::max(
          worst, std::abs(soft_value(mdp, g, s, beta, piref) -
                          soft_value(mdp, f, s, beta, piref) - shift));
      for (ActionId a = 0; a < mdp.num_actions(); ++a)
        worst = std::max(worst, std::abs(pf.prob(s, a) - pg.prob(s, a)));
    }
    add("soft_value_shift_covariance", worst <= 1e-12, worst,
        "value shift and policy invariance under f -> f + c");
  }

  // Objective route agreement: trajectory sum vs per-step KL form.
  {
    Rng stream = rng.fork("j_routes");
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const TabularPolicy pi = TabularPolicy::random(mdp, stream);
      const double a = j_beta_exact(space, pi, beta, piref).value;
      const double b = j_beta_stepwise(mdp, pi, beta, piref);
      worst = std::max(worst, std::abs(a - b));
    }
    add("j_beta_two_routes", worst <= 1e-10, worst,
        "trajectory-sum vs stepwise-KL evaluation of the objective");
  }

  // Coefficient bounds on a sampled class around pi*.
  {
    Rng stream = rng.fork("coefficients");
    FinitePolicyClass klass;
    klass.members.push_back(piref);
    klass.members.push_back(sol.pistar);
    for (int k = 0; k < 4; ++k) {
      StateActionFn f = sol.qstar;
      for (double& v : f.values()) v += 0.3 * stream.normal();
      klass.members.push_back(boltzmann_policy(mdp, f, beta, piref));
    }
    const CoefficientReport cov = coverability(space, klass.members, false);
    const double conc = concentrability(space, klass.members, piref);
    const double trivial =
        std::pow(static_cast<double>(mdp.num_actions()), mdp.horizon());
    bool pass = cov.c_cov >= 1.0 - 1e-9 && cov.c_cov <= trivial + 1e-9;
    if (std::isfinite(conc)) pass = pass && cov.c_cov <= conc + 1e-9;
    std::snprintf(buf, sizeof(buf), "c_cov %.6g, c_conc %.6g, |A|^H %.6g",
                  cov.c_cov, conc, trivial);
    add("coverage_bounds", pass, cov.c_cov, buf);

    // Extrapolation sum against the coverage bound.
    const int T = 4;
    const SecReport sec =
        sec_estimate_exhaustive(space, klass, beta, piref, T, 100000);
    const double bound = 64.0 * cov.c_cov * (1.0 + std::log(T));
    std::snprintf(buf, sizeof(buf), "sec %.6g vs 64 c_cov (1 + log T) = %.6g",
                  sec.value, bound);
    add("sec_coverage_bound", sec.value <= bound, sec.value, buf);
  }

  // Sigmoid gap bound on a coarse grid.
  {
    const double worst = sigmoid_gap_worst_ratio(5.0, 1.0, 301);
    add("sigmoid_gap_bound", worst <= 1.0, worst,
        "worst |x-y| / (8(X+Y)e^{2Y}|sigma(x)-sigma(y)|) on X=5, Y=1 grid");
  }

  return records;
}

}  // namespace xpo
