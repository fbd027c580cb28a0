#include "xpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace xpo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Incremental objective state for a finite class: the preference loss and
// optimism sums are folded pair-by-pair in dataset order, which reproduces a
// fresh left-to-right evaluation bit-for-bit.
struct FiniteState {
  const FinitePolicyClass* klass = nullptr;
  const TabularPolicy* piref = nullptr;
  double beta = 0.0;
  ClipBounds clip;
  std::vector<double> loss;      // preference loss per member
  std::vector<double> optimism;  // unscaled bonus sum per member

  void init(const FinitePolicyClass& k, const TabularPolicy& ref, double b,
            ClipBounds c) {
    klass = &k;
    piref = &ref;
    beta = b;
    clip = c;
    loss.assign(k.size(), 0.0);
    optimism.assign(k.size(), 0.0);
  }

  void add_pair(const PreferencePair& pair) {
    for (std::size_t m = 0; m < klass->size(); ++m) {
      if (loss[m] == kInf) continue;
      const TabularPolicy& pi = klass->members[m];
      const double lp = log_ratio(pi, *piref, pair.tau_plus);
      const double lm = log_ratio(pi, *piref, pair.tau_minus);
      if (lp == kInf || lm == kInf || lp == -kInf) {
        loss[m] = kInf;
      } else if (lm == -kInf) {
        // margin +inf: zero loss contribution
      } else {
        loss[m] += softplus(-beta * (lp - lm));
      }
    }
  }

  void add_optimism(const Trajectory& tau) {
    for (std::size_t m = 0; m < klass->size(); ++m) {
      const double ref = log_prob(*piref, tau);
      optimism[m] += log_ratio(klass->members[m], *piref, tau, clip) + ref;
    }
  }

  std::vector<double> objective_values(double alpha) const {
    std::vector<double> v(loss);
    if (alpha > 0.0)
      for (std::size_t m = 0; m < v.size(); ++m)
        v[m] = alpha * optimism[m] + v[m];
    return v;
  }
};

// Cache of exact J_beta per finite-class member.
struct JCache {
  const TrainEnv* env;
  double beta;
  std::vector<double> values;
  std::vector<char> ready;

  double get(const FinitePolicyClass& klass, int m) {
    if (values.empty()) {
      values.assign(klass.size(), 0.0);
      ready.assign(klass.size(), 0);
    }
    if (!ready[m]) {
      values[m] =
          j_beta_exact(*env->space, klass.members[m], beta, *env->piref).value;
      ready[m] = 1;
    }
    return values[m];
  }
};

struct LoopContext {
  const TrainEnv& env;
  const PolicyClassSpec& klass;
  const LoopParams& params;
  std::string algo;
  bool use_optimism;  // alpha > 0
};

// The single loop behind XPO, online DPO, and iterative DPO.  Stream usage
// is keyed by (iteration, pair index, purpose) so that every variant draws
// identically when its sampling coincides.
RunRecord run_loop(const LoopContext& ctx, std::uint64_t seed) {
  const TrainEnv& env = ctx.env;
  const LoopParams& p = ctx.params;
  if (!(p.beta > 0.0)) throw std::invalid_argument("run: beta must be > 0");
  if (p.alpha < 0.0) throw std::invalid_argument("run: alpha must be >= 0");
  if (p.iterations < 0) throw std::invalid_argument("run: T must be >= 0");
  if (p.batch_size < 1)
    throw std::invalid_argument("run: batch size must be >= 1");
  if (p.sampling == SamplingKind::fixed && !p.fixed_sampler)
    throw std::invalid_argument("run: fixed sampling needs a sampler policy");

  const bool finite = std::holds_alternative<FinitePolicyClass>(ctx.klass);
  const FinitePolicyClass* fklass =
      finite ? &std::get<FinitePolicyClass>(ctx.klass) : nullptr;
  const LogLinearFamilySpec* lspec =
      finite ? nullptr : &std::get<LogLinearFamilySpec>(ctx.klass);
  if (!finite && env.features == nullptr)
    throw std::invalid_argument("run: log-linear class needs a feature map");

  Rng rng(seed);
  const SoftSolution sol = solve_soft_dp(*env.mdp, p.beta, *env.piref);
  const double j_star =
      j_beta_exact(*env.space, sol.pistar, p.beta, *env.piref).value;

  RunRecord rec;
  rec.algo = ctx.algo;
  rec.seed = seed;
  rec.beta = p.beta;
  rec.alpha = p.alpha;
  rec.iterations = p.iterations;
  rec.strategy = to_string(p.sampling);

  FiniteState fstate;
  JCache jcache{&env, p.beta, {}, {}};
  int piref_index = -1;
  if (finite) {
    fstate.init(*fklass, *env.piref, p.beta, p.clip);
    for (std::size_t m = 0; m < fklass->size(); ++m)
      if (fklass->members[m] == *env.piref) {
        piref_index = static_cast<int>(m);
        break;
      }
  }

  std::vector<double> theta0;
  if (!finite) {
    theta0 = lspec->theta0;
    if (theta0.empty()) theta0.assign(env.features->dim(), 0.0);
  }

  // Policies by iterate; pi^(1) = piref always.
  std::vector<TabularPolicy> policies;  // materialized per iterate
  policies.reserve(p.iterations + 1);
  policies.push_back(*env.piref);

  auto push_snapshot = [&](const TabularPolicy& pi, int class_index,
                           std::vector<double> theta) {
    rec.snapshots.push_back(PolicySnapshot{pi, std::move(theta), class_index});
    return static_cast<int>(rec.snapshots.size() - 1);
  };

  auto record_iterate = [&](int t, int snapshot, double objective,
                            std::int64_t n_pref, bool in_class,
                            int class_index) {
    IterationRecord ir;
    ir.t = t;
    ir.snapshot = snapshot;
    if (finite && class_index >= 0) {
      ir.j_beta = jcache.get(*fklass, class_index);
    } else {
      ir.j_beta = j_beta_exact(*env.space,
                               rec.snapshots[snapshot].policy, p.beta,
                               *env.piref)
                      .value;
    }
    ir.regret = j_star - ir.j_beta;
    ir.objective = objective;
    ir.n_pref = n_pref;
    ir.alpha = p.alpha;
    ir.in_class = in_class;
    rec.per_iteration.push_back(ir);
  };

  {
    const bool in_class = finite ? piref_index >= 0 : true;
    const int snap = push_snapshot(*env.piref, piref_index,
                                   finite ? std::vector<double>{} : theta0);
    record_iterate(1, snap, std::numeric_limits<double>::quiet_NaN(), 0,
                   in_class, piref_index);
  }

  std::vector<double> theta = theta0;
  std::vector<Trajectory> d_opt;

  for (int t = 1; t <= p.iterations; ++t) {
    const Rng it = rng.fork(static_cast<std::uint64_t>(t));
    const TabularPolicy& current = policies.back();

    for (int j = 0; j < p.batch_size; ++j) {
      Rng jt = it.fork(static_cast<std::uint64_t>(j));
      Rng init_stream = jt.fork("init");
      Rng tau_stream = jt.fork("tau");
      Rng tautil_stream = jt.fork("tautil");
      Rng label_stream = jt.fork("label");

      const StateId s1 =
          env.mdp->layer(0)[init_stream.categorical(env.mdp->rho())];
      const Trajectory tau = rollout_from(*env.mdp, s1, current, tau_stream);

      const TabularPolicy* sampler = nullptr;
      switch (p.sampling) {
        case SamplingKind::reference:
          sampler = env.piref;
          break;
        case SamplingKind::fixed:
          sampler = &*p.fixed_sampler;
          break;
        case SamplingKind::on_policy:
          sampler = &current;
          break;
        case SamplingKind::historical: {
          Rng hist = jt.fork("hist");
          const std::uint64_t i = hist.uniform_int(static_cast<std::uint64_t>(t));
          sampler = &policies[i];  // pi^(i+1), uniform over pi^(1..t)
          break;
        }
      }
      const Trajectory tautil =
          rollout_from(*env.mdp, s1, *sampler, tautil_stream);

      PreferencePair pair = label_pair(*env.mdp, tau, tautil, label_stream);
      rec.tau_plus_ids.push_back(env.space->index_of(pair.tau_plus));
      rec.tau_minus_ids.push_back(env.space->index_of(pair.tau_minus));
      if (finite) fstate.add_pair(pair);
      rec.preferences.append(std::move(pair), t);

      if (ctx.use_optimism) {
        switch (p.sampling) {
          case SamplingKind::reference:
          case SamplingKind::fixed:
            // Static sampler: re-use the comparator samples.
            d_opt.push_back(tautil);
            if (finite) fstate.add_optimism(tautil);
            break;
          case SamplingKind::historical:
            // Historical mixture: re-use the on-policy samples.
            d_opt.push_back(tau);
            if (finite) fstate.add_optimism(tau);
            break;
          case SamplingKind::on_policy:
            break;  // fresh set drawn below
        }
      }
    }

    if (ctx.use_optimism && p.sampling == SamplingKind::on_policy) {
      // Time-varying sampler: fresh optimism set of t samples from pi^(t).
      d_opt.clear();
      if (finite) fstate.optimism.assign(fklass->size(), 0.0);
      Rng opt_stream = it.fork("opt");
      for (int k = 0; k < t; ++k) {
        Rng ks = opt_stream.fork(static_cast<std::uint64_t>(k));
        const StateId s1 = env.mdp->layer(0)[ks.categorical(env.mdp->rho())];
        Trajectory sample = rollout_from(*env.mdp, s1, current, ks);
        if (finite) fstate.add_optimism(sample);
        d_opt.push_back(std::move(sample));
      }
    }

    // Policy update.
    double achieved = 0.0;
    if (finite) {
      Rng tie_stream = it.fork("tie");
      const std::vector<double> values = fstate.objective_values(p.alpha);
      const int m = argmin_with_ties(values, p.tie_break, &tie_stream);
      achieved = values[m];
      policies.push_back(fklass->members[m]);
      const int snap = push_snapshot(fklass->members[m], m, {});
      record_iterate(t + 1, snap, achieved,
                     static_cast<std::int64_t>(rec.preferences.size()), true,
                     m);
    } else {
      Rng min_stream = it.fork("minimize");
      LogLinearPolicy start(*env.mdp, *env.features, theta, p.beta,
                            *env.piref);
      GradMinResult res =
          minimize_log_linear(start, p.alpha, rec.preferences, d_opt,
                              p.minimizer, p.clip, min_stream);
      theta = res.theta;
      achieved = res.value;
      LogLinearPolicy pi(*env.mdp, *env.features, theta, p.beta, *env.piref);
      policies.push_back(pi.tabular());
      const int snap = push_snapshot(pi.tabular(), -1, theta);
      record_iterate(t + 1, snap, achieved,
                     static_cast<std::int64_t>(rec.preferences.size()), true,
                     -1);
    }
  }

  rec.selected = select_final(env, rec, p.selection, p.validation_samples,
                              seed);
  rec.selection_rule =
      p.selection == SelectMode::exact
          ? "exact"
          : "validation(" + std::to_string(p.validation_samples) + ")";
  return rec;
}

}  // namespace

std::string to_string(SamplingKind kind) {
  switch (kind) {
    case SamplingKind::reference:
      return "reference";
    case SamplingKind::fixed:
      return "fixed";
    case SamplingKind::historical:
      return "historical";
    case SamplingKind::on_policy:
      return "on_policy";
  }
  return "?";
}

RunRecord run_xpo(const TrainEnv& env, const PolicyClassSpec& klass,
                  const LoopParams& params, std::uint64_t seed) {
  if (params.sampling == SamplingKind::on_policy && params.alpha == 0.0)
    throw std::invalid_argument(
        "run_xpo: on-policy sampling with alpha = 0 is online DPO; call "
        "run_online_dpo");
  LoopContext ctx{env, klass, params, "xpo", params.alpha > 0.0};
  return run_loop(ctx, seed);
}

RunRecord run_online_dpo(const TrainEnv& env, const PolicyClassSpec& klass,
                         LoopParams params, std::uint64_t seed,
                         bool ref_comparator) {
  params.alpha = 0.0;
  params.batch_size = 1;
  params.sampling =
      ref_comparator ? SamplingKind::reference : SamplingKind::on_policy;
  LoopContext ctx{env, klass, params, "online_dpo", false};
  return run_loop(ctx, seed);
}

RunRecord run_iterative_dpo(const TrainEnv& env, const PolicyClassSpec& klass,
                            LoopParams params, std::uint64_t seed) {
  params.alpha = 0.0;
  params.sampling = SamplingKind::on_policy;
  LoopContext ctx{env, klass, params, "iterative_dpo", false};
  return run_loop(ctx, seed);
}

PolicySnapshot run_offline_dpo(const TrainEnv& env,
                               const PolicyClassSpec& klass,
                               const LoopParams& params,
                               const PreferenceDataset& data,
                               std::uint64_t seed) {
  if (data.empty())
    throw std::invalid_argument("offline dpo: dataset must be non-empty");
  Rng rng(seed);
  if (const auto* fklass = std::get_if<FinitePolicyClass>(&klass)) {
    Rng tie_stream = rng.fork("tie");
    const FiniteMinResult res = minimize_finite(
        *fklass,
        [&](const TabularPolicy& pi) {
          return dpo_loss(pi, *env.piref, params.beta, data);
        },
        params.tie_break, &tie_stream);
    return PolicySnapshot{fklass->members[res.index], {}, res.index};
  }
  const auto& lspec = std::get<LogLinearFamilySpec>(klass);
  std::vector<double> theta0 = lspec.theta0;
  if (theta0.empty()) theta0.assign(env.features->dim(), 0.0);
  LogLinearPolicy start(*env.mdp, *env.features, theta0, params.beta,
                        *env.piref);
  Rng min_stream = rng.fork("minimize");
  GradMinResult res = minimize_log_linear(start, 0.0, data, {},
                                          params.minimizer, params.clip,
                                          min_stream);
  LogLinearPolicy pi(*env.mdp, *env.features, res.theta, params.beta,
                     *env.piref);
  return PolicySnapshot{pi.tabular(), res.theta, -1};
}

double alpha_schedule(const AlphaScheduleInputs& in) {
  if (!(in.beta > 0.0) || !(in.vmax >= 0.0) || !(in.rmax >= 0.0) ||
      in.iterations < 1 || !(in.delta > 0.0 && in.delta < 1.0) ||
      !(in.coefficient > 0.0) || !(in.c > 0.0))
    throw std::invalid_argument("alpha_schedule: inputs out of range");
  const double t = static_cast<double>(in.iterations);
  double log_term = in.log_class_size + std::log(t) + std::log(1.0 / in.delta);
  if (in.sec_variant) log_term *= std::log(t);
  return in.c * in.beta / ((in.vmax + in.rmax) * std::exp(2.0 * in.rmax)) *
         std::sqrt(log_term / (t * in.coefficient));
}

int select_final(const TrainEnv& env, const RunRecord& record, SelectMode mode,
                 std::int64_t validation_samples, std::uint64_t seed) {
  int best = -1;
  double best_value = -kInf;
  Rng rng = Rng(seed).fork("validation");
  for (std::size_t i = 0; i < record.per_iteration.size(); ++i) {
    const IterationRecord& ir = record.per_iteration[i];
    if (!ir.in_class) continue;
    double value = ir.j_beta;
    if (mode == SelectMode::validation) {
      Rng stream = rng.fork(static_cast<std::uint64_t>(i));
      value = j_beta_monte_carlo(*env.mdp,
                                 record.snapshots[ir.snapshot].policy,
                                 record.beta, *env.piref, validation_samples,
                                 stream)
                  .value;
    }
    if (value > best_value) {  // strict: ties keep the earliest iterate
      best_value = value;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw std::runtime_error("select_final: no in-class iterate");
  return best;
}

std::string serialize_run_record(const RunRecord& record,
                                 const std::string& instance_hash,
                                 const std::string& config_echo) {
  std::string out;
  out += "# config " + config_echo + "\n";
  out += "# instance_hash " + instance_hash + "\n";
  out += "# seed " + std::to_string(record.seed) + "\n";
  out += "# algo " + record.algo + " strategy " + record.strategy + "\n";
  out += "t,j_beta,regret,objective,n_pref,alpha\n";
  for (const IterationRecord& ir : record.per_iteration) {
    out += std::to_string(ir.t) + "," + fmt(ir.j_beta) + "," + fmt(ir.regret) +
           "," + fmt(ir.objective) + "," + std::to_string(ir.n_pref) + "," +
           fmt(ir.alpha) + "\n";
  }
  out += "# selected t " +
         std::to_string(record.per_iteration[record.selected].t) + " rule " +
         record.selection_rule + " regret " + fmt(record.selected_regret()) +
         "\n";
  return out;
}

std::string serialize_preference_log(const RunRecord& record) {
  std::string out = "iteration,s1,tau_plus,tau_minus,raw_draw,p_win\n";
  for (std::size_t i = 0; i < record.preferences.size(); ++i) {
    const PreferencePair& pair = record.preferences[i];
    out += std::to_string(record.preferences.iteration_of(i)) + "," +
           std::to_string(pair.initial_state) + "," +
           std::to_string(record.tau_plus_ids[i]) + "," +
           std::to_string(record.tau_minus_ids[i]) + "," +
           std::to_string(pair.raw_draw) + "," + fmt(pair.p_win) + "\n";
  }
  return out;
}

}  // namespace xpo
