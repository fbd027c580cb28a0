#include "xpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace xpo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Nearest-rank quantile of a sorted vector; the independent readers use the
// same definition.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::min(sorted.size() - 1, rank == 0 ? 0 : rank - 1)];
}

SamplingKind parse_sampling(const std::string& s) {
  if (s == "reference") return SamplingKind::reference;
  if (s == "fixed") return SamplingKind::fixed;
  if (s == "historical") return SamplingKind::historical;
  if (s == "on_policy") return SamplingKind::on_policy;
  throw std::invalid_argument("config: unknown sampling strategy '" + s + "'");
}

TieBreak parse_tie_break(const std::string& s) {
  if (s == "first") return TieBreak::first;
  if (s == "last") return TieBreak::last;
  if (s == "random") return TieBreak::random;
  throw std::invalid_argument("config: unknown tie break '" + s + "'");
}

std::vector<double> parse_numeric_args(const std::string& spec) {
  const std::size_t open = spec.find('(');
  if (open == std::string::npos || spec.back() != ')')
    throw std::invalid_argument("policy class spec '" + spec +
                                "': expected name(args)");
  std::vector<double> args;
  std::stringstream ss(spec.substr(open + 1, spec.size() - open - 2));
  std::string tok;
  while (std::getline(ss, tok, ','))
    args.push_back(std::stod(tok));
  return args;
}

int instance_features_dim(const Instance& instance) {
  return instance.features ? instance.features->dim() : 0;
}

}  // namespace

std::string default_out_root() {
  if (const char* env = std::getenv("XPOLAB_OUT"); env && *env) return env;
  return "xpolab_out";
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["instance"] = c.instance;
  j["algo"] = c.algo;
  j["beta"] = c.beta;
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.alpha_rule) {
    json r;
    r["c"] = c.alpha_rule->c;
    r["delta"] = c.alpha_rule->delta;
    r["coefficient"] = c.alpha_rule->coefficient;
    r["manual"] = c.alpha_rule->manual;
    r["sec_variant"] = c.alpha_rule->sec_variant;
    j["alpha_rule"] = std::move(r);
  }
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["sampling"] = c.sampling;
  j["seeds"] = c.seeds;
  j["policy_class"] = c.policy_class;
  j["clip"] = {c.clip_lo, c.clip_hi};
  j["minimizer"] = {{"max_iterations", c.minimizer.max_iterations},
                    {"step_scale", c.minimizer.step_scale},
                    {"backtrack", c.minimizer.backtrack},
                    {"grad_tol", c.minimizer.grad_tol},
                    {"restarts", c.minimizer.restarts},
                    {"restart_radius", c.minimizer.restart_radius}};
  j["tie_break"] = c.tie_break;
  j["selection"] = c.selection;
  j["validation_samples"] = c.validation_samples;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.instance = j.value("instance", c.instance);
  c.algo = j.value("algo", c.algo);
  c.beta = j.value("beta", c.beta);
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  if (j.contains("alpha_rule")) {
    AlphaRule r;
    const json& jr = j.at("alpha_rule");
    r.c = jr.value("c", r.c);
    r.delta = jr.value("delta", r.delta);
    r.coefficient = jr.value("coefficient", r.coefficient);
    r.manual = jr.value("manual", r.manual);
    r.sec_variant = jr.value("sec_variant", r.sec_variant);
    c.alpha_rule = r;
  }
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.sampling = j.value("sampling", c.sampling);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.policy_class = j.value("policy_class", c.policy_class);
  if (j.contains("clip")) {
    c.clip_lo = j.at("clip")[0].get<double>();
    c.clip_hi = j.at("clip")[1].get<double>();
  }
  if (j.contains("minimizer")) {
    const json& m = j.at("minimizer");
    c.minimizer.max_iterations =
        m.value("max_iterations", c.minimizer.max_iterations);
    c.minimizer.step_scale = m.value("step_scale", c.minimizer.step_scale);
    c.minimizer.backtrack = m.value("backtrack", c.minimizer.backtrack);
    c.minimizer.grad_tol = m.value("grad_tol", c.minimizer.grad_tol);
    c.minimizer.restarts = m.value("restarts", c.minimizer.restarts);
    c.minimizer.restart_radius =
        m.value("restart_radius", c.minimizer.restart_radius);
  }
  c.tie_break = j.value("tie_break", c.tie_break);
  c.selection = j.value("selection", c.selection);
  c.validation_samples = j.value("validation_samples", c.validation_samples);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::uint64_t h = Rng::fnv1a(config_to_json(config));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

PolicyClassSpec build_policy_class(const std::string& spec,
                                   const Instance& instance,
                                   const TrajectorySpace& space, double beta) {
  const Dcmdp& mdp = instance.mdp;
  if (spec == "ref_star") {
    const SoftSolution sol = solve_soft_dp(mdp, beta, instance.piref);
    return FinitePolicyClass{{instance.piref, sol.pistar},
                             {"piref", "pistar"}};
  }
  if (spec.rfind("boltzmann(", 0) == 0) {
    const auto a = parse_numeric_args(spec);
    if (a.size() != 3)
      throw std::invalid_argument(
          "policy class boltzmann expects (count, sigma, seed)");
    const int count = static_cast<int>(a[0]);
    const double sigma = a[1];
    Rng rng = Rng(static_cast<std::uint64_t>(a[2])).fork("class");
    const SoftSolution sol = solve_soft_dp(mdp, beta, instance.piref);
    FinitePolicyClass klass{{instance.piref, sol.pistar}, {"piref", "pistar"}};
    for (int k = 0; k < count; ++k) {
      StateActionFn f = sol.qstar;
      for (double& v : f.values()) v += sigma * rng.normal();
      klass.members.push_back(boltzmann_policy(mdp, f, beta, instance.piref));
      klass.labels.push_back("boltzmann_" + std::to_string(k));
    }
    return klass;
  }
  if (spec.rfind("graded(", 0) == 0) {
    // count perturbation scales, log-spaced in [lo, hi], one random
    // direction each; spans policies from near-optimal to badly suboptimal.
    const auto a = parse_numeric_args(spec);
    if (a.size() != 4)
      throw std::invalid_argument(
          "policy class graded expects (count, lo, hi, seed)");
    const int count = static_cast<int>(a[0]);
    const double lo = a[1], hi = a[2];
    if (!(lo > 0.0) || !(hi > lo))
      throw std::invalid_argument("policy class graded: need 0 < lo < hi");
    Rng rng = Rng(static_cast<std::uint64_t>(a[3])).fork("class");
    const SoftSolution sol = solve_soft_dp(mdp, beta, instance.piref);
    FinitePolicyClass klass{{instance.piref, sol.pistar}, {"piref", "pistar"}};
    for (int k = 0; k < count; ++k) {
      const double sigma =
          count == 1 ? lo
                     : lo * std::pow(hi / lo,
                                     static_cast<double>(k) /
                                         static_cast<double>(count - 1));
      StateActionFn f = sol.qstar;
      for (double& v : f.values()) v += sigma * rng.normal();
      klass.members.push_back(boltzmann_policy(mdp, f, beta, instance.piref));
      klass.labels.push_back("graded_" + std::to_string(k));
    }
    return klass;
  }
  if (spec.rfind("log_linear(", 0) == 0) {
    const auto a = parse_numeric_args(spec);
    if (a.size() != 1)
      throw std::invalid_argument("policy class log_linear expects (bound)");
    if (!instance.features)
      throw std::invalid_argument(
          "policy class log_linear: instance has no feature map");
    LogLinearFamilySpec family;
    family.b_bound = a[0];
    return family;
  }
  throw std::invalid_argument("unknown policy class spec '" + spec + "'");
}

namespace {

// Sampled tabular policies standing in for an infinite log-linear class in
// coefficient estimates (reported as lower bounds).
std::vector<TabularPolicy> sample_log_linear(const Instance& instance,
                                             const LogLinearFamilySpec& spec,
                                             double beta, int count,
                                             std::uint64_t seed) {
  Rng rng = Rng(seed).fork("vmax_sample");
  const FeatureMap& phi = *instance.features;
  std::vector<TabularPolicy> out;
  out.reserve(count + 1);
  out.push_back(instance.piref);  // theta = 0
  for (int k = 0; k < count; ++k) {
    std::vector<double> theta(phi.dim());
    double norm = 0.0;
    for (double& x : theta) {
      x = rng.normal();
      norm += x * x;
    }
    const double radius =
        spec.b_bound * std::pow(rng.next_double(),
                                1.0 / static_cast<double>(phi.dim()));
    const double scale = radius / std::max(std::sqrt(norm), 1e-300);
    for (double& x : theta) x *= scale;
    out.push_back(LogLinearPolicy(instance.mdp, phi, std::move(theta), beta,
                                  instance.piref)
                      .tabular());
  }
  return out;
}

}  // namespace

PreparedExperiment prepare(const ExperimentConfig& config) {
  PreparedExperiment prep{make_instance(config.instance), nullptr,
                          FinitePolicyClass{}, 0.0, 0.0, 0.0, LoopParams{}};
  prep.space = std::make_unique<TrajectorySpace>(prep.instance.mdp);
  prep.klass = build_policy_class(config.policy_class, prep.instance,
                                  *prep.space, config.beta);

  LoopParams& p = prep.params;
  p.beta = config.beta;
  p.iterations = config.iterations;
  p.batch_size = config.batch_size;
  p.sampling = parse_sampling(config.sampling);
  p.clip = ClipBounds{config.clip_lo, config.clip_hi};
  p.minimizer = config.minimizer;
  p.tie_break = parse_tie_break(config.tie_break);
  if (config.selection == "exact") {
    p.selection = SelectMode::exact;
  } else if (config.selection == "validation") {
    p.selection = SelectMode::validation;
  } else {
    throw std::invalid_argument("config: unknown selection mode '" +
                                config.selection + "'");
  }
  p.validation_samples = config.validation_samples;

  // Resolve the optimism coefficient.
  if (config.alpha && config.alpha_rule)
    throw std::invalid_argument(
        "config: give either alpha or alpha_rule, not both");
  if (config.alpha) {
    prep.alpha = *config.alpha;
  } else if (config.alpha_rule) {
    const AlphaRule& rule = *config.alpha_rule;
    std::vector<TabularPolicy> members;
    double log_class_size = 0.0;
    if (const auto* fk = std::get_if<FinitePolicyClass>(&prep.klass)) {
      members = fk->members;
      log_class_size = std::log(static_cast<double>(fk->size()));
    } else {
      const auto& family = std::get<LogLinearFamilySpec>(prep.klass);
      members = sample_log_linear(prep.instance, family, config.beta, 1000, 7);
      // Effective class size for the schedule: covering-number style
      // surrogate, d * log-ish constant.
      log_class_size = instance_features_dim(prep.instance) * std::log(100.0);
    }
    const VmaxReport vr =
        vmax_check(members, config.beta, prep.instance.piref, *prep.space);
    if (!vr.finite)
      throw std::invalid_argument(
          "alpha schedule: class violates the bounded density-ratio "
          "assumption (vmax infinite)");
    prep.vmax = vr.vmax;
    if (rule.coefficient == "cov") {
      prep.coefficient = coverability(*prep.space, members, false).c_cov;
    } else if (rule.coefficient == "sec") {
      // Exhaustive estimate at the largest horizon that stays enumerable.
      int t_small = 1;
      double count = static_cast<double>(members.size());
      while (t_small < config.iterations && count <= 10000.0 / members.size()) {
        count *= static_cast<double>(members.size());
        ++t_small;
      }
      FinitePolicyClass sampled{members, {}};
      prep.coefficient =
          std::max(1e-12, sec_estimate_exhaustive(*prep.space, sampled,
                                                  config.beta,
                                                  prep.instance.piref, t_small)
                              .value);
    } else if (rule.coefficient == "manual") {
      prep.coefficient = rule.manual;
    } else {
      throw std::invalid_argument("alpha rule: unknown coefficient '" +
                                  rule.coefficient + "'");
    }
    AlphaScheduleInputs in;
    in.beta = config.beta;
    in.vmax = prep.vmax;
    in.rmax = prep.instance.mdp.rmax();
    in.iterations = config.iterations;
    in.log_class_size = log_class_size;
    in.delta = rule.delta;
    in.coefficient = prep.coefficient;
    in.c = rule.c;
    in.sec_variant = rule.sec_variant;
    prep.alpha = alpha_schedule(in);
  } else {
    prep.alpha = 0.0;
  }
  p.alpha = prep.alpha;
  return prep;
}

RunOutput execute_runs(const ExperimentConfig& config) {
  PreparedExperiment prep = prepare(config);
  const Dcmdp& mdp = prep.instance.mdp;
  TrainEnv env{&mdp, prep.space.get(), &prep.instance.piref,
               prep.instance.features ? &*prep.instance.features : nullptr};

  const int n = static_cast<int>(config.seeds.size());
  std::vector<RunRecord> records(n);
  std::exception_ptr error;

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      const std::uint64_t seed = config.seeds[i];
      if (config.algo == "xpo") {
        records[i] = run_xpo(env, prep.klass, prep.params, seed);
      } else if (config.algo == "online_dpo") {
        records[i] = run_online_dpo(
            env, prep.klass, prep.params, seed,
            prep.params.sampling == SamplingKind::reference);
      } else if (config.algo == "iterative_dpo") {
        records[i] = run_iterative_dpo(env, prep.klass, prep.params, seed);
      } else if (config.algo == "offline_dpo") {
        // Dataset of T pairs from piref x piref, then one minimization.
        Rng rng = Rng(seed).fork("offline");
        PreferenceDataset data;
        RunRecord rec;
        for (int t = 1; t <= prep.params.iterations; ++t) {
          Rng it = rng.fork(static_cast<std::uint64_t>(t));
          const StateId s1 = mdp.layer(0)[it.fork("init").categorical(
              mdp.rho())];
          Rng tau_stream = it.fork("tau");
          Rng tautil_stream = it.fork("tautil");
          Rng label_stream = it.fork("label");
          const Trajectory tau =
              rollout_from(mdp, s1, prep.instance.piref, tau_stream);
          const Trajectory tautil =
              rollout_from(mdp, s1, prep.instance.piref, tautil_stream);
          PreferencePair pair = label_pair(mdp, tau, tautil, label_stream);
          rec.tau_plus_ids.push_back(prep.space->index_of(pair.tau_plus));
          rec.tau_minus_ids.push_back(prep.space->index_of(pair.tau_minus));
          data.append(std::move(pair), t);
        }
        PolicySnapshot snap =
            run_offline_dpo(env, prep.klass, prep.params, data, seed);
        rec.algo = "offline_dpo";
        rec.seed = seed;
        rec.beta = config.beta;
        rec.alpha = 0.0;
        rec.iterations = 1;
        rec.strategy = "offline";
        rec.preferences = std::move(data);
        const SoftSolution sol = solve_soft_dp(mdp, config.beta,
                                               prep.instance.piref);
        const double jstar =
            j_beta_exact(*prep.space, sol.pistar, config.beta,
                         prep.instance.piref)
                .value;
        auto push = [&](const TabularPolicy& pi, int t, int class_index,
                        std::int64_t n_pref) {
          rec.snapshots.push_back(PolicySnapshot{pi, {}, class_index});
          IterationRecord ir;
          ir.t = t;
          ir.snapshot = static_cast<int>(rec.snapshots.size() - 1);
          ir.j_beta = j_beta_exact(*prep.space, pi, config.beta,
                                   prep.instance.piref)
                          .value;
          ir.regret = jstar - ir.j_beta;
          ir.objective = std::numeric_limits<double>::quiet_NaN();
          ir.n_pref = n_pref;
          ir.alpha = 0.0;
          rec.per_iteration.push_back(ir);
        };
        push(prep.instance.piref, 1, -1, 0);
        push(snap.policy, 2, snap.class_index,
             static_cast<std::int64_t>(rec.preferences.size()));
        rec.selected = select_final(env, rec, prep.params.selection,
                                    prep.params.validation_samples, seed);
        rec.selection_rule = "exact";
        records[i] = std::move(rec);
      } else {
        throw std::invalid_argument("config: unknown algo '" + config.algo +
                                    "'");
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  // Write outputs: one directory per config hash.
  const std::string root =
      config.out_dir.empty() ? default_out_root() : config.out_dir;
  const fs::path dir = fs::path(root) / config_hash(config);
  fs::create_directories(dir);
  const std::string echo = config_hash(config);
  const std::string inst_hash = instance_hash(prep.instance);

  write_file(dir / "config.json", config_to_json(config) + "\n");
  for (int i = 0; i < n; ++i) {
    const std::string tag = std::to_string(config.seeds[i]);
    write_file(dir / ("seed_" + tag + ".run"),
               serialize_run_record(records[i], inst_hash, echo));
    write_file(dir / ("seed_" + tag + ".pref"),
               serialize_preference_log(records[i]));
  }

  // Per-iteration regret statistics across seeds.
  {
    std::string summary = "t,mean,median,q10,q90,min,max\n";
    std::string plot = "t,mean_regret\n";
    const std::size_t T1 = records.empty() ? 0 : records[0].per_iteration.size();
    for (std::size_t t = 0; t < T1; ++t) {
      std::vector<double> regrets;
      regrets.reserve(records.size());
      for (const RunRecord& r : records)
        regrets.push_back(r.per_iteration[t].regret);
      std::sort(regrets.begin(), regrets.end());
      double mean = 0.0;
      for (double x : regrets) mean += x;
      mean /= static_cast<double>(regrets.size());
      summary += std::to_string(records[0].per_iteration[t].t) + "," +
                 fmt(mean) + "," + fmt(quantile(regrets, 0.5)) + "," +
                 fmt(quantile(regrets, 0.1)) + "," +
                 fmt(quantile(regrets, 0.9)) + "," + fmt(regrets.front()) +
                 "," + fmt(regrets.back()) + "\n";
      plot += std::to_string(records[0].per_iteration[t].t) + "," + fmt(mean) +
              "\n";
    }
    write_file(dir / "summary.csv", summary);
    write_file(dir / "plot_regret_vs_iteration.csv", plot);
  }

  // Final selection per seed.
  {
    std::string final_csv = "seed,selected_t,regret,j_beta\n";
    for (int i = 0; i < n; ++i) {
      const IterationRecord& ir =
          records[i].per_iteration[records[i].selected];
      final_csv += std::to_string(config.seeds[i]) + "," +
                   std::to_string(ir.t) + "," + fmt(ir.regret) + "," +
                   fmt(ir.j_beta) + "\n";
    }
    write_file(dir / "final.csv", final_csv);
  }

  return RunOutput{dir.string(), std::move(records)};
}

int cli_run(const ExperimentConfig& config) {
  try {
    RunOutput out = execute_runs(config);
    // Headline: mean final regret.
    double mean = 0.0;
    for (const RunRecord& r : out.records) mean += r.selected_regret();
    mean /= static_cast<double>(out.records.size());
    std::cout << "wrote " << out.directory << " (" << out.records.size()
              << " seeds, mean final regret " << mean << ")\n";
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_diagnose(const std::string& instance_spec,
                 const std::string& class_spec, double beta,
                 std::uint64_t seed, const std::string& out_dir) {
  try {
    Instance instance = make_instance(instance_spec);
    TrajectorySpace space(instance.mdp);
    const std::vector<DiagRecord> records =
        identity_battery(instance.mdp, space, instance.piref, beta, seed);

    // Coefficient report over the requested class.
    PolicyClassSpec klass =
        build_policy_class(class_spec, instance, space, beta);
    std::vector<TabularPolicy> members;
    std::string class_note = class_spec;
    if (const auto* fk = std::get_if<FinitePolicyClass>(&klass)) {
      members = fk->members;
    } else {
      members = sample_log_linear(
          instance, std::get<LogLinearFamilySpec>(klass), beta, 1000, seed);
      class_note += " (sampled lower bound)";
    }
    const CoefficientReport cov = coverability(space, members, false);
    const double conc = concentrability(space, members, instance.piref);
    const VmaxReport vr = vmax_check(members, beta, instance.piref, space);

    std::string text;
    bool all_pass = true;
    for (const DiagRecord& r : records) {
      text += std::string(r.pass ? "[pass]" : "[FAIL]") + " " + r.name + " value " +
              fmt(r.value) + " (" + r.detail + ")\n";
      all_pass = all_pass && r.pass;
    }
    {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "coefficients class=%s c_cov=%.10g c_conc=%.10g "
                    "vmax=%.10g exp(vmax/beta)=%.10g\n",
                    class_note.c_str(), cov.c_cov, conc, vr.vmax,
                    std::exp(vr.vmax / beta));
      text += buf;
    }
    std::cout << text;
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "diagnose.txt", text);
    }
    return all_pass ? kExitOk : kExitIdentityFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_counterexample(double beta, double c, int iterations, int num_seeds,
                       const std::string& out_dir) {
  try {
    if (iterations > 0.5 * std::exp(1.0 / (8.0 * beta)))
      std::cerr << "warning: T = " << iterations
                << " exceeds (1/2) exp(1/(8 beta)) = "
                << 0.5 * std::exp(1.0 / (8.0 * beta))
                << "; the stall-probability regime no longer applies\n";

    char inst[64];
    std::snprintf(inst, sizeof(inst), "prop31(%.17g,%.17g)", beta, c);

    ExperimentConfig online;
    online.instance = inst;
    online.algo = "online_dpo";
    online.beta = beta;
    online.iterations = iterations;
    online.sampling = "on_policy";
    online.policy_class = "ref_star";
    online.seeds.clear();
    for (int s = 0; s < num_seeds; ++s) online.seeds.push_back(s);
    if (!out_dir.empty()) online.out_dir = out_dir;

    ExperimentConfig optimistic = online;
    optimistic.algo = "xpo";
    optimistic.sampling = "reference";
    optimistic.alpha_rule = AlphaRule{};  // schedule with coverage coefficient

    RunOutput online_out = execute_runs(online);
    RunOutput xpo_out = execute_runs(optimistic);

    const double eps = std::exp(-c / beta);
    const double theory = std::pow(1.0 - 2.0 * eps, iterations);

    int stuck = 0;
    for (const RunRecord& r : online_out.records) {
      bool all_ref = true;
      for (const IterationRecord& ir : r.per_iteration)
        all_ref = all_ref &&
                  r.snapshots[ir.snapshot].class_index == 0;  // piref first
      stuck += all_ref ? 1 : 0;
    }
    std::vector<double> escapes;
    int reached = 0;
    for (const RunRecord& r : xpo_out.records) {
      double first = std::numeric_limits<double>::quiet_NaN();
      for (const IterationRecord& ir : r.per_iteration)
        if (ir.regret < 0.01) {
          first = ir.t;
          ++reached;
          break;
        }
      if (!std::isnan(first)) escapes.push_back(first);
    }
    std::sort(escapes.begin(), escapes.end());

    std::string table;
    {
      char buf[512];
      std::snprintf(buf, sizeof(buf),
                    "beta %.6g c %.6g eps %.6g T %d seeds %d\n"
                    "online_dpo stuck fraction %.4f (theory lower bound "
                    "(1-2eps)^T = %.4f)\n"
                    "xpo reached regret < 0.01 in %.4f of seeds, median "
                    "escape iteration %s\n",
                    beta, c, eps, iterations, num_seeds,
                    static_cast<double>(stuck) / num_seeds, theory,
                    static_cast<double>(reached) / num_seeds,
                    escapes.empty() ? "-"
                                    : fmt(quantile(escapes, 0.5)).c_str());
      table = buf;
    }
    std::cout << table;
    const fs::path dir =
        fs::path(out_dir.empty() ? default_out_root() : out_dir);
    fs::create_directories(dir);
    write_file(dir / "counterexample.txt", table);
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_sweep(const ExperimentConfig& base, const std::vector<double>& betas,
              const std::vector<double>& alphas, const std::vector<int>& Ts) {
  try {
    const std::vector<double> beta_grid =
        betas.empty() ? std::vector<double>{base.beta} : betas;
    const std::vector<int> t_grid =
        Ts.empty() ? std::vector<int>{base.iterations} : Ts;
    std::vector<std::optional<double>> alpha_grid;
    if (alphas.empty()) {
      alpha_grid.push_back(base.alpha);
    } else {
      for (double a : alphas) alpha_grid.push_back(a);
    }

    std::string summary = "beta,alpha,T,config,mean_final_regret\n";
    std::string loglog = "T,mean_final_regret\n";
    for (double beta : beta_grid) {
      for (const auto& alpha : alpha_grid) {
        for (int T : t_grid) {
          ExperimentConfig point = base;
          point.beta = beta;
          point.alpha = alpha;
          point.iterations = T;
          RunOutput out = execute_runs(point);
          double mean = 0.0;
          for (const RunRecord& r : out.records) mean += r.selected_regret();
          mean /= static_cast<double>(out.records.size());
          summary += fmt(beta) + "," + (alpha ? fmt(*alpha) : "rule") + "," +
                     std::to_string(T) + "," + config_hash(point) + "," +
                     fmt(mean) + "\n";
          loglog += std::to_string(T) + "," + fmt(mean) + "\n";
        }
      }
    }
    const fs::path dir =
        fs::path(base.out_dir.empty() ? default_out_root() : base.out_dir);
    fs::create_directories(dir);
    write_file(dir / "sweep_summary.csv", summary);
    write_file(dir / "plot_regret_vs_T.csv", loglog);
    std::cout << summary;
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace xpo
