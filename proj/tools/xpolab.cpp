// Command-line front end: run / diagnose / counterexample / sweep.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xpo/harness.hpp"

namespace {

// "0..199" or "0,1,5"
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const std::size_t dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
  return seeds;
}

struct RunFlags {
  std::string config_path;
  std::string instance;
  std::string algo;
  double beta = -1.0;
  double alpha = -1.0;
  bool alpha_from_theorem = false;
  std::string coef = "cov";
  double alpha_c = 1.0;
  double delta = 0.05;
  int iterations = -1;
  int batch_size = -1;
  std::string sampling;
  std::string seeds;
  std::string policy_class;
  std::string tie_break;
  std::string selection;
  std::string out_dir;
};

xpo::ExperimentConfig to_config(const RunFlags& f) {
  xpo::ExperimentConfig config;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw std::invalid_argument("cannot open " + f.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    config = xpo::config_from_json(buf.str());
  }
  if (!f.instance.empty()) config.instance = f.instance;
  if (!f.algo.empty()) config.algo = f.algo;
  if (f.beta >= 0.0) config.beta = f.beta;
  if (f.alpha >= 0.0) config.alpha = f.alpha;
  if (f.alpha_from_theorem) {
    xpo::AlphaRule rule;
    rule.c = f.alpha_c;
    rule.delta = f.delta;
    rule.coefficient = f.coef;
    config.alpha.reset();
    config.alpha_rule = rule;
  }
  if (f.iterations >= 0) config.iterations = f.iterations;
  if (f.batch_size >= 1) config.batch_size = f.batch_size;
  if (!f.sampling.empty()) config.sampling = f.sampling;
  if (!f.seeds.empty()) config.seeds = parse_seeds(f.seeds);
  if (!f.policy_class.empty()) config.policy_class = f.policy_class;
  if (!f.tie_break.empty()) config.tie_break = f.tie_break;
  if (!f.selection.empty()) config.selection = f.selection;
  if (!f.out_dir.empty()) config.out_dir = f.out_dir;
  return config;
}

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config to start from");
  cmd->add_option("--instance", f.instance,
                  "builtin spec like prop31(0.02,0.125) or a JSON file path");
  cmd->add_option("--algo", f.algo,
                  "xpo | online_dpo | iterative_dpo | offline_dpo");
  cmd->add_option("--beta", f.beta, "KL regularization coefficient");
  cmd->add_option("--alpha", f.alpha, "optimism coefficient");
  cmd->add_flag("--alpha-from-theorem", f.alpha_from_theorem,
                "derive alpha from the schedule");
  cmd->add_option("--coef", f.coef, "cov | sec | manual");
  cmd->add_option("--alpha-c", f.alpha_c, "schedule constant c");
  cmd->add_option("--delta", f.delta, "schedule confidence parameter");
  cmd->add_option("--T", f.iterations, "number of iterations");
  cmd->add_option("--batch-size", f.batch_size, "pairs per update");
  cmd->add_option("--sampling", f.sampling,
                  "reference | fixed | historical | on_policy");
  cmd->add_option("--seeds", f.seeds, "list 0,1,2 or range 0..199");
  cmd->add_option("--policy-class", f.policy_class,
                  "ref_star | boltzmann(k,sigma,seed) | graded(k,lo,hi,seed) "
                  "| log_linear(bound)");
  cmd->add_option("--tie-break", f.tie_break, "first | last | random");
  cmd->add_option("--selection", f.selection, "exact | validation");
  cmd->add_option("--out", f.out_dir, "output root (default $XPOLAB_OUT)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "xpolab: exact KL-regularized preference-optimization laboratory on "
      "deterministic contextual MDPs"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "execute a training experiment");
  add_run_flags(run, run_flags);

  std::string diag_instance = "random_tabular(3,3,3,7)";
  std::string diag_class = "boltzmann(4,0.3,7)";
  double diag_beta = 0.1;
  std::uint64_t diag_seed = 7;
  std::string diag_out;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "run the identity battery");
  diagnose->add_option("--instance", diag_instance, "instance spec");
  diagnose->add_option("--policy-class", diag_class, "class for coefficients");
  diagnose->add_option("--beta", diag_beta, "KL regularization coefficient");
  diagnose->add_option("--seed", diag_seed, "battery seed");
  diagnose->add_option("--out", diag_out, "optional output directory");

  double ce_beta = 0.02, ce_c = 0.125;
  int ce_T = 100, ce_seeds = 200;
  std::string ce_out;
  CLI::App* counter = app.add_subcommand(
      "counterexample", "passive vs optimistic loops on the stall bandit");
  counter->add_option("--beta", ce_beta, "KL coefficient, in (0, log(2)/8)");
  counter->add_option("--c", ce_c, "reference-mass constant, in (0, 1/8]");
  counter->add_option("--T", ce_T, "iterations per run");
  counter->add_option("--seeds", ce_seeds, "number of seeds");
  counter->add_option("--out", ce_out, "output root");

  RunFlags sweep_flags;
  std::string sweep_betas, sweep_alphas, sweep_Ts;
  CLI::App* sweep =
      app.add_subcommand("sweep", "cartesian sweep over beta/alpha/T");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--betas", sweep_betas, "comma-separated beta grid");
  sweep->add_option("--alphas", sweep_alphas, "comma-separated alpha grid");
  sweep->add_option("--Ts", sweep_Ts, "comma-separated T grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return xpo::cli_run(to_config(run_flags));
    if (diagnose->parsed())
      return xpo::cli_diagnose(diag_instance, diag_class, diag_beta, diag_seed,
                               diag_out);
    if (counter->parsed())
      return xpo::cli_counterexample(ce_beta, ce_c, ce_T, ce_seeds, ce_out);
    if (sweep->parsed()) {
      auto parse_list = [](const std::string& text) {
        std::vector<double> out;
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
        return out;
      };
      std::vector<int> ts;
      for (double t : parse_list(sweep_Ts)) ts.push_back(static_cast<int>(t));
      return xpo::cli_sweep(to_config(sweep_flags), parse_list(sweep_betas),
                            parse_list(sweep_alphas), ts);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return xpo::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return xpo::kExitRuntime;
  }
  return xpo::kExitValidation;
}
