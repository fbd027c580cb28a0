#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xpo/instances.hpp"
#include "xpo/trainer.hpp"

namespace xpo {

/// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIdentityFailure = 2;
inline constexpr int kExitRuntime = 3;

/// How the optimism coefficient is chosen when not given explicitly:
/// from the schedule with the coverage coefficient ("cov"), with a
/// small-horizon exhaustive extrapolation estimate ("sec"), or with a
/// caller-supplied value ("manual").
struct AlphaRule {
  double c = 1.0;
  double delta = 0.05;
  std::string coefficient = "cov";  // cov | sec | manual
  double manual = 1.0;
  bool sec_variant = false;  // use the log T variant of the schedule
};

/// Declarative description of one experiment; hashable and serializable.
struct ExperimentConfig {
  std::string instance = "prop31(0.02,0.125)";
  std::string algo = "xpo";  // xpo | online_dpo | iterative_dpo | offline_dpo
  double beta = 0.02;
  std::optional<double> alpha;     // explicit optimism coefficient
  std::optional<AlphaRule> alpha_rule;
  int iterations = 100;  // T
  int batch_size = 1;
  std::string sampling = "reference";
  std::vector<std::uint64_t> seeds = {0};
  /// ref_star | boltzmann(k,sigma,seed) | graded(k,lo,hi,seed) |
  /// log_linear(bound)
  std::string policy_class = "ref_star";
  double clip_lo = -500.0;
  double clip_hi = 500.0;
  MinimizerConfig minimizer{};
  std::string tie_break = "first";    // first | last | random
  std::string selection = "exact";    // exact | validation
  std::int64_t validation_samples = 100000;
  std::string out_dir;  // empty: $XPOLAB_OUT or ./xpolab_out
};

std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);
/// FNV-1a hash of the canonical JSON form; stable under field reordering.
std::string config_hash(const ExperimentConfig& config);

std::string default_out_root();

/// Fully resolved experiment: instance, enumeration, policy class, and the
/// effective optimism coefficient.
struct PreparedExperiment {
  Instance instance;
  std::unique_ptr<TrajectorySpace> space;
  PolicyClassSpec klass;
  double alpha = 0.0;
  double vmax = 0.0;
  double coefficient = 0.0;  // value used inside the schedule
  LoopParams params;
};

PreparedExperiment prepare(const ExperimentConfig& config);

/// Builds a policy class from its spec string.  Finite classes always list
/// piref first.
PolicyClassSpec build_policy_class(const std::string& spec,
                                   const Instance& instance,
                                   const TrajectorySpace& space, double beta);

/// Executes one run per seed (seeds run concurrently), writes run records,
/// preference logs, summary tables, and plot data under
/// out_dir/<config hash>/.  Returns an exit code.
int cli_run(const ExperimentConfig& config);

/// Runs the identity battery plus a coefficient report; exit code 2 when a
/// check fails.
int cli_diagnose(const std::string& instance_spec,
                 const std::string& class_spec, double beta,
                 std::uint64_t seed, const std::string& out_dir);

/// Builds the stall instance and runs the passive and optimistic loops side
/// by side over the given seeds, emitting a comparison table.
int cli_counterexample(double beta, double c, int iterations, int num_seeds,
                       const std::string& out_dir);

/// Cartesian sweep over beta / alpha / T; one run directory per point plus
/// a sweep summary with log-log plot data (T vs mean regret).
int cli_sweep(const ExperimentConfig& base, const std::vector<double>& betas,
              const std::vector<double>& alphas, const std::vector<int>& Ts);

/// In-process core of cli_run, exposed for tests: returns the records and
/// output directory.
struct RunOutput {
  std::string directory;
  std::vector<RunRecord> records;
};
RunOutput execute_runs(const ExperimentConfig& config);

}  // namespace xpo
