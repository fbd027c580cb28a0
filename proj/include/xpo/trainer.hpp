#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "xpo/objective.hpp"
#include "xpo/policy.hpp"
#include "xpo/preference.hpp"
#include "xpo/softdp.hpp"

namespace xpo {

/// How the comparator trajectory tau~ is sampled at iteration t.
///   reference:  tau~ ~ piref                  (the default loop)
///   fixed:      tau~ ~ pi_fixed               (general static sampler)
///   historical: tau~ ~ uniform(pi^(1..t)), executed whole-episode
///   on_policy:  tau~ ~ pi^(t)                 (passive exploration)
enum class SamplingKind { reference, fixed, historical, on_policy };

std::string to_string(SamplingKind kind);

/// Log-linear policy family over the instance's feature map.
struct LogLinearFamilySpec {
  double b_bound = 2.0;               // parameter ball used for certification
  std::vector<double> theta0;         // empty = zeros
};

using PolicyClassSpec = std::variant<FinitePolicyClass, LogLinearFamilySpec>;

enum class SelectMode { exact, validation };

struct LoopParams {
  double beta = 0.1;
  double alpha = 0.0;
  int iterations = 100;  // T
  int batch_size = 1;    // preference pairs collected per policy update
  SamplingKind sampling = SamplingKind::reference;
  std::optional<TabularPolicy> fixed_sampler;
  ClipBounds clip{};
  MinimizerConfig minimizer{};
  TieBreak tie_break = TieBreak::first;
  SelectMode selection = SelectMode::exact;
  std::int64_t validation_samples = 100000;
};

struct PolicySnapshot {
  TabularPolicy policy;
  std::vector<double> theta;  // log-linear parameters, empty otherwise
  int class_index = -1;       // finite-class member index, -1 otherwise
};

struct IterationRecord {
  int t = 0;  // policy index, 1..T+1
  int snapshot = -1;
  double j_beta = 0.0;
  double regret = 0.0;
  double objective = 0.0;  // achieved argmin value that produced pi^(t)
  std::int64_t n_pref = 0;
  double alpha = 0.0;
  bool in_class = true;
};

/// Full trace of one training run; serializable byte-for-byte.
struct RunRecord {
  std::string algo;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double alpha = 0.0;
  int iterations = 0;  // T
  std::string strategy;
  std::vector<IterationRecord> per_iteration;  // size T+1
  std::vector<PolicySnapshot> snapshots;
  PreferenceDataset preferences;
  std::vector<std::int64_t> tau_plus_ids;   // canonical enumeration ids
  std::vector<std::int64_t> tau_minus_ids;  // (-1 if enumeration inactive)
  int selected = -1;  // index into per_iteration
  std::string selection_rule;

  const PolicySnapshot& selected_policy() const {
    return snapshots[per_iteration[selected].snapshot];
  }
  double selected_regret() const { return per_iteration[selected].regret; }
};

/// Environment shared by the training loops.
struct TrainEnv {
  const Dcmdp* mdp = nullptr;
  const TrajectorySpace* space = nullptr;
  const TabularPolicy* piref = nullptr;
  const FeatureMap* features = nullptr;  // required for log-linear classes
};

/// Optimistic preference-optimization loop: at each iteration sample
/// s1 ~ rho, tau ~ pi^(t), tau~ per the sampling strategy, label the pair,
/// and set pi^(t+1) to the class argmin of
/// alpha * sum log pi(tau~^(i)) + preference loss.
RunRecord run_xpo(const TrainEnv& env, const PolicyClassSpec& klass,
                  const LoopParams& params, std::uint64_t seed);

/// Passive loop: both responses from pi^(t), preference loss only.
/// With ref_comparator = true the comparator is sampled from piref instead,
/// which coincides with run_xpo at alpha = 0 draw-for-draw.
RunRecord run_online_dpo(const TrainEnv& env, const PolicyClassSpec& klass,
                         LoopParams params, std::uint64_t seed,
                         bool ref_comparator = false);

/// Same as online DPO but collecting batch_size pairs per update.
RunRecord run_iterative_dpo(const TrainEnv& env, const PolicyClassSpec& klass,
                            LoopParams params, std::uint64_t seed);

/// Single minimization of the preference loss on a provided dataset.
PolicySnapshot run_offline_dpo(const TrainEnv& env,
                               const PolicyClassSpec& klass,
                               const LoopParams& params,
                               const PreferenceDataset& data,
                               std::uint64_t seed);

struct AlphaScheduleInputs {
  double beta = 0.1;
  double vmax = 1.0;
  double rmax = 1.0;
  int iterations = 100;         // T
  double log_class_size = 0.0;  // log |Pi|
  double delta = 0.05;
  double coefficient = 1.0;  // coverability or extrapolation coefficient
  double c = 1.0;            // universal constant, order fixed by theory
  bool sec_variant = false;  // include the extra log T factor
};

/// Optimism coefficient
///   alpha = c * beta / ((Vmax + Rmax) e^{2 Rmax})
///             * sqrt(log(|Pi| T / delta) [* log T] / (T * coefficient)).
double alpha_schedule(const AlphaScheduleInputs& in);

/// argmax_t J_beta(pi^(t)) over in-class iterates; ties resolve to the
/// earliest iteration.  validation mode estimates J_beta with
/// validation_samples rollouts per candidate.
int select_final(const TrainEnv& env, const RunRecord& record, SelectMode mode,
                 std::int64_t validation_samples, std::uint64_t seed);

/// Line-delimited record: '#' header lines (config echo, instance hash,
/// seed), one CSV row per iteration, and a final selection line.
std::string serialize_run_record(const RunRecord& record,
                                 const std::string& instance_hash,
                                 const std::string& config_echo);

/// Preference log rows: iteration, s1, tau_plus id, tau_minus id, raw draw,
/// win probability.
std::string serialize_preference_log(const RunRecord& record);

}  // namespace xpo
