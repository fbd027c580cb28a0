#pragma once

#include <optional>
#include <string>

#include "xpo/dcmdp.hpp"
#include "xpo/diagnostics.hpp"

namespace xpo {

/// A benchmark problem: the MDP, its reference policy, and (when available)
/// a feature map for log-linear policy classes.
struct Instance {
  Dcmdp mdp;
  TabularPolicy piref;
  std::optional<FeatureMap> features;
  std::string name;
};

/// Two-armed bandit with a vanishing-mass reference policy; the stall
/// construction for passive preference loops.
Instance make_prop31(double beta, double c);

/// Random layered tabular MDP: `states` states per layer, per-step rewards
/// scaled so totals lie in [0, 1], random full-support reference policy.
Instance make_random_tabular(int states, int actions, int horizon,
                             std::uint64_t seed);

/// Random instance with rewards generated as inner products against a
/// d-dimensional feature map (||phi|| <= 1, ||vartheta|| <= 1).
Instance make_linear(int dim, int horizon, std::uint64_t seed);

/// Random token-level MDP over `prompts` prompts and a vocabulary of size
/// `vocab`.
Instance make_token(int vocab, int horizon, int prompts, std::uint64_t seed);

/// Builds a builtin instance from a spec string such as
/// "prop31(0.02,0.125)", "random_tabular(3,3,3,7)", "linear(4,3,7)",
/// "token(2,2,2,7)", or loads a JSON instance file when the spec names an
/// existing path.
Instance make_instance(const std::string& spec);

/// JSON document with fields horizon, layers, actions, rho, next, reward,
/// rmax, and optionally piref and name.  The loader validates every
/// invariant and reports the first violation with its JSON path.
Instance load_instance(const std::string& path);
std::string instance_to_json(const Instance& instance);
void save_instance(const Instance& instance, const std::string& path);

/// Stable FNV-1a hash of the canonical JSON form.
std::string instance_hash(const Instance& instance);

}  // namespace xpo
