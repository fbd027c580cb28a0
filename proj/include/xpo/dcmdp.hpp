#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xpo/rng.hpp"

namespace xpo {

using StateId = std::int32_t;
using ActionId = std::int32_t;

struct Step {
  StateId state;
  ActionId action;
};

/// Raw description of a layered MDP with deterministic transitions and a
/// stochastic initial state.  Validated on construction of Dcmdp.
struct DcmdpData {
  int horizon = 0;                           // number of layers H
  std::vector<std::vector<StateId>> layers;  // layers[h] = state ids at step h
  int num_actions = 0;
  std::vector<double> rho;      // aligned with layers[0]
  std::vector<StateId> next;    // (state, action) -> state; -1 on last layer
  std::vector<double> reward;   // (state, action) -> reward
  double rmax = 0.0;
  std::vector<std::string> state_names;  // optional labels, empty or size N
};

/// Deterministic contextual MDP: stochastic initial state, deterministic
/// transitions, layered finite state space, finite shared action set.
///
/// Construction validates: layer disjointness and id density, rho a
/// distribution (sum 1 within 1e-12), transitions mapping layer h to h+1,
/// and all admissible trajectory returns inside [0, rmax].  States carry
/// dense ids; every lookup is by id.
class Dcmdp {
 public:
  explicit Dcmdp(DcmdpData data);

  int horizon() const { return data_.horizon; }
  int num_states() const { return num_states_; }
  int num_actions() const { return data_.num_actions; }
  double rmax() const { return data_.rmax; }

  std::span<const StateId> layer(int h) const { return data_.layers[h]; }
  int layer_of(StateId s) const { return layer_of_[s]; }
  /// Position of s inside its layer.
  int layer_pos(StateId s) const { return layer_pos_[s]; }

  std::span<const double> rho() const { return data_.rho; }

  StateId next(StateId s, ActionId a) const {
    return data_.next[flat(s, a)];
  }
  double reward(StateId s, ActionId a) const {
    return data_.reward[flat(s, a)];
  }

  bool reachable(StateId s) const { return reachable_[s] != 0; }
  const std::string& state_name(StateId s) const;

  /// Tight bounds on the total reward over admissible trajectories,
  /// computed by min/max backward induction at construction.
  double min_total_reward() const { return min_total_; }
  double max_total_reward() const { return max_total_; }

  std::size_t flat(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * data_.num_actions + a;
  }

  const DcmdpData& data() const { return data_; }

 private:
  void validate_and_index();

  DcmdpData data_;
  int num_states_ = 0;
  std::vector<int> layer_of_;
  std::vector<int> layer_pos_;
  std::vector<char> reachable_;
  double min_total_ = 0.0;
  double max_total_ = 0.0;
};

/// An admissible (state, action) sequence of length H with cached return.
struct Trajectory {
  std::vector<Step> steps;
  double total_reward = 0.0;
  StateId initial_state = -1;
};

/// Row-stochastic action distribution per state.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  /// Rows are validated: entries >= 0, each reachable row sums to 1 within
  /// 1e-12.
  TabularPolicy(const Dcmdp& mdp, std::vector<double> probs);

  static TabularPolicy uniform(const Dcmdp& mdp);
  /// Deterministic policy taking action[s] at every state.
  static TabularPolicy deterministic(const Dcmdp& mdp,
                                     std::span<const ActionId> action);
  /// Random full-support policy (normalized exponentials of normals).
  static TabularPolicy random(const Dcmdp& mdp, Rng& rng);

  double prob(StateId s, ActionId a) const { return probs_[flat(s, a)]; }
  std::span<const double> row(StateId s) const {
    return {probs_.data() + flat(s, 0), static_cast<std::size_t>(num_actions_)};
  }
  int num_actions() const { return num_actions_; }
  int num_states() const { return num_states_; }

  bool operator==(const TabularPolicy& other) const = default;

 private:
  std::size_t flat(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * num_actions_ + a;
  }
  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> probs_;
};

/// Sum of per-step rewards along tau; throws if a transition in tau does not
/// match the MDP (the error names the offending step index).
double trajectory_reward(const Dcmdp& mdp, const Trajectory& tau);

/// Throws std::invalid_argument naming the first bad step if tau was not
/// generated by the MDP's transition map.
void check_admissible(const Dcmdp& mdp, const Trajectory& tau);

/// Samples s1 ~ rho, a_h ~ pi(.|s_h), transitions via next.
Trajectory rollout(const Dcmdp& mdp, const TabularPolicy& pi, Rng& rng);

/// Same, but with the initial state fixed (tau ~ pi | s1).
Trajectory rollout_from(const Dcmdp& mdp, StateId s1, const TabularPolicy& pi,
                        Rng& rng);

/// Canonical enumeration of all admissible trajectories, ordered
/// lexicographically by initial-state position then action indices.
///
/// Trajectories are decoded on demand from their index, so the space is
/// never materialized; kernels walk trajectories in parallel by index.
class TrajectorySpace {
 public:
  explicit TrajectorySpace(const Dcmdp& mdp,
                           std::int64_t cap = kDefaultEnumerationCap);

  static constexpr std::int64_t kDefaultEnumerationCap = 10'000'000;

  std::int64_t size() const { return size_; }
  const Dcmdp& mdp() const { return *mdp_; }

  Trajectory materialize(std::int64_t index) const;
  /// Canonical index of an admissible trajectory.
  std::int64_t index_of(const Trajectory& tau) const;

  /// Calls visit(h, state, action) for each step of trajectory `index`.
  template <class Visitor>
  void walk(std::int64_t index, Visitor&& visit) const {
    const int H = mdp_->horizon();
    const int A = mdp_->num_actions();
    std::int64_t rest = index;
    const StateId s1 = mdp_->layer(0)[static_cast<std::size_t>(rest / per_init_)];
    rest %= per_init_;
    StateId s = s1;
    std::int64_t scale = per_init_;
    for (int h = 0; h < H; ++h) {
      scale /= A;
      const ActionId a = static_cast<ActionId>(rest / scale);
      rest %= scale;
      visit(h, s, a);
      if (h + 1 < H) s = mdp_->next(s, a);
    }
  }

  StateId initial_state(std::int64_t index) const {
    return mdp_->layer(0)[static_cast<std::size_t>(index / per_init_)];
  }

  double total_reward(std::int64_t index) const;

 private:
  const Dcmdp* mdp_;
  std::int64_t size_ = 0;
  std::int64_t per_init_ = 0;  // |A|^H
};

/// Exact occupancy d^pi(tau) = rho(s1) * prod_h pi(a_h|s_h) for every
/// trajectory in the canonical enumeration.  OpenMP-parallel; occupancy_serial
/// is the reference implementation and produces bit-identical output.
std::vector<double> occupancy(const TrajectorySpace& space,
                              const TabularPolicy& pi);
std::vector<double> occupancy_serial(const TrajectorySpace& space,
                                     const TabularPolicy& pi);

/// Token-level MDP: states are (prompt, token-prefix) tuples, actions are
/// vocabulary tokens.  reward(prompt, prefix, token) assigns the per-step
/// reward; totals must stay inside [0, rmax].
Dcmdp make_token_mdp(
    std::span<const double> prompt_rho, int vocab, int horizon,
    const std::function<double(int prompt, std::span<const ActionId> prefix,
                               ActionId token)>& reward,
    double rmax);

/// Feature map phi(s, a) in R^d, stored densely per state-action pair.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int num_states, int num_actions, int dim,
             std::vector<double> table);

  static FeatureMap one_hot(const Dcmdp& mdp);

  std::span<const double> at(StateId s, ActionId a) const {
    return {table_.data() +
                (static_cast<std::size_t>(s) * num_actions_ + a) * dim_,
            static_cast<std::size_t>(dim_)};
  }
  int dim() const { return dim_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

 private:
  int num_states_ = 0;
  int num_actions_ = 0;
  int dim_ = 0;
  std::vector<double> table_;
};

/// DCMDP whose reward is exactly <phi(s,a), vartheta>.  Requires
/// ||phi(s,a)|| <= 1 and ||vartheta|| <= 1; transitions are supplied
/// explicitly.  The feature map is returned alongside for use by log-linear
/// policy classes.
struct LinearDcmdp {
  Dcmdp mdp;
  FeatureMap features;
  std::vector<double> vartheta;
};

LinearDcmdp make_linear_dcmdp(int horizon,
                              std::vector<std::vector<StateId>> layers,
                              int num_actions, std::vector<double> rho,
                              std::vector<StateId> next, FeatureMap features,
                              std::vector<double> vartheta, double rmax);

}  // namespace xpo
