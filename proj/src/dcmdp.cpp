#include "xpo/dcmdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "xpo/kernels.hpp"

namespace xpo {

namespace {

constexpr double kDistTol = 1e-12;
// Slack for the [0, Rmax] return-range check; totals are sums of H doubles.
constexpr double kRangeTol = 1e-9;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

}  // namespace

Dcmdp::Dcmdp(DcmdpData data) : data_(std::move(data)) { validate_and_index(); }

void Dcmdp::validate_and_index() {
  const int H = data_.horizon;
  if (H < 1) fail("dcmdp: horizon must be >= 1");
  if (static_cast<int>(data_.layers.size()) != H)
    fail("dcmdp: layers must have exactly horizon entries");
  if (data_.num_actions < 1) fail("dcmdp: need at least one action");

  num_states_ = 0;
  for (const auto& layer : data_.layers)
    num_states_ += static_cast<int>(layer.size());
  if (num_states_ == 0) fail("dcmdp: empty state space");

  layer_of_.assign(num_states_, -1);
  layer_pos_.assign(num_states_, -1);
  for (int h = 0; h < H; ++h) {
    if (data_.layers[h].empty())
      fail("dcmdp: layers[" + std::to_string(h) + "] is empty");
    for (std::size_t i = 0; i < data_.layers[h].size(); ++i) {
      const StateId s = data_.layers[h][i];
      if (s < 0 || s >= num_states_)
        fail("dcmdp: layers[" + std::to_string(h) + "][" + std::to_string(i) +
             "]: state id " + std::to_string(s) +
             " outside dense range [0, " + std::to_string(num_states_) + ")");
      if (layer_of_[s] != -1)
        fail("dcmdp: state " + std::to_string(s) +
             " appears in layers " + std::to_string(layer_of_[s]) + " and " +
             std::to_string(h) + "; layers must be disjoint");
      layer_of_[s] = h;
      layer_pos_[s] = static_cast<int>(i);
    }
  }

  if (data_.rho.size() != data_.layers[0].size())
    fail("dcmdp: rho must be aligned with layers[0]");
  double mass = 0.0;
  for (std::size_t i = 0; i < data_.rho.size(); ++i) {
    if (data_.rho[i] < 0.0)
      fail("dcmdp: rho[" + std::to_string(i) + "] is negative");
    mass += data_.rho[i];
  }
  if (std::abs(mass - 1.0) > kDistTol)
    fail("dcmdp: rho sums to " + std::to_string(mass) + ", expected 1");

  const std::size_t table = static_cast<std::size_t>(num_states_) *
                            static_cast<std::size_t>(data_.num_actions);
  if (data_.next.size() != table) fail("dcmdp: next table has wrong size");
  if (data_.reward.size() != table) fail("dcmdp: reward table has wrong size");
  if (!data_.state_names.empty() &&
      data_.state_names.size() != static_cast<std::size_t>(num_states_))
    fail("dcmdp: state_names must be empty or one per state");

  for (StateId s = 0; s < num_states_; ++s) {
    const int h = layer_of_[s];
    for (ActionId a = 0; a < data_.num_actions; ++a) {
      const StateId nxt = data_.next[flat(s, a)];
      if (h + 1 < H) {
        if (nxt < 0 || nxt >= num_states_ || layer_of_[nxt] != h + 1)
          fail("dcmdp: next(" + std::to_string(s) + ", " + std::to_string(a) +
               ") = " + std::to_string(nxt) + " is not a layer-" +
               std::to_string(h + 1) + " state");
      }
      if (!std::isfinite(data_.reward[flat(s, a)]))
        fail("dcmdp: reward(" + std::to_string(s) + ", " + std::to_string(a) +
             ") is not finite");
    }
  }

  // Reachability forward from layer 0.
  reachable_.assign(num_states_, 0);
  for (StateId s : data_.layers[0]) reachable_[s] = 1;
  for (int h = 0; h + 1 < H; ++h)
    for (StateId s : data_.layers[h])
      if (reachable_[s])
        for (ActionId a = 0; a < data_.num_actions; ++a)
          reachable_[data_.next[flat(s, a)]] = 1;

  // Min/max total reward over admissible trajectories, by backward induction.
  if (data_.rmax < 0.0) fail("dcmdp: rmax must be >= 0");
  std::vector<double> lo(num_states_, 0.0), hi(num_states_, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    for (StateId s : data_.layers[h]) {
      double best_lo = std::numeric_limits<double>::infinity();
      double best_hi = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < data_.num_actions; ++a) {
        const double r = data_.reward[flat(s, a)];
        const double tail_lo = h + 1 < H ? lo[data_.next[flat(s, a)]] : 0.0;
        const double tail_hi = h + 1 < H ? hi[data_.next[flat(s, a)]] : 0.0;
        best_lo = std::min(best_lo, r + tail_lo);
        best_hi = std::max(best_hi, r + tail_hi);
      }
      lo[s] = best_lo;
      hi[s] = best_hi;
    }
  }
  min_total_ = std::numeric_limits<double>::infinity();
  max_total_ = -std::numeric_limits<double>::infinity();
  for (StateId s : data_.layers[0]) {
    min_total_ = std::min(min_total_, lo[s]);
    max_total_ = std::max(max_total_, hi[s]);
  }
  if (min_total_ < -kRangeTol || max_total_ > data_.rmax + kRangeTol)
    fail("dcmdp: total reward range [" + std::to_string(min_total_) + ", " +
         std::to_string(max_total_) + "] escapes [0, " +
         std::to_string(data_.rmax) + "]");
}

const std::string& Dcmdp::state_name(StateId s) const {
  static const std::string empty;
  if (data_.state_names.empty()) return empty;
  return data_.state_names[s];
}

TabularPolicy::TabularPolicy(const Dcmdp& mdp, std::vector<double> probs)
    : num_states_(mdp.num_states()),
      num_actions_(mdp.num_actions()),
      probs_(std::move(probs)) {
  if (probs_.size() != static_cast<std::size_t>(num_states_) * num_actions_)
    fail("policy: probability table has wrong size");
  for (StateId s = 0; s < num_states_; ++s) {
    double sum = 0.0;
    for (ActionId a = 0; a < num_actions_; ++a) {
      const double p = probs_[flat(s, a)];
      if (p < 0.0 || !std::isfinite(p))
        fail("policy: prob(" + std::to_string(s) + ", " + std::to_string(a) +
             ") = " + std::to_string(p) + " invalid");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kDistTol)
      fail("policy: row for state " + std::to_string(s) + " sums to " +
           std::to_string(sum));
  }
}

TabularPolicy TabularPolicy::uniform(const Dcmdp& mdp) {
  const int A = mdp.num_actions();
  std::vector<double> p(static_cast<std::size_t>(mdp.num_states()) * A,
                        1.0 / A);
  return TabularPolicy(mdp, std::move(p));
}

TabularPolicy TabularPolicy::deterministic(const Dcmdp& mdp,
                                           std::span<const ActionId> action) {
  if (action.size() != static_cast<std::size_t>(mdp.num_states()))
    fail("policy: deterministic needs one action per state");
  std::vector<double> p(
      static_cast<std::size_t>(mdp.num_states()) * mdp.num_actions(), 0.0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (action[s] < 0 || action[s] >= mdp.num_actions())
      fail("policy: action id out of range for state " + std::to_string(s));
    p[static_cast<std::size_t>(s) * mdp.num_actions() + action[s]] = 1.0;
  }
  return TabularPolicy(mdp, std::move(p));
}

TabularPolicy TabularPolicy::random(const Dcmdp& mdp, Rng& rng) {
  const int A = mdp.num_actions();
  std::vector<double> p(static_cast<std::size_t>(mdp.num_states()) * A);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    double sum = 0.0;
    for (ActionId a = 0; a < A; ++a) {
      const double w = std::exp(rng.normal());
      p[static_cast<std::size_t>(s) * A + a] = w;
      sum += w;
    }
    for (ActionId a = 0; a < A; ++a)
      p[static_cast<std::size_t>(s) * A + a] /= sum;
  }
  return TabularPolicy(mdp, std::move(p));
}

void check_admissible(const Dcmdp& mdp, const Trajectory& tau) {
  if (static_cast<int>(tau.steps.size()) != mdp.horizon())
    fail("trajectory: has " + std::to_string(tau.steps.size()) +
         " steps, horizon is " + std::to_string(mdp.horizon()));
  if (tau.steps.empty()) return;
  if (mdp.layer_of(tau.steps[0].state) != 0)
    fail("trajectory: step 0 state " + std::to_string(tau.steps[0].state) +
         " is not an initial state");
  for (std::size_t h = 0; h + 1 < tau.steps.size(); ++h) {
    const StateId expect = mdp.next(tau.steps[h].state, tau.steps[h].action);
    if (tau.steps[h + 1].state != expect)
      fail("trajectory: transition mismatch at step " + std::to_string(h) +
           ": next(" + std::to_string(tau.steps[h].state) + ", " +
           std::to_string(tau.steps[h].action) + ") = " +
           std::to_string(expect) + " but trajectory has " +
           std::to_string(tau.steps[h + 1].state));
  }
}

double trajectory_reward(const Dcmdp& mdp, const Trajectory& tau) {
  check_admissible(mdp, tau);
  double total = 0.0;
  for (const Step& st : tau.steps) total += mdp.reward(st.state, st.action);
  return total;
}

Trajectory rollout_from(const Dcmdp& mdp, StateId s1, const TabularPolicy& pi,
                        Rng& rng) {
  if (mdp.layer_of(s1) != 0)
    fail("rollout: state " + std::to_string(s1) + " is not an initial state");
  Trajectory tau;
  tau.initial_state = s1;
  tau.steps.reserve(mdp.horizon());
  StateId s = s1;
  double total = 0.0;
  for (int h = 0; h < mdp.horizon(); ++h) {
    const auto row = pi.row(s);
    double mass = 0.0;
    for (double p : row) mass += p;
    if (!(mass > 0.0))
      throw std::runtime_error("rollout: policy has zero mass at state " +
                               std::to_string(s));
    const ActionId a = static_cast<ActionId>(rng.categorical(row));
    tau.steps.push_back({s, a});
    total += mdp.reward(s, a);
    if (h + 1 < mdp.horizon()) s = mdp.next(s, a);
  }
  tau.total_reward = total;
  return tau;
}

Trajectory rollout(const Dcmdp& mdp, const TabularPolicy& pi, Rng& rng) {
  const auto init = mdp.layer(0);
  const StateId s1 = init[rng.categorical(mdp.rho())];
  return rollout_from(mdp, s1, pi, rng);
}

TrajectorySpace::TrajectorySpace(const Dcmdp& mdp, std::int64_t cap)
    : mdp_(&mdp) {
  const int H = mdp.horizon();
  const int A = mdp.num_actions();
  per_init_ = 1;
  for (int h = 0; h < H; ++h) {
    if (per_init_ > cap / A + 1) {
      per_init_ = cap + 1;  // force overflow branch below
      break;
    }
    per_init_ *= A;
  }
  const std::int64_t n_init = static_cast<std::int64_t>(mdp.layer(0).size());
  if (per_init_ > cap || n_init * per_init_ > cap)
    throw std::invalid_argument(
        "enumeration: |S1| * |A|^H exceeds cap " + std::to_string(cap) +
        "; use Monte Carlo estimation instead");
  size_ = n_init * per_init_;
}

Trajectory TrajectorySpace::materialize(std::int64_t index) const {
  Trajectory tau;
  tau.steps.reserve(mdp_->horizon());
  double total = 0.0;
  walk(index, [&](int, StateId s, ActionId a) {
    tau.steps.push_back({s, a});
    total += mdp_->reward(s, a);
  });
  tau.total_reward = total;
  tau.initial_state = tau.steps.front().state;
  return tau;
}

double TrajectorySpace::total_reward(std::int64_t index) const {
  double total = 0.0;
  walk(index, [&](int, StateId s, ActionId a) { total += mdp_->reward(s, a); });
  return total;
}

std::int64_t TrajectorySpace::index_of(const Trajectory& tau) const {
  check_admissible(*mdp_, tau);
  std::int64_t index =
      static_cast<std::int64_t>(mdp_->layer_pos(tau.steps[0].state)) *
      per_init_;
  std::int64_t scale = per_init_;
  const int A = mdp_->num_actions();
  for (const Step& st : tau.steps) {
    scale /= A;
    index += scale * st.action;
  }
  return index;
}

namespace {

template <bool Parallel>
std::vector<double> occupancy_impl(const TrajectorySpace& space,
                                   const TabularPolicy& pi) {
  const Dcmdp& mdp = space.mdp();
  std::vector<double> d(static_cast<std::size_t>(space.size()));
  auto term = [&](std::int64_t i) {
    double p = mdp.rho()[mdp.layer_pos(space.initial_state(i))];
    space.walk(i, [&](int, StateId s, ActionId a) { p *= pi.prob(s, a); });
    return p;
  };
  if constexpr (Parallel) {
    kernels::block_fill(space.size(), d.data(), term);
  } else {
    kernels::block_fill_serial(space.size(), d.data(), term);
  }
  return d;
}

}  // namespace

std::vector<double> occupancy(const TrajectorySpace& space,
                              const TabularPolicy& pi) {
  return occupancy_impl<true>(space, pi);
}

std::vector<double> occupancy_serial(const TrajectorySpace& space,
                                     const TabularPolicy& pi) {
  return occupancy_impl<false>(space, pi);
}

Dcmdp make_token_mdp(
    std::span<const double> prompt_rho, int vocab, int horizon,
    const std::function<double(int prompt, std::span<const ActionId> prefix,
                               ActionId token)>& reward,
    double rmax) {
  if (vocab < 1) fail("token mdp: vocab must be >= 1");
  if (horizon < 1) fail("token mdp: horizon must be >= 1");
  const int P = static_cast<int>(prompt_rho.size());
  if (P < 1) fail("token mdp: need at least one prompt");

  DcmdpData d;
  d.horizon = horizon;
  d.num_actions = vocab;
  d.rmax = rmax;
  d.rho.assign(prompt_rho.begin(), prompt_rho.end());

  // Layer h holds one state per (prompt, prefix of h tokens).
  std::vector<std::int64_t> layer_size(horizon);
  std::int64_t width = P;
  int total = 0;
  for (int h = 0; h < horizon; ++h) {
    layer_size[h] = width;
    total += static_cast<int>(width);
    if (width > TrajectorySpace::kDefaultEnumerationCap)
      fail("token mdp: state space too large");
    width *= vocab;
  }

  d.layers.resize(horizon);
  std::vector<int> layer_offset(horizon);
  int id = 0;
  for (int h = 0; h < horizon; ++h) {
    layer_offset[h] = id;
    d.layers[h].resize(layer_size[h]);
    for (std::int64_t i = 0; i < layer_size[h]; ++i)
      d.layers[h][i] = id++;
  }

  // Decode a layer-local position into (prompt, token prefix).
  auto decode = [&](int h, std::int64_t pos, std::vector<ActionId>& prefix) {
    prefix.resize(h);
    for (int k = h - 1; k >= 0; --k) {
      prefix[k] = static_cast<ActionId>(pos % vocab);
      pos /= vocab;
    }
    return static_cast<int>(pos);
  };

  const std::size_t table =
      static_cast<std::size_t>(total) * static_cast<std::size_t>(vocab);
  d.next.assign(table, -1);
  d.reward.assign(table, 0.0);
  d.state_names.resize(total);

  std::vector<ActionId> prefix;
  for (int h = 0; h < horizon; ++h) {
    for (std::int64_t pos = 0; pos < layer_size[h]; ++pos) {
      const StateId s = layer_offset[h] + static_cast<StateId>(pos);
      const int prompt = decode(h, pos, prefix);
      {
        std::string name = "p" + std::to_string(prompt) + ":";
        for (ActionId t : prefix) name += static_cast<char>('a' + t % 26);
        d.state_names[s] = name;
      }
      for (ActionId t = 0; t < vocab; ++t) {
        const std::size_t idx =
            static_cast<std::size_t>(s) * vocab + static_cast<std::size_t>(t);
        d.reward[idx] = reward(prompt, prefix, t);
        if (h + 1 < horizon)
          d.next[idx] = layer_offset[h + 1] +
                        static_cast<StateId>(pos * vocab + t);
      }
    }
  }

  // Range check with a witnessing trajectory before full validation.
  auto extremal = [&](bool maximize) {
    std::vector<double> val(total, 0.0);
    std::vector<ActionId> pick(total, 0);
    for (int h = horizon - 1; h >= 0; --h) {
      for (StateId s : d.layers[h]) {
        double best = maximize ? -std::numeric_limits<double>::infinity()
                               : std::numeric_limits<double>::infinity();
        for (ActionId a = 0; a < vocab; ++a) {
          const std::size_t idx = static_cast<std::size_t>(s) * vocab + a;
          const double tail = h + 1 < horizon ? val[d.next[idx]] : 0.0;
          const double v = d.reward[idx] + tail;
          if (maximize ? v > best : v < best) {
            best = v;
            pick[s] = a;
          }
        }
        val[s] = best;
      }
    }
    StateId s = d.layers[0][0];
    for (StateId cand : d.layers[0])
      if (maximize ? val[cand] > val[s] : val[cand] < val[s]) s = cand;
    std::string witness = d.state_names[s];
    double totalr = val[s];
    for (int h = 0; h < horizon; ++h) {
      const ActionId a = pick[s];
      witness += static_cast<char>('a' + a % 26);
      if (h + 1 < horizon) s = d.next[static_cast<std::size_t>(s) * vocab + a];
    }
    return std::make_pair(totalr, witness);
  };
  const auto [max_total, max_witness] = extremal(true);
  const auto [min_total, min_witness] = extremal(false);
  if (max_total > rmax + 1e-9)
    fail("token mdp: trajectory " + max_witness + " has total reward " +
         std::to_string(max_total) + " > rmax = " + std::to_string(rmax));
  if (min_total < -1e-9)
    fail("token mdp: trajectory " + min_witness + " has total reward " +
         std::to_string(min_total) + " < 0");

  return Dcmdp(std::move(d));
}

FeatureMap::FeatureMap(int num_states, int num_actions, int dim,
                       std::vector<double> table)
    : num_states_(num_states),
      num_actions_(num_actions),
      dim_(dim),
      table_(std::move(table)) {
  if (table_.size() != static_cast<std::size_t>(num_states_) * num_actions_ *
                           static_cast<std::size_t>(dim_))
    fail("feature map: table has wrong size");
}

FeatureMap FeatureMap::one_hot(const Dcmdp& mdp) {
  const int n = mdp.num_states();
  const int A = mdp.num_actions();
  const int d = n * A;
  std::vector<double> table(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    table[static_cast<std::size_t>(i) * d + i] = 1.0;
  return FeatureMap(n, A, d, std::move(table));
}

LinearDcmdp make_linear_dcmdp(int horizon,
                              std::vector<std::vector<StateId>> layers,
                              int num_actions, std::vector<double> rho,
                              std::vector<StateId> next, FeatureMap features,
                              std::vector<double> vartheta, double rmax) {
  const int dim = features.dim();
  if (static_cast<int>(vartheta.size()) != dim)
    fail("linear dcmdp: vartheta dimension mismatch");
  double tn = 0.0;
  for (double v : vartheta) tn += v * v;
  if (std::sqrt(tn) > 1.0 + 1e-12)
    fail("linear dcmdp: ||vartheta|| = " + std::to_string(std::sqrt(tn)) +
         " exceeds 1");

  int num_states = 0;
  for (const auto& layer : layers) num_states += static_cast<int>(layer.size());
  if (features.num_states() != num_states ||
      features.num_actions() != num_actions)
    fail("linear dcmdp: feature map shape mismatch");

  std::vector<double> reward(static_cast<std::size_t>(num_states) *
                             num_actions);
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      const auto phi = features.at(s, a);
      double norm = 0.0, dot = 0.0;
      for (int k = 0; k < dim; ++k) {
        norm += phi[k] * phi[k];
        dot += phi[k] * vartheta[k];
      }
      if (std::sqrt(norm) > 1.0 + 1e-12)
        fail("linear dcmdp: ||phi(" + std::to_string(s) + ", " +
             std::to_string(a) + ")|| = " + std::to_string(std::sqrt(norm)) +
             " exceeds 1");
      reward[static_cast<std::size_t>(s) * num_actions + a] = dot;
    }
  }

  DcmdpData d;
  d.horizon = horizon;
  d.layers = std::move(layers);
  d.num_actions = num_actions;
  d.rho = std::move(rho);
  d.next = std::move(next);
  d.reward = std::move(reward);
  d.rmax = rmax;
  return LinearDcmdp{Dcmdp(std::move(d)), std::move(features),
                     std::move(vartheta)};
}

}  // namespace xpo
