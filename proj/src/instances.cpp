#include "xpo/instances.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace xpo {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

std::vector<double> random_distribution(int n, Rng& rng, double floor = 0.05) {
  std::vector<double> p(n);
  double z = 0.0;
  for (double& x : p) z += (x = floor + rng.next_double());
  for (double& x : p) x /= z;
  return p;
}

}  // namespace

Instance make_prop31(double beta, double c) {
  CounterexampleInstance ce = counterexample_instance(beta, c);
  char name[64];
  std::snprintf(name, sizeof(name), "prop31(%g,%g)", beta, c);
  return Instance{std::move(ce.mdp), std::move(ce.piref),
                  std::nullopt, name};
}

Instance make_random_tabular(int states, int actions, int horizon,
                             std::uint64_t seed) {
  if (states < 1 || actions < 1 || horizon < 1)
    fail("random_tabular: sizes must be positive");
  Rng rng = Rng(seed).fork("random_tabular");

  DcmdpData d;
  d.horizon = horizon;
  d.num_actions = actions;
  d.rmax = 1.0;
  d.layers.resize(horizon);
  int id = 0;
  for (int h = 0; h < horizon; ++h) {
    d.layers[h].resize(states);
    for (int i = 0; i < states; ++i) d.layers[h][i] = id++;
  }
  d.rho = random_distribution(states, rng);
  const std::size_t table = static_cast<std::size_t>(id) * actions;
  d.next.assign(table, -1);
  d.reward.assign(table, 0.0);
  for (int h = 0; h < horizon; ++h) {
    for (StateId s : d.layers[h]) {
      for (ActionId a = 0; a < actions; ++a) {
        const std::size_t idx = static_cast<std::size_t>(s) * actions + a;
        d.reward[idx] = rng.next_double() / horizon;
        if (h + 1 < horizon)
          d.next[idx] = d.layers[h + 1][rng.uniform_int(states)];
      }
    }
  }
  Dcmdp mdp{std::move(d)};

  // Mildly non-uniform full-support reference policy.
  std::vector<double> probs(static_cast<std::size_t>(mdp.num_states()) *
                            actions);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    double z = 0.0;
    for (ActionId a = 0; a < actions; ++a)
      z += (probs[static_cast<std::size_t>(s) * actions + a] =
                std::exp(0.5 * rng.normal()));
    for (ActionId a = 0; a < actions; ++a)
      probs[static_cast<std::size_t>(s) * actions + a] /= z;
  }
  TabularPolicy piref(mdp, std::move(probs));
  FeatureMap features = FeatureMap::one_hot(mdp);

  char name[64];
  std::snprintf(name, sizeof(name), "random_tabular(%d,%d,%d,%llu)", states,
                actions, horizon, static_cast<unsigned long long>(seed));
  return Instance{std::move(mdp), std::move(piref), std::move(features), name};
}

Instance make_linear(int dim, int horizon, std::uint64_t seed) {
  if (dim < 2 || horizon < 1) fail("linear: need dim >= 2, horizon >= 1");
  Rng rng = Rng(seed).fork("linear");
  const int states = 3;
  const int actions = 3;

  std::vector<std::vector<StateId>> layers(horizon);
  int id = 0;
  for (int h = 0; h < horizon; ++h) {
    layers[h].resize(states);
    for (int i = 0; i < states; ++i) layers[h][i] = id++;
  }
  std::vector<double> rho = random_distribution(states, rng);
  std::vector<StateId> next(static_cast<std::size_t>(id) * actions, -1);
  for (int h = 0; h + 1 < horizon; ++h)
    for (StateId s : layers[h])
      for (ActionId a = 0; a < actions; ++a)
        next[static_cast<std::size_t>(s) * actions + a] =
            layers[h + 1][rng.uniform_int(states)];

  // phi = (psi, 1)/sqrt(2) with ||psi|| <= 1; vartheta = (w, b) with
  // <psi, w> + b >= 0, so rewards are nonnegative and bounded by rmax/H.
  const int psi_dim = dim - 1;
  std::vector<double> table(static_cast<std::size_t>(id) * actions * dim);
  for (StateId s = 0; s < id; ++s) {
    for (ActionId a = 0; a < actions; ++a) {
      double norm = 0.0;
      std::vector<double> psi(psi_dim);
      for (double& x : psi) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      const double target = 0.3 + 0.7 * rng.next_double();  // ||psi|| in (0,1]
      double* out =
          &table[(static_cast<std::size_t>(s) * actions + a) * dim];
      for (int k = 0; k < psi_dim; ++k)
        out[k] = norm > 0.0 ? psi[k] / norm * target / std::sqrt(2.0) : 0.0;
      out[psi_dim] = 1.0 / std::sqrt(2.0);
    }
  }
  FeatureMap features(id, actions, dim, std::move(table));

  std::vector<double> vartheta(dim);
  double wn = 0.0;
  for (int k = 0; k < psi_dim; ++k) {
    vartheta[k] = rng.normal();
    wn += vartheta[k] * vartheta[k];
  }
  wn = std::sqrt(wn);
  const double w_scale = 0.6 / (horizon * std::max(wn, 1e-12));
  for (int k = 0; k < psi_dim; ++k) vartheta[k] *= w_scale;
  vartheta[psi_dim] = 0.6 / horizon;  // bias dominates: rewards >= 0

  LinearDcmdp lin =
      make_linear_dcmdp(horizon, std::move(layers), actions, std::move(rho),
                        std::move(next), std::move(features),
                        std::move(vartheta), 1.0);

  TabularPolicy piref = TabularPolicy::uniform(lin.mdp);
  char name[64];
  std::snprintf(name, sizeof(name), "linear(%d,%d,%llu)", dim, horizon,
                static_cast<unsigned long long>(seed));
  return Instance{std::move(lin.mdp), std::move(piref),
                  std::move(lin.features), name};
}

Instance make_token(int vocab, int horizon, int prompts, std::uint64_t seed) {
  if (vocab < 1 || horizon < 1 || prompts < 1)
    fail("token: sizes must be positive");
  Rng rng = Rng(seed).fork("token");
  std::vector<double> rho = random_distribution(prompts, rng);

  // Per-(prefix, token) rewards drawn from a keyed stream so the callback is
  // a pure function of its arguments.
  Rng table_key = Rng(seed).fork("token_rewards");
  auto reward = [horizon, table_key](int prompt, std::span<const ActionId> prefix,
                                     ActionId token) {
    Rng stream = table_key.fork(static_cast<std::uint64_t>(prompt));
    for (ActionId t : prefix) stream = stream.fork(static_cast<std::uint64_t>(t) + 1);
    stream = stream.fork("tok");
    stream = stream.fork(static_cast<std::uint64_t>(token));
    return stream.next_double() / horizon;
  };
  Dcmdp mdp = make_token_mdp(rho, vocab, horizon, reward, 1.0);
  TabularPolicy piref = TabularPolicy::uniform(mdp);
  FeatureMap features = FeatureMap::one_hot(mdp);
  char name[64];
  std::snprintf(name, sizeof(name), "token(%d,%d,%d,%llu)", vocab, horizon,
                prompts, static_cast<unsigned long long>(seed));
  return Instance{std::move(mdp), std::move(piref), std::move(features), name};
}

namespace {

std::vector<double> parse_args(const std::string& spec, std::size_t open) {
  if (spec.back() != ')') fail("instance spec: missing ')' in " + spec);
  std::vector<double> args;
  std::string body = spec.substr(open + 1, spec.size() - open - 2);
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      args.push_back(std::stod(tok));
    } catch (...) {
      fail("instance spec: bad numeric argument '" + tok + "' in " + spec);
    }
  }
  return args;
}

}  // namespace

Instance make_instance(const std::string& spec) {
  if (std::filesystem::exists(spec) &&
      std::filesystem::is_regular_file(spec))
    return load_instance(spec);
  const std::size_t open = spec.find('(');
  if (open == std::string::npos)
    fail("instance spec '" + spec +
         "': not a file and not of the form name(args)");
  const std::string name = spec.substr(0, open);
  const std::vector<double> a = parse_args(spec, open);
  auto want = [&](std::size_t n) {
    if (a.size() != n)
      fail("instance spec '" + spec + "': expected " + std::to_string(n) +
           " arguments");
  };
  if (name == "prop31") {
    want(2);
    return make_prop31(a[0], a[1]);
  }
  if (name == "random_tabular") {
    want(4);
    return make_random_tabular(static_cast<int>(a[0]), static_cast<int>(a[1]),
                               static_cast<int>(a[2]),
                               static_cast<std::uint64_t>(a[3]));
  }
  if (name == "linear") {
    want(3);
    return make_linear(static_cast<int>(a[0]), static_cast<int>(a[1]),
                       static_cast<std::uint64_t>(a[2]));
  }
  if (name == "token") {
    want(4);
    return make_token(static_cast<int>(a[0]), static_cast<int>(a[1]),
                      static_cast<int>(a[2]), static_cast<std::uint64_t>(a[3]));
  }
  fail("instance spec: unknown builtin '" + name +
       "' (expected prop31, random_tabular, linear, or token)");
}

namespace {

// Pulls a required field, failing with its JSON path.
const json& field(const json& j, const char* key, const char* path) {
  if (!j.contains(key))
    fail(std::string("instance file: missing field ") + path);
  return j.at(key);
}

}  // namespace

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("instance file: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("instance file " + path + ": parse error: " + e.what());
  }

  DcmdpData d;
  try {
    d.horizon = field(j, "horizon", "$.horizon").get<int>();
  } catch (const json::exception& e) {
    fail("instance file $.horizon: " + std::string(e.what()));
  }
  const json& jlayers = field(j, "layers", "$.layers");
  if (!jlayers.is_array()) fail("instance file $.layers: expected array");
  int num_states = 0;
  d.layers.resize(jlayers.size());
  for (std::size_t h = 0; h < jlayers.size(); ++h) {
    if (!jlayers[h].is_array())
      fail("instance file $.layers[" + std::to_string(h) +
           "]: expected array of state ids");
    for (const auto& v : jlayers[h]) {
      d.layers[h].push_back(v.get<StateId>());
      ++num_states;
    }
  }
  const json& jactions = field(j, "actions", "$.actions");
  d.num_actions = jactions.get<int>();

  const json& jrho = field(j, "rho", "$.rho");
  if (!jrho.is_object()) fail("instance file $.rho: expected state->prob map");
  if (d.layers.empty()) fail("instance file $.layers: empty");
  d.rho.assign(d.layers[0].size(), 0.0);
  for (const auto& [key, value] : jrho.items()) {
    const StateId s = static_cast<StateId>(std::stol(key));
    bool found = false;
    for (std::size_t i = 0; i < d.layers[0].size(); ++i) {
      if (d.layers[0][i] == s) {
        d.rho[i] = value.get<double>();
        found = true;
        break;
      }
    }
    if (!found)
      fail("instance file $.rho." + key + ": state is not in layers[0]");
  }

  const std::size_t table =
      static_cast<std::size_t>(num_states) * d.num_actions;
  d.next.assign(table, -1);
  d.reward.assign(table, 0.0);
  std::vector<char> have_reward(table, 0);

  const json& jnext = field(j, "next", "$.next");
  for (std::size_t i = 0; i < jnext.size(); ++i) {
    const auto& row = jnext[i];
    if (!row.is_array() || row.size() != 3)
      fail("instance file $.next[" + std::to_string(i) +
           "]: expected [state, action, state]");
    const StateId s = row[0].get<StateId>();
    const ActionId a = row[1].get<ActionId>();
    if (s < 0 || s >= num_states || a < 0 || a >= d.num_actions)
      fail("instance file $.next[" + std::to_string(i) +
           "]: state/action id out of range");
    d.next[static_cast<std::size_t>(s) * d.num_actions + a] =
        row[2].get<StateId>();
  }
  const json& jreward = field(j, "reward", "$.reward");
  for (std::size_t i = 0; i < jreward.size(); ++i) {
    const auto& row = jreward[i];
    if (!row.is_array() || row.size() != 3)
      fail("instance file $.reward[" + std::to_string(i) +
           "]: expected [state, action, value]");
    const StateId s = row[0].get<StateId>();
    const ActionId a = row[1].get<ActionId>();
    if (s < 0 || s >= num_states || a < 0 || a >= d.num_actions)
      fail("instance file $.reward[" + std::to_string(i) +
           "]: state/action id out of range");
    d.reward[static_cast<std::size_t>(s) * d.num_actions + a] =
        row[2].get<double>();
    have_reward[static_cast<std::size_t>(s) * d.num_actions + a] = 1;
  }
  for (std::size_t i = 0; i < table; ++i)
    if (!have_reward[i])
      fail("instance file $.reward: missing entry for state " +
           std::to_string(i / d.num_actions) + ", action " +
           std::to_string(i % d.num_actions));
  d.rmax = field(j, "rmax", "$.rmax").get<double>();

  Instance out{Dcmdp(std::move(d)), TabularPolicy{}, std::nullopt,
               j.value("name", std::filesystem::path(path).stem().string())};

  if (j.contains("piref")) {
    const json& jref = j.at("piref");
    std::vector<double> probs(static_cast<std::size_t>(num_states) *
                              out.mdp.num_actions());
    for (const auto& [key, value] : jref.items()) {
      const StateId s = static_cast<StateId>(std::stol(key));
      if (s < 0 || s >= num_states)
        fail("instance file $.piref." + key + ": state id out of range");
      if (!value.is_array() ||
          static_cast<int>(value.size()) != out.mdp.num_actions())
        fail("instance file $.piref." + key + ": expected one prob per action");
      for (int a = 0; a < out.mdp.num_actions(); ++a)
        probs[static_cast<std::size_t>(s) * out.mdp.num_actions() + a] =
            value[a].get<double>();
    }
    out.piref = TabularPolicy(out.mdp, std::move(probs));
  } else {
    out.piref = TabularPolicy::uniform(out.mdp);
  }
  return out;
}

std::string instance_to_json(const Instance& instance) {
  const Dcmdp& mdp = instance.mdp;
  json j;
  j["name"] = instance.name;
  j["horizon"] = mdp.horizon();
  j["actions"] = mdp.num_actions();
  j["rmax"] = mdp.rmax();
  for (int h = 0; h < mdp.horizon(); ++h) {
    json layer = json::array();
    for (StateId s : mdp.layer(h)) layer.push_back(s);
    j["layers"].push_back(layer);
  }
  json rho = json::object();
  for (std::size_t i = 0; i < mdp.rho().size(); ++i)
    rho[std::to_string(mdp.layer(0)[i])] = mdp.rho()[i];
  j["rho"] = std::move(rho);
  json next = json::array();
  json reward = json::array();
  json piref = json::object();
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    json row = json::array();
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      reward.push_back(json::array({s, a, mdp.reward(s, a)}));
      if (mdp.layer_of(s) + 1 < mdp.horizon())
        next.push_back(json::array({s, a, mdp.next(s, a)}));
      row.push_back(instance.piref.prob(s, a));
    }
    piref[std::to_string(s)] = std::move(row);
  }
  j["next"] = std::move(next);
  j["reward"] = std::move(reward);
  j["piref"] = std::move(piref);
  return j.dump(2);
}

void save_instance(const Instance& instance, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("instance file: cannot write " + path);
  out << instance_to_json(instance) << "\n";
}

std::string instance_hash(const Instance& instance) {
  const std::string canon = instance_to_json(instance);
  const std::uint64_t h = Rng::fnv1a(canon);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace xpo
