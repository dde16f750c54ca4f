#include "bihrl/options.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

namespace bihrl {

std::string option_kind_name(OptionKind k) {
  switch (k) {
    case OptionKind::atomic: return "atomic";
    case OptionKind::deterministic_goto: return "deterministic-goto";
    case OptionKind::boltzmann_goto: return "boltzmann-goto";
    case OptionKind::custom: return "custom";
  }
  return "?";
}

OptionSpec atomic_option(const TabularMdp& mdp, int action) {
  if (action < 0 || action >= mdp.n_actions())
    throw model_error("atomic_option: unknown action id " +
                      std::to_string(action));
  OptionSpec spec;
  spec.id = "atomic:" + std::to_string(action);
  spec.kind = OptionKind::atomic;
  spec.atomic_action = action;
  spec.initiation.assign(mdp.n_states(), 0);
  spec.policy.resize(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (!mdp.action_defined(s, action)) continue;
    spec.initiation[s] = 1;
    spec.policy[s] = {{action, 1.0}};
  }
  return spec;
}

namespace {

// Uniform-step-cost distances to the destination set through the one-step
// reachability relation (any positive-probability successor counts).
std::vector<int> hop_distances(const TabularMdp& mdp,
                               const std::vector<char>& destination,
                               std::span<const int> allowed) {
  const int n = mdp.n_states();
  std::vector<std::vector<int>> rev(n);
  std::vector<int> acts(allowed.begin(), allowed.end());
  if (acts.empty())
    for (int a = 0; a < mdp.n_actions(); ++a) acts.push_back(a);
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;  // nothing leaves a terminal state
    for (int a : acts)
      for (const auto& t : mdp.row(s, a))
        if (t.next != s) rev[t.next].push_back(s);
  }
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (int s = 0; s < n; ++s)
    if (destination[s]) {
      dist[s] = 0;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    for (int p : rev[s])
      if (dist[p] < 0) {
        dist[p] = dist[s] + 1;
        queue.push_back(p);
      }
  }
  return dist;
}

}  // namespace

OptionSpec goto_option(const TabularMdp& mdp,
                       const std::vector<char>& destination, OptionKind mode,
                       const std::string& label, double beta_o,
                       std::span<const int> allowed_actions) {
  if (mode != OptionKind::deterministic_goto &&
      mode != OptionKind::boltzmann_goto)
    throw model_error("goto_option: mode must be a goto kind");
  if (destination.size() != static_cast<std::size_t>(mdp.n_states()))
    throw model_error("goto_option: destination mask has wrong length");
  bool any_dest = false;
  for (char c : destination) any_dest = any_dest || c;
  if (!any_dest) throw model_error("goto_option: empty destination set");

  std::vector<int> acts(allowed_actions.begin(), allowed_actions.end());
  if (acts.empty())
    for (int a = 0; a < mdp.n_actions(); ++a) acts.push_back(a);

  std::vector<int> dist = hop_distances(mdp, destination, acts);

  OptionSpec spec;
  spec.id = label;
  spec.kind = mode;
  spec.destination_label = label;
  spec.beta_o = mode == OptionKind::boltzmann_goto ? beta_o : 0.0;
  spec.destination = destination;
  spec.initiation.assign(mdp.n_states(), 0);
  spec.policy.resize(mdp.n_states());

  const double inf = std::numeric_limits<double>::infinity();
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (destination[s] || mdp.terminal(s)) continue;
    if (dist[s] < 0) {
      ++spec.unreachable_excluded;
      continue;
    }
    spec.initiation[s] = 1;
    // Score each allowed action by the best destination distance among its
    // positive-probability successors.
    std::vector<std::pair<int, double>> scored;  // (action, -1 - d(next))
    for (int a : acts) {
      auto row = mdp.row(s, a);
      if (row.empty()) continue;
      double best = inf;
      for (const auto& t : row)
        if (dist[t.next] >= 0) best = std::min(best, double(dist[t.next]));
      scored.push_back({a, best == inf ? -inf : -1.0 - best});
    }
    if (mode == OptionKind::deterministic_goto) {
      int best_a = -1;
      double best_q = -inf;
      for (const auto& [a, q] : scored)
        if (q > best_q) {
          best_q = q;
          best_a = a;
        }
      spec.policy[s] = {{best_a, 1.0}};
    } else {
      double m = -inf;
      for (const auto& [a, q] : scored) m = std::max(m, q);
      double z = 0;
      std::vector<std::pair<int, double>> pol;
      for (const auto& [a, q] : scored) {
        if (q == -inf) continue;  // successor cannot reach the destination
        double w = std::exp(beta_o * (q - m));
        pol.push_back({a, w});
        z += w;
      }
      for (auto& [a, w] : pol) w /= z;
      spec.policy[s] = std::move(pol);
    }
  }
  return spec;
}

namespace {

// Effective termination used by the model equations: options are cut off by
// MDP-terminal states because the episode itself ends there.
inline double alpha_bar(const OptionSpec& spec, const TabularMdp& mdp, int s) {
  return mdp.terminal(s) ? 1.0 : spec.alpha(s);
}

}  // namespace

OptionModel build_option_model(std::shared_ptr<const OptionSpec> spec_ptr,
                               const TabularMdp& mdp, const RewardParams& theta,
                               const OptionModelParams& params) {
  const OptionSpec& spec = *spec_ptr;
  const int n = mdp.n_states();
  const double gamma = mdp.gamma();
  if (spec.initiation.size() != static_cast<std::size_t>(n))
    throw model_error("option spec does not match the MDP");

  // Closure of the initiation set through in-option continuation.
  std::vector<char> active(n, 0);
  std::deque<int> queue;
  for (int s = 0; s < n; ++s)
    if (spec.initiable(s) && !mdp.terminal(s)) {
      active[s] = 1;
      queue.push_back(s);
    }
  std::set<int> exit_set;
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    if (spec.policy[s].empty())
      throw model_error("option " + spec.id + " has no policy at state " +
                        std::to_string(s) + " reachable while active");
    for (const auto& [a, pa] : spec.policy[s]) {
      if (!(pa > 0)) continue;
      auto row = mdp.row(s, a);
      if (row.empty())
        throw model_error("option " + spec.id + " emits undefined action " +
                          std::to_string(a) + " at state " + std::to_string(s));
      for (const auto& t : row) {
        double ab = alpha_bar(spec, mdp, t.next);
        if (ab > 0) exit_set.insert(t.next);
        if (ab < 1.0 && !active[t.next]) {
          active[t.next] = 1;
          queue.push_back(t.next);
        }
      }
    }
  }

  std::vector<int> act_states;
  for (int s = 0; s < n; ++s)
    if (active[s]) act_states.push_back(s);
  std::vector<int> exits(exit_set.begin(), exit_set.end());
  const int na = static_cast<int>(act_states.size());
  const int ne = static_cast<int>(exits.size());
  std::vector<int> act_index(n, -1), exit_index(n, -1);
  for (int i = 0; i < na; ++i) act_index[act_states[i]] = i;
  for (int i = 0; i < ne; ++i) exit_index[exits[i]] = i;

  // Jacobi iteration on r and the per-exit discounted arrival masses.
  std::vector<double> r(na, 0.0), r_new(na, 0.0);
  std::vector<double> p(static_cast<std::size_t>(na) * ne, 0.0);
  std::vector<double> p_new(p.size(), 0.0);
  double delta = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < params.max_iters && delta > params.tolerance; ++it) {
    delta = 0;
    for (int i = 0; i < na; ++i) {
      int s = act_states[i];
      double racc = 0;
      for (int e = 0; e < ne; ++e) p_new[std::size_t(i) * ne + e] = 0;
      for (const auto& [a, pa] : spec.policy[s]) {
        if (!(pa > 0)) continue;
        double r_term = 0;
        for (const auto& t : mdp.row(s, a)) {
          double ab = alpha_bar(spec, mdp, t.next);
          double cont = 1.0 - ab;
          double r_next = cont > 0 ? r[act_index[t.next]] : 0.0;
          r_term += t.prob * (theta.reward(s, a, t.next) +
                              gamma * (cont * r_next));
          for (int e = 0; e < ne; ++e) {
            double hit = (t.next == exits[e]) ? ab : 0.0;
            double carry =
                cont > 0 ? p[std::size_t(act_index[t.next]) * ne + e] : 0.0;
            double mass = t.prob * gamma * (hit + cont * carry);
            if (mass != 0) p_new[std::size_t(i) * ne + e] += pa * mass;
          }
        }
        racc += pa * r_term;
      }
      r_new[i] = racc;
      delta = std::max(delta, std::abs(r_new[i] - r[i]));
      for (int e = 0; e < ne; ++e) {
        std::size_t k = std::size_t(i) * ne + e;
        delta = std::max(delta, std::abs(p_new[k] - p[k]));
      }
    }
    r.swap(r_new);
    p.swap(p_new);
  }
  if (delta > params.tolerance)
    throw model_error(
        "option model for " + spec.id + " did not reach residual " +
        fmt_double(params.tolerance) + " in " + std::to_string(params.max_iters) +
        " sweeps; with gamma = 1 this indicates the option may never terminate");

  OptionModel model;
  model.option = std::move(spec_ptr);
  model.active = std::move(active);
  model.reward.assign(n, 0.0);
  model.rows.resize(n);
  for (int i = 0; i < na; ++i) {
    int s = act_states[i];
    model.reward[s] = r[i];
    auto& row = model.rows[s];
    for (int e = 0; e < ne; ++e) {
      double mass = p[std::size_t(i) * ne + e];
      if (mass > 0) row.push_back({exits[e], mass});
    }
  }
  return model;
}

std::vector<OptionModel> build_option_models(
    std::span<const std::shared_ptr<const OptionSpec>> specs,
    const TabularMdp& mdp, const RewardParams& theta,
    const OptionModelParams& params) {
  std::vector<OptionModel> out;
  out.reserve(specs.size());
  for (const auto& s : specs)
    out.push_back(build_option_model(s, mdp, theta, params));
  return out;
}

namespace {

double policy_prob(const OptionSpec& spec, int s, int a) {
  if (spec.policy[s].empty()) return 0.0;
  for (const auto& [pa, pp] : spec.policy[s])
    if (pa == a) return pp;
  return 0.0;
}

}  // namespace

double consistent_exit_probability(const OptionSpec& option,
                                   std::span<const int> states,
                                   std::span<const int> actions) {
  if (states.size() != actions.size() + 1 || actions.empty())
    throw model_error("segment must contain k actions and k + 1 states");
  if (!option.initiable(states[0])) return 0.0;
  double prob = 1.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    prob *= policy_prob(option, states[t], actions[t]);
    if (prob == 0) return 0.0;
    if (t + 1 < actions.size()) prob *= 1.0 - option.alpha(states[t + 1]);
    if (prob == 0) return 0.0;
  }
  prob *= option.alpha(states.back());
  return prob;
}

double partial_emission_probability(const OptionSpec& option,
                                    std::span<const int> states,
                                    std::span<const int> actions) {
  if (states.size() != actions.size() + 1 || actions.empty())
    throw model_error("segment must contain k actions and k + 1 states");
  if (!option.initiable(states[0])) return 0.0;
  double prob = 1.0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    prob *= policy_prob(option, states[t], actions[t]);
    if (prob == 0) return 0.0;
    if (t + 1 < actions.size()) prob *= 1.0 - option.alpha(states[t + 1]);
    if (prob == 0) return 0.0;
  }
  return prob;
}

std::string option_library_to_json(
    std::span<const std::shared_ptr<const OptionSpec>> specs) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& sp : specs) {
    if (sp->kind == OptionKind::atomic) continue;
    if (sp->kind == OptionKind::custom)
      throw model_error("custom options have no serialized form");
    nlohmann::ordered_json o;
    o["id"] = sp->id;
    o["kind"] = option_kind_name(sp->kind);
    o["destination"] = sp->destination_label;
    o["beta_o"] = sp->beta_o;
    j.push_back(o);
  }
  return j.dump(2);
}

std::vector<std::shared_ptr<const OptionSpec>> option_library_from_json(
    const std::string& text, const TabularMdp& mdp,
    const std::function<std::vector<char>(const std::string&)>&
        resolve_destination,
    std::span<const int> allowed_actions) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("bad option library json: ") + e.what());
  }
  std::vector<std::shared_ptr<const OptionSpec>> out;
  try {
    for (const auto& o : j) {
      std::string kind = o.at("kind").get<std::string>();
      OptionKind k;
      if (kind == "deterministic-goto")
        k = OptionKind::deterministic_goto;
      else if (kind == "boltzmann-goto")
        k = OptionKind::boltzmann_goto;
      else
        throw data_error("unknown option kind: " + kind);
      std::string dest = o.at("destination").get<std::string>();
      double beta_o = o.value("beta_o", 0.0);
      OptionSpec spec = goto_option(mdp, resolve_destination(dest), k, dest,
                                    beta_o, allowed_actions);
      spec.id = o.at("id").get<std::string>();
      out.push_back(std::make_shared<const OptionSpec>(std::move(spec)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("bad option library json: ") + e.what());
  }
  return out;
}

EpisodeResult simulate_episode(
    const TabularMdp& mdp, const RewardParams& theta,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, int start, int max_steps, Rng& rng) {
  if (start < 0 || start >= mdp.n_states())
    throw model_error("simulate_episode: start state out of range");
  if (mdp.terminal(start))
    throw model_error("simulate_episode: start state is terminal");

  EpisodeResult ep;
  ep.states.push_back(start);
  int s = start;
  int steps = 0;
  double discount = 1.0;

  while (!mdp.terminal(s)) {
    if (steps >= max_steps) {
      ep.truncated = true;
      break;
    }
    const auto& init = solution.initiable[s];
    if (init.empty()) throw model_error("no initiable option during rollout");
    std::size_t pick = rng.categorical(solution.policy[s]);
    const OptionSpec& opt = *options[init[pick]];

    // Roll the option until it terminates, the episode ends, or we run out
    // of step budget.
    bool option_done = false;
    while (!option_done) {
      if (steps >= max_steps) {
        ep.truncated = true;
        break;
      }
      const auto& pol = opt.policy[s];
      if (pol.empty())
        throw model_error("option " + opt.id + " has no policy at state " +
                          std::to_string(s));
      std::vector<double> w;
      w.reserve(pol.size());
      for (const auto& [a, pa] : pol) w.push_back(pa);
      int a = pol[rng.categorical(w)].first;
      auto row = mdp.row(s, a);
      std::vector<double> tw;
      tw.reserve(row.size());
      for (const auto& t : row) tw.push_back(t.prob);
      int next = row[rng.categorical(tw)].next;
      ep.actions.push_back(a);
      ep.states.push_back(next);
      ep.discounted_return += discount * theta.reward(s, a, next);
      discount *= mdp.gamma();
      ++steps;
      s = next;
      if (mdp.terminal(s)) break;
      option_done = rng.uniform() < opt.alpha(s);
    }
  }
  return ep;
}

}  // namespace bihrl
