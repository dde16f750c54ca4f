#include "bihrl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bihrl/options.hpp"
#include "json.hpp"

namespace bihrl {

namespace {

constexpr double kDistTolerance = 1e-9;

void check_distribution(int s, int a, std::span<const Transition> row,
                        int n_states) {
  double sum = 0;
  for (const auto& t : row) {
    if (t.next < 0 || t.next >= n_states)
      throw model_error("transition out of range at state " +
                        std::to_string(s) + " action " + std::to_string(a));
    if (!(t.prob > 0) || !std::isfinite(t.prob))
      throw model_error("transition probabilities must be positive and finite");
    sum += t.prob;
  }
  if (std::abs(sum - 1.0) > kDistTolerance)
    throw model_error("transition row does not sum to 1 at state " +
                      std::to_string(s) + " action " + std::to_string(a));
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions, double gamma,
                       std::vector<std::vector<std::vector<Transition>>> rows,
                       std::vector<int> terminal_states)
    : n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      rows_(std::move(rows)) {
  if (n_states_ <= 0 || n_actions_ <= 0)
    throw model_error("MDP needs at least one state and one action");
  if (!(gamma_ > 0.0) || gamma_ > 1.0)
    throw model_error("gamma must lie in (0, 1]");
  if (rows_.size() != static_cast<std::size_t>(n_states_))
    throw model_error("transition table has wrong state count");
  terminal_.assign(n_states_, 0);
  for (int s : terminal_states) {
    if (s < 0 || s >= n_states_) throw model_error("terminal state out of range");
    terminal_[s] = 1;
  }
  terminal_list_ = std::move(terminal_states);
  std::sort(terminal_list_.begin(), terminal_list_.end());
  terminal_list_.erase(
      std::unique(terminal_list_.begin(), terminal_list_.end()),
      terminal_list_.end());
  for (int s = 0; s < n_states_; ++s) {
    if (rows_[s].size() != static_cast<std::size_t>(n_actions_))
      throw model_error("transition table has wrong action count at state " +
                        std::to_string(s));
    bool any = false;
    for (int a = 0; a < n_actions_; ++a) {
      const auto& row = rows_[s][a];
      if (row.empty()) continue;
      any = true;
      check_distribution(s, a, row, n_states_);
      if (terminal_[s]) {
        if (row.size() != 1 || row[0].next != s || row[0].prob != 1.0)
          throw model_error("terminal state " + std::to_string(s) +
                            " must self-loop with probability 1");
      }
    }
    if (!any)
      throw model_error("state " + std::to_string(s) + " has no defined action");
  }
}

std::vector<int> TabularMdp::actions_at(int s) const {
  std::vector<int> out;
  for (int a = 0; a < n_actions_; ++a)
    if (!rows_[s][a].empty()) out.push_back(a);
  return out;
}

std::string TabularMdp::to_json() const {
  nlohmann::ordered_json j;
  j["n_states"] = n_states_;
  j["n_actions"] = n_actions_;
  j["gamma"] = gamma_;
  j["terminal_states"] = terminal_list_;
  auto& tr = j["transitions"] = nlohmann::ordered_json::array();
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < n_actions_; ++a)
      for (const auto& t : rows_[s][a])
        tr.push_back({s, a, t.next, t.prob});
  return j.dump(2);
}

TabularMdp TabularMdp::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("bad MDP json: ") + e.what());
  }
  try {
    int n_states = j.at("n_states").get<int>();
    int n_actions = j.at("n_actions").get<int>();
    double gamma = j.at("gamma").get<double>();
    std::vector<int> terminal =
        j.at("terminal_states").get<std::vector<int>>();
    std::vector<std::vector<std::vector<Transition>>> rows(
        n_states,
        std::vector<std::vector<Transition>>(std::max(n_actions, 0)));
    for (const auto& e : j.at("transitions")) {
      int s = e.at(0).get<int>();
      int a = e.at(1).get<int>();
      int nx = e.at(2).get<int>();
      double p = e.at(3).get<double>();
      if (s < 0 || s >= n_states || a < 0 || a >= n_actions)
        throw data_error("transition index out of range in MDP json");
      rows[s][a].push_back({nx, p});
    }
    return TabularMdp(n_states, n_actions, gamma, std::move(rows),
                      std::move(terminal));
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("bad MDP json: ") + e.what());
  }
}

std::vector<double> boltzmann_distribution(std::span<const double> q,
                                           double beta) {
  if (q.empty())
    throw std::invalid_argument("boltzmann_distribution: empty input");
  if (!std::isfinite(beta) || beta < 0)
    throw std::invalid_argument("boltzmann_distribution: beta must be >= 0");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : q) {
    if (!std::isfinite(x))
      throw std::invalid_argument(
          "boltzmann_distribution: values must be finite");
    m = std::max(m, x);
  }
  std::vector<double> out(q.size());
  double sum = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = std::exp(beta * (q[i] - m));
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

namespace {

// One option backup against fixed values: q then a beta-softmax mix.
double backup_state(std::span<const OptionModel> models, double beta,
                    const std::vector<double>& v, int s,
                    const std::vector<int>& init, std::vector<double>& q_out) {
  q_out.clear();
  for (int oi : init) {
    const OptionModel& m = models[oi];
    double q = m.reward[s];
    for (const auto& t : m.rows[s]) q += t.prob * v[t.next];
    q_out.push_back(q);
  }
  std::vector<double> pi = boltzmann_distribution(q_out, beta);
  double nv = 0;
  for (std::size_t i = 0; i < pi.size(); ++i) nv += pi[i] * q_out[i];
  return nv;
}

}  // namespace

SoftSolution soft_value_iteration(
    const TabularMdp& mdp, std::span<const OptionModel> models, double beta,
    const SoftVIParams& params,
    const std::optional<std::vector<double>>& warm_start) {
  const int n = mdp.n_states();
  std::vector<std::vector<int>> initiable(n);
  for (std::size_t oi = 0; oi < models.size(); ++oi) {
    const auto& spec = *models[oi].option;
    for (int s = 0; s < n; ++s)
      if (!mdp.terminal(s) && spec.initiable(s))
        initiable[s].push_back(static_cast<int>(oi));
  }
  for (int s = 0; s < n; ++s)
    if (!mdp.terminal(s) && initiable[s].empty())
      throw model_error("state " + std::to_string(s) +
                        " has no initiable option");

  std::vector<double> v;
  if (warm_start) {
    if (warm_start->size() != static_cast<std::size_t>(n))
      throw model_error("warm start has wrong length");
    v = *warm_start;
  } else {
    v.assign(n, 0.0);
  }
  for (int s = 0; s < n; ++s)
    if (mdp.terminal(s)) v[s] = 0.0;

  SoftSolution sol;
  sol.iterations = 0;
  std::vector<double> v_new(n, 0.0), q_tmp;
  double delta = 0;
  for (int it = 0; it < params.max_iters; ++it) {
    delta = 0;
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal(s)) {
        v_new[s] = 0.0;
        continue;
      }
      v_new[s] = backup_state(models, beta, v, s, initiable[s], q_tmp);
      delta = std::max(delta, std::abs(v_new[s] - v[s]));
    }
    v.swap(v_new);
    sol.iterations = it + 1;
    if (delta < params.tolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.final_delta = delta;

  // Final pass: q and policy from the settled values, v consistent with them.
  sol.initiable = std::move(initiable);
  sol.q.resize(n);
  sol.policy.resize(n);
  sol.v.assign(n, 0.0);
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    const auto& init = sol.initiable[s];
    sol.q[s].clear();
    for (int oi : init) {
      const OptionModel& m = models[oi];
      double q = m.reward[s];
      for (const auto& t : m.rows[s]) q += t.prob * v[t.next];
      sol.q[s].push_back(q);
    }
    sol.policy[s] = boltzmann_distribution(sol.q[s], beta);
    double nv = 0;
    for (std::size_t i = 0; i < sol.policy[s].size(); ++i)
      nv += sol.policy[s][i] * sol.q[s][i];
    sol.v[s] = nv;
  }
  return sol;
}

SoftSolution soft_value_iteration_actions(
    const TabularMdp& mdp, const RewardParams& theta, double beta,
    const SoftVIParams& params,
    const std::optional<std::vector<double>>& warm_start) {
  const int n = mdp.n_states();
  const double gamma = mdp.gamma();
  std::vector<std::vector<int>> initiable(n);
  for (int s = 0; s < n; ++s)
    if (!mdp.terminal(s)) initiable[s] = mdp.actions_at(s);

  std::vector<double> v;
  if (warm_start) {
    if (warm_start->size() != static_cast<std::size_t>(n))
      throw model_error("warm start has wrong length");
    v = *warm_start;
  } else {
    v.assign(n, 0.0);
  }
  for (int s = 0; s < n; ++s)
    if (mdp.terminal(s)) v[s] = 0.0;

  auto q_of = [&](int s, int a, const std::vector<double>& vals) {
    double q = 0;
    for (const auto& t : mdp.row(s, a))
      q += t.prob * (theta.reward(s, a, t.next) + gamma * vals[t.next]);
    return q;
  };

  SoftSolution sol;
  std::vector<double> v_new(n, 0.0), q_tmp;
  double delta = 0;
  for (int it = 0; it < params.max_iters; ++it) {
    delta = 0;
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal(s)) {
        v_new[s] = 0.0;
        continue;
      }
      q_tmp.clear();
      for (int a : initiable[s]) q_tmp.push_back(q_of(s, a, v));
      std::vector<double> pi = boltzmann_distribution(q_tmp, beta);
      double nv = 0;
      for (std::size_t i = 0; i < pi.size(); ++i) nv += pi[i] * q_tmp[i];
      v_new[s] = nv;
      delta = std::max(delta, std::abs(v_new[s] - v[s]));
    }
    v.swap(v_new);
    sol.iterations = it + 1;
    if (delta < params.tolerance) {
      sol.converged = true;
      break;
    }
  }
  sol.final_delta = delta;
  sol.initiable = std::move(initiable);
  sol.q.resize(n);
  sol.policy.resize(n);
  sol.v.assign(n, 0.0);
  for (int s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    sol.q[s].clear();
    for (int a : sol.initiable[s]) sol.q[s].push_back(q_of(s, a, v));
    sol.policy[s] = boltzmann_distribution(sol.q[s], beta);
    double nv = 0;
    for (std::size_t i = 0; i < sol.policy[s].size(); ++i)
      nv += sol.policy[s][i] * sol.q[s][i];
    sol.v[s] = nv;
  }
  return sol;
}

std::vector<double> hard_value_iteration(const TabularMdp& mdp,
                                         const RewardParams& theta,
                                         double tolerance, int max_iters) {
  const int n = mdp.n_states();
  const double gamma = mdp.gamma();
  std::vector<double> v(n, 0.0), v_new(n, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    double delta = 0;
    for (int s = 0; s < n; ++s) {
      if (mdp.terminal(s)) {
        v_new[s] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions(); ++a) {
        auto row = mdp.row(s, a);
        if (row.empty()) continue;
        double q = 0;
        for (const auto& t : row)
          q += t.prob * (theta.reward(s, a, t.next) + gamma * v[t.next]);
        best = std::max(best, q);
      }
      v_new[s] = best;
      delta = std::max(delta, std::abs(v_new[s] - v[s]));
    }
    v.swap(v_new);
    if (delta < tolerance) return v;
  }
  return v;
}

}  // namespace bihrl
