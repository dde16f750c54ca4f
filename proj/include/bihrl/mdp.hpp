#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bihrl/util.hpp"

namespace bihrl {

struct Transition {
  int next;
  double prob;
};

// Finite MDP with dense integer state/action ids. Actions may be defined on
// only a subset of states (an undefined (s, a) pair has an empty row), which
// is how graph environments with per-node choice sets are represented.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, double gamma,
             std::vector<std::vector<std::vector<Transition>>> rows,
             std::vector<int> terminal_states);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  bool terminal(int s) const { return terminal_[s] != 0; }
  const std::vector<int>& terminal_states() const { return terminal_list_; }

  bool action_defined(int s, int a) const { return !rows_[s][a].empty(); }
  std::span<const Transition> row(int s, int a) const { return rows_[s][a]; }
  std::vector<int> actions_at(int s) const;

  std::string to_json() const;
  static TabularMdp from_json(const std::string& text);

 private:
  int n_states_;
  int n_actions_;
  double gamma_;
  std::vector<std::vector<std::vector<Transition>>> rows_;
  std::vector<char> terminal_;
  std::vector<int> terminal_list_;
};

// A reward hypothesis: an opaque identifier plus the evaluation contract.
// Terminal states must yield 0 on their self-loops under every hypothesis.
struct RewardParams {
  std::string id;
  std::function<double(int s, int a, int next)> reward;
};

struct Rationality {
  double beta = 1.0;  // 0 = uniform choice, grows toward greedy
};

// Probabilities proportional to exp(beta * q), computed with max subtraction.
std::vector<double> boltzmann_distribution(std::span<const double> q,
                                           double beta);

struct SoftVIParams {
  double tolerance = 1e-8;
  int max_iters = 10000;
};

// Converged self-consistent soft values over an option set. `initiable[s]`
// lists option indices whose initiation set contains s; q/policy rows align
// with it. Terminal states carry v = 0 and empty rows.
struct SoftSolution {
  std::vector<double> v;
  std::vector<std::vector<int>> initiable;
  std::vector<std::vector<double>> q;
  std::vector<std::vector<double>> policy;
  bool converged = false;
  int iterations = 0;
  double final_delta = 0;
};

struct OptionModel;  // options.hpp

SoftSolution soft_value_iteration(
    const TabularMdp& mdp, std::span<const OptionModel> models, double beta,
    const SoftVIParams& params = {},
    const std::optional<std::vector<double>>& warm_start = std::nullopt);

// Same fixed point computed directly over atomic actions, used as the
// independent route for reduction checks and as the plain BIRL evaluator.
SoftSolution soft_value_iteration_actions(
    const TabularMdp& mdp, const RewardParams& theta, double beta,
    const SoftVIParams& params = {},
    const std::optional<std::vector<double>>& warm_start = std::nullopt);

// Max-over-actions value iteration (beta -> infinity limit).
std::vector<double> hard_value_iteration(const TabularMdp& mdp,
                                         const RewardParams& theta,
                                         double tolerance = 1e-10,
                                         int max_iters = 100000);

}  // namespace bihrl
