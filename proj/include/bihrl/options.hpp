#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bihrl/mdp.hpp"

namespace bihrl {

enum class OptionKind { atomic, deterministic_goto, boltzmann_goto, custom };

std::string option_kind_name(OptionKind k);

// A temporally extended action: initiation set, internal policy, termination
// probabilities. Atomic actions are the degenerate one-step case.
struct OptionSpec {
  std::string id;
  OptionKind kind = OptionKind::custom;
  int atomic_action = -1;                 // atomic only
  std::string destination_label;          // goto kinds only
  double beta_o = 0;                      // boltzmann_goto only
  std::vector<char> initiation;           // mask over states
  std::vector<char> destination;          // alpha = 1 exactly here (goto kinds)
  std::vector<std::vector<std::pair<int, double>>> policy;  // per state (a, p)
  std::vector<double> alpha_custom;       // custom kind: explicit termination
  int unreachable_excluded = 0;           // states dropped from initiation

  double alpha(int s) const {
    if (!alpha_custom.empty()) return alpha_custom[s];
    if (kind == OptionKind::atomic) return 1.0;
    return destination.empty() ? 0.0 : (destination[s] ? 1.0 : 0.0);
  }
  bool initiable(int s) const { return initiation[s] != 0; }
};

OptionSpec atomic_option(const TabularMdp& mdp, int action);

// Navigation option toward the states selected by `destination` (mask).
// Deterministic mode follows a uniform-step-cost shortest path, ties broken
// by lowest action id. Boltzmann mode softmaxes beta_o * (-1 - dist(next)).
// `allowed_actions` restricts which actions the option may emit (empty = all).
OptionSpec goto_option(const TabularMdp& mdp, const std::vector<char>& destination,
                       OptionKind mode, const std::string& label,
                       double beta_o = 0.0,
                       std::span<const int> allowed_actions = {});

// Multi-time model of an option under a reward hypothesis: expected
// discounted in-option reward and the discounted exit distribution
// (gamma^duration folded into the transition mass, so rows sum to <= 1).
struct OptionModel {
  std::shared_ptr<const OptionSpec> option;
  std::vector<double> reward;                       // r, 0 outside active set
  std::vector<std::vector<Transition>> rows;        // discounted exit rows
  std::vector<char> active;                         // solve domain mask
};

struct OptionModelParams {
  double tolerance = 1e-10;
  int max_iters = 200000;
};

OptionModel build_option_model(std::shared_ptr<const OptionSpec> spec,
                               const TabularMdp& mdp, const RewardParams& theta,
                               const OptionModelParams& params = {});

std::vector<OptionModel> build_option_models(
    std::span<const std::shared_ptr<const OptionSpec>> specs,
    const TabularMdp& mdp, const RewardParams& theta,
    const OptionModelParams& params = {});

// Probability that the option, started at segment.front(), emits exactly the
// given actions and terminates exactly at the final state. States and actions
// spans satisfy states.size() == actions.size() + 1.
double consistent_exit_probability(const OptionSpec& option,
                                   std::span<const int> states,
                                   std::span<const int> actions);

// As above but with the final termination requirement dropped: probability
// the option emits these actions without having terminated strictly inside.
double partial_emission_probability(const OptionSpec& option,
                                    std::span<const int> states,
                                    std::span<const int> actions);

// JSON round-trip for compound option libraries (atomics are implied by the
// MDP itself and are not serialized).
std::string option_library_to_json(
    std::span<const std::shared_ptr<const OptionSpec>> specs);
std::vector<std::shared_ptr<const OptionSpec>> option_library_from_json(
    const std::string& text, const TabularMdp& mdp,
    const std::function<std::vector<char>(const std::string&)>& resolve_destination,
    std::span<const int> allowed_actions = {});

// One episode of a hierarchical agent following solution.policy over options.
struct EpisodeResult {
  std::vector<int> states;
  std::vector<int> actions;
  bool truncated = false;
  double discounted_return = 0;
};

EpisodeResult simulate_episode(
    const TabularMdp& mdp, const RewardParams& theta,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, int start, int max_steps, Rng& rng);

}  // namespace bihrl
