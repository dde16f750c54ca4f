#pragma once

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bihrl/options.hpp"

namespace bihrl {

// Observed state-action trajectory; states.size() == actions.size() + 1.
struct ActionTrajectory {
  std::vector<int> states;
  std::vector<int> actions;
  bool truncated = false;

  std::size_t length() const { return actions.size(); }
};

void validate_trajectory(const TabularMdp& mdp, const ActionTrajectory& traj);

std::string trajectories_to_jsonl(std::span<const ActionTrajectory> trajs);
std::vector<ActionTrajectory> trajectories_from_jsonl(const std::string& text);

struct Segment {
  int start;   // position in the action trajectory
  int end;     // exclusive
  int option;  // index into the option spec list
};

// One complete tiling of a trajectory by options, with the probability that
// those options emit exactly the observed actions and exit on the boundaries.
struct OptionTrajectory {
  std::vector<Segment> segments;
  double consistency_probability = 0;
};

struct SegmentationSet {
  std::vector<OptionTrajectory> entries;
};

struct EnumerationParams {
  double prune_below = 0.0;        // keep partial tilings with prob > this
  std::size_t max_live_paths = 1000000;
};

SegmentationSet enumerate_option_trajectories(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const EnumerationParams& params = {}, std::string_view label = {});

std::string segmentation_set_to_csv(
    const SegmentationSet& set,
    std::span<const std::shared_ptr<const OptionSpec>> options);

// Probability of one option tiling: its consistency probability times the
// soft policy's probability of choosing each segment's option where it
// starts. The solution must have been computed for the same option list.
double log_option_trajectory_likelihood(
    const ActionTrajectory& traj, const OptionTrajectory& ot,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta);

double option_trajectory_likelihood(
    const ActionTrajectory& traj, const OptionTrajectory& ot,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta);

// Marginal likelihood of the action trajectory, summed over all option
// tilings. Two independent routes: explicit enumeration and a forward DP
// over boundary positions. -inf means inexplicable under this option set.
double log_marginal_by_enumeration(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta,
    const EnumerationParams& params = {}, std::string_view label = {});

double log_marginal_by_dp(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta);

// Production entry point: DP when pruning is off, enumeration otherwise.
double marginal_likelihood(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta,
    const EnumerationParams& params = {}, std::string_view label = {});

// Probability that an agent's episode begins with the first k observed
// actions; the tiling's final option may still be running at the cut.
double log_prefix_likelihood(
    const ActionTrajectory& traj, std::size_t k,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta);

struct PosteriorTable {
  std::vector<std::string> support;
  std::vector<double> mass;
};

// Exact Bayesian posterior over an explicit reward support, log-domain
// accumulation across trajectories, normalized with logsumexp.
PosteriorTable posterior_over_rewards(
    const TabularMdp& mdp, std::span<const ActionTrajectory> trajs,
    std::span<const RewardParams> support, std::span<const double> prior,
    std::span<const std::shared_ptr<const OptionSpec>> options, double beta,
    const SoftVIParams& vi_params = {}, unsigned workers = 1);

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace bihrl
