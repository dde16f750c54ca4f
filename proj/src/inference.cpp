#include "bihrl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace bihrl {

void validate_trajectory(const TabularMdp& mdp, const ActionTrajectory& traj) {
  if (traj.states.size() != traj.actions.size() + 1 || traj.actions.empty())
    throw data_error("trajectory must hold k >= 1 actions and k + 1 states");
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    int s = traj.states[t], a = traj.actions[t], nx = traj.states[t + 1];
    if (s < 0 || s >= mdp.n_states() || nx < 0 || nx >= mdp.n_states())
      throw data_error("trajectory state out of range");
    if (a < 0 || a >= mdp.n_actions() || !mdp.action_defined(s, a))
      throw data_error("trajectory action undefined at its state");
    bool connected = false;
    for (const auto& tr : mdp.row(s, a))
      if (tr.next == nx && tr.prob > 0) connected = true;
    if (!connected)
      throw data_error("trajectory step " + std::to_string(t) +
                        " is not a positive-probability transition");
    if (t + 1 < traj.actions.size() && mdp.terminal(nx))
      throw data_error("trajectory passes through a terminal state");
  }
}

std::string trajectories_to_jsonl(std::span<const ActionTrajectory> trajs) {
  std::ostringstream out;
  for (const auto& tr : trajs) {
    nlohmann::ordered_json j;
    j["states"] = tr.states;
    j["actions"] = tr.actions;
    if (tr.truncated) j["truncated"] = true;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<ActionTrajectory> trajectories_from_jsonl(const std::string& text) {
  std::vector<ActionTrajectory> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      ActionTrajectory tr;
      tr.states = j.at("states").get<std::vector<int>>();
      tr.actions = j.at("actions").get<std::vector<int>>();
      tr.truncated = j.value("truncated", false);
      if (tr.states.size() != tr.actions.size() + 1 || tr.actions.empty())
        throw data_error("trajectory line " + std::to_string(line_no) +
                         ": states/actions lengths do not match");
      out.push_back(std::move(tr));
    } catch (const nlohmann::json::exception& e) {
      throw data_error("trajectory line " + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return out;
}

SegmentationSet enumerate_option_trajectories(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const EnumerationParams& params, std::string_view label) {
  const int n = static_cast<int>(traj.length());
  if (n == 0) throw model_error("cannot segment an empty trajectory");

  struct Partial {
    std::vector<Segment> segments;
    double prob;
  };
  std::vector<std::vector<Partial>> at(n + 1);
  at[0].push_back({{}, 1.0});
  std::size_t live = 1;  // every tiling materialized counts against the cap

  auto seg_states = [&](int i, int k) {
    return std::span<const int>(traj.states).subspan(i, k + 1);
  };
  auto seg_actions = [&](int i, int k) {
    return std::span<const int>(traj.actions).subspan(i, k);
  };

  for (int i = 0; i < n; ++i) {
    if (at[i].empty()) continue;
    for (int k = 1; i + k <= n; ++k) {
      for (std::size_t oi = 0; oi < options.size(); ++oi) {
        double q = consistent_exit_probability(*options[oi], seg_states(i, k),
                                               seg_actions(i, k));
        if (q == 0) continue;
        for (const Partial& p : at[i]) {
          double np = p.prob * q;
          if (!(np > params.prune_below)) continue;
          Partial ext;
          ext.segments = p.segments;
          ext.segments.push_back({i, i + k, static_cast<int>(oi)});
          ext.prob = np;
          at[i + k].push_back(std::move(ext));
          if (++live > params.max_live_paths)
            throw capacity_error(
                "segmentation enumeration exceeded " +
                std::to_string(params.max_live_paths) + " live tilings" +
                (label.empty() ? "" : " for trajectory " + std::string(label)));
        }
      }
    }
  }

  SegmentationSet set;
  set.entries.reserve(at[n].size());
  for (auto& p : at[n])
    set.entries.push_back({std::move(p.segments), p.prob});
  return set;
}

std::string segmentation_set_to_csv(
    const SegmentationSet& set,
    std::span<const std::shared_ptr<const OptionSpec>> options) {
  std::ostringstream out;
  out << "tiling,segment,start,end,option_id,consistency_probability\n";
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    const auto& e = set.entries[i];
    for (std::size_t k = 0; k < e.segments.size(); ++k) {
      const Segment& s = e.segments[k];
      out << i << ',' << k << ',' << s.start << ',' << s.end << ','
          << options[s.option]->id << ','
          << fmt_double(e.consistency_probability) << "\n";
    }
  }
  return out.str();
}

namespace {

// log of the soft policy's probability of picking option oi (an index into
// solution.initiable[s]) at state s, computed stably from the q row.
double log_choice_prob(const SoftSolution& solution, double beta, int s,
                       std::size_t idx_in_row) {
  const auto& q = solution.q[s];
  double m = *std::max_element(q.begin(), q.end());
  double z = 0;
  for (double x : q) z += std::exp(beta * (x - m));
  return beta * (q[idx_in_row] - m) - std::log(z);
}

// Index of option oi inside solution.initiable[s], or -1.
int row_index(const SoftSolution& solution, int s, int oi) {
  const auto& init = solution.initiable[s];
  for (std::size_t i = 0; i < init.size(); ++i)
    if (init[i] == oi) return static_cast<int>(i);
  return -1;
}

// logL[j] = log P(first j actions observed, option boundary exactly at j).
std::vector<double> forward_boundary_dp(
    const ActionTrajectory& traj, int upto,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta) {
  std::vector<double> logL(upto + 1, kNegInf);
  logL[0] = 0.0;
  std::vector<double> terms;
  for (int j = 1; j <= upto; ++j) {
    terms.clear();
    for (int i = 0; i < j; ++i) {
      if (logL[i] == kNegInf) continue;
      int s = traj.states[i];
      auto states = std::span<const int>(traj.states).subspan(i, j - i + 1);
      auto actions = std::span<const int>(traj.actions).subspan(i, j - i);
      for (std::size_t oi = 0; oi < options.size(); ++oi) {
        double q = consistent_exit_probability(*options[oi], states, actions);
        if (q == 0) continue;
        int idx = row_index(solution, s, static_cast<int>(oi));
        if (idx < 0) continue;
        terms.push_back(logL[i] + std::log(q) +
                        log_choice_prob(solution, beta, s, idx));
      }
    }
    logL[j] = logsumexp(terms);
  }
  return logL;
}

}  // namespace

double log_option_trajectory_likelihood(
    const ActionTrajectory& traj, const OptionTrajectory& ot,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta) {
  if (ot.segments.empty()) throw model_error("empty option trajectory");
  double lp = std::log(ot.consistency_probability);
  for (const Segment& seg : ot.segments) {
    int s = traj.states[seg.start];
    int idx = row_index(solution, s, seg.option);
    if (idx < 0)
      throw model_error("option " + options[seg.option]->id +
                        " is not initiable where its segment starts");
    lp += log_choice_prob(solution, beta, s, idx);
  }
  return lp;
}

double option_trajectory_likelihood(
    const ActionTrajectory& traj, const OptionTrajectory& ot,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta) {
  return std::exp(
      log_option_trajectory_likelihood(traj, ot, options, solution, beta));
}

double log_marginal_by_enumeration(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta, const EnumerationParams& params,
    std::string_view label) {
  SegmentationSet set =
      enumerate_option_trajectories(traj, options, params, label);
  std::vector<double> terms;
  terms.reserve(set.entries.size());
  for (const auto& e : set.entries)
    terms.push_back(
        log_option_trajectory_likelihood(traj, e, options, solution, beta));
  return logsumexp(terms);
}

double log_marginal_by_dp(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta) {
  const int n = static_cast<int>(traj.length());
  if (n == 0) throw model_error("cannot score an empty trajectory");
  return forward_boundary_dp(traj, n, options, solution, beta)[n];
}

double marginal_likelihood(
    const ActionTrajectory& traj,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta, const EnumerationParams& params,
    std::string_view label) {
  double lp = params.prune_below > 0
                  ? log_marginal_by_enumeration(traj, options, solution, beta,
                                                params, label)
                  : log_marginal_by_dp(traj, options, solution, beta);
  return std::exp(lp);
}

double log_prefix_likelihood(
    const ActionTrajectory& traj, std::size_t k,
    std::span<const std::shared_ptr<const OptionSpec>> options,
    const SoftSolution& solution, double beta) {
  if (k == 0 || k > traj.length())
    throw model_error("prefix cut must satisfy 1 <= k <= length");
  const int kk = static_cast<int>(k);
  std::vector<double> logL = forward_boundary_dp(traj, kk, options, solution, beta);

  // Sum over the start of the final option. Dropping its termination factor
  // at the cut marginalizes over terminate-vs-continue there, so tilings
  // whose last option exits exactly at the cut are already included.
  std::vector<double> total;
  for (int i = 0; i < kk; ++i) {
    if (logL[i] == kNegInf) continue;
    int s = traj.states[i];
    auto states = std::span<const int>(traj.states).subspan(i, kk - i + 1);
    auto actions = std::span<const int>(traj.actions).subspan(i, kk - i);
    for (std::size_t oi = 0; oi < options.size(); ++oi) {
      double q = partial_emission_probability(*options[oi], states, actions);
      if (q == 0) continue;
      int idx = row_index(solution, s, static_cast<int>(oi));
      if (idx < 0) continue;
      total.push_back(logL[i] + std::log(q) +
                      log_choice_prob(solution, beta, s, idx));
    }
  }
  return logsumexp(total);
}

PosteriorTable posterior_over_rewards(
    const TabularMdp& mdp, std::span<const ActionTrajectory> trajs,
    std::span<const RewardParams> support, std::span<const double> prior,
    std::span<const std::shared_ptr<const OptionSpec>> options, double beta,
    const SoftVIParams& vi_params, unsigned workers) {
  if (support.empty()) throw model_error("posterior needs a non-empty support");
  if (prior.size() != support.size())
    throw model_error("prior length does not match support");
  if (trajs.empty()) throw model_error("posterior needs trajectories");

  std::vector<double> log_mass(support.size(), kNegInf);
  parallel_for(support.size(), workers, [&](std::size_t ti) {
    std::vector<OptionModel> models =
        build_option_models(options, mdp, support[ti]);
    SoftSolution sol = soft_value_iteration(mdp, models, beta, vi_params);
    double lp = std::log(prior[ti]);
    for (const auto& tr : trajs) {
      if (lp == kNegInf) break;
      lp += log_marginal_by_dp(tr, options, sol, beta);
    }
    log_mass[ti] = lp;
  });

  double z = logsumexp(log_mass);
  if (z == kNegInf)
    throw model_error(
        "degenerate evidence: every support point gives the data zero "
        "probability");
  PosteriorTable table;
  table.support.reserve(support.size());
  table.mass.resize(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    table.support.push_back(support[i].id);
    table.mass[i] = std::exp(log_mass[i] - z);
  }
  return table;
}

}  // namespace bihrl
