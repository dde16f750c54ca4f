#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bihrl/inference.hpp"

namespace bihrl {
namespace graphnav {

// Directed article graph: nodes carry display names (sorted, unique) and
// adjacency lists are sorted target ids. Hop distances from a source are
// computed on first use and cached.
class ArticleGraph {
 public:
  ArticleGraph() = default;
  ArticleGraph(std::vector<std::string> names,
               std::vector<std::vector<int>> adjacency);
  ArticleGraph(const ArticleGraph& other);
  ArticleGraph& operator=(const ArticleGraph& other);

  std::size_t n_nodes() const { return names_.size(); }
  const std::string& name(int node) const { return names_[node]; }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(const std::string& name) const;  // -1 when absent
  const std::vector<int>& out_edges(int node) const { return adjacency_[node]; }
  std::size_t n_edges() const;

  // forward hop distances from `source`; -1 marks unreachable nodes
  const std::vector<int>& distances_from(int source) const;

  std::uint64_t content_hash() const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<int>> adjacency_;
  mutable std::mutex mu_;
  mutable std::unordered_map<int, std::vector<int>> dist_cache_;
};

struct PathRecord {
  std::vector<int> articles;  // node ids, consecutive pairs are edges
  bool test = false;          // train otherwise
};

// Ingest drop/skip counters, one per filtering rule.
struct IngestStats {
  std::size_t malformed_rows = 0;      // wrong column count, bad encoding
  std::size_t back_click_paths = 0;    // any '<' present
  std::size_t too_long_paths = 0;      // over 20 clicks
  std::size_t empty_paths = 0;         // under 1 click
  std::size_t unresolved_paths = 0;    // name not in the graph
  std::size_t removed_node_paths = 0;  // traverses a removed dead end
  std::size_t broken_edge_paths = 0;   // consecutive pair is not an edge
  std::size_t dead_end_nodes = 0;      // nodes removed (iterated to fixpoint)
  std::size_t kept_paths = 0;
};

struct IngestResult {
  ArticleGraph graph;
  std::vector<PathRecord> paths;
  IngestStats stats;
};

std::string percent_decode(const std::string& text);

// Reads the tab-separated dataset files ('#' starts a comment line; the
// paths file carries the semicolon-separated route in its fourth column,
// with '<' marking a back click). Removes dead-end nodes iteratively, drops
// filtered paths, and splits the survivors evenly into train and test with
// the seeded shuffle substream "wiki-split".
IngestResult ingest_dataset(const std::string& articles_file,
                            const std::string& links_file,
                            const std::string& paths_file, std::uint64_t seed);

// Keeps the n highest-degree nodes (in + out, ties by name), re-runs
// dead-end removal on the induced subgraph, and keeps exactly the paths
// that stay inside it. Splits are preserved.
IngestResult extract_top_degree_subgraph(const ArticleGraph& graph,
                                         std::span<const PathRecord> paths,
                                         std::size_t n_nodes);

struct NavHyperparams {
  double beta = 0.4;
  int m = 0;
  double beta_o = 3.0;
  double gamma = 0.9;
};

// Goal-free navigation dynamics: one state per node, action k follows the
// k-th out-edge. Option libraries are built against these dynamics.
TabularMdp nav_mdp(const ArticleGraph& graph, double gamma = 0.9);

// Per-goal MDP: same dynamics except the goal node is terminal (its actions
// self-loop). Rewards are -1 per click and +20 for entering the goal.
TabularMdp build_nav_mdp(const ArticleGraph& graph, int goal,
                         double gamma = 0.9);
RewardParams nav_rewards(const ArticleGraph& graph, int goal);

// Converts a path to the trajectory of clicks it encodes (action k = index
// of the next article in the sorted out-edge list).
ActionTrajectory path_to_trajectory(const ArticleGraph& graph,
                                    const PathRecord& path);

// Atomic options for every click slot plus Boltzmann goto options to the m
// nodes that appear most frequently across the training paths (every visited
// node counts; ties break by name order).
std::vector<std::shared_ptr<const OptionSpec>> top_m_option_library(
    const ArticleGraph& graph, std::span<const PathRecord> train_paths, int m,
    double beta_o);

std::vector<int> top_m_destinations(const ArticleGraph& graph,
                                    std::span<const PathRecord> train_paths,
                                    int m);

std::uint64_t option_library_hash(
    std::span<const std::shared_ptr<const OptionSpec>> options);

// Per-goal soft solutions, solved on demand and memoized; preload() fills
// the memo in bulk. save/load persist a versioned binary cache keyed by the
// graph, the option library, and the solver constants; loading under any
// other key refuses.
//
// Reaching the goal absorbs the episode even while a compound option is
// mid-flight, exactly as the rollout simulator behaves, so likelihood
// factors must treat the goal as a forced exit. options_for(goal) hands
// back the library with termination forced to 1 at that goal; every
// likelihood evaluated against solve(goal) must use that variant.
class GoalSolver {
 public:
  GoalSolver(const ArticleGraph& graph,
             std::vector<std::shared_ptr<const OptionSpec>> options,
             double beta, double gamma = 0.9,
             const SoftVIParams& vi_params = {});

  const SoftSolution& solve(int goal);
  std::span<const std::shared_ptr<const OptionSpec>> options_for(int goal);
  bool cached(int goal) const;
  std::size_t n_solved() const;
  void preload(std::span<const int> goals, unsigned workers = 1);

  void save(const std::string& path) const;
  void load(const std::string& path);  // data_error on any key mismatch

  const ArticleGraph& graph() const { return *graph_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  std::span<const std::shared_ptr<const OptionSpec>> base_options() const {
    return options_;
  }

 private:
  const std::vector<std::shared_ptr<const OptionSpec>>& absorbing_library(
      int goal);

  const ArticleGraph* graph_;
  std::vector<std::shared_ptr<const OptionSpec>> options_;
  double beta_;
  double gamma_;
  SoftVIParams vi_;
  mutable std::mutex mu_;
  std::unordered_map<int, SoftSolution> solutions_;
  std::unordered_map<int, std::vector<std::shared_ptr<const OptionSpec>>>
      libraries_;
};

struct NlmlResult {
  double total = 0;
  double per_path = 0;
  std::size_t n_paths = 0;
};

// Negative log marginal likelihood of the training paths, each under its own
// goal (the final article), with the given option library and choice
// rationality. Paths are validated against their goal MDP first.
NlmlResult nlml(const ArticleGraph& graph,
                std::span<const PathRecord> train_paths, GoalSolver& solver,
                unsigned workers = 1);

struct SweepRow {
  double beta = 0;
  int m = 0;
  double nlml_total = 0;
  double nlml_per_path = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // m-major, beta-minor
  std::size_t argmin = 0;      // row index with the lowest total
};

SweepResult sweep(const ArticleGraph& graph,
                  std::span<const PathRecord> train_paths,
                  std::span<const double> beta_grid,
                  std::span<const int> m_grid, double beta_o,
                  double gamma = 0.9, unsigned workers = 1);

std::string sweep_to_csv(const SweepResult& result);

// Log probability that an agent chasing `goal` produces the first k nodes
// of the path (k - 1 clicks). Exactly zero when the goal sits strictly
// inside the observed prefix, because the episode would have ended there.
double log_prefix_likelihood_for_goal(const ArticleGraph& graph,
                                      const PathRecord& path, std::size_t k,
                                      int goal, GoalSolver& solver);

struct PairedPrediction {
  bool skipped = false;   // no eligible distractor
  double score = 0;       // 1 win, 0 loss, 0.5 tie
  int distractor = -1;
  double log_ratio = 0;   // true-goal minus distractor log likelihood
};

// True goal against a distractor drawn uniformly among nodes at the same
// hop distance from the k-th article (substream "wiki-distractor", indexed
// by path and k, so tables are reproducible). Wins iff the likelihood
// ratio favors the truth; exact ties score half.
PairedPrediction paired_goal_prediction(const ArticleGraph& graph,
                                        const PathRecord& path, std::size_t k,
                                        GoalSolver& solver,
                                        std::uint64_t seed,
                                        std::size_t path_index);

struct AccuracyCell {
  std::size_t n = 0;  // path node count
  std::size_t k = 0;  // observed prefix nodes
  double score_sum = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct PredictionTable {
  std::vector<AccuracyCell> cells;  // every populated (n, k), n-major
  double accuracy = 0;              // pair-level average over evaluated
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Scores every test path at every cut 1 <= k < n.
PredictionTable prediction_table(const ArticleGraph& graph,
                                 std::span<const PathRecord> test_paths,
                                 GoalSolver& solver, std::uint64_t seed);

std::string prediction_table_to_csv(const PredictionTable& table);

}  // namespace graphnav
}  // namespace bihrl
