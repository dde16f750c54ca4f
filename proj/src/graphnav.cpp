#include "bihrl/graphnav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

namespace bihrl {
namespace graphnav {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t tab = line.find('\t', pos);
    if (tab == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

std::vector<std::string> read_data_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Removes nodes without out-edges, iterating because removing their
// incoming edges can create new dead ends. Returns the kept-node mask.
std::vector<char> dead_end_mask(std::vector<std::vector<int>> adjacency,
                                std::size_t* removed) {
  std::size_t n = adjacency.size();
  std::vector<char> keep(n, 1);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = 0; v < n; ++v) {
      if (!keep[v]) continue;
      bool has_out = false;
      for (int t : adjacency[v])
        if (keep[t]) {
          has_out = true;
          break;
        }
      if (!has_out) {
        keep[v] = 0;
        changed = true;
        if (removed) ++(*removed);
      }
    }
  }
  return keep;
}

struct RawPath {
  std::vector<std::string> names;
  std::size_t source_row;
};

// binary writers; doubles round-trip bit for bit
void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw data_error("solution cache is truncated");
  return v;
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw data_error("solution cache is truncated");
  return v;
}
std::int32_t get_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw data_error("solution cache is truncated");
  return v;
}
double get_f64(std::istream& in) {
  std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

constexpr std::uint64_t kCacheMagic = 0x314E4156414E4C52ull;  // "RLNAVAN1"
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

ArticleGraph::ArticleGraph(std::vector<std::string> names,
                           std::vector<std::vector<int>> adjacency)
    : names_(std::move(names)), adjacency_(std::move(adjacency)) {
  if (names_.size() != adjacency_.size())
    throw model_error("graph names and adjacency differ in size");
  for (std::size_t i = 1; i < names_.size(); ++i)
    if (!(names_[i - 1] < names_[i]))
      throw model_error("graph names must be sorted and unique");
  int n = static_cast<int>(names_.size());
  for (auto& row : adjacency_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (int t : row)
      if (t < 0 || t >= n) throw model_error("edge target out of range");
  }
}

ArticleGraph::ArticleGraph(const ArticleGraph& other)
    : names_(other.names_), adjacency_(other.adjacency_) {}

ArticleGraph& ArticleGraph::operator=(const ArticleGraph& other) {
  if (this != &other) {
    names_ = other.names_;
    adjacency_ = other.adjacency_;
    std::lock_guard<std::mutex> lock(mu_);
    dist_cache_.clear();
  }
  return *this;
}

int ArticleGraph::index_of(const std::string& name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return -1;
  return static_cast<int>(it - names_.begin());
}

std::size_t ArticleGraph::n_edges() const {
  std::size_t total = 0;
  for (const auto& row : adjacency_) total += row.size();
  return total;
}

const std::vector<int>& ArticleGraph::distances_from(int source) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = dist_cache_.find(source);
  if (it != dist_cache_.end()) return it->second;
  std::vector<int> dist(names_.size(), -1);
  dist[source] = 0;
  std::deque<int> frontier = {source};
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop_front();
    for (int t : adjacency_[v])
      if (dist[t] == -1) {
        dist[t] = dist[v] + 1;
        frontier.push_back(t);
      }
  }
  return dist_cache_.emplace(source, std::move(dist)).first->second;
}

std::uint64_t ArticleGraph::content_hash() const {
  std::string buf;
  buf.reserve(names_.size() * 16);
  for (const auto& name : names_) {
    buf += name;
    buf += '\x1f';
  }
  buf += '\x1e';
  for (const auto& row : adjacency_) {
    for (int t : row) {
      buf += std::to_string(t);
      buf += ',';
    }
    buf += ';';
  }
  return fnv1a64(buf);
}

std::string percent_decode(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      int hi = hex_value(text[i + 1]), lo = hex_value(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

IngestResult ingest_dataset(const std::string& articles_file,
                            const std::string& links_file,
                            const std::string& paths_file,
                            std::uint64_t seed) {
  IngestResult result;
  IngestStats& stats = result.stats;

  std::vector<std::string> article_names;
  for (const std::string& line : read_data_lines(articles_file)) {
    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != 1 || cols[0].empty()) {
      ++stats.malformed_rows;
      continue;
    }
    article_names.push_back(percent_decode(cols[0]));
  }
  std::sort(article_names.begin(), article_names.end());
  article_names.erase(
      std::unique(article_names.begin(), article_names.end()),
      article_names.end());
  auto original_index = [&article_names](const std::string& name) {
    auto it = std::lower_bound(article_names.begin(), article_names.end(),
                               name);
    if (it == article_names.end() || *it != name) return -1;
    return static_cast<int>(it - article_names.begin());
  };

  std::vector<std::vector<int>> adjacency(article_names.size());
  for (const std::string& line : read_data_lines(links_file)) {
    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != 2) {
      ++stats.malformed_rows;
      continue;
    }
    int src = original_index(percent_decode(cols[0]));
    int dst = original_index(percent_decode(cols[1]));
    if (src < 0 || dst < 0) {
      ++stats.malformed_rows;
      continue;
    }
    adjacency[src].push_back(dst);
  }

  std::vector<char> keep = dead_end_mask(adjacency, &stats.dead_end_nodes);
  std::vector<int> new_id(article_names.size(), -1);
  std::vector<std::string> kept_names;
  std::vector<std::vector<int>> kept_adjacency;
  for (std::size_t v = 0; v < article_names.size(); ++v) {
    if (!keep[v]) continue;
    new_id[v] = static_cast<int>(kept_names.size());
    kept_names.push_back(article_names[v]);
    kept_adjacency.emplace_back();
  }
  for (std::size_t v = 0; v < article_names.size(); ++v) {
    if (!keep[v]) continue;
    for (int t : adjacency[v])
      if (keep[t]) kept_adjacency[new_id[v]].push_back(new_id[t]);
  }
  result.graph = ArticleGraph(std::move(kept_names),
                              std::move(kept_adjacency));
  const ArticleGraph& graph = result.graph;

  std::vector<PathRecord> kept_paths;
  for (const std::string& line : read_data_lines(paths_file)) {
    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() < 4 || cols[3].empty()) {
      ++stats.malformed_rows;
      continue;
    }
    std::vector<std::string> tokens;
    std::stringstream ss(cols[3]);
    std::string token;
    bool back_click = false;
    while (std::getline(ss, token, ';')) {
      if (token == "<") back_click = true;
      tokens.push_back(percent_decode(token));
    }
    if (back_click) {
      ++stats.back_click_paths;
      continue;
    }
    if (tokens.size() < 2) {
      ++stats.empty_paths;
      continue;
    }
    if (tokens.size() > 21) {  // more than 20 clicks
      ++stats.too_long_paths;
      continue;
    }
    PathRecord record;
    bool unresolved = false, removed = false, broken = false;
    for (const std::string& name : tokens) {
      if (original_index(name) < 0) {
        unresolved = true;
        break;
      }
      int id = graph.index_of(name);
      if (id < 0) {
        removed = true;
        break;
      }
      record.articles.push_back(id);
    }
    if (unresolved) {
      ++stats.unresolved_paths;
      continue;
    }
    if (removed) {
      ++stats.removed_node_paths;
      continue;
    }
    for (std::size_t i = 0; i + 1 < record.articles.size(); ++i) {
      const auto& row = graph.out_edges(record.articles[i]);
      if (!std::binary_search(row.begin(), row.end(),
                              record.articles[i + 1])) {
        broken = true;
        break;
      }
    }
    if (broken) {
      ++stats.broken_edge_paths;
      continue;
    }
    kept_paths.push_back(std::move(record));
  }
  stats.kept_paths = kept_paths.size();

  // seeded even split; the train half gets the odd path when n is odd
  std::vector<std::size_t> order(kept_paths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::substream(seed, "wiki-split");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_below(i)]);
  std::size_t train_count = (order.size() + 1) / 2;
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    kept_paths[order[pos]].test = pos >= train_count;
  result.paths = std::move(kept_paths);
  return result;
}

IngestResult extract_top_degree_subgraph(const ArticleGraph& graph,
                                         std::span<const PathRecord> paths,
                                         std::size_t n_nodes) {
  std::size_t n = graph.n_nodes();
  std::vector<std::size_t> degree(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] += graph.out_edges(static_cast<int>(v)).size();
    for (int t : graph.out_edges(static_cast<int>(v))) ++degree[t];
  }
  std::vector<int> order(n);
  for (std::size_t v = 0; v < n; ++v) order[v] = static_cast<int>(v);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (degree[a] != degree[b]) return degree[a] > degree[b];
    return graph.name(a) < graph.name(b);
  });
  // selected nodes in name order keep the new graph's names sorted
  std::vector<int> sel_nodes(order.begin(),
                             order.begin() +
                                 static_cast<std::ptrdiff_t>(
                                     std::min(n_nodes, n)));
  std::sort(sel_nodes.begin(), sel_nodes.end(), [&](int a, int b) {
    return graph.name(a) < graph.name(b);
  });
  std::vector<int> sel_id(n, -1);
  for (std::size_t i = 0; i < sel_nodes.size(); ++i)
    sel_id[sel_nodes[i]] = static_cast<int>(i);

  std::vector<std::vector<int>> sel_adj(sel_nodes.size());
  for (std::size_t i = 0; i < sel_nodes.size(); ++i)
    for (int t : graph.out_edges(sel_nodes[i]))
      if (sel_id[t] >= 0) sel_adj[i].push_back(sel_id[t]);

  IngestResult result;
  std::vector<char> keep = dead_end_mask(sel_adj,
                                         &result.stats.dead_end_nodes);
  std::vector<int> final_id(sel_nodes.size(), -1);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < sel_nodes.size(); ++i) {
    if (!keep[i]) continue;
    final_id[i] = static_cast<int>(names.size());
    names.push_back(graph.name(sel_nodes[i]));
  }
  std::vector<std::vector<int>> adjacency(names.size());
  for (std::size_t i = 0; i < sel_nodes.size(); ++i) {
    if (!keep[i]) continue;
    for (int t : sel_adj[i])
      if (keep[t]) adjacency[final_id[i]].push_back(final_id[t]);
  }
  result.graph = ArticleGraph(std::move(names), std::move(adjacency));

  for (const PathRecord& path : paths) {
    PathRecord mapped;
    mapped.test = path.test;
    bool ok = true;
    for (int article : path.articles) {
      int sid = sel_id[article];
      if (sid < 0 || !keep[sid]) {
        ok = false;
        break;
      }
      mapped.articles.push_back(final_id[sid]);
    }
    if (!ok) {
      ++result.stats.removed_node_paths;
      continue;
    }
    result.paths.push_back(std::move(mapped));
  }
  result.stats.kept_paths = result.paths.size();
  return result;
}

TabularMdp nav_mdp(const ArticleGraph& graph, double gamma) {
  if (graph.n_nodes() == 0) throw data_error("graph has no nodes");
  int n = static_cast<int>(graph.n_nodes());
  int max_out = 0;
  for (int v = 0; v < n; ++v)
    max_out = std::max(max_out,
                       static_cast<int>(graph.out_edges(v).size()));
  std::vector<std::vector<std::vector<Transition>>> rows(
      n, std::vector<std::vector<Transition>>(max_out));
  for (int v = 0; v < n; ++v) {
    const auto& edges = graph.out_edges(v);
    for (std::size_t k = 0; k < edges.size(); ++k)
      rows[v][k] = {{edges[k], 1.0}};
  }
  return TabularMdp(n, max_out, gamma, rows, {});
}

TabularMdp build_nav_mdp(const ArticleGraph& graph, int goal, double gamma) {
  if (goal < 0 || goal >= static_cast<int>(graph.n_nodes()))
    throw model_error("goal node is not in the graph");
  int n = static_cast<int>(graph.n_nodes());
  int max_out = 0;
  for (int v = 0; v < n; ++v)
    max_out = std::max(max_out,
                       static_cast<int>(graph.out_edges(v).size()));
  std::vector<std::vector<std::vector<Transition>>> rows(
      n, std::vector<std::vector<Transition>>(max_out));
  for (int v = 0; v < n; ++v) {
    const auto& edges = graph.out_edges(v);
    for (std::size_t k = 0; k < edges.size(); ++k)
      rows[v][k] = {{v == goal ? goal : edges[k], 1.0}};
  }
  return TabularMdp(n, max_out, gamma, rows, {goal});
}

RewardParams nav_rewards(const ArticleGraph& graph, int goal) {
  return {"goal:" + graph.name(goal), [goal](int s, int, int next) {
            if (s == goal) return 0.0;
            return next == goal ? 20.0 : -1.0;
          }};
}

ActionTrajectory path_to_trajectory(const ArticleGraph& graph,
                                    const PathRecord& path) {
  ActionTrajectory traj;
  traj.states = path.articles;
  for (std::size_t i = 0; i + 1 < path.articles.size(); ++i) {
    const auto& row = graph.out_edges(path.articles[i]);
    auto it = std::lower_bound(row.begin(), row.end(),
                               path.articles[i + 1]);
    if (it == row.end() || *it != path.articles[i + 1])
      throw data_error("path step is not a hyperlink: " +
                       graph.name(path.articles[i]) + " -> " +
                       graph.name(path.articles[i + 1]));
    traj.actions.push_back(static_cast<int>(it - row.begin()));
  }
  return traj;
}

std::vector<int> top_m_destinations(const ArticleGraph& graph,
                                    std::span<const PathRecord> train_paths,
                                    int m) {
  if (m < 0) throw model_error("option count must be non-negative");
  std::vector<std::size_t> counts(graph.n_nodes(), 0);
  for (const PathRecord& path : train_paths)
    for (int article : path.articles) ++counts[article];
  std::vector<int> visited;
  for (std::size_t v = 0; v < counts.size(); ++v)
    if (counts[v] > 0) visited.push_back(static_cast<int>(v));
  std::sort(visited.begin(), visited.end(), [&](int a, int b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return graph.name(a) < graph.name(b);
  });
  if (visited.size() > static_cast<std::size_t>(m)) visited.resize(m);
  return visited;
}

std::vector<std::shared_ptr<const OptionSpec>> top_m_option_library(
    const ArticleGraph& graph, std::span<const PathRecord> train_paths, int m,
    double beta_o) {
  TabularMdp base = nav_mdp(graph);
  std::vector<std::shared_ptr<const OptionSpec>> out;
  for (int a = 0; a < base.n_actions(); ++a)
    out.push_back(std::make_shared<const OptionSpec>(atomic_option(base, a)));
  for (int dest : top_m_destinations(graph, train_paths, m)) {
    std::vector<char> mask(graph.n_nodes(), 0);
    mask[dest] = 1;
    out.push_back(std::make_shared<const OptionSpec>(
        goto_option(base, mask, OptionKind::boltzmann_goto,
                    "goto:" + graph.name(dest), beta_o)));
  }
  return out;
}

std::uint64_t option_library_hash(
    std::span<const std::shared_ptr<const OptionSpec>> options) {
  std::string buf;
  for (const auto& option : options) {
    buf += option->id;
    buf += '\x1f';
    buf += option_kind_name(option->kind);
    buf += '\x1f';
    std::uint64_t bits;
    double beta_o = option->beta_o;
    std::memcpy(&bits, &beta_o, sizeof bits);
    buf += std::to_string(bits);
    buf += '\x1e';
  }
  return fnv1a64(buf);
}

GoalSolver::GoalSolver(const ArticleGraph& graph,
                       std::vector<std::shared_ptr<const OptionSpec>> options,
                       double beta, double gamma,
                       const SoftVIParams& vi_params)
    : graph_(&graph),
      options_(std::move(options)),
      beta_(beta),
      gamma_(gamma),
      vi_(vi_params) {
  if (options_.empty()) throw model_error("goal solver needs options");
}

const std::vector<std::shared_ptr<const OptionSpec>>&
GoalSolver::absorbing_library(int goal) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = libraries_.find(goal);
    if (it != libraries_.end()) return it->second;
  }
  std::vector<std::shared_ptr<const OptionSpec>> adjusted;
  adjusted.reserve(options_.size());
  for (const auto& option : options_) {
    if (option->kind == OptionKind::atomic || option->alpha(goal) == 1.0) {
      adjusted.push_back(option);
      continue;
    }
    OptionSpec variant = *option;
    variant.alpha_custom.resize(graph_->n_nodes());
    for (std::size_t s = 0; s < graph_->n_nodes(); ++s)
      variant.alpha_custom[s] = option->alpha(static_cast<int>(s));
    variant.alpha_custom[goal] = 1.0;
    adjusted.push_back(std::make_shared<const OptionSpec>(std::move(variant)));
  }
  std::lock_guard<std::mutex> lock(mu_);
  return libraries_.try_emplace(goal, std::move(adjusted)).first->second;
}

std::span<const std::shared_ptr<const OptionSpec>> GoalSolver::options_for(
    int goal) {
  return absorbing_library(goal);
}

const SoftSolution& GoalSolver::solve(int goal) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = solutions_.find(goal);
    if (it != solutions_.end()) return it->second;
  }
  const auto& library = absorbing_library(goal);
  TabularMdp mdp = build_nav_mdp(*graph_, goal, gamma_);
  RewardParams rewards = nav_rewards(*graph_, goal);
  std::vector<OptionModel> models = build_option_models(library, mdp, rewards);
  SoftSolution sol = soft_value_iteration(mdp, models, beta_, vi_);
  std::lock_guard<std::mutex> lock(mu_);
  return solutions_.try_emplace(goal, std::move(sol)).first->second;
}

bool GoalSolver::cached(int goal) const {
  std::lock_guard<std::mutex> lock(mu_);
  return solutions_.count(goal) > 0;
}

std::size_t GoalSolver::n_solved() const {
  std::lock_guard<std::mutex> lock(mu_);
  return solutions_.size();
}

void GoalSolver::preload(std::span<const int> goals, unsigned workers) {
  std::vector<int> todo;
  for (int goal : goals)
    if (!cached(goal)) todo.push_back(goal);
  std::sort(todo.begin(), todo.end());
  todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
  parallel_for(todo.size(), workers,
               [&](std::size_t i) { solve(todo[i]); });
}

void GoalSolver::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path);
  std::lock_guard<std::mutex> lock(mu_);
  put_u64(out, kCacheMagic);
  put_u32(out, kCacheVersion);
  put_u64(out, graph_->content_hash());
  put_u64(out, option_library_hash(options_));
  put_f64(out, beta_);
  put_f64(out, gamma_);
  put_f64(out, vi_.tolerance);
  put_u32(out, static_cast<std::uint32_t>(vi_.max_iters));
  put_u32(out, static_cast<std::uint32_t>(solutions_.size()));
  std::vector<int> goals;
  for (const auto& [goal, sol] : solutions_) goals.push_back(goal);
  std::sort(goals.begin(), goals.end());
  for (int goal : goals) {
    const SoftSolution& sol = solutions_.at(goal);
    put_i32(out, goal);
    put_u32(out, sol.converged ? 1 : 0);
    put_i32(out, sol.iterations);
    put_f64(out, sol.final_delta);
    put_u32(out, static_cast<std::uint32_t>(sol.v.size()));
    for (double v : sol.v) put_f64(out, v);
    for (std::size_t s = 0; s < sol.v.size(); ++s) {
      put_u32(out, static_cast<std::uint32_t>(sol.initiable[s].size()));
      for (int o : sol.initiable[s]) put_i32(out, o);
      for (double q : sol.q[s]) put_f64(out, q);
      for (double p : sol.policy[s]) put_f64(out, p);
    }
  }
  if (!out) throw data_error("failed writing " + path);
}

void GoalSolver::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  if (get_u64(in) != kCacheMagic)
    throw data_error("not a solution cache: " + path);
  if (get_u32(in) != kCacheVersion)
    throw data_error("solution cache version mismatch: " + path);
  if (get_u64(in) != graph_->content_hash())
    throw data_error("solution cache was built for a different graph");
  if (get_u64(in) != option_library_hash(options_))
    throw data_error("solution cache was built for a different option set");
  double beta = get_f64(in), gamma = get_f64(in), tol = get_f64(in);
  std::uint32_t iters = get_u32(in);
  if (beta != beta_ || gamma != gamma_ || tol != vi_.tolerance ||
      iters != static_cast<std::uint32_t>(vi_.max_iters))
    throw data_error("solution cache was built with different parameters");
  std::uint32_t n_goals = get_u32(in);
  std::unordered_map<int, SoftSolution> loaded;
  for (std::uint32_t g = 0; g < n_goals; ++g) {
    int goal = get_i32(in);
    SoftSolution sol;
    sol.converged = get_u32(in) != 0;
    sol.iterations = get_i32(in);
    sol.final_delta = get_f64(in);
    std::uint32_t n = get_u32(in);
    if (n != graph_->n_nodes())
      throw data_error("solution cache state count mismatch");
    sol.v.resize(n);
    for (auto& v : sol.v) v = get_f64(in);
    sol.initiable.resize(n);
    sol.q.resize(n);
    sol.policy.resize(n);
    for (std::uint32_t s = 0; s < n; ++s) {
      std::uint32_t k = get_u32(in);
      sol.initiable[s].resize(k);
      for (auto& o : sol.initiable[s]) o = get_i32(in);
      sol.q[s].resize(k);
      for (auto& q : sol.q[s]) q = get_f64(in);
      sol.policy[s].resize(k);
      for (auto& p : sol.policy[s]) p = get_f64(in);
    }
    loaded.emplace(goal, std::move(sol));
  }
  std::lock_guard<std::mutex> lock(mu_);
  solutions_ = std::move(loaded);
}

NlmlResult nlml(const ArticleGraph& graph,
                std::span<const PathRecord> train_paths, GoalSolver& solver,
                unsigned workers) {
  if (train_paths.empty()) throw model_error("no training paths");
  std::vector<int> goals;
  for (const PathRecord& path : train_paths) {
    if (path.articles.size() < 2)
      throw data_error("training path shorter than one click");
    int goal = path.articles.back();
    for (std::size_t i = 0; i + 1 < path.articles.size(); ++i)
      if (path.articles[i] == goal)
        throw data_error("path revisits its goal before the end");
    goals.push_back(goal);
  }
  solver.preload(goals, workers);
  std::vector<double> terms(train_paths.size());
  parallel_for(train_paths.size(), workers, [&](std::size_t i) {
    ActionTrajectory traj = path_to_trajectory(graph, train_paths[i]);
    const SoftSolution& sol = solver.solve(goals[i]);
    terms[i] = -log_marginal_by_dp(traj, solver.options_for(goals[i]), sol,
                                   solver.beta());
  });
  NlmlResult result;
  for (double term : terms) result.total += term;
  result.n_paths = train_paths.size();
  result.per_path = result.total / static_cast<double>(result.n_paths);
  return result;
}

SweepResult sweep(const ArticleGraph& graph,
                  std::span<const PathRecord> train_paths,
                  std::span<const double> beta_grid,
                  std::span<const int> m_grid, double beta_o, double gamma,
                  unsigned workers) {
  if (beta_grid.empty() || m_grid.empty())
    throw model_error("sweep grids must be non-empty");
  SweepResult result;
  for (int m : m_grid) {
    auto library = top_m_option_library(graph, train_paths, m, beta_o);
    for (double beta : beta_grid) {
      GoalSolver solver(graph, library, beta, gamma);
      NlmlResult r = nlml(graph, train_paths, solver, workers);
      result.rows.push_back({beta, m, r.total, r.per_path});
    }
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    if (result.rows[i].nlml_total < result.rows[result.argmin].nlml_total)
      result.argmin = i;
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::string out = "beta,m,nlml_total,nlml_per_path\n";
  for (const SweepRow& row : result.rows) {
    out += fmt_double(row.beta);
    out += ',';
    out += std::to_string(row.m);
    out += ',';
    out += fmt_double(row.nlml_total);
    out += ',';
    out += fmt_double(row.nlml_per_path);
    out += '\n';
  }
  return out;
}

double log_prefix_likelihood_for_goal(const ArticleGraph& graph,
                                      const PathRecord& path, std::size_t k,
                                      int goal, GoalSolver& solver) {
  if (k < 1 || k > path.articles.size())
    throw model_error("prefix length must cover 1..n nodes");
  // a goal strictly inside the prefix would have ended the episode there
  for (std::size_t i = 0; i + 1 < k; ++i)
    if (path.articles[i] == goal) return kNegInf;
  if (k == 1) return 0.0;
  ActionTrajectory full = path_to_trajectory(graph, path);
  ActionTrajectory prefix;
  prefix.states.assign(full.states.begin(), full.states.begin() + k);
  prefix.actions.assign(full.actions.begin(), full.actions.begin() + (k - 1));
  const SoftSolution& sol = solver.solve(goal);
  return log_prefix_likelihood(prefix, k - 1, solver.options_for(goal), sol,
                               solver.beta());
}

PairedPrediction paired_goal_prediction(const ArticleGraph& graph,
                                        const PathRecord& path, std::size_t k,
                                        GoalSolver& solver, std::uint64_t seed,
                                        std::size_t path_index) {
  std::size_t n = path.articles.size();
  if (k < 1 || k >= n)
    throw model_error("prediction needs 1 <= k < path node count");
  int truth = path.articles.back();
  const std::vector<int>& dist = graph.distances_from(path.articles[k - 1]);
  std::vector<int> candidates;
  for (std::size_t v = 0; v < graph.n_nodes(); ++v)
    if (static_cast<int>(v) != truth && dist[v] == dist[truth])
      candidates.push_back(static_cast<int>(v));
  PairedPrediction out;
  if (candidates.empty()) {
    out.skipped = true;
    return out;
  }
  Rng rng = Rng::substream(seed, "wiki-distractor", path_index * 32 + k);
  out.distractor = candidates[rng.uniform_below(candidates.size())];
  double lt = log_prefix_likelihood_for_goal(graph, path, k, truth, solver);
  double ld = log_prefix_likelihood_for_goal(graph, path, k, out.distractor,
                                             solver);
  if (lt == ld) {
    out.score = 0.5;
    out.log_ratio = 0;
  } else {
    out.score = lt > ld ? 1.0 : 0.0;
    out.log_ratio = lt - ld;
  }
  return out;
}

PredictionTable prediction_table(const ArticleGraph& graph,
                                 std::span<const PathRecord> test_paths,
                                 GoalSolver& solver, std::uint64_t seed) {
  std::map<std::pair<std::size_t, std::size_t>, AccuracyCell> cells;
  PredictionTable table;
  double score_sum = 0;
  for (std::size_t i = 0; i < test_paths.size(); ++i) {
    std::size_t n = test_paths[i].articles.size();
    for (std::size_t k = 1; k < n; ++k) {
      PairedPrediction p =
          paired_goal_prediction(graph, test_paths[i], k, solver, seed, i);
      AccuracyCell& cell = cells[{n, k}];
      cell.n = n;
      cell.k = k;
      if (p.skipped) {
        ++cell.skipped;
        ++table.skipped;
      } else {
        cell.score_sum += p.score;
        ++cell.evaluated;
        ++table.evaluated;
        score_sum += p.score;
      }
    }
  }
  for (auto& [key, cell] : cells) table.cells.push_back(cell);
  table.accuracy =
      table.evaluated == 0 ? 0 : score_sum / static_cast<double>(table.evaluated);
  return table;
}

std::string prediction_table_to_csv(const PredictionTable& table) {
  std::string out = "n,k,accuracy,evaluated,skipped\n";
  for (const AccuracyCell& cell : table.cells) {
    double acc = cell.evaluated == 0
                     ? 0
                     : cell.score_sum / static_cast<double>(cell.evaluated);
    out += std::to_string(cell.n);
    out += ',';
    out += std::to_string(cell.k);
    out += ',';
    out += fmt_double(acc);
    out += ',';
    out += std::to_string(cell.evaluated);
    out += ',';
    out += std::to_string(cell.skipped);
    out += '\n';
  }
  return out;
}

}  // namespace graphnav
}  // namespace bihrl
