#pragma once

// Tiny deterministic environments shared across test suites.

#include <string>
#include <vector>

#include "bihrl/mdp.hpp"

namespace fixtures {

using bihrl::RewardParams;
using bihrl::TabularMdp;
using bihrl::Transition;

// w x h grid, actions N=0 E=1 S=2 W=3, moves off the edge stay in place.
// State id = x * h + y, origin at the bottom left.
inline TabularMdp grid_mdp(int w, int h, double gamma,
                           const std::vector<int>& terminal = {}) {
  const int n = w * h;
  std::vector<std::vector<std::vector<Transition>>> rows(
      n, std::vector<std::vector<Transition>>(4));
  auto id = [h](int x, int y) { return x * h + y; };
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      int s = id(x, y);
      bool term = false;
      for (int t : terminal) term = term || t == s;
      if (term) {
        for (int a = 0; a < 4; ++a) rows[s][a] = {{s, 1.0}};
        continue;
      }
      int nx[4] = {x, x + 1, x, x - 1};
      int ny[4] = {y + 1, y, y - 1, y};
      for (int a = 0; a < 4; ++a) {
        int tx = nx[a], ty = ny[a];
        if (tx < 0 || tx >= w || ty < 0 || ty >= h) {
          tx = x;
          ty = y;
        }
        rows[s][a] = {{id(tx, ty), 1.0}};
      }
    }
  return TabularMdp(n, 4, gamma, std::move(rows), terminal);
}

// Deterministic digraph MDP: action k at node s follows the k-th out-edge.
// Terminal nodes get their edges replaced by self-loops.
inline TabularMdp digraph_mdp(const std::vector<std::vector<int>>& adj,
                              double gamma,
                              const std::vector<int>& terminal = {}) {
  const int n = static_cast<int>(adj.size());
  std::size_t max_deg = 1;
  for (const auto& row : adj) max_deg = std::max(max_deg, row.size());
  std::vector<std::vector<std::vector<Transition>>> rows(
      n, std::vector<std::vector<Transition>>(max_deg));
  for (int s = 0; s < n; ++s) {
    bool term = false;
    for (int t : terminal) term = term || t == s;
    for (std::size_t k = 0; k < adj[s].size(); ++k)
      rows[s][k] = {{term ? s : adj[s][k], 1.0}};
  }
  return TabularMdp(n, static_cast<int>(max_deg), gamma, std::move(rows),
                    terminal);
}

inline std::vector<char> single_state_mask(int n, int s) {
  std::vector<char> mask(n, 0);
  mask[s] = 1;
  return mask;
}

inline RewardParams step_cost_reward(const TabularMdp& mdp, int goal,
                                     double goal_reward = 20.0,
                                     double step = -1.0) {
  std::vector<char> term(mdp.n_states(), 0);
  for (int t : mdp.terminal_states()) term[t] = 1;
  return {"goal:" + std::to_string(goal),
          [term, goal, goal_reward, step](int s, int, int nx) {
            if (term[s]) return 0.0;
            return nx == goal ? goal_reward : step;
          }};
}

}  // namespace fixtures
