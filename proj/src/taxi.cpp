#include "bihrl/taxi.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <sstream>

#include "json.hpp"

namespace bihrl {
namespace taxi {

namespace {

// blocked cardinal moves as unordered cell-id pairs
const std::vector<std::pair<int, int>>& wall_pairs() {
  static const std::vector<std::pair<int, int>> walls = [] {
    auto id = [](int x, int y) { return x * kGrid + y; };
    std::vector<std::pair<int, int>> w = {
        {id(0, 0), id(1, 0)}, {id(0, 1), id(1, 1)},  // columns 0|1, rows 0,1
        {id(1, 3), id(2, 3)}, {id(1, 4), id(2, 4)},  // columns 1|2, rows 3,4
        {id(2, 0), id(3, 0)}, {id(2, 1), id(3, 1)},  // columns 2|3, rows 0,1
    };
    for (auto& [a, b] : w)
      if (a > b) std::swap(a, b);
    return w;
  }();
  return walls;
}

bool wall_between(Cell a, Cell b) {
  int ia = cell_id(a), ib = cell_id(b);
  if (ia > ib) std::swap(ia, ib);
  const auto& walls = wall_pairs();
  return std::find(walls.begin(), walls.end(), std::make_pair(ia, ib)) !=
         walls.end();
}

constexpr int kDx[4] = {0, 1, 0, -1};  // N, E, S, W
constexpr int kDy[4] = {1, 0, -1, 0};

std::uint32_t theta_mask(const TaxiTheta& theta) {
  std::uint32_t m = 0;
  for (int c : theta.free_cells) m |= 1u << c;
  return m;
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

int cell_id(Cell c) { return c.x * kGrid + c.y; }

Cell cell_of(int id) { return {id / kGrid, id % kGrid}; }

std::string cell_name(Cell c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

const std::array<Cell, 4>& landmarks() {
  static const std::array<Cell, 4> cells = {
      Cell{1, 4}, Cell{4, 4}, Cell{3, 0}, Cell{0, 0}};  // R, G, B, Y
  return cells;
}

Cell landmark_r1() { return {0, 4}; }
Cell landmark_b1() { return {4, 0}; }

bool move_blocked(Cell from, int action) {
  Cell to{from.x + kDx[action], from.y + kDy[action]};
  if (to.x < 0 || to.x >= kGrid || to.y < 0 || to.y >= kGrid) return true;
  return wall_between(from, to);
}

Cell move_result(Cell from, int action) {
  if (move_blocked(from, action)) return from;
  return {from.x + kDx[action], from.y + kDy[action]};
}

int encode_state(const TaxiState& s) {
  return ((s.x * kGrid + s.y) * 5 + s.passenger) * 4 + s.destination;
}

TaxiState decode_state(int s) {
  TaxiState out;
  out.destination = s % 4;
  s /= 4;
  out.passenger = s % 5;
  s /= 5;
  out.y = s % kGrid;
  out.x = s / kGrid;
  return out;
}

bool state_terminal(const TaxiState& s) {
  return s.passenger != kPassInTaxi && s.passenger == s.destination;
}

std::string TaxiTheta::id() const {
  std::string out = "free:{";
  for (std::size_t i = 0; i < free_cells.size(); ++i) {
    if (i) out += ",";
    out += cell_name(cell_of(free_cells[i]));
  }
  return out + "}";
}

TaxiTheta theta_from_id(const std::string& text) {
  if (text.rfind("free:{", 0) != 0 || text.back() != '}')
    throw data_error("malformed theta id: " + text);
  std::string body = text.substr(6, text.size() - 7);
  TaxiTheta theta;
  std::size_t pos = 0;
  while (pos < body.size()) {
    if (body[pos] != '(') throw data_error("malformed theta id: " + text);
    std::size_t close = body.find(')', pos);
    if (close == std::string::npos)
      throw data_error("malformed theta id: " + text);
    std::string pair = body.substr(pos + 1, close - pos - 1);
    std::size_t comma = pair.find(',');
    if (comma == std::string::npos)
      throw data_error("malformed theta id: " + text);
    int x = std::stoi(pair.substr(0, comma));
    int y = std::stoi(pair.substr(comma + 1));
    if (x < 0 || x >= kGrid || y < 0 || y >= kGrid)
      throw data_error("theta cell off the grid: " + text);
    theta.free_cells.push_back(cell_id({x, y}));
    pos = close + 1;
    if (pos < body.size()) {
      if (body[pos] != ',') throw data_error("malformed theta id: " + text);
      ++pos;
    }
  }
  std::sort(theta.free_cells.begin(), theta.free_cells.end());
  auto dup = std::adjacent_find(theta.free_cells.begin(),
                                theta.free_cells.end());
  if (dup != theta.free_cells.end())
    throw data_error("theta repeats a cell: " + text);
  if (theta.free_cells.size() > 5)
    throw data_error("theta holds more than five cells: " + text);
  return theta;
}

const TabularMdp& taxi_mdp() {
  static const TabularMdp mdp = [] {
    const int n = 500;
    std::vector<std::vector<std::vector<Transition>>> rows(
        n, std::vector<std::vector<Transition>>(6));
    std::vector<int> terminal;
    for (int s = 0; s < n; ++s) {
      TaxiState st = decode_state(s);
      if (state_terminal(st)) {
        terminal.push_back(s);
        for (int a = 0; a < 6; ++a) rows[s][a] = {{s, 1.0}};
        continue;
      }
      for (int a = 0; a < 4; ++a) {
        TaxiState nx = st;
        Cell moved = move_result({st.x, st.y}, a);
        nx.x = moved.x;
        nx.y = moved.y;
        rows[s][a] = {{encode_state(nx), 1.0}};
      }
      TaxiState pick = st;
      if (st.passenger != kPassInTaxi &&
          Cell{st.x, st.y} == landmarks()[st.passenger])
        pick.passenger = kPassInTaxi;
      rows[s][kActionPickup] = {{encode_state(pick), 1.0}};
      TaxiState drop = st;
      if (st.passenger == kPassInTaxi &&
          Cell{st.x, st.y} == landmarks()[st.destination])
        drop.passenger = st.destination;
      rows[s][kActionPutdown] = {{encode_state(drop), 1.0}};
    }
    return TabularMdp(n, 6, 0.9, rows, terminal);
  }();
  return mdp;
}

RewardParams taxi_rewards(const TaxiTheta& theta) {
  std::vector<int> free = theta.free_cells;
  return {theta.id(), [free](int s, int a, int next) {
            TaxiState st = decode_state(s);
            if (state_terminal(st)) return 0.0;
            if (a < 4) {
              TaxiState nx = decode_state(next);
              bool entered_free = std::binary_search(free.begin(), free.end(),
                                                     cell_id({nx.x, nx.y}));
              return entered_free ? 0.0 : -1.0;
            }
            if (a == kActionPickup) {
              bool success = st.passenger != kPassInTaxi &&
                             Cell{st.x, st.y} == landmarks()[st.passenger];
              return success ? -1.0 : -10.0;
            }
            bool success = st.passenger == kPassInTaxi &&
                           Cell{st.x, st.y} == landmarks()[st.destination];
            return success ? 20.0 : -10.0;
          }};
}

std::vector<TaxiTheta> enumerate_taxi_thetas() {
  std::vector<TaxiTheta> out;
  out.push_back({});
  std::vector<int> pick;
  auto rec = [&](auto&& self, int next_cell, int remaining) -> void {
    if (remaining == 0) {
      out.push_back({pick});
      return;
    }
    for (int c = next_cell; c <= 25 - remaining; ++c) {
      pick.push_back(c);
      self(self, c + 1, remaining - 1);
      pick.pop_back();
    }
  };
  for (int k = 1; k <= 5; ++k) rec(rec, 0, k);
  return out;
}

TaxiTheta sample_taxi_theta(Rng& rng) {
  std::size_t k = rng.uniform_below(6);
  std::array<int, 25> cells;
  for (int i = 0; i < 25; ++i) cells[i] = i;
  TaxiTheta theta;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.uniform_below(25 - i);
    std::swap(cells[i], cells[j]);
    theta.free_cells.push_back(cells[i]);
  }
  std::sort(theta.free_cells.begin(), theta.free_cells.end());
  return theta;
}

const std::vector<Cell>& option_destination_universe() {
  static const std::vector<Cell> cells = [] {
    std::vector<Cell> out;
    for (int x = 0; x < kGrid; ++x)
      for (int y = 3; y <= 4; ++y) out.push_back({x, y});
    for (Cell c : {Cell{0, 0}, Cell{0, 1}, Cell{3, 0}, Cell{3, 1}, Cell{4, 0},
                   Cell{4, 1}})
      out.push_back(c);
    return out;
  }();
  return cells;
}

std::shared_ptr<const OptionSpec> goto_cell_option(Cell destination) {
  static std::mutex mu;
  static std::unordered_map<int, std::shared_ptr<const OptionSpec>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(cell_id(destination));
  if (it != cache.end()) return it->second;

  const TabularMdp& mdp = taxi_mdp();
  std::vector<char> mask(mdp.n_states(), 0);
  for (int s = 0; s < mdp.n_states(); ++s) {
    TaxiState st = decode_state(s);
    if (Cell{st.x, st.y} == destination) mask[s] = 1;
  }
  static const std::vector<int> moves = {kActionN, kActionE, kActionS,
                                         kActionW};
  auto spec = std::make_shared<const OptionSpec>(
      goto_option(mdp, mask, OptionKind::deterministic_goto,
                  "goto:" + cell_name(destination), 0.0, moves));
  cache.emplace(cell_id(destination), spec);
  return spec;
}

std::vector<std::shared_ptr<const OptionSpec>> atomic_taxi_options() {
  std::vector<std::shared_ptr<const OptionSpec>> out;
  for (int a = 0; a < 6; ++a)
    out.push_back(
        std::make_shared<const OptionSpec>(atomic_option(taxi_mdp(), a)));
  return out;
}

std::vector<std::shared_ptr<const OptionSpec>> default_taxi_options() {
  auto out = atomic_taxi_options();
  out.push_back(goto_cell_option(landmark_r1()));
  out.push_back(goto_cell_option(landmark_b1()));
  return out;
}

std::string layout_to_json() {
  nlohmann::ordered_json j;
  j["grid"] = kGrid;
  const char* names[4] = {"R", "G", "B", "Y"};
  for (int i = 0; i < 4; ++i)
    j["landmarks"][names[i]] = {landmarks()[i].x, landmarks()[i].y};
  j["landmarks"]["R1"] = {landmark_r1().x, landmark_r1().y};
  j["landmarks"]["B1"] = {landmark_b1().x, landmark_b1().y};
  j["walls"] = nlohmann::ordered_json::array();
  for (const auto& [a, b] : wall_pairs()) {
    Cell ca = cell_of(a), cb = cell_of(b);
    j["walls"].push_back({{ca.x, ca.y}, {cb.x, cb.y}});
  }
  j["option_destination_universe"] = nlohmann::ordered_json::array();
  for (Cell c : option_destination_universe())
    j["option_destination_universe"].push_back({c.x, c.y});
  return j.dump(2);
}

std::vector<ActionTrajectory> simulate_hierarchical_agent(
    const TaxiTheta& theta,
    std::span<const std::shared_ptr<const OptionSpec>> options, double beta,
    std::uint64_t seed, std::size_t n_trajectories, std::size_t max_steps) {
  const TabularMdp& mdp = taxi_mdp();
  RewardParams rewards = taxi_rewards(theta);
  std::vector<OptionModel> models = build_option_models(options, mdp, rewards);
  SoftSolution sol = soft_value_iteration(mdp, models, beta);
  std::vector<std::shared_ptr<const OptionSpec>> lib(options.begin(),
                                                     options.end());
  std::vector<ActionTrajectory> out;
  out.reserve(n_trajectories);
  for (std::size_t i = 0; i < n_trajectories; ++i) {
    Rng rng = Rng::substream(seed, "taxi-episode", i);
    TaxiState start;
    start.x = static_cast<int>(rng.uniform_below(kGrid));
    start.y = static_cast<int>(rng.uniform_below(kGrid));
    start.passenger = static_cast<int>(rng.uniform_below(4));
    start.destination = static_cast<int>(
        (start.passenger + 1 + rng.uniform_below(3)) % 4);
    EpisodeResult ep =
        simulate_episode(mdp, rewards, lib, sol, encode_state(start),
                         static_cast<int>(max_steps), rng);
    out.push_back({std::move(ep.states), std::move(ep.actions), ep.truncated});
  }
  return out;
}

ThetaSupportSpace::ThetaSupportSpace(std::vector<TaxiTheta> support)
    : support_(std::move(support)) {
  if (support_.empty())
    throw model_error("theta support space needs at least one candidate");
}

double ThetaSupportSpace::log_prior(std::size_t) const {
  return -std::log(static_cast<double>(support_.size()));
}

std::size_t ThetaSupportSpace::propose(std::size_t, Rng& rng) const {
  return rng.uniform_below(support_.size());
}

FullThetaSpace::FullThetaSpace() : thetas_(enumerate_taxi_thetas()) {
  by_mask_.reserve(thetas_.size());
  for (std::size_t i = 0; i < thetas_.size(); ++i)
    by_mask_.emplace(theta_mask(thetas_[i]), i);
}

double FullThetaSpace::log_prior(std::size_t i) const {
  int k = static_cast<int>(thetas_[i].free_cells.size());
  return -std::log(6.0) - log_binomial(25, k);
}

std::size_t FullThetaSpace::index_of(const TaxiTheta& theta) const {
  auto it = by_mask_.find(theta_mask(theta));
  if (it == by_mask_.end())
    throw model_error("theta is not a member of the full space: " +
                      theta.id());
  return it->second;
}

std::size_t FullThetaSpace::propose(std::size_t from, Rng& rng) const {
  std::uint32_t mask = theta_mask(thetas_[from]);
  int k = std::popcount(mask);
  switch (rng.uniform_below(3)) {
    case 0: {  // add one cell
      int c = static_cast<int>(rng.uniform_below(25));
      if (k == 5 || (mask & (1u << c))) return from;
      mask |= 1u << c;
      break;
    }
    case 1: {  // remove one cell
      int c = static_cast<int>(rng.uniform_below(25));
      if (!(mask & (1u << c))) return from;
      mask &= ~(1u << c);
      break;
    }
    default: {  // move one cell; an ordered pair keeps the kernel symmetric
      int c1 = static_cast<int>(rng.uniform_below(25));
      int c2 = static_cast<int>(rng.uniform_below(25));
      if (!(mask & (1u << c1)) || (mask & (1u << c2))) return from;
      mask = (mask & ~(1u << c1)) | (1u << c2);
      break;
    }
  }
  return by_mask_.at(mask);
}

OmegaSpace::OmegaSpace(int max_size) : max_size_(max_size) {
  if (max_size_ < 0 || max_size_ > 16)
    throw model_error("omega subsets must have size within 0..16");
  mask_index_.assign(1u << 16, SIZE_MAX);
  for (std::uint32_t m = 0; m < (1u << 16); ++m) {
    if (std::popcount(m) > max_size_) continue;
    mask_index_[m] = masks_.size();
    masks_.push_back(m);
  }
}

std::string OmegaSpace::id(std::size_t i) const {
  const auto& universe = option_destination_universe();
  std::string out = "opts:{";
  bool first = true;
  for (int j = 0; j < 16; ++j) {
    if (!(masks_[i] & (1u << j))) continue;
    if (!first) out += ",";
    out += cell_name(universe[j]);
    first = false;
  }
  return out + "}";
}

double OmegaSpace::log_prior(std::size_t) const {
  return -std::log(static_cast<double>(masks_.size()));
}

std::vector<Cell> OmegaSpace::destinations(std::size_t i) const {
  const auto& universe = option_destination_universe();
  std::vector<Cell> out;
  for (int j = 0; j < 16; ++j)
    if (masks_[i] & (1u << j)) out.push_back(universe[j]);
  return out;
}

std::size_t OmegaSpace::index_of_mask(std::uint32_t mask) const {
  if (mask >= mask_index_.size() || mask_index_[mask] == SIZE_MAX)
    throw model_error("option-set mask outside the declared universe");
  return mask_index_[mask];
}

std::size_t OmegaSpace::propose(std::size_t from, Rng& rng) const {
  std::uint32_t mask = masks_[from];
  int k = std::popcount(mask);
  switch (rng.uniform_below(3)) {
    case 0: {  // add
      int j = static_cast<int>(rng.uniform_below(16));
      if (k == max_size_ || (mask & (1u << j))) return from;
      mask |= 1u << j;
      break;
    }
    case 1: {  // remove
      int j = static_cast<int>(rng.uniform_below(16));
      if (!(mask & (1u << j))) return from;
      mask &= ~(1u << j);
      break;
    }
    default: {  // retarget one destination
      int j1 = static_cast<int>(rng.uniform_below(16));
      int j2 = static_cast<int>(rng.uniform_below(16));
      if (!(mask & (1u << j1)) || (mask & (1u << j2))) return from;
      mask = (mask & ~(1u << j1)) | (1u << j2);
      break;
    }
  }
  return mask_index_[mask];
}

JointEval::JointEval(std::vector<TaxiTheta> thetas, const OmegaSpace& omegas,
                     std::vector<ActionTrajectory> trajectories, double beta,
                     SoftVIParams vi_params)
    : thetas_(std::move(thetas)),
      omegas_(&omegas),
      trajs_(std::move(trajectories)),
      beta_(beta),
      vi_(vi_params),
      atomics_(atomic_taxi_options()) {
  if (thetas_.empty()) throw model_error("joint evaluation needs thetas");
  if (trajs_.empty()) throw model_error("joint evaluation needs trajectories");
  for (const auto& tr : trajs_) validate_trajectory(taxi_mdp(), tr);
  for (Cell c : option_destination_universe())
    gotos_.push_back(goto_cell_option(c));
}

std::size_t JointEval::n_states() const { return taxi_mdp().n_states(); }

double JointEval::log_likelihood(std::size_t theta, std::size_t omega,
                                 std::vector<double>& values) {
  const TabularMdp& mdp = taxi_mdp();
  RewardParams rewards = taxi_rewards(thetas_[theta]);
  std::vector<std::shared_ptr<const OptionSpec>> lib = atomics_;
  std::uint32_t mask = omegas_->mask(omega);
  for (int j = 0; j < 16; ++j)
    if (mask & (1u << j)) lib.push_back(gotos_[j]);
  std::vector<OptionModel> models = build_option_models(lib, mdp, rewards);
  std::optional<std::vector<double>> warm;
  if (values.size() == static_cast<std::size_t>(mdp.n_states())) warm = values;
  SoftSolution sol = soft_value_iteration(mdp, models, beta_, vi_, warm);
  values = sol.v;
  double lp = 0;
  for (const auto& tr : trajs_) {
    lp += tr.truncated
              ? log_prefix_likelihood(tr, tr.length(), lib, sol, beta_)
              : log_marginal_by_dp(tr, lib, sol, beta_);
    if (lp == kNegInf) break;
  }
  return lp;
}

}  // namespace taxi
}  // namespace bihrl
