#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bihrl/inference.hpp"
#include "bihrl/mcmc.hpp"

namespace bihrl {
namespace taxi {

inline constexpr int kGrid = 5;
inline constexpr int kActionN = 0;
inline constexpr int kActionE = 1;
inline constexpr int kActionS = 2;
inline constexpr int kActionW = 3;
inline constexpr int kActionPickup = 4;
inline constexpr int kActionPutdown = 5;

// passenger slots; indices 0..3 double as destination ids
inline constexpr int kPassR = 0;
inline constexpr int kPassG = 1;
inline constexpr int kPassB = 2;
inline constexpr int kPassY = 3;
inline constexpr int kPassInTaxi = 4;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

int cell_id(Cell c);
Cell cell_of(int id);
std::string cell_name(Cell c);  // "(x,y)"

// landmark cells in passenger-slot order R, G, B, Y
const std::array<Cell, 4>& landmarks();
Cell landmark_r1();  // the cell west of R
Cell landmark_b1();  // the cell east of B

// cardinal movement with boundary and wall rules; origin is bottom-left
bool move_blocked(Cell from, int action);
Cell move_result(Cell from, int action);

struct TaxiState {
  int x = 0;
  int y = 0;
  int passenger = kPassR;
  int destination = kPassR;
  friend bool operator==(const TaxiState&, const TaxiState&) = default;
};

int encode_state(const TaxiState& s);
TaxiState decode_state(int s);
bool state_terminal(const TaxiState& s);

// reward hypothesis: a set of up to five cells that are free to enter
struct TaxiTheta {
  std::vector<int> free_cells;  // sorted distinct cell ids

  std::string id() const;
  friend bool operator==(const TaxiTheta&, const TaxiTheta&) = default;
};

TaxiTheta theta_from_id(const std::string& text);

// shared 500-state MDP; transitions do not depend on theta
const TabularMdp& taxi_mdp();
RewardParams taxi_rewards(const TaxiTheta& theta);

std::vector<TaxiTheta> enumerate_taxi_thetas();
TaxiTheta sample_taxi_theta(Rng& rng);

// the sixteen candidate goto destinations near the landmarks
const std::vector<Cell>& option_destination_universe();

std::shared_ptr<const OptionSpec> goto_cell_option(Cell destination);
std::vector<std::shared_ptr<const OptionSpec>> atomic_taxi_options();
// six atomic options followed by goto R1 and goto B1
std::vector<std::shared_ptr<const OptionSpec>> default_taxi_options();

std::string layout_to_json();

std::vector<ActionTrajectory> simulate_hierarchical_agent(
    const TaxiTheta& theta,
    std::span<const std::shared_ptr<const OptionSpec>> options, double beta,
    std::uint64_t seed, std::size_t n_trajectories, std::size_t max_steps);

// Explicit candidate list with a uniform prior; proposals are fresh draws.
class ThetaSupportSpace : public mcmc::DiscreteSpace {
 public:
  explicit ThetaSupportSpace(std::vector<TaxiTheta> support);
  std::size_t size() const override { return support_.size(); }
  std::string id(std::size_t i) const override { return support_[i].id(); }
  double log_prior(std::size_t i) const override;
  std::size_t propose(std::size_t from, Rng& rng) const override;
  const TaxiTheta& theta(std::size_t i) const { return support_[i]; }

 private:
  std::vector<TaxiTheta> support_;
};

// Every theta, under the hierarchical prior (uniform over the free-cell
// count, then uniform over subsets of that size). Proposals add, remove, or
// move one free cell, each leg drawing cells uniformly so the kernel is
// symmetric; ineligible draws propose the current point again.
class FullThetaSpace : public mcmc::DiscreteSpace {
 public:
  FullThetaSpace();
  std::size_t size() const override { return thetas_.size(); }
  std::string id(std::size_t i) const override { return thetas_[i].id(); }
  double log_prior(std::size_t i) const override;
  std::size_t propose(std::size_t from, Rng& rng) const override;
  const TaxiTheta& theta(std::size_t i) const { return thetas_[i]; }
  std::size_t index_of(const TaxiTheta& theta) const;

 private:
  std::vector<TaxiTheta> thetas_;
  std::unordered_map<std::uint32_t, std::size_t> by_mask_;
};

// Option-set hypotheses: subsets of the destination universe up to max_size,
// uniform prior, symmetric add / remove / retarget proposals.
class OmegaSpace : public mcmc::DiscreteSpace {
 public:
  explicit OmegaSpace(int max_size = 3);
  std::size_t size() const override { return masks_.size(); }
  std::string id(std::size_t i) const override;
  double log_prior(std::size_t i) const override;
  std::size_t propose(std::size_t from, Rng& rng) const override;
  std::vector<Cell> destinations(std::size_t i) const;
  std::uint32_t mask(std::size_t i) const { return masks_[i]; }
  std::size_t index_of_mask(std::uint32_t mask) const;

 private:
  int max_size_;
  std::vector<std::uint32_t> masks_;      // bit i = universe cell i present
  std::vector<std::size_t> mask_index_;   // mask -> position in masks_
};

// Joint likelihood of the trajectory corpus given (theta index, omega index),
// re-solving soft values warm-started from the resident point.
class JointEval : public mcmc::PosteriorEval {
 public:
  JointEval(std::vector<TaxiTheta> thetas, const OmegaSpace& omegas,
            std::vector<ActionTrajectory> trajectories, double beta,
            SoftVIParams vi_params = {});

  double log_likelihood(std::size_t theta, std::size_t omega,
                        std::vector<double>& values) override;
  std::size_t n_states() const override;

 private:
  std::vector<TaxiTheta> thetas_;
  const OmegaSpace* omegas_;
  std::vector<ActionTrajectory> trajs_;
  double beta_;
  SoftVIParams vi_;
  std::vector<std::shared_ptr<const OptionSpec>> atomics_;
  std::vector<std::shared_ptr<const OptionSpec>> gotos_;  // universe order
};

}  // namespace taxi
}  // namespace bihrl
