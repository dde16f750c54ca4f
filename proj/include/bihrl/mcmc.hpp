#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bihrl/inference.hpp"

namespace bihrl {
namespace mcmc {

// Finite latent space with a symmetric proposal kernel: for any x != y,
// P(propose y | at x) == P(propose x | at y). Self-proposals are allowed.
class DiscreteSpace {
 public:
  virtual ~DiscreteSpace() = default;
  virtual std::size_t size() const = 0;
  virtual std::string id(std::size_t i) const = 0;
  virtual double log_prior(std::size_t i) const = 0;
  virtual std::size_t propose(std::size_t from, Rng& rng) const = 0;
};

// Uniform prior, proposal = fresh uniform draw over the whole space.
class UniformSpace : public DiscreteSpace {
 public:
  UniformSpace(std::vector<std::string> ids) : ids_(std::move(ids)) {}
  std::size_t size() const override { return ids_.size(); }
  std::string id(std::size_t i) const override { return ids_[i]; }
  double log_prior(std::size_t) const override {
    return -std::log(static_cast<double>(ids_.size()));
  }
  std::size_t propose(std::size_t, Rng& rng) const override {
    return rng.uniform_below(ids_.size());
  }

 private:
  std::vector<std::string> ids_;
};

// Model evaluation callback. `values` is the running warm start: the sampler
// passes the values of the last accepted point and the callback leaves
// behind the values it converged to, which the sampler keeps on acceptance.
class PosteriorEval {
 public:
  virtual ~PosteriorEval() = default;
  virtual double log_likelihood(std::size_t theta, std::size_t omega,
                                std::vector<double>& values) = 0;
  virtual std::size_t n_states() const = 0;
};

struct ChainSample {
  std::size_t step;  // absolute step index, burn-in included
  std::size_t theta;
  std::size_t omega;
  double log_p;      // log likelihood + log priors of the resident point
  bool accepted;     // whether this step's proposal was accepted
};

struct Chain {
  std::vector<ChainSample> samples;  // post-burn-in states, one per step
  std::size_t burn_in = 0;
  double acceptance_rate = 0;        // over all steps including burn-in
  std::uint64_t seed = 0;
};

struct PolicyWalkParams {
  std::size_t n_samples = 10000;
  // Extra steps discarded before recording; < 0 means 20% of n_samples.
  long long burn_in = -1;
  std::size_t start_retry_cap = 32;
};

// Metropolis-Hastings over the joint latent (theta, omega). Each step
// proposes neighbors of both coordinates, re-solves values warm-started from
// the resident point, and accepts on the likelihood-times-prior ratio. The
// resident density is initialized to the start point's own posterior, so the
// very first step already runs a genuine Metropolis test.
Chain policy_walk_sample(PosteriorEval& eval, const DiscreteSpace& theta_space,
                         const DiscreteSpace& omega_space,
                         const PolicyWalkParams& params, std::uint64_t seed);

// Posterior over theta ids estimated by visit frequency.
PosteriorTable marginal_theta_estimate(const Chain& chain,
                                       const DiscreteSpace& theta_space);

// Joint visit frequencies indexed [theta][omega].
std::vector<std::vector<double>> joint_frequencies(
    const Chain& chain, const DiscreteSpace& theta_space,
    const DiscreteSpace& omega_space);

std::string chain_to_csv(const Chain& chain, const DiscreteSpace& theta_space,
                         const DiscreteSpace& omega_space);

}  // namespace mcmc
}  // namespace bihrl
