#include "bihrl/mcmc.hpp"

#include <cmath>
#include <sstream>

namespace bihrl {
namespace mcmc {

Chain policy_walk_sample(PosteriorEval& eval, const DiscreteSpace& theta_space,
                         const DiscreteSpace& omega_space,
                         const PolicyWalkParams& params, std::uint64_t seed) {
  if (theta_space.size() == 0 || omega_space.size() == 0)
    throw model_error("policy walk needs non-empty latent spaces");
  if (params.n_samples == 0)
    throw model_error("policy walk needs n_samples >= 1");

  Rng rng = Rng::substream(seed, "policy-walk");
  const std::size_t burn =
      params.burn_in >= 0 ? static_cast<std::size_t>(params.burn_in)
                          : params.n_samples / 5;

  // Uniform random start, re-drawn while the data is inexplicable there.
  std::size_t theta = 0, omega = 0;
  std::vector<double> values(eval.n_states(), 0.0);
  double start_ll = kNegInf;
  bool ok = false;
  for (std::size_t attempt = 0; attempt < params.start_retry_cap; ++attempt) {
    theta = rng.uniform_below(theta_space.size());
    omega = rng.uniform_below(omega_space.size());
    std::vector<double> probe(eval.n_states(), 0.0);
    start_ll = eval.log_likelihood(theta, omega, probe);
    if (start_ll != kNegInf) {
      values = std::move(probe);
      ok = true;
      break;
    }
  }
  if (!ok)
    throw model_error("policy walk found no start with positive probability");

  // The resident density is the start's own posterior. Seeding it with any
  // fixed constant instead would freeze the chain whenever the data's
  // likelihood scale sits far below that constant, because no proposal
  // could ever clear the first acceptance test.
  double log_p =
      start_ll + theta_space.log_prior(theta) + omega_space.log_prior(omega);
  Chain chain;
  chain.seed = seed;
  chain.burn_in = burn;
  chain.samples.reserve(params.n_samples);
  std::size_t accepted_steps = 0;
  const std::size_t total = burn + params.n_samples;

  for (std::size_t step = 0; step < total; ++step) {
    std::size_t theta1 = theta_space.propose(theta, rng);
    std::size_t omega1 = omega_space.propose(omega, rng);
    std::vector<double> values1 = values;
    double ll1 = eval.log_likelihood(theta1, omega1, values1);
    double log_p1 =
        ll1 + theta_space.log_prior(theta1) + omega_space.log_prior(omega1);

    bool accept;
    if (log_p1 >= log_p) {
      accept = true;
    } else if (log_p1 == kNegInf) {
      accept = false;
    } else {
      double u = rng.uniform();
      accept = u == 0 || std::log(u) < log_p1 - log_p;
    }
    if (accept) {
      theta = theta1;
      omega = omega1;
      values = std::move(values1);
      log_p = log_p1;
      ++accepted_steps;
    }
    if (step >= burn)
      chain.samples.push_back({step, theta, omega, log_p, accept});
  }
  chain.acceptance_rate =
      static_cast<double>(accepted_steps) / static_cast<double>(total);
  return chain;
}

PosteriorTable marginal_theta_estimate(const Chain& chain,
                                       const DiscreteSpace& theta_space) {
  if (chain.samples.empty())
    throw model_error("cannot estimate a posterior from an empty chain");
  PosteriorTable table;
  table.mass.assign(theta_space.size(), 0.0);
  for (const auto& s : chain.samples) table.mass[s.theta] += 1.0;
  for (double& m : table.mass)
    m /= static_cast<double>(chain.samples.size());
  table.support.reserve(theta_space.size());
  for (std::size_t i = 0; i < theta_space.size(); ++i)
    table.support.push_back(theta_space.id(i));
  return table;
}

std::vector<std::vector<double>> joint_frequencies(
    const Chain& chain, const DiscreteSpace& theta_space,
    const DiscreteSpace& omega_space) {
  if (chain.samples.empty())
    throw model_error("cannot estimate frequencies from an empty chain");
  std::vector<std::vector<double>> freq(
      theta_space.size(), std::vector<double>(omega_space.size(), 0.0));
  for (const auto& s : chain.samples) freq[s.theta][s.omega] += 1.0;
  for (auto& row : freq)
    for (double& f : row) f /= static_cast<double>(chain.samples.size());
  return freq;
}

std::string chain_to_csv(const Chain& chain, const DiscreteSpace& theta_space,
                         const DiscreteSpace& omega_space) {
  std::ostringstream out;
  out << "step,theta_id,omega_id,log_p,accepted\n";
  for (const auto& s : chain.samples)
    out << s.step << ',' << csv_field(theta_space.id(s.theta)) << ','
        << csv_field(omega_space.id(s.omega)) << ',' << fmt_double(s.log_p)
        << ',' << (s.accepted ? 1 : 0) << "\n";
  return out.str();
}

}  // namespace mcmc
}  // namespace bihrl
