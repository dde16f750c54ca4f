#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bihrl {

// Contract violations inside model code (bad arguments, unsolvable systems).
struct model_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumeration blew through its configured live-path budget.
struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data could not be read or parsed into something usable.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (CLI layer).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

// All randomness in the project flows from one root seed through named
// substreams, so independent pieces of work can be reordered or parallelized
// without perturbing each other's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng substream(std::uint64_t root, std::string_view name,
                       std::uint64_t index = 0);

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // Unbiased integer in [0, n) via rejection.
  std::size_t uniform_below(std::size_t n);

  // Index draw from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 gen_;
};

// log(sum(exp(x))) with max subtraction; -inf on an all -inf (or empty) input.
double logsumexp(std::span<const double> xs);

// Round-trip safe decimal rendering used by every CSV/JSON writer so reruns
// are byte identical.
std::string fmt_double(double v);

// Quotes a CSV field only when it carries a comma, quote, or newline.
std::string csv_field(std::string_view text);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to independent slots keyed by i; scheduling order is unspecified.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

unsigned default_workers();

}  // namespace bihrl
