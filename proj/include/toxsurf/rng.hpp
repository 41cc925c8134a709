#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace toxsurf {

// Deterministic random source. All variate transforms are implemented here
// (rather than through std:: distributions, whose output is implementation
// defined) so that a chain replays bit-for-bit from its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives an independent stream, e.g. one per chain.
  static std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

  // Uniform on the open interval (0, 1).
  double uniform01();
  // Uniform on (lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via the inverse CDF.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Gamma with shape/rate parameterization, E[x] = shape/rate.
  double gamma(double shape, double rate);
  double beta(double a, double b);

  // Normal(mean, sd^2) truncated to [lo, hi]; either bound may be infinite.
  // Uses the inverse-CDF method on the complementary scale; far one-sided
  // tails fall back to an exponential-envelope rejection step.
  double trunc_normal(double mean, double sd, double lo, double hi);

  // Gamma(shape, rate) truncated to (lo, hi), via inverse CDF.
  double trunc_gamma(double shape, double rate, double lo, double hi);

  // Index draw from unnormalized log-weights.
  std::size_t categorical_from_log_weights(std::span<const double> log_w);

 private:
  std::mt19937_64 engine_;
};

}  // namespace toxsurf
