#include "toxsurf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "toxsurf/special.hpp"

namespace toxsurf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t Rng::split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  splitmix64(state);
  return splitmix64(state);
}

double Rng::uniform01() {
  // 53-bit mantissa, shifted half a ulp away from both endpoints.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

double Rng::normal() { return special::inv_norm_cdf(uniform01()); }

double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("gamma: bad parameters");
  // Marsaglia-Tsang; shapes below one use the boost Gamma(a) = Gamma(a+1) U^{1/a}.
  double boost = 1.0;
  double a = shape;
  if (a < 1.0) {
    boost = std::pow(uniform01(), 1.0 / a);
    a += 1.0;
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return boost * d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return boost * d * v / rate;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

double Rng::trunc_normal(double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0)) throw std::invalid_argument("trunc_normal: sd must be positive");
  if (!(lo < hi)) throw std::invalid_argument("trunc_normal: empty interval");
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;

  // One-sided far tail: Robert's exponential-envelope rejection in the
  // standardized left-truncated form.
  auto robert_tail = [this](double bound) {
    const double alpha = 0.5 * (bound + std::sqrt(bound * bound + 4.0));
    for (int it = 0; it < 100000; ++it) {
      const double z = bound - std::log(uniform01()) / alpha;
      const double rho = std::exp(-0.5 * (z - alpha) * (z - alpha));
      if (uniform01() <= rho) return z;
    }
    throw std::runtime_error("trunc_normal: tail rejection budget exhausted");
  };

  double z;
  if (b == kInf && a > 6.0) {
    z = robert_tail(a);
  } else if (a == -kInf && b < -6.0) {
    z = -robert_tail(-b);
  } else {
    // Work on the upper-tail scale: ccdf values stay well conditioned and
    // the inverse CDF is evaluated at small arguments only.
    const double ca = special::norm_ccdf(a);  // larger
    const double cb = special::norm_ccdf(b);  // smaller
    const double width = ca - cb;
    if (width <= 1e-280 || !(width > 0.0)) {
      // Probability mass underflowed: the admissible x-interval is tiny in
      // practice, a uniform point inside is the best available answer.
      const double flo = std::max(a, -40.0);
      const double fhi = std::min(b, 40.0);
      z = flo + (fhi - flo) * uniform01();
    } else {
      const double u = cb + width * uniform01();
      z = -special::inv_norm_cdf(u);
    }
  }
  z = std::min(std::max(z, a), b);
  return mean + sd * z;
}

double Rng::trunc_gamma(double shape, double rate, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("trunc_gamma: empty interval");
  const double plo = lo <= 0.0 ? 0.0 : special::reg_lower_gamma(shape, lo * rate);
  const double phi = std::isinf(hi) ? 1.0 : special::reg_lower_gamma(shape, hi * rate);
  const double width = phi - plo;
  if (width <= 1e-280 || !(width > 0.0)) {
    // Mass underflow; sample uniformly on a finite sliver of the interval.
    const double fhi = std::isinf(hi) ? lo + 1.0 / rate : hi;
    return lo + (fhi - lo) * uniform01();
  }
  const double u = plo + width * uniform01();
  const double x = special::inv_reg_lower_gamma(shape, u) / rate;
  return std::min(std::max(x, lo), std::isinf(hi) ? x : hi);
}

std::size_t Rng::categorical_from_log_weights(std::span<const double> log_w) {
  if (log_w.empty()) throw std::invalid_argument("categorical: empty weights");
  const double m = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  std::vector<double> w(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    w[i] = std::exp(log_w[i] - m);
    total += w[i];
  }
  const double u = uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u <= acc) return i;
  }
  return w.size() - 1;
}

}  // namespace toxsurf
