#include "fpflow/math_util.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fpflow {

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::invalid_argument("digamma: argument must be positive");
  }
  // Recurrence psi(x) = psi(x+1) - 1/x until the asymptotic series is accurate.
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv;
  // Bernoulli-number series through x^{-12}.
  result -= inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 -
                                            inv2 * (1.0 / 132.0 -
                                                    inv2 * (691.0 / 32760.0))))));
  return result;
}

namespace {

double gamma_series(double a, double x) {
  // Series representation, converges fast for x < a + 1.
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_continued_fraction(double a, double x) {
  // Modified Lentz continued fraction for Q(a, x), stable for x >= a + 1.
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double reg_lower_incomplete_gamma(double a, double x) {
  if (!(a > 0.0) || x < 0.0) {
    throw std::invalid_argument("reg_lower_incomplete_gamma: require a > 0, x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double ball_volume(int dim, double radius) {
  const double half_d = 0.5 * dim;
  return std::exp(half_d * std::log(std::numbers::pi) + dim * std::log(radius) -
                  std::lgamma(half_d + 1.0));
}

double unit_sphere_area(int dim) {
  const double half_d = 0.5 * dim;
  return 2.0 * std::exp(half_d * std::log(std::numbers::pi) - std::lgamma(half_d));
}

std::mt19937_64 make_rng_stream(std::uint64_t master_seed, std::uint64_t stream_tag) {
  // SplitMix64 over (seed, tag) gives well-separated initial states.
  std::uint64_t state = master_seed ^ (0x9e3779b97f4a7c15ULL * (stream_tag + 1));
  auto next = [&state]() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::seed_seq seq{static_cast<std::uint32_t>(next() >> 32), static_cast<std::uint32_t>(next()),
                    static_cast<std::uint32_t>(next() >> 32), static_cast<std::uint32_t>(next()),
                    static_cast<std::uint32_t>(next() >> 32), static_cast<std::uint32_t>(next())};
  return std::mt19937_64(seq);
}

}  // namespace fpflow
