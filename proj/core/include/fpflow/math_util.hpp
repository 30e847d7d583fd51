#pragma once

#include <cstdint>
#include <random>

namespace fpflow {

/// Digamma function psi(x) for x > 0.
double digamma(double x);

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a), a > 0, x >= 0.
double reg_lower_incomplete_gamma(double a, double x);

/// Volume of the d-dimensional ball of radius r.
double ball_volume(int dim, double radius);

/// Surface area of the unit (d-1)-sphere, 2 pi^{d/2} / Gamma(d/2).
double unit_sphere_area(int dim);

/// Deterministic RNG stream derived from a master seed and a stream tag.
/// Streams with distinct tags are decorrelated; the same (seed, tag) pair
/// always yields the same sequence.
std::mt19937_64 make_rng_stream(std::uint64_t master_seed, std::uint64_t stream_tag);

}  // namespace fpflow
