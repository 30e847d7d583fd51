#pragma once

#include <Eigen/Core>
#include <random>

#include "fpflow/density_model.hpp"
#include "fpflow/ensemble.hpp"

namespace fpflow {

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Differential entropy -<log p> over n fresh model samples.
McEstimate mc_entropy(const DensityModel& model, Eigen::Index n, std::mt19937_64& rng,
                      int n_threads = 1);

struct MomentEstimates {
  Eigen::VectorXd mean, mean_std_error;
  Eigen::VectorXd variance, variance_std_error;  // unbiased variance
};

MomentEstimates mc_moments(const ParticleEnsemble& ensemble);
MomentEstimates mc_moments(const DensityModel& model, Eigen::Index n, std::mt19937_64& rng);

/// Probability mass inside the ball |x - center| <= r, estimated by uniform
/// sampling in the ball: V_d(r) * mean p(x_i). `stratified` spreads the
/// radial quantile over equal strata to cut the estimator variance.
McEstimate ball_probability(const DensityModel& model, double radius,
                            const Eigen::VectorXd& center, Eigen::Index n,
                            std::mt19937_64& rng, bool stratified = false,
                            int n_threads = 1);

/// Current tail parameter nu of a StudentT latent.
double nu_observer(const DensityModel& model);

}  // namespace fpflow
