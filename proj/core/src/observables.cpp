#include "fpflow/observables.hpp"

#include <cmath>
#include <stdexcept>

#include "fpflow/math_util.hpp"
#include "fpflow/parallel.hpp"

namespace fpflow {

namespace {

McEstimate summarize(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / static_cast<double>(n - 1);
  McEstimate est;
  est.value = mean;
  est.std_error = std::sqrt(var / static_cast<double>(n));
  return est;
}

}  // namespace

McEstimate mc_entropy(const DensityModel& model, Eigen::Index n, std::mt19937_64& rng,
                      int n_threads) {
  if (n < 2) throw std::invalid_argument("mc_entropy requires n >= 2");
  const Latent lat = model.latent();
  Eigen::MatrixXd latent_points(n, model.dim());
  for (Eigen::Index i = 0; i < n; ++i) latent_points.row(i) = lat.sample(rng).transpose();

  // log p(f(z)) = log pi(z) - logdet_forward(z); evaluated along the forward
  // pass so no numerical inversion is involved.
  Eigen::VectorXd neg_log_p(n);
  parallel_for(n, n_threads, [&](int, Eigen::Index begin, Eigen::Index end) {
    flow_detail::FlowTrace trace;
    Eigen::VectorXd z;
    for (Eigen::Index i = begin; i < end; ++i) {
      z = latent_points.row(i).transpose();
      model.forward_trace(z, trace);
      neg_log_p(i) = -(lat.log_prob(z) - trace.forward_logdet);
    }
  });
  return summarize(neg_log_p);
}

MomentEstimates mc_moments(const ParticleEnsemble& ensemble) {
  const Eigen::Index n = ensemble.size();
  if (n < 2) throw std::invalid_argument("mc_moments requires n >= 2");
  const Eigen::Index d = ensemble.dim();
  MomentEstimates est;
  est.mean = ensemble.points.colwise().mean();
  const Eigen::MatrixXd centered = ensemble.points.rowwise() - est.mean.transpose();
  est.variance = centered.array().square().colwise().sum() / static_cast<double>(n - 1);
  est.mean_std_error = (est.variance / static_cast<double>(n)).cwiseSqrt();
  // Gaussian-approximation error of the unbiased variance.
  est.variance_std_error = est.variance * std::sqrt(2.0 / static_cast<double>(n - 1));
  return est;
}

MomentEstimates mc_moments(const DensityModel& model, Eigen::Index n, std::mt19937_64& rng) {
  return mc_moments(model.sample(n, rng));
}

McEstimate ball_probability(const DensityModel& model, double radius,
                            const Eigen::VectorXd& center, Eigen::Index n,
                            std::mt19937_64& rng, bool stratified, int n_threads) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
  if (n < 2) throw std::invalid_argument("ball_probability requires n >= 2");
  const int d = model.dim();
  if (center.size() != d) throw std::invalid_argument("ball center dimension mismatch");

  // Uniform draws in the ball: direction from a normalized Gaussian, radial
  // quantile u with radius r * u^{1/d}.
  Eigen::MatrixXd points(n, d);
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Eigen::VectorXd dir(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      double norm = 0.0;
      do {
        for (int j = 0; j < d; ++j) dir(j) = normal(rng);
        norm = dir.norm();
      } while (norm == 0.0);
      double u = uniform(rng);
      if (stratified) {
        u = (static_cast<double>(i) + u) / static_cast<double>(n);
      }
      const double r = radius * std::pow(u, 1.0 / static_cast<double>(d));
      points.row(i) = (center + (r / norm) * dir).transpose();
    }
  }

  Eigen::VectorXd densities(n);
  parallel_for(n, n_threads, [&](int, Eigen::Index begin, Eigen::Index end) {
    Eigen::VectorXd x;
    for (Eigen::Index i = begin; i < end; ++i) {
      x = points.row(i).transpose();
      densities(i) = std::exp(model.log_prob(x));
    }
  });

  const double volume = ball_volume(d, radius);
  McEstimate est = summarize(densities);
  est.value *= volume;
  est.std_error *= volume;
  return est;
}

double nu_observer(const DensityModel& model) {
  return model.latent().nu();
}

}  // namespace fpflow
