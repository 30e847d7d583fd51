#include <cmath>
#include <random>

#include <doctest.h>

#include "fpflow/integrator.hpp"
#include "fpflow/math_util.hpp"
#include "fpflow/reference.hpp"
#include "test_util.hpp"

using namespace fpflow;

TEST_CASE("explicit updates on a linear velocity field") {
  Eigen::VectorXd theta(1);
  theta << 1.0;
  const auto identity_field = [](const Eigen::VectorXd& th) { return th; };
  CHECK(midpoint_update(theta, 0.1, identity_field)(0) ==
        doctest::Approx(1.105).epsilon(1e-14));
  CHECK(euler_update(theta, 0.1, identity_field)(0) == doctest::Approx(1.1).epsilon(1e-14));
}

TEST_CASE("a zero step leaves the model unchanged") {
  DensityModel model = test::random_model(2, 1, {1}, false, LatentFamily::Gaussian, 3, 0.3);
  const Eigen::VectorXd before = model.params().values();
  const FokkerPlanckProblem heat = make_heat_problem(2, 1.0);
  IntegratorConfig config;
  config.dt = 0.0;
  config.n_samples = 200;
  std::mt19937_64 rng = make_rng_stream(3, 0);
  tdvp_step(model, heat, config, RegularizationPolicy{}, 0.0, rng);
  CHECK(model.params().values() == before);
}

TEST_CASE("evolution with t_end zero emits exactly one observation") {
  DensityModel model = test::random_model(2, 1, {1}, false, LatentFamily::Gaussian, 5, 0.3);
  const FokkerPlanckProblem heat = make_heat_problem(2, 1.0);
  IntegratorConfig config;
  config.t_end = 0.0;
  config.n_samples = 100;
  int observations = 0;
  EvolveOptions options;
  options.observer = [&](double, const DensityModel&, const StepDiagnostics*) {
    ++observations;
  };
  const EvolveStatus status = evolve(model, heat, config, RegularizationPolicy{}, options);
  CHECK(status.completed);
  CHECK(status.steps_taken == 0);
  CHECK(observations == 1);
}

TEST_CASE("seeded evolutions are bit-identical") {
  const FokkerPlanckProblem heat = make_heat_problem(2, 1.0);
  IntegratorConfig config;
  config.dt = 5e-3;
  config.t_end = 0.02;
  config.n_samples = 300;
  config.rng_seed = 77;

  Eigen::VectorXd results[2];
  for (int run = 0; run < 2; ++run) {
    DensityModel model = test::random_model(2, 1, {1}, false, LatentFamily::Gaussian, 7, 0.2);
    const EvolveStatus status =
        evolve(model, heat, config, RegularizationPolicy{}, EvolveOptions{});
    CHECK(status.completed);
    results[run] = model.params().values();
  }
  CHECK(results[0] == results[1]);
}

TEST_CASE("gaussian family tracks the heat flow on the exact manifold") {
  // Trainable (mu, L) only; the family contains the solution, so the sampled
  // system is solved exactly and only the time discretization remains. The
  // Cholesky parameterization is the non-degenerate one at Sigma = I.
  DensityModel model = test::random_model(2, 0, {}, false, LatentFamily::Gaussian, 9, 0.0,
                                          CovarianceParam::CholeskyLower);
  const FokkerPlanckProblem heat = make_heat_problem(2, 1.0);
  IntegratorConfig config;
  config.dt = 2e-3;
  config.t_end = 0.1;
  config.n_samples = 2000;
  config.rng_seed = 9;
  double max_residual = 0.0;
  EvolveOptions options;
  options.observe_interval = config.dt;
  options.observer = [&](double, const DensityModel&, const StepDiagnostics* diag) {
    if (diag != nullptr) max_residual = std::max(max_residual, diag->residual.r_normalized);
  };
  const EvolveStatus status = evolve(model, heat, config, RegularizationPolicy{}, options);
  CHECK(status.completed);

  const GaussianHeatState exact = gaussian_heat_oracle(Eigen::MatrixXd::Identity(2, 2),
                                                       Eigen::VectorXd::Zero(2), 1.0, 0.1);
  const Eigen::MatrixXd sigma = model.latent().covariance();
  CHECK((sigma - exact.covariance).norm() / exact.covariance.norm() < 1e-3);
  CHECK(max_residual < 1e-6);
}

TEST_CASE("normalization is preserved along a short trajectory") {
  DensityModel model = test::random_model(3, 2, {1}, false, LatentFamily::Gaussian, 11, 0.3);
  const FokkerPlanckProblem heat = make_heat_problem(3, 0.5);
  IntegratorConfig config;
  config.dt = 5e-3;
  config.t_end = 0.05;
  config.n_samples = 500;
  config.rng_seed = 11;
  const EvolveStatus status =
      evolve(model, heat, config, RegularizationPolicy{}, EvolveOptions{});
  CHECK(status.completed);

  const Latent latent = model.latent();
  std::mt19937_64 rng = make_rng_stream(11, 9);
  const int n = 8000;
  Eigen::VectorXd weights(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = latent.sample(rng);
    weights(i) = std::exp(model.log_prob(z) - latent.log_prob(z));
  }
  const double mean = weights.mean();
  const double se = std::sqrt((weights.array() - mean).square().sum() / (n - 1.0) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("a numerical abort preserves the last checkpoint and reports failure") {
  DensityModel model = test::random_model(2, 1, {1}, false, LatentFamily::Gaussian, 13, 0.2);
  // Drift turns non-finite after t = 0.01.
  const FokkerPlanckProblem poisoned(
      2,
      [](const Eigen::VectorXd&, double t, Eigen::VectorXd& mu) {
        mu.setConstant(t > 0.01 ? std::numeric_limits<double>::quiet_NaN() : 0.0);
      },
      [](const Eigen::VectorXd&, double) { return 0.0; },
      Eigen::MatrixXd::Identity(2, 2));

  IntegratorConfig config;
  config.dt = 5e-3;
  config.t_end = 1.0;
  config.n_samples = 200;
  config.rng_seed = 13;
  int checkpoints = 0;
  double checkpoint_t = -1.0;
  EvolveOptions options;
  options.checkpoint_writer = [&](double t, const DensityModel&) {
    ++checkpoints;
    checkpoint_t = t;
  };
  const EvolveStatus status = evolve(model, poisoned, config, RegularizationPolicy{}, options);
  CHECK_FALSE(status.completed);
  CHECK(status.t_reached < 1.0);
  CHECK(checkpoints >= 1);
  CHECK(checkpoint_t == doctest::Approx(status.t_reached));
  CHECK(model.params().all_finite());
}

TEST_CASE("adaptive stepping still reaches the target time") {
  DensityModel model = test::random_model(2, 0, {}, false, LatentFamily::Gaussian, 15, 0.0);
  const FokkerPlanckProblem heat = make_heat_problem(2, 1.0);
  IntegratorConfig config;
  config.dt = 1e-2;
  config.t_end = 0.05;
  config.n_samples = 400;
  config.rng_seed = 15;
  config.adaptive = true;
  config.adaptive_tol = 1e-5;
  const EvolveStatus status =
      evolve(model, heat, config, RegularizationPolicy{}, EvolveOptions{});
  CHECK(status.completed);
  CHECK(status.t_reached == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("integrator configuration is validated") {
  IntegratorConfig config;
  config.dt = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config.dt = 1e-3;
  config.t_end = -1.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config.t_end = 1.0;
  config.n_samples = 1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
