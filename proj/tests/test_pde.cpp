#include <cmath>
#include <random>

#include <doctest.h>

#include <Eigen/QR>

#include "fpflow/derivatives.hpp"
#include "fpflow/math_util.hpp"
#include "fpflow/pde.hpp"
#include "test_util.hpp"

using namespace fpflow;

TEST_CASE("heat dt log p on the identity gaussian model") {
  DensityModel model = test::random_model(8, 0, {}, false, LatentFamily::Gaussian, 3, 0.0);
  const FokkerPlanckProblem heat = make_heat_problem(8, 1.0);

  // D (laplace log p + |grad log p|^2) = -d at the origin.
  CHECK(dt_log_prob(heat, model, Eigen::VectorXd::Zero(8), 0.0) ==
        doctest::Approx(-8.0).epsilon(1e-13));
  // |x|^2 = 8 cancels it exactly.
  CHECK(dt_log_prob(heat, model, Eigen::VectorXd::Ones(8), 0.0) ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("undamped phase flow reduces to the pure transport term") {
  PhaseSpaceParams params;
  params.n_oscillators = 2;
  params.coupling = 0.7;
  params.damping = 0.0;
  params.k_b_temps = Eigen::VectorXd::Constant(2, 3.0);
  const FokkerPlanckProblem problem = make_phase_space_problem(params);
  CHECK(problem.diffusion().cwiseAbs().maxCoeff() == 0.0);

  DensityModel model = test::random_model(4, 2, {2}, true, LatentFamily::Gaussian, 5, 0.4);
  std::mt19937_64 rng = make_rng_stream(5, 1);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd x = test::random_point(4, rng);
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    spatial_derivatives(model, x, grad, hess);
    Eigen::VectorXd drift(4);
    problem.drift(x, 0.0, drift);
    CHECK(dt_log_prob(problem, model, x, 0.0) ==
          doctest::Approx(-drift.dot(grad)).epsilon(1e-12));
  }
}

TEST_CASE("hamiltonian hand values") {
  PhaseSpaceParams params;
  params.n_oscillators = 3;
  params.k_b_temps = Eigen::VectorXd::Constant(3, 1.0);

  Eigen::VectorXd x(3), p(3);
  x << 1.0, 0.0, 0.0;
  p << 0.0, 1.0, 0.0;
  params.coupling = 0.0;
  CHECK(hamiltonian(params, x, p) == doctest::Approx(1.0).epsilon(1e-14));

  params.coupling = 1.0;
  p.setZero();
  CHECK(hamiltonian(params, x, p) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("hamiltonian gradient matches finite differences and dH/dp = p/m") {
  PhaseSpaceParams params;
  params.n_oscillators = 3;
  params.mass = 1.3;
  params.omega = 0.8;
  params.coupling = 0.9;
  params.k_b_temps = Eigen::VectorXd::Constant(3, 1.0);

  std::mt19937_64 rng = make_rng_stream(7, 0);
  const Eigen::VectorXd x = test::random_point(3, rng);
  const Eigen::VectorXd p = test::random_point(3, rng);
  Eigen::VectorXd dh_dx, dh_dp;
  hamiltonian_grad(params, x, p, dh_dx, dh_dp);
  CHECK((dh_dp - p / params.mass).cwiseAbs().maxCoeff() < 1e-14);

  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (hamiltonian(params, xp, p) - hamiltonian(params, xm, p)) / (2.0 * h);
    CHECK(std::abs(dh_dx(i) - fd) < 1e-8);
  }
}

TEST_CASE("phase-space drift divergence equals -gamma N") {
  PhaseSpaceParams params;
  params.n_oscillators = 3;
  params.coupling = 1.0;
  params.damping = 0.6;
  params.k_b_temps = Eigen::VectorXd::Constant(3, 2.0);
  const FokkerPlanckProblem problem = make_phase_space_problem(params);

  std::mt19937_64 rng = make_rng_stream(11, 0);
  const double h = 1e-5;
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd x = test::random_point(6, rng);
    double fd_div = 0.0;
    Eigen::VectorXd mu_p(6), mu_m(6);
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      problem.drift(xp, 0.0, mu_p);
      problem.drift(xm, 0.0, mu_m);
      fd_div += (mu_p(i) - mu_m(i)) / (2.0 * h);
    }
    CHECK(std::abs(problem.drift_divergence(x, 0.0) - fd_div) < 1e-6);
    CHECK(problem.drift_divergence(x, 0.0) == doctest::Approx(-0.6 * 3.0).epsilon(1e-14));
  }
}

TEST_CASE("phase-space diffusion matrix fills the momentum block only") {
  PhaseSpaceParams params;
  params.n_oscillators = 2;
  params.damping = 0.5;
  params.mass = 2.0;
  params.k_b_temps = Eigen::VectorXd(2);
  params.k_b_temps << 3.0, 7.0;
  const FokkerPlanckProblem problem = make_phase_space_problem(params);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, 4);
  want(2, 2) = 0.5 * 2.0 * 3.0;
  want(3, 3) = 0.5 * 2.0 * 7.0;
  CHECK(problem.diffusion().isApprox(want, 1e-14));
}

TEST_CASE("dt log p averages to zero over model samples") {
  // Probability conservation: integral of dt p vanishes.
  for (bool phase : {false, true}) {
    DensityModel model = test::random_model(4, 2, {2}, phase, LatentFamily::Gaussian, 13, 0.4);
    FokkerPlanckProblem problem = make_heat_problem(4, 1.0);
    if (phase) {
      PhaseSpaceParams params;
      params.n_oscillators = 2;
      params.k_b_temps = Eigen::VectorXd::Constant(2, 2.0);
      problem = make_phase_space_problem(params);
    }
    std::mt19937_64 rng = make_rng_stream(13, phase ? 1 : 2);
    const Eigen::Index n = 10000;
    Eigen::VectorXd values(n);
    DerivativeEngine engine(model);
    LogDerivatives derivs;
    Eigen::VectorXd x;
    const Latent latent = model.latent();
    for (Eigen::Index i = 0; i < n; ++i) {
      engine.at_latent_point(latent.sample(rng), x, derivs);
      values(i) = dt_log_prob_given(problem, x, 0.0, derivs.grad_x, derivs.hess_x);
    }
    const double mean = values.mean();
    const double se = std::sqrt((values.array() - mean).square().sum() / (n - 1.0) / n);
    CHECK(std::abs(mean) < 4.0 * se);
  }
}

TEST_CASE("heat dt log p is rotation invariant for an isotropic model") {
  DensityModel model = test::random_model(4, 0, {}, false, LatentFamily::Gaussian, 17, 0.0);
  const FokkerPlanckProblem heat = make_heat_problem(4, 1.0);
  std::mt19937_64 rng = make_rng_stream(17, 0);

  Eigen::MatrixXd noise(4, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) noise(i, j) = normal(rng);
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(noise).householderQ();

  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd x = test::random_point(4, rng);
    CHECK(dt_log_prob(heat, model, x, 0.0) ==
          doctest::Approx(dt_log_prob(heat, model, (rotation * x).eval(), 0.0))
              .epsilon(1e-10));
  }
}

TEST_CASE("problem construction validates the diffusion matrix") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS(FokkerPlanckProblem(
      2, [](const Eigen::VectorXd&, double, Eigen::VectorXd& mu) { mu.setZero(); },
      [](const Eigen::VectorXd&, double) { return 0.0; }, asym));

  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS(FokkerPlanckProblem(
      2, [](const Eigen::VectorXd&, double, Eigen::VectorXd& mu) { mu.setZero(); },
      [](const Eigen::VectorXd&, double) { return 0.0; }, indefinite));
}
