#include <cmath>
#include <random>

#include <doctest.h>

#include "fpflow/math_util.hpp"
#include "fpflow/tdvp.hpp"
#include "test_util.hpp"

using namespace fpflow;

namespace {

Eigen::MatrixXd random_psd(int k, std::mt19937_64& rng, double well_conditioned_shift) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = normal(rng);
  return a * a.transpose() + well_conditioned_shift * Eigen::MatrixXd::Identity(k, k);
}

}  // namespace

TEST_CASE("constant O columns drop out of the connected correlators") {
  std::mt19937_64 rng = make_rng_stream(3, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 50;
  Eigen::MatrixXd o(n, 3);
  Eigen::VectorXd dt_log(n);
  for (int i = 0; i < n; ++i) {
    o(i, 0) = normal(rng);
    o(i, 1) = 2.5;  // constant column
    o(i, 2) = normal(rng);
    dt_log(i) = normal(rng);
  }
  const TdvpSystem system = assemble(o, dt_log);
  CHECK(system.S.row(1).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(system.S.col(1).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(std::abs(system.F(1)) < 1e-14);
}

TEST_CASE("two-sample hand correlator") {
  Eigen::MatrixXd o(2, 1);
  o << 1.0, -1.0;
  Eigen::VectorXd dt_log(2);
  dt_log << 1.0, -1.0;
  const TdvpSystem system = assemble(o, dt_log);
  CHECK(system.S(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(system.F(0) == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::MatrixXd single(1, 1);
  single << 1.0;
  CHECK_THROWS_AS(assemble(single, Eigen::VectorXd::Ones(1)), std::invalid_argument);
}

TEST_CASE("fisher matrix of a trainable gaussian mean is the identity") {
  DensityModel model = test::random_model(4, 0, {}, false, LatentFamily::Gaussian, 5, 0.0);
  const FokkerPlanckProblem heat = make_heat_problem(4, 1.0);
  std::mt19937_64 rng = make_rng_stream(5, 1);
  const Eigen::Index n = 10000;
  const TdvpBatch batch = evaluate_batch(model, heat, 0.0, n, rng, 0);
  const TdvpSystem system = assemble(batch.O, batch.dt_log);

  const auto mu_range = model.params().layout().range("latent.mu");
  const Eigen::MatrixXd fisher_mu =
      system.S.block(mu_range.offset, mu_range.offset, mu_range.size, mu_range.size);
  const double tol = 5.0 / std::sqrt(double(n));
  CHECK((fisher_mu - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("solve handles the identity, truncation and the zero system") {
  RegularizationPolicy policy;  // cutoff 1e-8

  TdvpSystem system;
  system.S = Eigen::MatrixXd::Identity(3, 3);
  system.F = Eigen::VectorXd(3);
  system.F << 0.5, -1.0, 2.0;
  system.n_samples = 10;
  CHECK((solve(system, policy) - system.F).cwiseAbs().maxCoeff() < 1e-14);

  system.S = Eigen::MatrixXd::Zero(2, 2);
  system.S(0, 0) = 1.0;
  system.S(1, 1) = 1e-20;
  system.F = Eigen::VectorXd::Ones(2);
  SolveInfo info;
  const Eigen::VectorXd truncated = solve(system, policy, &info);
  CHECK(truncated(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(truncated(1) == 0.0);
  CHECK(info.n_truncated == 1);

  system.S.setZero();
  system.F.setZero();
  const Eigen::VectorXd zero = solve(system, policy, &info);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
  CHECK(info.stationary_warning);
}

TEST_CASE("well-conditioned solve matches a dense direct solver") {
  std::mt19937_64 rng = make_rng_stream(7, 0);
  const int k = 12;
  TdvpSystem system;
  system.S = random_psd(k, rng, 1.0);
  system.F = Eigen::VectorXd::NullaryExpr(k, [&](Eigen::Index) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
  });
  system.n_samples = 100;
  const Eigen::VectorXd got = solve(system, RegularizationPolicy{});
  const Eigen::VectorXd direct = system.S.ldlt().solve(system.F);
  CHECK((got - direct).cwiseAbs().maxCoeff() / direct.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("tikhonov shift regularizes the solve") {
  TdvpSystem system;
  system.S = Eigen::MatrixXd::Identity(2, 2);
  system.F = Eigen::VectorXd::Ones(2);
  system.n_samples = 10;
  RegularizationPolicy policy;
  policy.tikhonov_shift = 1.0;
  const Eigen::VectorXd damped = solve(system, policy);
  CHECK(damped(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("assemble is invariant under constant shifts of O columns and dt_log") {
  std::mt19937_64 rng = make_rng_stream(11, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 64, k = 4;
  Eigen::MatrixXd o(n, k);
  Eigen::VectorXd dt_log(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) o(i, j) = normal(rng);
    dt_log(i) = normal(rng);
  }
  const TdvpSystem base = assemble(o, dt_log);

  Eigen::MatrixXd shifted = o;
  shifted.col(2).array() += 13.7;
  const TdvpSystem with_shift = assemble(shifted, (dt_log.array() - 4.2).matrix());
  CHECK((base.S - with_shift.S).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((base.F - with_shift.F).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predicted density change is invariant under parameter rescaling") {
  std::mt19937_64 rng = make_rng_stream(13, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 200, k = 5;
  Eigen::MatrixXd o(n, k);
  Eigen::VectorXd dt_log(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) o(i, j) = normal(rng);
    dt_log(i) = normal(rng);
  }
  const TdvpSystem base = assemble(o, dt_log);
  const Eigen::VectorXd theta_dot = solve(base, RegularizationPolicy{});

  Eigen::MatrixXd rescaled = o;
  rescaled.col(1) *= 3.0;  // reparameterize theta_1 -> theta_1 / 3
  const TdvpSystem scaled = assemble(rescaled, dt_log);
  const Eigen::VectorXd theta_dot_scaled = solve(scaled, RegularizationPolicy{});

  const Eigen::VectorXd change = o * theta_dot;
  const Eigen::VectorXd change_scaled = rescaled * theta_dot_scaled;
  CHECK((change - change_scaled).cwiseAbs().maxCoeff() /
            change.cwiseAbs().maxCoeff() <
        1e-8);
}

TEST_CASE("solution minimizes the quadratic form over the retained subspace") {
  std::mt19937_64 rng = make_rng_stream(17, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int k = 5;
  TdvpSystem system;
  system.S = random_psd(k, rng, 0.5);
  system.F = Eigen::VectorXd::NullaryExpr(k, [&](Eigen::Index) { return normal(rng); });
  system.n_samples = 100;
  const Eigen::VectorXd theta_dot = solve(system, RegularizationPolicy{});

  auto quadratic = [&](const Eigen::VectorXd& v) {
    return v.dot(system.S * v) - 2.0 * system.F.dot(v);
  };
  const double best = quadratic(theta_dot);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd probe =
        theta_dot + 0.3 * Eigen::VectorXd::NullaryExpr(k, [&](Eigen::Index) {
          return normal(rng);
        });
    CHECK(best <= quadratic(probe) + 1e-10);
  }
}

TEST_CASE("residual hand cases") {
  // theta_dot = 0 on nonzero dt_log: fully unexplained, normalized residual 1.
  TdvpSystem system;
  system.O = Eigen::MatrixXd::Ones(3, 1);
  system.dt_log = Eigen::VectorXd(3);
  system.dt_log << 1.0, 2.0, -1.0;
  system.n_samples = 3;
  Eigen::VectorXd p = Eigen::VectorXd::Ones(3);
  const ResidualReport unexplained = residual(system, Eigen::VectorXd::Zero(1), p);
  CHECK(unexplained.r == doctest::Approx(2.0).epsilon(1e-14));  // mean of 1,4,1
  CHECK(unexplained.r_normalized == doctest::Approx(1.0).epsilon(1e-14));

  // Exactly representable single sample: O=2, dt_log=4, theta_dot=2.
  TdvpSystem exact;
  exact.O = Eigen::MatrixXd::Constant(1, 1, 2.0);
  exact.dt_log = Eigen::VectorXd::Constant(1, 4.0);
  exact.n_samples = 1;
  const ResidualReport zero =
      residual(exact, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Ones(1));
  CHECK(zero.r == 0.0);
  CHECK(zero.r_normalized == 0.0);
}

TEST_CASE("batch evaluation is deterministic and thread-count independent") {
  DensityModel model = test::random_model(3, 2, {1}, true, LatentFamily::Gaussian, 19, 0.4);
  const FokkerPlanckProblem heat = make_heat_problem(3, 1.0);

  std::mt19937_64 rng_a = make_rng_stream(19, 7);
  std::mt19937_64 rng_b = make_rng_stream(19, 7);
  const TdvpBatch one_thread = evaluate_batch(model, heat, 0.0, 500, rng_a, 1);
  const TdvpBatch two_threads = evaluate_batch(model, heat, 0.0, 500, rng_b, 2);
  CHECK(one_thread.O == two_threads.O);
  CHECK(one_thread.dt_log == two_threads.dt_log);
  CHECK(one_thread.points == two_threads.points);
}
