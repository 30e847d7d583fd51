#include <cmath>
#include <random>

#include <doctest.h>

#include "fpflow/derivatives.hpp"
#include "fpflow/math_util.hpp"
#include "test_util.hpp"

using namespace fpflow;

namespace {

// Central finite differences of log p over every parameter.
Eigen::VectorXd fd_param_grad(const DensityModel& model, const Eigen::VectorXd& x,
                              double h = 1e-6) {
  DensityModel probe = model;
  Eigen::VectorXd fd(probe.params().size());
  for (Eigen::Index k = 0; k < probe.params().size(); ++k) {
    const double saved = probe.params().values()(k);
    probe.params().values()(k) = saved + h;
    const double up = probe.log_prob(x);
    probe.params().values()(k) = saved - h;
    const double down = probe.log_prob(x);
    probe.params().values()(k) = saved;
    fd(k) = (up - down) / (2.0 * h);
  }
  return fd;
}

// Worst violation of |got - want| <= max(abs_floor, rel_tol |want|); values
// above 1 fail.
double worst_tolerance_ratio(const Eigen::VectorXd& got, const Eigen::VectorXd& want,
                             double rel_tol, double abs_floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    const double allowed = std::max(abs_floor, rel_tol * std::abs(want(i)));
    worst = std::max(worst, std::abs(got(i) - want(i)) / allowed);
  }
  return worst;
}

}  // namespace

TEST_CASE("gaussian score with trainable mean") {
  // Identity model, Sigma = I: O_mu(x) = x - mu.
  DensityModel model = test::random_model(2, 0, {}, false, LatentFamily::Gaussian, 3, 0.0);
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  const Eigen::VectorXd o = param_grad_log_prob(model, x);
  const auto mu_range = model.params().layout().range("latent.mu");
  CHECK(o(mu_range.offset) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(o(mu_range.offset + 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("parameter gradients match finite differences across shapes") {
  struct Shape {
    int d;
    int blocks;
    std::vector<int> hidden;
    bool include_t;
    LatentFamily family;
    CovarianceParam cov;
  };
  const std::vector<Shape> shapes = {
      {2, 1, {1}, false, LatentFamily::Gaussian, CovarianceParam::IdentityPlusAAT},
      {3, 2, {2, 2}, true, LatentFamily::StudentT, CovarianceParam::IdentityPlusAAT},
      {4, 2, {2}, true, LatentFamily::Gaussian, CovarianceParam::CholeskyLower},
      {4, 3, {}, true, LatentFamily::StudentT, CovarianceParam::CholeskyLower},
  };
  std::uint64_t seed = 100;
  for (const Shape& shape : shapes) {
    DensityModel model = test::random_model(shape.d, shape.blocks, shape.hidden,
                                            shape.include_t, shape.family, ++seed, 0.5,
                                            shape.cov);
    if (shape.cov == CovarianceParam::CholeskyLower) {
      auto factor = model.params().group("latent.cov_factor");
      for (int i = 0; i < shape.d; ++i) factor(i * shape.d + i) = 1.0;
    }
    std::mt19937_64 rng = make_rng_stream(seed, 1);
    int done = 0;
    while (done < 3) {
      const Eigen::VectorXd x = test::random_point(shape.d, rng);
      // Stay where the central difference of log p is numerically meaningful.
      if (std::abs(model.log_prob(x)) > 30.0) continue;
      ++done;
      const Eigen::VectorXd o = param_grad_log_prob(model, x);
      const Eigen::VectorXd fd = fd_param_grad(model, x);
      CHECK(worst_tolerance_ratio(o, fd, 1e-5, 1e-8) <= 1.0);
    }
  }
}

TEST_CASE("spatial derivatives of the identity model equal the latent closed form") {
  DensityModel model = test::random_model(8, 4, {4}, false, LatentFamily::Gaussian, 7, 0.0);
  std::mt19937_64 rng = make_rng_stream(7, 2);
  const Eigen::VectorXd x = test::random_point(8, rng);
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  spatial_derivatives(model, x, grad, hess);
  CHECK((grad + x).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((hess + Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(hess.trace() == doctest::Approx(-8.0).epsilon(1e-13));

  DensityModel student = test::random_model(2, 1, {1}, false, LatentFamily::StudentT, 7, 0.0);
  spatial_derivatives(student, Eigen::VectorXd::Zero(2), grad, hess);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-14);  // symmetry at the mode
}

TEST_CASE("spatial derivatives match finite differences on random models") {
  std::uint64_t seed = 200;
  for (int d : {2, 3}) {
    DensityModel model =
        test::random_model(d, 2, {std::max(1, d / 2)}, true, LatentFamily::StudentT, ++seed,
                           0.5);
    std::mt19937_64 rng = make_rng_stream(seed, 3);
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::VectorXd x = test::random_point(d, rng);
      Eigen::VectorXd grad;
      Eigen::MatrixXd hess;
      spatial_derivatives(model, x, grad, hess);
      CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() < 1e-10);

      const double h = 1e-4;
      for (int i = 0; i < d; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (model.log_prob(xp) - model.log_prob(xm)) / (2.0 * h);
        CHECK(std::abs(grad(i) - fd) / std::max(1e-6, std::abs(fd)) < 1e-4);
        for (int j = 0; j < d; ++j) {
          Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
          xpp(i) += h; xpp(j) += h;
          xpm(i) += h; xpm(j) -= h;
          xmp(i) -= h; xmp(j) += h;
          xmm(i) -= h; xmm(j) -= h;
          const double fd2 = (model.log_prob(xpp) - model.log_prob(xpm) -
                              model.log_prob(xmp) + model.log_prob(xmm)) /
                             (4.0 * h * h);
          CHECK(std::abs(hess(i, j) - fd2) / std::max(1e-4, std::abs(fd2)) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("variational derivatives average to zero over model samples") {
  DensityModel model = test::random_model(3, 2, {1}, true, LatentFamily::Gaussian, 11, 0.4);
  std::mt19937_64 rng = make_rng_stream(11, 4);
  const Eigen::Index n = 10000;
  const Eigen::Index k = model.param_count();

  Eigen::MatrixXd o(n, k);
  DerivativeEngine engine(model);
  LogDerivatives derivs;
  Eigen::VectorXd x;
  const Latent latent = model.latent();
  for (Eigen::Index i = 0; i < n; ++i) {
    engine.at_latent_point(latent.sample(rng), x, derivs);
    o.row(i) = derivs.param_grad.transpose();
  }
  const Eigen::VectorXd mean = o.colwise().mean();
  for (Eigen::Index j = 0; j < k; ++j) {
    const double sd = std::sqrt((o.col(j).array() - mean(j)).square().sum() / (n - 1.0));
    CHECK(std::abs(mean(j)) <= 4.0 * sd / std::sqrt(double(n)) + 1e-12);
  }
}
