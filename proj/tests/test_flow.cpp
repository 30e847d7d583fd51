#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include <Eigen/LU>

#include "fpflow/density_model.hpp"
#include "fpflow/math_util.hpp"
#include "test_util.hpp"

using namespace fpflow;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

TEST_CASE("identity initialization maps exactly regardless of hidden weights") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    DensityModel model =
        test::random_model(8, 4, {4}, false, LatentFamily::Gaussian, seed, 0.0);
    std::mt19937_64 rng = make_rng_stream(seed, 5);
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::VectorXd z = test::random_point(8, rng, 2.0);
      const auto [x, logdet] = model.forward(z);
      CHECK((x - z).cwiseAbs().maxCoeff() == 0.0);
      CHECK(logdet == 0.0);
    }
  }
}

TEST_CASE("identity model reproduces the latent log-densities") {
  DensityModel gauss = test::random_model(8, 4, {4}, false, LatentFamily::Gaussian, 5, 0.0);
  CHECK(gauss.log_prob(Eigen::VectorXd::Zero(8)) ==
        doctest::Approx(-4.0 * kLog2Pi).epsilon(1e-13));

  DensityModel student = test::random_model(8, 4, {4}, false, LatentFamily::StudentT, 5, 0.0);
  CHECK(student.log_prob(Eigen::VectorXd::Zero(8)) ==
        doctest::Approx(-4.17346).epsilon(1e-5));

  // d=2 standard gaussian examples
  DensityModel small = test::random_model(2, 1, {1}, false, LatentFamily::Gaussian, 5, 0.0);
  CHECK(small.log_prob(Eigen::VectorXd::Zero(2)) ==
        doctest::Approx(-kLog2Pi).epsilon(1e-13));
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  CHECK(small.log_prob(x) == doctest::Approx(-kLog2Pi - 0.5).epsilon(1e-13));
}

TEST_CASE("single block with constant scale nets evaluates by hand") {
  // One block, no t nets, affine subnets forced to constants c2 and c1.
  LatentSpec latent{LatentFamily::Gaussian, 2, CovarianceParam::IdentityPlusAAT};
  CouplingBlockSpec block;
  block.half_a = {0};
  block.half_b = {1};
  block.hidden_widths = {};
  block.include_t = false;
  DensityModel model = DensityModel::init_identity(latent, {block},
                                                   InitialDistribution::standard(2), 1);

  const double c2 = 0.3, c1 = -0.2;
  // subnet layout for widths [1 -> 1]: W (1 value) then b (1 value); the
  // scale clamp maps b to 5 tanh(b/5), so pre-compensate.
  auto s2 = model.params().group("block[0].s2");
  s2(0) = 0.0;
  s2(1) = 5.0 * std::atanh(c2 / 5.0);
  auto s1 = model.params().group("block[0].s1");
  s1(0) = 0.0;
  s1(1) = 5.0 * std::atanh(c1 / 5.0);

  Eigen::VectorXd z(2);
  z << 1.0, 1.0;
  const auto [x, logdet] = model.forward(z);
  CHECK(x(0) == doctest::Approx(std::exp(c2)).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(std::exp(c1)).epsilon(1e-12));
  CHECK(logdet == doctest::Approx(c2 + c1).epsilon(1e-12));
}

TEST_CASE("logdet of stacked blocks is the sum of per-block logdets") {
  std::mt19937_64 rng = make_rng_stream(23, 1);
  DensityModel two = test::random_model(4, 2, {2}, true, LatentFamily::Gaussian, 23, 0.5);

  // Chain the blocks manually through two single-block models sharing the
  // same parameters.
  LatentSpec latent{LatentFamily::Gaussian, 4, CovarianceParam::IdentityPlusAAT};
  DensityModel first = DensityModel::init_identity(latent, {two.blocks()[0]},
                                                   InitialDistribution::standard(4), 23);
  DensityModel second = DensityModel::init_identity(latent, {two.blocks()[1]},
                                                    InitialDistribution::standard(4), 23);
  const auto range0 = two.params().layout().range("block[0].s1");
  const auto first_range = first.params().layout().range("block[0].s1");
  const Eigen::Index block0_size = first.params().size() - first_range.offset;
  first.params().values().tail(block0_size) =
      two.params().values().segment(range0.offset, block0_size);
  const auto range1 = two.params().layout().range("block[1].s1");
  second.params().values().tail(block0_size) =
      two.params().values().segment(range1.offset, block0_size);

  const Eigen::VectorXd z = test::random_point(4, rng);
  const auto [mid, logdet_a] = first.forward(z);
  const auto [x_chained, logdet_b] = second.forward(mid);
  const auto [x, logdet] = two.forward(z);
  CHECK((x - x_chained).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(logdet == doctest::Approx(logdet_a + logdet_b).epsilon(1e-12));
}

TEST_CASE("round trip and logdet antisymmetry over a thousand points") {
  DensityModel model = test::random_model(6, 3, {3}, true, LatentFamily::Gaussian, 31, 1.0);
  std::mt19937_64 rng = make_rng_stream(31, 2);
  double worst_point = 0.0;
  double worst_logdet = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::VectorXd z = test::random_point(6, rng, 2.0);
    const auto [x, logdet_fwd] = model.forward(z);
    const auto [z_back, logdet_inv] = model.inverse(x);
    worst_point = std::max(worst_point, (z_back - z).cwiseAbs().maxCoeff());
    worst_logdet = std::max(worst_logdet, std::abs(logdet_fwd + logdet_inv));
  }
  CHECK(worst_point < 1e-9);
  CHECK(worst_logdet < 1e-9);
}

TEST_CASE("forward logdet matches a finite-difference jacobian determinant") {
  for (int d : {2, 3, 4}) {
    DensityModel model =
        test::random_model(d, 2, {std::max(1, d / 2)}, true, LatentFamily::Gaussian, 37, 0.6);
    std::mt19937_64 rng = make_rng_stream(37, d);
    const Eigen::VectorXd z = test::random_point(d, rng);
    const auto [x0, logdet] = model.forward(z);
    const double h = 1e-6;
    Eigen::MatrixXd jac(d, d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      jac.col(j) = (model.forward(zp).first - model.forward(zm).first) / (2.0 * h);
    }
    const double fd_logdet = std::log(std::abs(jac.determinant()));
    CHECK(std::abs(logdet - fd_logdet) < 1e-5);
  }
}

TEST_CASE("latent consistency ties forward logdet to the latent density") {
  DensityModel model = test::random_model(5, 2, {2}, true, LatentFamily::StudentT, 41, 0.7);
  const Latent latent = model.latent();
  std::mt19937_64 rng = make_rng_stream(41, 3);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::VectorXd z = test::random_point(5, rng);
    const auto [x, logdet_fwd] = model.forward(z);
    CHECK(std::abs(model.log_prob(x) + logdet_fwd - latent.log_prob(z)) < 1e-9);
  }
}

TEST_CASE("importance sampling from the latent integrates the density to one") {
  // Moderate weights keep the importance ratios light-tailed enough for the
  // plain standard error to be trusted.
  DensityModel model = test::random_model(4, 2, {2}, false, LatentFamily::Gaussian, 43, 0.35);
  const Latent latent = model.latent();
  std::mt19937_64 rng = make_rng_stream(43, 4);
  const int n = 40000;
  Eigen::VectorXd weights(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = latent.sample(rng);
    weights(i) = std::exp(model.log_prob(z) - latent.log_prob(z));
  }
  const double mean = weights.mean();
  const double se = std::sqrt((weights.array() - mean).square().sum() / (n - 1.0) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("sampling matches the encoded distribution") {
  DensityModel model = test::random_model(4, 2, {2}, false, LatentFamily::Gaussian, 47, 0.0);
  std::mt19937_64 rng = make_rng_stream(47, 5);
  const Eigen::Index n = 20000;
  const ParticleEnsemble ensemble = model.sample(n, rng);
  CHECK(ensemble.size() == n);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(ensemble.points.col(i).mean()) < 4.0 / std::sqrt(double(n)));
  }
  CHECK_THROWS_AS(model.sample(0, rng), std::invalid_argument);
}

TEST_CASE("student-t samples through the flow keep heavy tails") {
  DensityModel model = test::random_model(2, 1, {1}, false, LatentFamily::StudentT, 53, 0.0);
  std::mt19937_64 rng = make_rng_stream(53, 6);
  const ParticleEnsemble ensemble = model.sample(20000, rng);
  std::vector<double> coord(ensemble.points.col(0).data(),
                            ensemble.points.col(0).data() + ensemble.size());
  std::nth_element(coord.begin(), coord.begin() + coord.size() / 2, coord.end());
  CHECK(std::abs(coord[coord.size() / 2]) < 0.05);
  const int beyond = static_cast<int>(
      (ensemble.points.col(0).cwiseAbs().array() > 3.0).count());
  CHECK(beyond > static_cast<int>(0.01 * double(ensemble.size())));
}

TEST_CASE("mean log-density equals minus the gaussian entropy within noise") {
  DensityModel model = test::random_model(6, 3, {3}, false, LatentFamily::Gaussian, 59, 0.0);
  std::mt19937_64 rng = make_rng_stream(59, 7);
  const Eigen::Index n = 10000;
  const ParticleEnsemble ensemble = model.sample(n, rng);
  Eigen::VectorXd log_p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    log_p(i) = model.log_prob(ensemble.points.row(i).transpose());
  }
  const double want = -3.0 * (1.0 + kLog2Pi);  // -d/2 (1 + ln 2 pi)
  const double mean = log_p.mean();
  const double se =
      std::sqrt((log_p.array() - mean).square().sum() / (n - 1.0) / double(n));
  CHECK(std::abs(mean - want) < 3.0 * se);
}

TEST_CASE("checkpoints round trip bit-exactly and reject corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "fpflow_flow_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.bin";

  DensityModel model = test::random_model(4, 2, {2}, true, LatentFamily::StudentT, 61, 0.8,
                                          CovarianceParam::IdentityPlusAAT, 3.5);
  model.save_checkpoint(path, 0.75);
  const auto [loaded, t] = DensityModel::load_checkpoint(path);
  CHECK(t == 0.75);
  CHECK(loaded.params().values() == model.params().values());
  CHECK(loaded.latent_spec().family == LatentFamily::StudentT);
  CHECK(loaded.blocks().size() == model.blocks().size());

  // Truncate the parameter block.
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary);
    out.write(all.data(), static_cast<std::streamsize>(all.size() - 16));
  }
  CHECK_THROWS(DensityModel::load_checkpoint(path));
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite inputs are rejected") {
  DensityModel model = test::random_model(3, 1, {1}, false, LatentFamily::Gaussian, 67, 0.3);
  Eigen::VectorXd bad(3);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK_THROWS(model.forward(bad));
  CHECK_THROWS(model.inverse(bad));
  Eigen::VectorXd wrong_dim(2);
  wrong_dim.setZero();
  CHECK_THROWS(model.forward(wrong_dim));
}
