#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>

#include "fpflow/derivatives.hpp"
#include "fpflow/integrator.hpp"
#include "fpflow/math_util.hpp"
#include "fpflow/observables.hpp"
#include "fpflow/reference.hpp"
#include "fpflow/run.hpp"

namespace fpflow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct CheckReporter {
  std::ostream& out;
  int failures = 0;

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    out << (ok ? "[ ok ] " : "[FAIL] ") << name;
    if (!detail.empty()) out << "  (" << detail << ")";
    out << '\n';
    if (!ok) ++failures;
  }
};

DensityModel make_random_model(int d, int n_blocks, std::vector<int> hidden, bool include_t,
                               LatentFamily family, std::uint64_t seed, double amplitude) {
  LatentSpec latent{family, d, CovarianceParam::IdentityPlusAAT};
  std::mt19937_64 rng = make_rng_stream(seed, 11);
  std::vector<CouplingBlockSpec> blocks;
  for (int i = 0; i < n_blocks; ++i) {
    blocks.push_back(CouplingBlockSpec::random_split(d, hidden, include_t, rng));
  }
  DensityModel model = DensityModel::init_identity(
      latent, std::move(blocks), InitialDistribution::standard(d, 2.0), seed);
  std::uniform_real_distribution<double> uniform(-amplitude, amplitude);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += uniform(rng);
  }
  return model;
}

// Ratio of |got - want| to the allowance max(abs_floor, rel_tol |want|);
// values above 1 violate the tolerance.
double tolerance_ratio(double got, double want, double rel_tol, double abs_floor) {
  return std::abs(got - want) / std::max(abs_floor, rel_tol * std::abs(want));
}

}  // namespace

int run_verify(std::uint64_t seed, std::ostream& out) {
  CheckReporter rep{out};
  char buf[128];

  // Latent closed forms.
  {
    LatentSpec spec{LatentFamily::Gaussian, 8, CovarianceParam::IdentityPlusAAT};
    ParameterLayout layout;
    Latent::append_groups(spec, layout);
    ParameterVector params(layout);
    Latent::encode_initial(spec, Eigen::VectorXd::Zero(8), Eigen::MatrixXd::Identity(8, 8),
                           0.0, params);
    const double got = Latent(spec, params).log_prob(Eigen::VectorXd::Zero(8));
    rep.check("latent gaussian log-density at the origin",
              std::abs(got + 4.0 * kLog2Pi) < 1e-12);
  }
  {
    LatentSpec spec{LatentFamily::StudentT, 8, CovarianceParam::IdentityPlusAAT};
    ParameterLayout layout;
    Latent::append_groups(spec, layout);
    ParameterVector params(layout);
    Latent::encode_initial(spec, Eigen::VectorXd::Zero(8), Eigen::MatrixXd::Identity(8, 8),
                           2.0, params);
    const double got = Latent(spec, params).log_prob(Eigen::VectorXd::Zero(8));
    const double want = std::log(24.0) - 4.0 * kLog2Pi;
    std::snprintf(buf, sizeof(buf), "got %.6f want %.6f", got, want);
    rep.check("latent student-t log-density at the origin", std::abs(got - want) < 1e-12,
              buf);
  }

  // Identity initialization and round trips.
  {
    DensityModel model = make_random_model(6, 4, {3}, true, LatentFamily::Gaussian, seed, 0.0);
    std::mt19937_64 rng = make_rng_stream(seed, 21);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(6);
    double worst = 0.0;
    for (int rep_i = 0; rep_i < 50; ++rep_i) {
      for (int i = 0; i < 6; ++i) z(i) = 2.0 * normal(rng);
      const auto [x, logdet] = model.forward(z);
      worst = std::max(worst, (x - z).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(logdet));
    }
    rep.check("identity initialization is exact", worst == 0.0);
  }
  {
    DensityModel model = make_random_model(4, 3, {2}, true, LatentFamily::Gaussian, seed, 0.5);
    std::mt19937_64 rng = make_rng_stream(seed, 22);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(4);
    double worst = 0.0;
    for (int rep_i = 0; rep_i < 200; ++rep_i) {
      for (int i = 0; i < 4; ++i) z(i) = 2.0 * normal(rng);
      const auto [x, logdet_fwd] = model.forward(z);
      const auto [z2, logdet_inv] = model.inverse(x);
      worst = std::max(worst, (z2 - z).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(logdet_fwd + logdet_inv));
    }
    std::snprintf(buf, sizeof(buf), "max error %.3e", worst);
    rep.check("flow round trip below 1e-9", worst < 1e-9, buf);
  }

  // Parameter gradients against central finite differences.
  {
    DensityModel model = make_random_model(3, 2, {1}, true, LatentFamily::StudentT, seed, 0.4);
    std::mt19937_64 rng = make_rng_stream(seed, 23);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int rep_i = 0; rep_i < 3; ++rep_i) {
      Eigen::VectorXd x(3);
      for (int i = 0; i < 3; ++i) x(i) = normal(rng);
      const Eigen::VectorXd o = param_grad_log_prob(model, x);
      DensityModel probe = model;
      const double h = 1e-6;
      for (Eigen::Index k = 0; k < probe.params().size(); ++k) {
        const double saved = probe.params().values()(k);
        probe.params().values()(k) = saved + h;
        const double up = probe.log_prob(x);
        probe.params().values()(k) = saved - h;
        const double down = probe.log_prob(x);
        probe.params().values()(k) = saved;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, tolerance_ratio(o(k), fd, 1e-5, 1e-8));
      }
    }
    std::snprintf(buf, sizeof(buf), "worst tolerance ratio %.3e", worst);
    rep.check("parameter gradients match finite differences", worst <= 1.0, buf);
  }

  // Spatial derivatives against finite differences of log p.
  {
    DensityModel model = make_random_model(3, 2, {1}, false, LatentFamily::Gaussian, seed, 0.4);
    std::mt19937_64 rng = make_rng_stream(seed, 24);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = normal(rng);
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    spatial_derivatives(model, x, grad, hess);
    const double h = 1e-4;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (model.log_prob(xp) - model.log_prob(xm)) / (2.0 * h);
      worst = std::max(worst, tolerance_ratio(grad(i), fd, 1e-4, 1e-6));
      for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
        xpp(i) += h; xpp(j) += h;
        xpm(i) += h; xpm(j) -= h;
        xmp(i) -= h; xmp(j) += h;
        xmm(i) -= h; xmm(j) -= h;
        const double fd2 = (model.log_prob(xpp) - model.log_prob(xpm) -
                            model.log_prob(xmp) + model.log_prob(xmm)) /
                           (4.0 * h * h);
        worst = std::max(worst, tolerance_ratio(hess(i, j), fd2, 1e-4, 1e-4));
      }
    }
    std::snprintf(buf, sizeof(buf), "worst tolerance ratio %.3e", worst);
    rep.check("spatial derivatives match finite differences", worst <= 1.0, buf);
  }

  // PDE right-hand side at a known point.
  {
    LatentSpec spec{LatentFamily::Gaussian, 8, CovarianceParam::IdentityPlusAAT};
    DensityModel model = DensityModel::init_identity(spec, {},
                                                     InitialDistribution::standard(8), seed);
    const FokkerPlanckProblem heat = make_heat_problem(8, 1.0);
    const double got = dt_log_prob(heat, model, Eigen::VectorXd::Zero(8), 0.0);
    rep.check("heat dt log p at the origin equals -d", std::abs(got + 8.0) < 1e-9);
  }

  // TDVP assembly and solve on a hand case.
  {
    Eigen::MatrixXd o(2, 1);
    o << 1.0, -1.0;
    Eigen::VectorXd dt(2);
    dt << 1.0, -1.0;
    const TdvpSystem system = assemble(o, dt);
    const Eigen::VectorXd theta_dot = solve(system, RegularizationPolicy{});
    rep.check("two-sample correlator hand case",
              std::abs(system.S(0, 0) - 1.0) < 1e-14 && std::abs(system.F(0) - 1.0) < 1e-14 &&
                  std::abs(theta_dot(0) - 1.0) < 1e-12);
  }

  // Explicit second-order update on a linear velocity field.
  {
    Eigen::VectorXd theta(1);
    theta << 1.0;
    const Eigen::VectorXd next =
        midpoint_update(theta, 0.1, [](const Eigen::VectorXd& th) { return th; });
    rep.check("second-order update on a linear field", std::abs(next(0) - 1.105) < 1e-12);
  }

  // Closed-form oracles.
  {
    const GaussianHeatState s0 = gaussian_heat_oracle(Eigen::MatrixXd::Identity(8, 8),
                                                      Eigen::VectorXd::Zero(8), 1.0, 0.0);
    const GaussianHeatState s2 = gaussian_heat_oracle(Eigen::MatrixXd::Identity(8, 8),
                                                      Eigen::VectorXd::Zero(8), 1.0, 2.0);
    rep.check("gaussian heat oracle entropies",
              std::abs(s0.entropy - 4.0 * (1.0 + kLog2Pi)) < 1e-12 &&
                  std::abs(s2.entropy - (4.0 * (1.0 + kLog2Pi) + 4.0 * std::log(5.0))) < 1e-12);
  }
  {
    PhaseSpaceParams params;
    params.n_oscillators = 3;
    params.coupling = 0.0;
    params.k_b_temps = Eigen::VectorXd::Constant(3, 10.0);
    const GibbsSteadyState steady = gibbs_oracle(params);
    const double want_entropy = 3.0 * (1.0 + kLog2Pi + std::log(10.0));
    const double want_ball = 1.0 - std::exp(-5.0) * (1.0 + 5.0 + 12.5);
    rep.check("gibbs oracle entropy and ball probability",
              std::abs(steady.entropy - want_entropy) < 1e-12 &&
                  std::abs(steady.ball_prob(10.0) - want_ball) < 1e-12);
  }

  // Radial reference solver on a coarse grid.
  {
    RadialGridConfig grid;
    grid.delta = 0.01;
    grid.r_max = 30.0;
    grid.dt_grid = 1e-3;
    const RadialProfile profile = radial_profile_gaussian(8, grid);
    const double s0 = radial_entropy(profile);
    std::snprintf(buf, sizeof(buf), "entropy %.6f want %.6f", s0, 4.0 * (1.0 + kLog2Pi));
    rep.check("radial quadrature entropy at t=0", std::abs(s0 - 4.0 * (1.0 + kLog2Pi)) < 2e-3,
              buf);
    const RadialProfile still = radial_heat_evolve(profile, 0.0, grid, 0.5);
    rep.check("radial solver with zero diffusion is inert",
              (still.p - profile.p).cwiseAbs().maxCoeff() == 0.0);
  }

  // Checkpoint round trip and corruption detection.
  {
    const auto tmp = std::filesystem::temp_directory_path() / "fpflow_verify_ckpt.bin";
    DensityModel model = make_random_model(4, 2, {2}, false, LatentFamily::StudentT, seed, 0.3);
    model.save_checkpoint(tmp, 1.25);
    const auto [loaded, t] = DensityModel::load_checkpoint(tmp);
    const bool same = t == 1.25 && loaded.params().values() == model.params().values();
    bool corrupt_detected = false;
    {
      std::ofstream trunc(tmp, std::ios::binary);
      trunc << "{\"format\":\"fpflow-checkpoint\",\"version\":1";  // cut off
    }
    try {
      DensityModel::load_checkpoint(tmp);
    } catch (const std::exception&) {
      corrupt_detected = true;
    }
    std::filesystem::remove(tmp);
    rep.check("checkpoint round trip and corruption detection", same && corrupt_detected);
  }

  // Determinism of a short seeded run.
  {
    RunConfig config = RunConfig::defaults(Experiment::Heat8D);
    config.problem.dimension = 2;
    config.model.hidden_widths = {1};
    config.model.n_blocks = 1;
    config.integrator.t_end = 0.01;
    config.integrator.dt = 5e-3;
    config.integrator.n_samples = 200;
    config.observables.entropy_samples = 200;
    config.observables.cadence = 5e-3;
    config.integrator.seed = seed;
    config.reference.type = "none";

    const auto dir = std::filesystem::temp_directory_path() / "fpflow_verify_run";
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    config.output.directory = (dir / "a").string();
    const RunResult first = run_experiment(config);
    config.output.directory = (dir / "b").string();
    const RunResult second = run_experiment(config);
    bool identical = first.exit_code == 0 && second.exit_code == 0;
    if (identical) {
      std::ifstream fa(dir / "a" / "timeseries.csv"), fb(dir / "b" / "timeseries.csv");
      std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
      identical = !sa.empty() && sa == sb;
    }
    std::filesystem::remove_all(dir, ec);
    rep.check("seeded runs produce identical time series", identical);
  }

  // Normalization via importance sampling from the latent.
  {
    DensityModel model = make_random_model(3, 2, {1}, false, LatentFamily::Gaussian, seed, 0.4);
    const Latent lat = model.latent();
    std::mt19937_64 rng = make_rng_stream(seed, 31);
    const int n = 4000;
    Eigen::VectorXd weights(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd z = lat.sample(rng);
      weights(i) = std::exp(model.log_prob(z) - lat.log_prob(z));
    }
    const double mean = weights.mean();
    const double se = std::sqrt((weights.array() - mean).square().sum() / (n - 1.0) / n);
    std::snprintf(buf, sizeof(buf), "mean %.4f +- %.4f", mean, se);
    rep.check("importance-sampled normalization is one", std::abs(mean - 1.0) < 5.0 * se, buf);
  }

  out << (rep.failures == 0 ? "verify: all checks passed\n"
                            : "verify: " + std::to_string(rep.failures) + " check(s) failed\n");
  return rep.failures;
}

}  // namespace fpflow
