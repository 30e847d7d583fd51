#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fpflow/csv.hpp"
#include "fpflow/integrator.hpp"
#include "fpflow/math_util.hpp"
#include "fpflow/reference.hpp"
#include "fpflow/run.hpp"

namespace fpflow {

namespace {

// RNG stream tags within one run seed.
constexpr std::uint64_t kStreamSplits = 1;
constexpr std::uint64_t kStreamObservables = 2;
constexpr std::uint64_t kStreamSdeSeedBase = 3;

LatentFamily family_of(const RunConfig& config) {
  return config.model.latent_family == "gaussian" ? LatentFamily::Gaussian
                                                  : LatentFamily::StudentT;
}

}  // namespace

DensityModel model_from_config(const RunConfig& config) {
  const int d = config.dimension();
  LatentSpec latent;
  latent.family = family_of(config);
  latent.dim = d;
  latent.covariance = config.model.covariance == "cholesky_lower"
                          ? CovarianceParam::CholeskyLower
                          : CovarianceParam::IdentityPlusAAT;

  std::mt19937_64 split_rng = make_rng_stream(config.integrator.seed, kStreamSplits);
  std::vector<CouplingBlockSpec> blocks;
  blocks.reserve(config.model.n_blocks);
  for (int i = 0; i < config.model.n_blocks; ++i) {
    blocks.push_back(CouplingBlockSpec::random_split(d, config.model.hidden_widths,
                                                     config.model.include_t, split_rng));
  }

  InitialDistribution initial = InitialDistribution::standard(d, config.model.nu0);
  if (!config.model.initial_mean.empty()) {
    initial.mean = Eigen::Map<const Eigen::VectorXd>(config.model.initial_mean.data(), d);
  }
  initial.covariance *= config.model.initial_covariance_scale;
  return DensityModel::init_identity(latent, std::move(blocks), initial,
                                     config.integrator.seed);
}

FokkerPlanckProblem problem_from_config(const RunConfig& config) {
  if (config.problem.type == "heat") {
    return make_heat_problem(config.problem.dimension, config.problem.diffusion);
  }
  PhaseSpaceParams params;
  params.n_oscillators = config.problem.n_oscillators;
  params.mass = config.problem.mass;
  params.omega = config.problem.omega;
  params.coupling = config.problem.coupling;
  params.damping = config.problem.damping;
  params.k_b_temps = Eigen::Map<const Eigen::VectorXd>(config.problem.temperatures.data(),
                                                       config.problem.n_oscillators);
  return make_phase_space_problem(params);
}

PhaseSpaceParams phase_space_params_from_config(const RunConfig& config) {
  PhaseSpaceParams params;
  params.n_oscillators = config.problem.n_oscillators;
  params.mass = config.problem.mass;
  params.omega = config.problem.omega;
  params.coupling = config.problem.coupling;
  params.damping = config.problem.damping;
  params.k_b_temps = Eigen::Map<const Eigen::VectorXd>(config.problem.temperatures.data(),
                                                       config.problem.n_oscillators);
  return params;
}

namespace {

std::filesystem::path resolve_output_dir(const RunConfig& config) {
  std::filesystem::path dir = config.output.directory;
  if (dir.is_relative()) {
    if (const char* root = std::getenv("FPFLOW_OUTPUT_ROOT")) {
      dir = std::filesystem::path(root) / dir;
    }
  }
  return dir;
}

std::vector<std::string> timeseries_columns(const RunConfig& config, bool record_nu) {
  std::vector<std::string> cols = {"t", "entropy", "entropy_err"};
  const int d = config.dimension();
  for (int i = 0; i < d; ++i) cols.push_back("mean_" + std::to_string(i));
  for (int i = 0; i < d; ++i) cols.push_back("var_" + std::to_string(i));
  cols.push_back("residual_normalized");
  if (record_nu) cols.push_back("nu");
  for (double r : config.observables.ball_radii) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", r);
    cols.push_back(std::string("ball_prob_r") + buf);
    cols.push_back(std::string("ball_prob_r") + buf + "_err");
  }
  return cols;
}

// Reference comparisons appended after the run, one row per recorded time.
void write_gaussian_oracle_comparison(const RunConfig& config,
                                      const std::vector<TimeSeriesRecord>& records,
                                      const std::filesystem::path& dir) {
  const int d = config.dimension();
  const Eigen::MatrixXd sigma0 =
      config.model.initial_covariance_scale * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(d);
  if (!config.model.initial_mean.empty()) {
    mu0 = Eigen::Map<const Eigen::VectorXd>(config.model.initial_mean.data(), d);
  }
  CsvWriter csv(dir / "comparison.csv", {"t", "entropy", "entropy_err", "entropy_exact"});
  for (const TimeSeriesRecord& rec : records) {
    const GaussianHeatState state =
        gaussian_heat_oracle(sigma0, mu0, config.problem.diffusion, rec.t);
    csv.write_row(std::array{rec.t, rec.entropy.value, rec.entropy.std_error, state.entropy});
  }
}

void write_radial_grid_comparison(const RunConfig& config,
                                  const std::vector<TimeSeriesRecord>& records,
                                  const std::filesystem::path& dir) {
  RadialGridConfig grid;
  grid.delta = config.reference.grid_delta;
  grid.r_max = config.reference.grid_r_max;
  grid.dt_grid = config.reference.grid_dt;
  grid.lhopital_cells = config.reference.grid_lhopital_cells;
  grid.scheme = config.reference.grid_scheme == "explicit_euler"
                    ? RadialScheme::ExplicitEuler
                    : RadialScheme::CrankNicolson;
  const int d = config.dimension();
  RadialProfile profile =
      family_of(config) == LatentFamily::StudentT
          ? radial_profile_student_t(d, config.model.nu0, grid)
          : radial_profile_gaussian(d, grid);

  CsvWriter csv(dir / "comparison.csv",
                {"t", "entropy", "entropy_err", "entropy_grid", "grid_mass"});
  double t_prev = 0.0;
  for (const TimeSeriesRecord& rec : records) {
    profile = radial_heat_evolve(profile, config.problem.diffusion, grid, rec.t - t_prev);
    t_prev = rec.t;
    csv.write_row(std::array{rec.t, rec.entropy.value, rec.entropy.std_error,
                             radial_entropy(profile), radial_mass(profile)});
  }
  save_radial_profile(profile, grid.r_max, dir / "radial_profile_final.csv");
}

void write_sde_comparison(const RunConfig& config,
                          const std::vector<TimeSeriesRecord>& records,
                          const DensityModel& initial_model,
                          const std::filesystem::path& dir) {
  if (records.size() < 2) return;
  const int d = config.dimension();
  const PhaseSpaceParams params = phase_space_params_from_config(config);

  std::mt19937_64 init_rng =
      make_rng_stream(config.integrator.seed, kStreamSdeSeedBase);
  ParticleEnsemble initial = initial_model.sample(config.reference.sde_particles, init_rng);

  SdeConfig sde;
  sde.dt = config.reference.sde_dt;
  sde.t_end = records.back().t;
  sde.rng_seed = config.integrator.seed ^ 0x5deULL;
  sde.scheme = config.reference.sde_scheme == "stochastic_heun"
                   ? SdeScheme::StochasticHeun
                   : SdeScheme::EulerMaruyama;

  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < d; ++i) {
    cols.push_back("mean_" + std::to_string(i));
    cols.push_back("mean_sde_" + std::to_string(i));
  }
  for (int i = 0; i < d; ++i) {
    cols.push_back("var_" + std::to_string(i));
    cols.push_back("var_sde_" + std::to_string(i));
  }
  CsvWriter csv(dir / "comparison.csv", cols);

  std::size_t next_record = 0;
  const double cadence = records.size() > 1 ? records[1].t - records[0].t : 0.0;
  auto observer = [&](double t, const ParticleEnsemble& ensemble) {
    while (next_record < records.size() && records[next_record].t <= t + 1e-9) {
      const TimeSeriesRecord& rec = records[next_record];
      if (std::abs(rec.t - t) <= 1e-6 * std::max(1.0, t)) {
        const MomentEstimates sde_moments = mc_moments(ensemble);
        std::vector<double> row = {rec.t};
        for (int i = 0; i < d; ++i) {
          row.push_back(rec.moments.mean(i));
          row.push_back(sde_moments.mean(i));
        }
        for (int i = 0; i < d; ++i) {
          row.push_back(rec.moments.variance(i));
          row.push_back(sde_moments.variance(i));
        }
        csv.write_row(row);
      }
      ++next_record;
    }
  };
  sde_evolve(params, initial, sde, cadence, observer);
}

void write_gibbs_comparison(const RunConfig& config,
                            const std::vector<TimeSeriesRecord>& records,
                            const std::filesystem::path& dir) {
  const GibbsSteadyState steady = gibbs_oracle(phase_space_params_from_config(config));
  std::vector<std::string> cols = {"t", "entropy", "entropy_err", "entropy_ss"};
  for (double r : config.observables.ball_radii) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", r);
    cols.push_back(std::string("ball_prob_r") + buf);
    cols.push_back(std::string("ball_prob_ss_r") + buf);
  }
  CsvWriter csv(dir / "comparison.csv", cols);
  for (const TimeSeriesRecord& rec : records) {
    std::vector<double> row = {rec.t, rec.entropy.value, rec.entropy.std_error,
                               steady.entropy};
    for (std::size_t i = 0; i < config.observables.ball_radii.size(); ++i) {
      row.push_back(i < rec.ball_probs.size() ? rec.ball_probs[i].value : 0.0);
      row.push_back(steady.ball_prob(config.observables.ball_radii[i]));
    }
    csv.write_row(row);
  }
}

}  // namespace

RunResult run_experiment(const RunConfig& config, std::ostream* log) {
  RunResult result;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  }

  try {
    const std::filesystem::path dir = resolve_output_dir(config);
    std::filesystem::create_directories(dir);
    result.output_dir = dir;
    {
      std::ofstream echo(dir / "config.json", std::ios::binary);
      echo << config.to_canonical_json_text();
    }

    const int d = config.dimension();
    DensityModel model = model_from_config(config);
    const DensityModel initial_model = model;
    const FokkerPlanckProblem problem = problem_from_config(config);

    const bool record_nu =
        config.observables.nu && family_of(config) == LatentFamily::StudentT;
    CsvWriter timeseries(dir / "timeseries.csv", timeseries_columns(config, record_nu));
    CsvWriter wallclock(dir / "wallclock.csv", {"t", "wall_seconds"});
    std::optional<CsvWriter> spectrum;
    if (config.regularization.dump_spectrum) {
      std::vector<std::string> cols = {"t"};
      for (Eigen::Index i = 0; i < model.param_count(); ++i) {
        cols.push_back("eig_" + std::to_string(i));
      }
      spectrum.emplace(dir / "spectrum.csv", cols);
    }

    std::mt19937_64 obs_rng = make_rng_stream(config.integrator.seed, kStreamObservables);
    const auto wall_start = std::chrono::steady_clock::now();

    auto observer = [&](double t, const DensityModel& m, const StepDiagnostics* diag) {
      TimeSeriesRecord rec;
      rec.t = t;
      if (config.observables.entropy) {
        rec.entropy = mc_entropy(m, config.observables.entropy_samples, obs_rng,
                                 config.integrator.n_threads);
      }
      if (config.observables.moments) {
        rec.moments = mc_moments(m, config.observables.entropy_samples, obs_rng);
      } else {
        rec.moments.mean = Eigen::VectorXd::Zero(d);
        rec.moments.variance = Eigen::VectorXd::Zero(d);
      }
      rec.residual_normalized = diag != nullptr ? diag->residual.r_normalized : 0.0;
      if (record_nu) rec.nu = nu_observer(m);
      for (double r : config.observables.ball_radii) {
        rec.ball_probs.push_back(ball_probability(m, r, Eigen::VectorXd::Zero(d),
                                                  config.observables.ball_samples, obs_rng,
                                                  config.observables.ball_stratified,
                                                  config.integrator.n_threads));
      }
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
              .count();

      std::vector<double> row = {rec.t, rec.entropy.value, rec.entropy.std_error};
      for (int i = 0; i < d; ++i) row.push_back(rec.moments.mean(i));
      for (int i = 0; i < d; ++i) row.push_back(rec.moments.variance(i));
      row.push_back(rec.residual_normalized);
      if (record_nu) row.push_back(rec.nu);
      for (const McEstimate& b : rec.ball_probs) {
        row.push_back(b.value);
        row.push_back(b.std_error);
      }
      timeseries.write_row(row);
      timeseries.flush();
      wallclock.write_row(std::array{rec.t, rec.wall_seconds});
      wallclock.flush();
      if (spectrum && diag != nullptr) {
        std::vector<double> srow = {rec.t};
        for (Eigen::Index i = 0; i < diag->solve_info.spectrum.size(); ++i) {
          srow.push_back(diag->solve_info.spectrum(i));
        }
        if (srow.size() == spectrum->columns().size()) spectrum->write_row(srow);
      }
      result.records.push_back(std::move(rec));
    };

    IntegratorConfig integ;
    integ.scheme =
        config.integrator.scheme == "euler" ? TimeScheme::Euler : TimeScheme::Heun;
    integ.dt = config.integrator.dt;
    integ.t_end = config.integrator.t_end;
    integ.n_samples = config.integrator.n_samples;
    integ.rng_seed = config.integrator.seed;
    integ.adaptive = config.integrator.adaptive;
    integ.adaptive_tol = config.integrator.adaptive_tol;
    integ.shared_stage_samples = config.integrator.shared_stage_samples;
    integ.n_threads = config.integrator.n_threads;

    RegularizationPolicy policy;
    policy.svd_rel_cutoff = config.regularization.svd_rel_cutoff;
    policy.tikhonov_shift = config.regularization.tikhonov_shift;

    EvolveOptions options;
    options.observe_interval = config.observables.cadence;
    options.checkpoint_interval = config.output.checkpoint_cadence;
    options.observer = observer;
    options.checkpoint_writer = [&](double t, const DensityModel& m) {
      m.save_checkpoint(dir / "checkpoint.bin", t);
    };
    options.progress = log;

    const EvolveStatus status = evolve(model, problem, integ, policy, options);
    if (!status.completed) {
      result.exit_code = 3;
      result.message = "integration aborted at t=" + format_g17(status.t_reached) + ": " +
                       status.message;
      return result;
    }

    if (config.reference.type == "gaussian_oracle") {
      write_gaussian_oracle_comparison(config, result.records, dir);
    } else if (config.reference.type == "radial_grid") {
      write_radial_grid_comparison(config, result.records, dir);
    } else if (config.reference.type == "sde") {
      write_sde_comparison(config, result.records, initial_model, dir);
    } else if (config.reference.type == "gibbs_oracle") {
      write_gibbs_comparison(config, result.records, dir);
    }
    result.exit_code = 0;
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = 3;
    result.message = e.what();
  }
  return result;
}

}  // namespace fpflow
