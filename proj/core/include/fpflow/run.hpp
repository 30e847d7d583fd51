#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpflow/observables.hpp"
#include "fpflow/pde.hpp"

namespace fpflow {

enum class Experiment { Heat8D, PhaseSpace, Custom };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelSection {
  std::string latent_family = "gaussian";  // gaussian | student_t
  double nu0 = 2.0;
  std::string covariance = "identity_plus_aat";  // cholesky_lower | identity_plus_aat
  int n_blocks = 4;
  std::vector<int> hidden_widths = {4};
  bool include_t = false;
  std::vector<double> initial_mean;  // empty = origin
  double initial_covariance_scale = 1.0;
};

struct ProblemSection {
  std::string type = "heat";  // heat | phase_space
  int dimension = 8;          // heat only
  double diffusion = 1.0;     // heat only
  int n_oscillators = 3;
  double mass = 1.0, omega = 1.0, coupling = 1.0, damping = 1.0;
  std::vector<double> temperatures = {10.0, 3.0, 1.0};
};

struct IntegratorSection {
  std::string scheme = "heun";  // heun | euler
  double dt = 1e-3;
  double t_end = 2.0;
  long n_samples = 10000;
  std::uint64_t seed = 20240;
  bool adaptive = false;
  double adaptive_tol = 1e-4;
  bool shared_stage_samples = false;
  int n_threads = 0;
};

struct ObservablesSection {
  double cadence = 0.1;
  bool entropy = true;
  long entropy_samples = 10000;
  bool moments = true;
  std::vector<double> ball_radii;
  long ball_samples = 10000;
  bool ball_stratified = true;
  bool nu = true;  // recorded only for a student_t latent
};

struct RegularizationSection {
  double svd_rel_cutoff = 1e-8;
  double tikhonov_shift = 0.0;
  bool dump_spectrum = false;
};

struct ReferenceSection {
  std::string type = "none";  // none | gaussian_oracle | radial_grid | sde | gibbs_oracle
  double sde_dt = 1e-4;
  long sde_particles = 10000;
  std::string sde_scheme = "euler_maruyama";  // euler_maruyama | stochastic_heun
  double grid_delta = 4e-3;
  double grid_r_max = 100.0;
  double grid_dt = 1e-3;
  std::string grid_scheme = "crank_nicolson";  // crank_nicolson | explicit_euler
  int grid_lhopital_cells = 10;
};

struct OutputSection {
  std::string directory = "fpflow_run";
  double checkpoint_cadence = 0.0;  // 0: final checkpoint only
};

struct RunConfig {
  int version = 1;
  std::string experiment = "heat8d";  // heat8d | phasespace | custom
  ModelSection model;
  ProblemSection problem;
  IntegratorSection integrator;
  ObservablesSection observables;
  RegularizationSection regularization;
  ReferenceSection reference;
  OutputSection output;

  static RunConfig defaults(Experiment experiment);
  /// Parses and validates; unknown keys and type mismatches raise ConfigError
  /// with the offending field path.
  static RunConfig from_json_text(const std::string& text);
  /// Canonical resolved echo: sorted keys, fixed float formatting.
  std::string to_canonical_json_text() const;
  void validate() const;

  int dimension() const;  // ambient dimension implied by the problem section
};

/// One recorded row of the run time series.
struct TimeSeriesRecord {
  double t = 0.0;
  McEstimate entropy;
  MomentEstimates moments;
  double residual_normalized = 0.0;
  double nu = 0.0;
  std::vector<McEstimate> ball_probs;
  double wall_seconds = 0.0;
};

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 config error, 3 numerical abort
  std::string message;
  std::filesystem::path output_dir;
  std::vector<TimeSeriesRecord> records;
};

/// Runs one experiment end to end: resolved-config echo, time-series CSV,
/// checkpoints and (when a reference is enabled) a comparison CSV, all under
/// the configured output directory. The FPFLOW_OUTPUT_ROOT environment
/// variable, when set, anchors relative output directories.
RunResult run_experiment(const RunConfig& config, std::ostream* log = nullptr);

/// The identity-initialized model / problem a config resolves to.
DensityModel model_from_config(const RunConfig& config);
FokkerPlanckProblem problem_from_config(const RunConfig& config);
PhaseSpaceParams phase_space_params_from_config(const RunConfig& config);

/// Full invariant battery at reduced sample counts; prints one line per check
/// and returns the number of failures.
int run_verify(std::uint64_t seed, std::ostream& out);

}  // namespace fpflow
