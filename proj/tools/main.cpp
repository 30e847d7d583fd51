#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpflow/run.hpp"

namespace {

using fpflow::RunConfig;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fpflow::ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Every config field is exposed as a dotted flag; a handful of short aliases
/// cover the common switches.
struct CliOverrides {
  CLI::App* cmd;
  RunConfig& config;
  std::string initial;  // gaussian | student-t shortcut
  bool reference_set = false;

  void add_options() {
    cmd->add_option("--experiment", config.experiment, "heat8d | phasespace | custom");
    cmd->add_option("--initial", initial,
                    "initial distribution for heat8d: gaussian | student-t");

    cmd->add_option("--model.latent-family", config.model.latent_family);
    cmd->add_option("--model.nu0", config.model.nu0);
    cmd->add_option("--model.covariance", config.model.covariance);
    cmd->add_option("--model.n-blocks", config.model.n_blocks);
    cmd->add_option("--model.hidden-widths", config.model.hidden_widths)
        ->delimiter(',');
    cmd->add_option("--model.include-t", config.model.include_t);
    cmd->add_option("--model.initial-mean,--initial-mean", config.model.initial_mean)
        ->delimiter(',');
    cmd->add_option("--model.initial-covariance-scale",
                    config.model.initial_covariance_scale);

    cmd->add_option("--problem.type", config.problem.type);
    cmd->add_option("--problem.dimension,--dimension", config.problem.dimension);
    cmd->add_option("--problem.diffusion,--D", config.problem.diffusion);
    cmd->add_option("--problem.n-oscillators", config.problem.n_oscillators);
    cmd->add_option("--problem.mass", config.problem.mass);
    cmd->add_option("--problem.omega", config.problem.omega);
    cmd->add_option("--problem.coupling,--k", config.problem.coupling);
    cmd->add_option("--problem.damping,--gamma", config.problem.damping);
    cmd->add_option("--problem.temperatures,--temps", config.problem.temperatures)
        ->delimiter(',');

    cmd->add_option("--integrator.scheme,--scheme", config.integrator.scheme);
    cmd->add_option("--integrator.dt,--dt", config.integrator.dt);
    cmd->add_option("--integrator.t-end,--t-end", config.integrator.t_end);
    cmd->add_option("--integrator.n-samples,--samples", config.integrator.n_samples);
    cmd->add_option("--integrator.seed,--seed", config.integrator.seed);
    cmd->add_option("--integrator.adaptive", config.integrator.adaptive);
    cmd->add_option("--integrator.adaptive-tol", config.integrator.adaptive_tol);
    cmd->add_option("--integrator.shared-stage-samples",
                    config.integrator.shared_stage_samples);
    cmd->add_option("--integrator.n-threads,--threads", config.integrator.n_threads);

    cmd->add_option("--observables.cadence,--cadence", config.observables.cadence);
    cmd->add_option("--observables.entropy", config.observables.entropy);
    cmd->add_option("--observables.entropy-samples", config.observables.entropy_samples);
    cmd->add_option("--observables.moments", config.observables.moments);
    cmd->add_option("--observables.ball-radii,--ball-radii", config.observables.ball_radii)
        ->delimiter(',');
    cmd->add_option("--observables.ball-samples", config.observables.ball_samples);
    cmd->add_option("--observables.ball-stratified", config.observables.ball_stratified);
    cmd->add_option("--observables.nu", config.observables.nu);

    cmd->add_option("--regularization.svd-rel-cutoff,--svd-cutoff",
                    config.regularization.svd_rel_cutoff);
    cmd->add_option("--regularization.tikhonov-shift",
                    config.regularization.tikhonov_shift);
    cmd->add_option("--regularization.dump-spectrum",
                    config.regularization.dump_spectrum);

    cmd->add_option("--reference.type,--reference", config.reference.type)
        ->each([this](const std::string&) { reference_set = true; });
    cmd->add_option("--reference.sde-dt", config.reference.sde_dt);
    cmd->add_option("--reference.sde-particles", config.reference.sde_particles);
    cmd->add_option("--reference.sde-scheme", config.reference.sde_scheme);
    cmd->add_option("--reference.grid-delta", config.reference.grid_delta);
    cmd->add_option("--reference.grid-r-max", config.reference.grid_r_max);
    cmd->add_option("--reference.grid-dt", config.reference.grid_dt);
    cmd->add_option("--reference.grid-scheme", config.reference.grid_scheme);
    cmd->add_option("--reference.grid-lhopital-cells",
                    config.reference.grid_lhopital_cells);

    cmd->add_option("--output.directory,--out", config.output.directory);
    cmd->add_option("--output.checkpoint-cadence", config.output.checkpoint_cadence);
  }

  void apply_aliases() {
    if (initial.empty()) return;
    if (initial == "gaussian") {
      config.model.latent_family = "gaussian";
      if (!reference_set && config.problem.type == "heat") {
        config.reference.type = "gaussian_oracle";
      }
    } else if (initial == "student-t" || initial == "student_t") {
      config.model.latent_family = "student_t";
      if (!reference_set && config.problem.type == "heat") {
        config.reference.type = "radial_grid";
      }
    } else {
      throw fpflow::ConfigError("config error at --initial: expected gaussian or student-t");
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational density evolution for drift-diffusion problems"};
  app.require_subcommand(1);

  CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment end to end");
  std::string config_path;
  std::string experiment_flag = "heat8d";
  run_cmd->add_option("--config", config_path, "JSON config file (defaults applied first)");

  // The experiment flag must be known before defaults are chosen, so parse in
  // two phases: peek at --experiment, then bind every override.
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--experiment") experiment_flag = args[i + 1];
    if (args[i].rfind("--experiment=", 0) == 0) {
      experiment_flag = args[i].substr(std::string("--experiment=").size());
    }
  }

  RunConfig config;
  try {
    if (experiment_flag == "heat8d") {
      config = RunConfig::defaults(fpflow::Experiment::Heat8D);
    } else if (experiment_flag == "phasespace") {
      config = RunConfig::defaults(fpflow::Experiment::PhaseSpace);
    } else if (experiment_flag == "custom") {
      config = RunConfig::defaults(fpflow::Experiment::Custom);
    } else {
      std::cerr << "config error at --experiment: unknown experiment '" << experiment_flag
                << "'\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  CliOverrides overrides{run_cmd, config};
  overrides.add_options();

  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the invariant battery");
  std::uint64_t verify_seed = 20240;
  verify_cmd->add_option("--seed", verify_seed, "seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (verify_cmd->parsed()) {
    return fpflow::run_verify(verify_seed, std::cout) == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) {
      // File first, then re-apply the flag overrides by reparsing.
      RunConfig from_file = RunConfig::from_json_text(read_file(config_path));
      config = from_file;
      CLI::App reparse{"reparse"};
      CLI::App* reparse_run = reparse.add_subcommand("run");
      std::string ignored;
      reparse_run->add_option("--config", ignored);
      CliOverrides second{reparse_run, config};
      second.add_options();
      reparse.parse(argc, argv);
      second.apply_aliases();
    } else {
      overrides.apply_aliases();
    }
    config.validate();
  } catch (const fpflow::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "flag parse error on override pass\n";
    return 2;
  }

  const fpflow::RunResult result = fpflow::run_experiment(config, &std::cout);
  if (result.exit_code != 0) {
    std::cerr << result.message << '\n';
  } else {
    std::cout << "run complete: " << result.output_dir.string() << '\n';
  }
  return result.exit_code;
}
