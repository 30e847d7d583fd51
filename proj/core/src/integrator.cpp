#include "fpflow/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "fpflow/math_util.hpp"

namespace fpflow {

void IntegratorConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("integrator dt must be positive");
  if (t_end < 0.0) throw std::invalid_argument("integrator t_end must be non-negative");
  if (n_samples < 2) throw std::invalid_argument("integrator needs at least two samples");
  if (adaptive && !(adaptive_tol > 0.0)) {
    throw std::invalid_argument("adaptive tolerance must be positive");
  }
}

StepDiagnostics tdvp_step(DensityModel& model, const FokkerPlanckProblem& problem,
                          const IntegratorConfig& config, const RegularizationPolicy& policy,
                          double t, std::mt19937_64& rng) {
  if (config.dt < 0.0) throw std::invalid_argument("step size must be non-negative");

  StepDiagnostics diag;
  diag.dt = config.dt;
  diag.t_after = t + config.dt;

  Eigen::MatrixXd shared_latent;
  if (config.shared_stage_samples) {
    const Latent lat = model.latent();
    shared_latent.resize(config.n_samples, model.dim());
    for (Eigen::Index i = 0; i < config.n_samples; ++i) {
      shared_latent.row(i) = lat.sample(rng).transpose();
    }
  }

  const Eigen::VectorXd theta0 = model.params().values();
  int stage = 0;
  auto velocity = [&](const Eigen::VectorXd& theta) {
    const double stage_t = (stage == 0) ? t : t + 0.5 * config.dt;
    model.params().values() = theta;
    TdvpBatch batch =
        config.shared_stage_samples
            ? evaluate_batch_at(model, problem, stage_t, shared_latent, config.n_threads)
            : evaluate_batch(model, problem, stage_t, config.n_samples, rng,
                             config.n_threads);
    Eigen::VectorXd p_values = batch.log_p.array().exp();
    TdvpSystem system = assemble(std::move(batch.O), std::move(batch.dt_log));
    SolveInfo info;
    Eigen::VectorXd theta_dot = solve(system, policy, &info);
    if (stage == 0) {
      diag.residual = residual(system, theta_dot, p_values);
      diag.solve_info = info;
      diag.theta_dot_norm = theta_dot.norm();
    }
    ++stage;
    return theta_dot;
  };

  try {
    Eigen::VectorXd theta_next;
    if (config.scheme == TimeScheme::Euler) {
      theta_next = euler_update(theta0, config.dt, velocity);
    } else {
      theta_next = midpoint_update(theta0, config.dt, velocity);
    }
    if (!theta_next.allFinite()) {
      throw std::runtime_error("non-finite parameters after the explicit update");
    }
    model.params().values() = theta_next;
  } catch (...) {
    model.params().values() = theta0;
    throw;
  }
  return diag;
}

namespace {

double relative_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = 1.0 + std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

EvolveStatus evolve(DensityModel& model, const FokkerPlanckProblem& problem,
                    const IntegratorConfig& config, const RegularizationPolicy& policy,
                    const EvolveOptions& options) {
  if (config.t_end > 0.0) config.validate();
  std::mt19937_64 rng = make_rng_stream(config.rng_seed, 0x7d);

  EvolveStatus status;
  double t = 0.0;
  double last_observed = -1.0;

  auto observe = [&](double time, const StepDiagnostics* diag) {
    if (options.observer) options.observer(time, model, diag);
    if (options.progress != nullptr) {
      (*options.progress) << "t=" << time
                          << " residual=" << (diag ? diag->residual.r_normalized : 0.0)
                          << " dt=" << (diag ? diag->dt : config.dt) << '\n';
    }
    last_observed = time;
  };

  observe(0.0, nullptr);
  if (options.checkpoint_writer && options.checkpoint_interval > 0.0) {
    options.checkpoint_writer(0.0, model);
  }

  const double t_end = config.t_end;
  const double boundary_tol = 1e-9 * std::max(1.0, t_end);
  double next_observe = options.observe_interval > 0.0
                            ? options.observe_interval
                            : std::numeric_limits<double>::infinity();
  double next_checkpoint = options.checkpoint_interval > 0.0
                               ? options.checkpoint_interval
                               : std::numeric_limits<double>::infinity();
  double dt_current = config.dt;
  IntegratorConfig step_cfg = config;

  while (t < t_end - boundary_tol) {
    double dt_step = std::min(dt_current, t_end - t);
    StepDiagnostics diag;
    try {
      if (config.adaptive) {
        // Step doubling: compare one dt_step against two halves; shrink on
        // failure, commit the finer result otherwise.
        for (;;) {
          DensityModel full = model;
          DensityModel halves = model;
          step_cfg.dt = dt_step;
          diag = tdvp_step(full, problem, step_cfg, policy, t, rng);
          step_cfg.dt = 0.5 * dt_step;
          tdvp_step(halves, problem, step_cfg, policy, t, rng);
          StepDiagnostics diag_half =
              tdvp_step(halves, problem, step_cfg, policy, t + 0.5 * dt_step, rng);
          const double err =
              relative_difference(full.params().values(), halves.params().values());
          if (err <= config.adaptive_tol || dt_step <= 1e-12) {
            model.params().values() = halves.params().values();
            diag.residual = diag_half.residual;
            diag.dt = dt_step;
            if (err < 0.25 * config.adaptive_tol) {
              dt_current = std::min(dt_step * 1.5, 16.0 * config.dt);
            }
            break;
          }
          dt_step *= 0.5;
          dt_current = dt_step;
        }
      } else {
        step_cfg.dt = dt_step;
        diag = tdvp_step(model, problem, step_cfg, policy, t, rng);
      }
    } catch (const std::exception& e) {
      if (options.checkpoint_writer) options.checkpoint_writer(t, model);
      status.completed = false;
      status.t_reached = t;
      status.message = e.what();
      return status;
    }
    t += dt_step;
    ++status.steps_taken;

    if (t >= next_observe - boundary_tol && t < t_end - boundary_tol) {
      observe(t, &diag);
      while (next_observe <= t + boundary_tol) next_observe += options.observe_interval;
    }
    if (t >= next_checkpoint - boundary_tol && options.checkpoint_writer) {
      options.checkpoint_writer(t, model);
      while (next_checkpoint <= t + boundary_tol) next_checkpoint += options.checkpoint_interval;
    }
    if (t >= t_end - boundary_tol) {
      observe(t, &diag);
    }
  }

  if (last_observed < t - boundary_tol || status.steps_taken == 0) {
    // t_end == 0 was already observed at the start; avoid duplicate rows.
    if (t > boundary_tol) observe(t, nullptr);
  }
  if (options.checkpoint_writer) options.checkpoint_writer(t, model);

  status.completed = true;
  status.t_reached = t;
  return status;
}

}  // namespace fpflow
