#pragma once

#include <Eigen/Core>
#include <random>

#include "fpflow/density_model.hpp"
#include "fpflow/pde.hpp"

namespace fpflow {

/// Linear system S theta_dot = F assembled from one sample batch.
/// S and F are connected (centered) sample correlators; O and dt_log are
/// retained for the residual.
struct TdvpSystem {
  Eigen::MatrixXd S;       // K x K, symmetric
  Eigen::VectorXd F;       // K
  Eigen::MatrixXd O;       // n x K variational derivatives
  Eigen::VectorXd dt_log;  // n
  Eigen::Index n_samples = 0;
};

struct RegularizationPolicy {
  double svd_rel_cutoff = 1e-8;
  double tikhonov_shift = 0.0;
};

struct SolveInfo {
  double max_eigenvalue = 0.0;
  double min_retained = 0.0;
  Eigen::Index n_truncated = 0;
  bool stationary_warning = false;  // S vanished; zero update returned
  Eigen::VectorXd spectrum;         // eigenvalues, ascending
};

struct ResidualReport {
  double r = 0.0;             // mean squared tangent-space defect of p-dot
  double r_normalized = 0.0;  // r relative to mean |p dt_log|^2
};

/// Connected correlators from per-sample rows: S = cov(O), F = cov(O, dt_log).
/// Optional `weights` (normalized internally) for non-uniform batches.
TdvpSystem assemble(Eigen::MatrixXd O, Eigen::VectorXd dt_log,
                    const Eigen::VectorXd& weights = Eigen::VectorXd());

/// Truncated pseudo-inverse solve of (S + shift I) theta_dot = F. Eigenvalues
/// below svd_rel_cutoff times the largest are discarded.
Eigen::VectorXd solve(const TdvpSystem& system, const RegularizationPolicy& policy,
                      SolveInfo* info = nullptr);

/// r = mean_i | p_i dt_log_i - p_i (O_i . theta_dot) |^2 with p_values the
/// densities at the same samples.
ResidualReport residual(const TdvpSystem& system, const Eigen::VectorXd& theta_dot,
                        const Eigen::VectorXd& p_values);

/// Per-sample quantities for one TDVP step: variational derivatives, PDE time
/// derivative of log p and log-densities at points drawn from the model.
struct TdvpBatch {
  Eigen::MatrixXd O;       // n x K
  Eigen::VectorXd dt_log;  // n
  Eigen::VectorXd log_p;   // n
  Eigen::MatrixXd points;  // n x d
};

/// Samples n points from the model and evaluates them, parallelized over
/// samples; the result is bitwise independent of the thread count.
TdvpBatch evaluate_batch(const DensityModel& model, const FokkerPlanckProblem& problem,
                         double t, Eigen::Index n, std::mt19937_64& rng, int n_threads);

/// Same evaluation at fixed latent draws (one row per sample).
TdvpBatch evaluate_batch_at(const DensityModel& model, const FokkerPlanckProblem& problem,
                            double t, const Eigen::MatrixXd& latent_points, int n_threads);

}  // namespace fpflow
