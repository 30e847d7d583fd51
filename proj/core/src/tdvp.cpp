#include "fpflow/tdvp.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "fpflow/derivatives.hpp"
#include "fpflow/parallel.hpp"

namespace fpflow {

TdvpSystem assemble(Eigen::MatrixXd O, Eigen::VectorXd dt_log,
                    const Eigen::VectorXd& weights) {
  const Eigen::Index n = O.rows();
  if (n < 2) throw std::invalid_argument("assemble requires at least two samples");
  if (dt_log.size() != n) throw std::invalid_argument("assemble: O and dt_log disagree on n");

  TdvpSystem system;
  system.n_samples = n;
  system.O = std::move(O);
  system.dt_log = std::move(dt_log);

  Eigen::VectorXd w;
  if (weights.size() == 0) {
    w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  } else {
    if (weights.size() != n) throw std::invalid_argument("assemble: weight size mismatch");
    const double total = weights.sum();
    if (!(total > 0.0)) throw std::invalid_argument("assemble: weights must sum to > 0");
    w = weights / total;
  }

  const Eigen::RowVectorXd o_mean = w.transpose() * system.O;
  const double dt_mean = w.dot(system.dt_log);

  const Eigen::MatrixXd o_centered = system.O.rowwise() - o_mean;
  const Eigen::VectorXd dt_centered = system.dt_log.array() - dt_mean;

  const Eigen::Index k = system.O.cols();
  system.S.resize(k, k);
  system.S.setZero();
  system.S.selfadjointView<Eigen::Lower>().rankUpdate(
      (o_centered.array().colwise() * w.array().sqrt()).matrix().transpose(), 1.0);
  system.S.triangularView<Eigen::StrictlyUpper>() = system.S.transpose();
  system.F.noalias() = o_centered.transpose() * (w.asDiagonal() * dt_centered);
  return system;
}

Eigen::VectorXd solve(const TdvpSystem& system, const RegularizationPolicy& policy,
                      SolveInfo* info) {
  if (policy.svd_rel_cutoff < 0.0 || policy.tikhonov_shift < 0.0) {
    throw std::invalid_argument("regularization constants must be non-negative");
  }
  const Eigen::Index k = system.S.rows();
  Eigen::MatrixXd shifted = system.S;
  if (policy.tikhonov_shift > 0.0) {
    shifted.diagonal().array() += policy.tikhonov_shift;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shifted);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition of S failed");
  }
  const Eigen::VectorXd& evals = es.eigenvalues();
  const double max_ev = evals.cwiseAbs().maxCoeff();

  if (info != nullptr) {
    info->max_eigenvalue = evals(k - 1);
    info->spectrum = evals;
    info->n_truncated = 0;
    info->min_retained = 0.0;
    info->stationary_warning = false;
  }
  Eigen::VectorXd theta_dot = Eigen::VectorXd::Zero(k);
  if (!(max_ev > 0.0)) {
    if (info != nullptr) {
      info->stationary_warning = true;
      info->n_truncated = k;
    }
    return theta_dot;
  }

  const double cutoff = policy.svd_rel_cutoff * max_ev;
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * system.F;
  Eigen::Index truncated = 0;
  double min_retained = max_ev;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (evals(i) > cutoff && evals(i) > 0.0) {
      theta_dot += (proj(i) / evals(i)) * es.eigenvectors().col(i);
      min_retained = std::min(min_retained, evals(i));
    } else {
      ++truncated;
    }
  }
  if (info != nullptr) {
    info->n_truncated = truncated;
    info->min_retained = min_retained;
    info->stationary_warning = (truncated == k);
  }
  if (!theta_dot.allFinite()) {
    throw std::runtime_error("non-finite parameter update from the TDVP solve");
  }
  return theta_dot;
}

ResidualReport residual(const TdvpSystem& system, const Eigen::VectorXd& theta_dot,
                        const Eigen::VectorXd& p_values) {
  const Eigen::Index n = system.n_samples;
  if (p_values.size() != n) throw std::invalid_argument("residual: p_values size mismatch");
  const Eigen::VectorXd reconstruction = system.O * theta_dot;
  double r = 0.0;
  double denom = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p_dot = p_values(i) * system.dt_log(i);
    const double defect = p_dot - p_values(i) * reconstruction(i);
    r += defect * defect;
    denom += p_dot * p_dot;
  }
  r /= static_cast<double>(n);
  denom /= static_cast<double>(n);
  ResidualReport report;
  report.r = r;
  report.r_normalized = denom > 0.0 ? r / denom : 0.0;
  return report;
}

TdvpBatch evaluate_batch(const DensityModel& model, const FokkerPlanckProblem& problem,
                         double t, Eigen::Index n, std::mt19937_64& rng, int n_threads) {
  if (n < 1) throw std::invalid_argument("evaluate_batch: need at least one sample");
  // Latent draws come from a single stream; the expensive per-sample work is
  // pure and parallelized in evaluate_batch_at.
  Eigen::MatrixXd latent_points(n, model.dim());
  {
    const Latent lat = model.latent();
    for (Eigen::Index i = 0; i < n; ++i) latent_points.row(i) = lat.sample(rng).transpose();
  }
  return evaluate_batch_at(model, problem, t, latent_points, n_threads);
}

TdvpBatch evaluate_batch_at(const DensityModel& model, const FokkerPlanckProblem& problem,
                            double t, const Eigen::MatrixXd& latent_points, int n_threads) {
  const Eigen::Index n = latent_points.rows();
  if (n < 1) throw std::invalid_argument("evaluate_batch_at: need at least one sample");
  const int d = model.dim();
  if (latent_points.cols() != d) {
    throw std::invalid_argument("evaluate_batch_at: latent point dimension mismatch");
  }
  const Eigen::Index k = model.param_count();

  TdvpBatch batch;
  batch.O.resize(n, k);
  batch.dt_log.resize(n);
  batch.log_p.resize(n);
  batch.points.resize(n, d);

  parallel_for(n, n_threads, [&](int, Eigen::Index begin, Eigen::Index end) {
    DerivativeEngine engine(model);
    LogDerivatives derivs;
    Eigen::VectorXd x;
    Eigen::VectorXd z;
    for (Eigen::Index i = begin; i < end; ++i) {
      z = latent_points.row(i).transpose();
      engine.at_latent_point(z, x, derivs);
      batch.points.row(i) = x.transpose();
      batch.O.row(i) = derivs.param_grad.transpose();
      batch.log_p(i) = derivs.log_prob;
      batch.dt_log(i) = dt_log_prob_given(problem, x, t, derivs.grad_x, derivs.hess_x);
    }
  });
  return batch;
}

}  // namespace fpflow
