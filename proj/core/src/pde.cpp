#include "fpflow/pde.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "fpflow/derivatives.hpp"

namespace fpflow {

FokkerPlanckProblem::FokkerPlanckProblem(int dim, DriftFn drift, DivergenceFn divergence,
                                         Eigen::MatrixXd diffusion)
    : dim_(dim), drift_(std::move(drift)), divergence_(std::move(divergence)),
      diffusion_(std::move(diffusion)) {
  if (dim_ <= 0) throw std::invalid_argument("problem dimension must be positive");
  if (diffusion_.rows() != dim_ || diffusion_.cols() != dim_) {
    throw std::invalid_argument("diffusion matrix dimension mismatch");
  }
  if (!diffusion_.isApprox(diffusion_.transpose(), 1e-12)) {
    throw std::invalid_argument("diffusion matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diffusion_);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw std::invalid_argument("diffusion matrix must be positive semi-definite");
  }
}

FokkerPlanckProblem make_heat_problem(int dim, double diffusion_constant) {
  if (diffusion_constant < 0.0) {
    throw std::invalid_argument("heat diffusion constant must be non-negative");
  }
  return FokkerPlanckProblem(
      dim,
      [](const Eigen::VectorXd&, double, Eigen::VectorXd& mu) { mu.setZero(); },
      [](const Eigen::VectorXd&, double) { return 0.0; },
      diffusion_constant * Eigen::MatrixXd::Identity(dim, dim));
}

void PhaseSpaceParams::validate() const {
  if (n_oscillators < 1) throw std::invalid_argument("need at least one oscillator");
  if (!(mass > 0.0) || !(omega > 0.0)) throw std::invalid_argument("m and omega must be positive");
  if (damping < 0.0) throw std::invalid_argument("damping must be non-negative");
  if (k_b_temps.size() != n_oscillators) {
    throw std::invalid_argument("temperature vector must have one entry per oscillator");
  }
  if ((k_b_temps.array() < 0.0).any()) {
    throw std::invalid_argument("temperatures must be non-negative");
  }
}

double hamiltonian(const PhaseSpaceParams& params, const Eigen::VectorXd& pos,
                   const Eigen::VectorXd& mom) {
  const int n = params.n_oscillators;
  if (pos.size() != n || mom.size() != n) {
    throw std::invalid_argument("hamiltonian: dimension mismatch");
  }
  double h = 0.0;
  for (int i = 0; i < n; ++i) {
    h += 0.5 * (params.mass * params.omega * params.omega * pos(i) * pos(i) +
                mom(i) * mom(i) / params.mass);
    const double gap = pos(i) - pos((i + 1) % n);
    h += params.coupling * gap * gap;
  }
  return h;
}

void hamiltonian_grad(const PhaseSpaceParams& params, const Eigen::VectorXd& pos,
                      const Eigen::VectorXd& mom, Eigen::VectorXd& dh_dx,
                      Eigen::VectorXd& dh_dp) {
  const int n = params.n_oscillators;
  dh_dx.resize(n);
  dh_dp.resize(n);
  for (int i = 0; i < n; ++i) {
    const double next_gap = pos(i) - pos((i + 1) % n);
    const double prev_gap = pos((i - 1 + n) % n) - pos(i);
    dh_dx(i) = params.mass * params.omega * params.omega * pos(i) +
               2.0 * params.coupling * (next_gap - prev_gap);
    dh_dp(i) = mom(i) / params.mass;
  }
}

FokkerPlanckProblem make_phase_space_problem(const PhaseSpaceParams& params) {
  params.validate();
  const int n = params.n_oscillators;
  const int d = params.dim();
  Eigen::MatrixXd diffusion = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    diffusion(n + i, n + i) = params.damping * params.mass * params.k_b_temps(i);
  }
  auto drift = [params](const Eigen::VectorXd& x, double, Eigen::VectorXd& mu) {
    const int n_osc = params.n_oscillators;
    Eigen::VectorXd dh_dx, dh_dp;
    hamiltonian_grad(params, x.head(n_osc), x.tail(n_osc), dh_dx, dh_dp);
    mu.resize(2 * n_osc);
    mu.head(n_osc) = dh_dp;
    mu.tail(n_osc) = -params.damping * x.tail(n_osc) - dh_dx;
  };
  auto divergence = [params](const Eigen::VectorXd&, double) {
    return -params.damping * params.n_oscillators;
  };
  return FokkerPlanckProblem(d, std::move(drift), std::move(divergence),
                             std::move(diffusion));
}

double dt_log_prob_given(const FokkerPlanckProblem& problem, const Eigen::VectorXd& x,
                         double t, const Eigen::VectorXd& grad_log,
                         const Eigen::MatrixXd& hess_log) {
  Eigen::VectorXd mu(problem.dim());
  problem.drift(x, t, mu);
  const Eigen::MatrixXd& diff = problem.diffusion();
  double result = -problem.drift_divergence(x, t) - mu.dot(grad_log);
  result += (diff.array() * (hess_log + grad_log * grad_log.transpose()).array()).sum();
  if (!std::isfinite(result)) {
    throw std::runtime_error("non-finite dt log p; parameters are unstable");
  }
  return result;
}

double dt_log_prob(const FokkerPlanckProblem& problem, const DensityModel& model,
                   const Eigen::VectorXd& x, double t) {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  spatial_derivatives(model, x, grad, hess);
  return dt_log_prob_given(problem, x, t, grad, hess);
}

}  // namespace fpflow
