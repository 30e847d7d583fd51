#pragma once

#include <Eigen/Core>
#include <functional>

#include "fpflow/density_model.hpp"

namespace fpflow {

/// Drift-diffusion problem d/dt p = -div(mu p) + sum_ij D_ij d_i d_j p with a
/// spatially constant diffusion matrix D. The drift divergence is supplied
/// analytically by the constructors.
class FokkerPlanckProblem {
 public:
  using DriftFn = std::function<void(const Eigen::VectorXd& x, double t, Eigen::VectorXd& mu)>;
  using DivergenceFn = std::function<double(const Eigen::VectorXd& x, double t)>;

  FokkerPlanckProblem(int dim, DriftFn drift, DivergenceFn divergence,
                      Eigen::MatrixXd diffusion);

  int dim() const { return dim_; }
  const Eigen::MatrixXd& diffusion() const { return diffusion_; }
  void drift(const Eigen::VectorXd& x, double t, Eigen::VectorXd& mu) const {
    drift_(x, t, mu);
  }
  double drift_divergence(const Eigen::VectorXd& x, double t) const {
    return divergence_(x, t);
  }

 private:
  int dim_;
  DriftFn drift_;
  DivergenceFn divergence_;
  Eigen::MatrixXd diffusion_;
};

/// Heat equation d/dt p = D laplace(p): zero drift, D * identity diffusion.
FokkerPlanckProblem make_heat_problem(int dim, double diffusion_constant = 1.0);

/// N coupled damped harmonic oscillators in contact with per-oscillator heat
/// baths; phase-space coordinates ordered (x_1..x_N, p_1..p_N), d = 2N.
struct PhaseSpaceParams {
  int n_oscillators = 3;
  double mass = 1.0;
  double omega = 1.0;
  double coupling = 1.0;  // ring coupling strength k
  double damping = 1.0;   // gamma
  Eigen::VectorXd k_b_temps;

  int dim() const { return 2 * n_oscillators; }
  void validate() const;
};

FokkerPlanckProblem make_phase_space_problem(const PhaseSpaceParams& params);

/// H = sum_i 1/2 (m w^2 x_i^2 + p_i^2 / m) + k sum_i (x_i - x_{(i+1) mod N})^2
double hamiltonian(const PhaseSpaceParams& params, const Eigen::VectorXd& pos,
                   const Eigen::VectorXd& mom);
void hamiltonian_grad(const PhaseSpaceParams& params, const Eigen::VectorXd& pos,
                      const Eigen::VectorXd& mom, Eigen::VectorXd& dh_dx,
                      Eigen::VectorXd& dh_dp);

/// (d/dt p)/p at x implied by the problem, evaluated in logarithmic form:
///   -div(mu) - mu . grad(log p) + sum_ij D_ij (hess_ij + grad_i grad_j).
double dt_log_prob_given(const FokkerPlanckProblem& problem, const Eigen::VectorXd& x,
                         double t, const Eigen::VectorXd& grad_log,
                         const Eigen::MatrixXd& hess_log);

double dt_log_prob(const FokkerPlanckProblem& problem, const DensityModel& model,
                   const Eigen::VectorXd& x, double t);

}  // namespace fpflow
