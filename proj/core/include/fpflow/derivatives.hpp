#pragma once

#include <Eigen/Core>

#include "fpflow/density_model.hpp"

namespace fpflow {

/// All derivatives of log p at one point: the variational derivative
/// O_k = d log p / d theta_k, the spatial gradient and the spatial Hessian.
struct LogDerivatives {
  Eigen::VectorXd param_grad;  // length K
  Eigen::VectorXd grad_x;      // length d
  Eigen::MatrixXd hess_x;      // d x d, symmetric
  double log_prob = 0.0;
};

/// Reusable evaluator bound to one parameter state of a model. Construction
/// resolves the latent; afterwards evaluation is pure, so distinct engines
/// may run concurrently on partitioned batches. Invalidated by parameter
/// writes.
class DerivativeEngine {
 public:
  explicit DerivativeEngine(const DensityModel& model);

  /// Derivatives at x (runs the inverse map internally).
  void at_point(const Eigen::VectorXd& x, LogDerivatives& out);

  /// Derivatives at x = f(z) for a latent draw z; writes x into `x_out`.
  void at_latent_point(const Eigen::VectorXd& z, Eigen::VectorXd& x_out, LogDerivatives& out);

 private:
  void derive_from_trace(LogDerivatives& out);

  const DensityModel* model_;
  Latent latent_;
  Eigen::Index latent_param_count_;
  flow_detail::FlowTrace trace_;
  flow_detail::BlockScratch scratch_;
  flow_detail::JetArray point_jets_, logdet_jet_;
  Eigen::VectorXd adjoint_, latent_grad_;
  Eigen::MatrixXd latent_hess_;
};

Eigen::VectorXd param_grad_log_prob(const DensityModel& model, const Eigen::VectorXd& x);
void spatial_derivatives(const DensityModel& model, const Eigen::VectorXd& x,
                         Eigen::VectorXd& grad, Eigen::MatrixXd& hess);
LogDerivatives log_derivatives(const DensityModel& model, const Eigen::VectorXd& x);

}  // namespace fpflow
