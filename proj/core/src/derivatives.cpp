#include "fpflow/derivatives.hpp"

namespace fpflow {

using flow_detail::BlockParamView;

DerivativeEngine::DerivativeEngine(const DensityModel& model)
    : model_(&model), latent_(model.latent()),
      latent_param_count_(Latent::param_count(model.latent_spec())) {}

void DerivativeEngine::at_point(const Eigen::VectorXd& x, LogDerivatives& out) {
  model_->inverse_trace(x, trace_);
  derive_from_trace(out);
}

void DerivativeEngine::at_latent_point(const Eigen::VectorXd& z, Eigen::VectorXd& x_out,
                                       LogDerivatives& out) {
  model_->forward_trace(z, trace_);
  x_out = trace_.x;
  derive_from_trace(out);
}

void DerivativeEngine::derive_from_trace(LogDerivatives& out) {
  const int d = model_->dim();
  const Eigen::Index n_params = model_->param_count();
  const auto& blocks = model_->blocks();
  const auto& views = model_->block_views();
  const Eigen::VectorXd& theta = model_->params().values();

  out.param_grad.setZero(n_params);
  latent_.param_grad(trace_.z, out.param_grad.segment(0, latent_param_count_));
  latent_.spatial_derivatives(trace_.z, latent_grad_, latent_hess_);
  out.log_prob = latent_.log_prob(trace_.z) - trace_.forward_logdet;

  // Reverse accumulation for the subnet parameters, walking from the latent
  // side toward x with the adjoint of log p.
  adjoint_ = latent_grad_;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    flow_detail::block_backward(blocks[i], views[i],
                                theta.segment(model_->block_offset(i), views[i].total),
                                trace_.blocks[i], adjoint_,
                                out.param_grad.segment(model_->block_offset(i), views[i].total),
                                scratch_);
  }

  // Forward sensitivities of z(x) and of the inverse log-determinant.
  point_jets_.resize(d, d);
  point_jets_.val = trace_.x;
  point_jets_.grad = Eigen::MatrixXd::Identity(d, d);
  point_jets_.hess.setZero();
  logdet_jet_.resize(1, d);
  logdet_jet_.val.setZero();
  logdet_jet_.grad.setZero();
  logdet_jet_.hess.setZero();
  for (std::size_t i = blocks.size(); i-- > 0;) {
    flow_detail::block_jet_inverse(blocks[i], views[i],
                                   theta.segment(model_->block_offset(i), views[i].total),
                                   trace_.blocks[i], point_jets_, logdet_jet_, scratch_);
  }

  out.grad_x = point_jets_.grad.transpose() * latent_grad_;
  out.grad_x += logdet_jet_.grad.row(0).transpose();
  out.hess_x = point_jets_.grad.transpose() * latent_hess_ * point_jets_.grad;
  out.hess_x += logdet_jet_.hess_block(0);
  for (int i = 0; i < d; ++i) {
    out.hess_x += latent_grad_(i) * point_jets_.hess_block(i);
  }
}

Eigen::VectorXd param_grad_log_prob(const DensityModel& model, const Eigen::VectorXd& x) {
  DerivativeEngine engine(model);
  LogDerivatives derivs;
  engine.at_point(x, derivs);
  return derivs.param_grad;
}

void spatial_derivatives(const DensityModel& model, const Eigen::VectorXd& x,
                         Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  DerivativeEngine engine(model);
  LogDerivatives derivs;
  engine.at_point(x, derivs);
  grad = derivs.grad_x;
  hess = derivs.hess_x;
}

LogDerivatives log_derivatives(const DensityModel& model, const Eigen::VectorXd& x) {
  DerivativeEngine engine(model);
  LogDerivatives derivs;
  engine.at_point(x, derivs);
  return derivs;
}

}  // namespace fpflow
