#include "fpflow/latent.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "fpflow/math_util.hpp"

namespace fpflow {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd reconstruct_sigma(const LatentSpec& spec, const Eigen::MatrixXd& factor) {
  if (spec.covariance == CovarianceParam::CholeskyLower) {
    const Eigen::MatrixXd lower = factor.triangularView<Eigen::Lower>();
    return lower * lower.transpose();
  }
  const int d = spec.dim;
  return Eigen::MatrixXd::Identity(d, d) + factor * factor.transpose();
}
}  // namespace

Latent::Latent(const LatentSpec& spec, const ParameterVector& params) : spec_(spec) {
  const int d = spec_.dim;
  if (d <= 0) throw std::invalid_argument("latent dimension must be positive");
  mu_ = params.group("latent.mu");
  factor_ = Eigen::Map<const Eigen::MatrixXd>(params.group("latent.cov_factor").data(), d, d);
  sigma_ = reconstruct_sigma(spec_, factor_);
  sigma_llt_.compute(sigma_);
  if (sigma_llt_.info() != Eigen::Success) {
    throw std::runtime_error("latent covariance reconstruction is not positive definite");
  }
  sigma_inv_ = sigma_llt_.solve(Eigen::MatrixXd::Identity(d, d));
  log_det_sigma_ = 2.0 * sigma_llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  if (spec_.family == LatentFamily::StudentT) {
    if (!params.layout().has_group("latent.nu_raw")) {
      throw std::invalid_argument("StudentT latent requires a latent.nu_raw group");
    }
    nu_ = std::exp(params.group("latent.nu_raw")(0));
  } else if (params.layout().has_group("latent.nu_raw")) {
    throw std::invalid_argument("Gaussian latent forbids a latent.nu_raw group");
  }
}

double Latent::mahalanobis_sq(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd q = sigma_llt_.matrixL().solve(z - mu_);
  return q.squaredNorm();
}

double Latent::log_prob(const Eigen::VectorXd& z) const {
  const int d = spec_.dim;
  const double m = mahalanobis_sq(z);
  if (spec_.family == LatentFamily::Gaussian) {
    return -0.5 * (d * kLog2Pi + log_det_sigma_ + m);
  }
  const double nu = nu_;
  const double half_nd = 0.5 * (nu + d);
  return std::lgamma(half_nd) - std::lgamma(0.5 * nu) -
         0.5 * d * std::log(nu * std::numbers::pi) - 0.5 * log_det_sigma_ -
         half_nd * std::log1p(m / nu);
}

Eigen::VectorXd Latent::sample(std::mt19937_64& rng) const {
  const int d = spec_.dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd g(d);
  for (int i = 0; i < d; ++i) g(i) = normal(rng);
  Eigen::VectorXd scaled = sigma_llt_.matrixL() * g;
  if (spec_.family == LatentFamily::StudentT) {
    std::chi_squared_distribution<double> chi2(nu_);
    scaled *= std::sqrt(nu_ / chi2(rng));
  }
  return mu_ + scaled;
}

void Latent::spatial_derivatives(const Eigen::VectorXd& z, Eigen::VectorXd& grad,
                                 Eigen::MatrixXd& hess) const {
  const Eigen::VectorXd u = sigma_inv_ * (z - mu_);
  if (spec_.family == LatentFamily::Gaussian) {
    grad = -u;
    hess = -sigma_inv_;
    return;
  }
  const double nu = nu_;
  const double m = (z - mu_).dot(u);
  const double c = (nu + spec_.dim) / (nu + m);
  grad = -c * u;
  hess = -c * sigma_inv_ + (2.0 * (nu + spec_.dim) / ((nu + m) * (nu + m))) * u * u.transpose();
}

void Latent::param_grad(const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> out) const {
  const int d = spec_.dim;
  const Eigen::VectorXd diff = z - mu_;
  const Eigen::VectorXd u = sigma_inv_ * diff;
  const double m = diff.dot(u);

  double quad_weight = 1.0;  // coefficient of the quadratic term in d(log pi)
  if (spec_.family == LatentFamily::StudentT) {
    quad_weight = (nu_ + d) / (nu_ + m);
  }

  // d(log pi)/d(mu) = quad_weight * Sigma^{-1} (z - mu)
  out.segment(0, d) = quad_weight * u;

  // d(log pi)/d(Sigma) = -1/2 Sigma^{-1} + quad_weight/2 * u u^T, chained to A.
  const Eigen::MatrixXd g_sigma = 0.5 * (quad_weight * u * u.transpose() - sigma_inv_);
  Eigen::MatrixXd g_factor;
  if (spec_.covariance == CovarianceParam::CholeskyLower) {
    const Eigen::MatrixXd lower = factor_.triangularView<Eigen::Lower>();
    g_factor = (2.0 * g_sigma * lower).triangularView<Eigen::Lower>();
  } else {
    g_factor = 2.0 * g_sigma * factor_;
  }
  out.segment(d, d * d) = Eigen::Map<const Eigen::VectorXd>(g_factor.data(), d * d);

  if (spec_.family == LatentFamily::StudentT) {
    const double nu = nu_;
    const double dpsi = 0.5 * (digamma(0.5 * (nu + d)) - digamma(0.5 * nu));
    const double d_nu = dpsi - 0.5 * d / nu - 0.5 * std::log1p(m / nu) +
                        0.5 * (nu + d) * m / (nu * (nu + m));
    out(d + d * d) = nu * d_nu;  // chain through nu = exp(nu_raw)
  }
}

double Latent::nu() const {
  if (spec_.family != LatentFamily::StudentT) {
    throw std::logic_error("nu is only defined for a StudentT latent");
  }
  return nu_;
}

Eigen::Index Latent::param_count(const LatentSpec& spec) {
  const Eigen::Index d = spec.dim;
  return d + d * d + (spec.family == LatentFamily::StudentT ? 1 : 0);
}

void Latent::append_groups(const LatentSpec& spec, ParameterLayout& layout) {
  const Eigen::Index d = spec.dim;
  layout.add_group("latent.mu", d);
  layout.add_group("latent.cov_factor", d * d);
  if (spec.family == LatentFamily::StudentT) {
    layout.add_group("latent.nu_raw", 1);
  }
}

void Latent::encode_initial(const LatentSpec& spec, const Eigen::VectorXd& mu0,
                            const Eigen::MatrixXd& sigma0, double nu0,
                            ParameterVector& params) {
  const int d = spec.dim;
  if (mu0.size() != d || sigma0.rows() != d || sigma0.cols() != d) {
    throw std::invalid_argument("initial distribution dimensions do not match latent spec");
  }
  params.group("latent.mu") = mu0;

  Eigen::MatrixXd factor(d, d);
  if (spec.covariance == CovarianceParam::CholeskyLower) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma0);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("initial covariance is not positive definite");
    }
    factor = llt.matrixL();
  } else {
    // Sigma = I + A A^T requires Sigma - I to be positive semi-definite.
    const Eigen::MatrixXd excess = sigma0 - Eigen::MatrixXd::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(excess);
    if (es.eigenvalues().minCoeff() < -1e-10) {
      throw std::invalid_argument(
          "initial covariance has directions below identity; "
          "use the CholeskyLower parameterization instead");
    }
    factor = es.eigenvectors() *
             es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
             es.eigenvectors().transpose();
  }
  params.group("latent.cov_factor") =
      Eigen::Map<const Eigen::VectorXd>(factor.data(), d * d);

  if (spec.family == LatentFamily::StudentT) {
    if (!(nu0 > 0.0)) throw std::invalid_argument("StudentT initial nu must be positive");
    params.group("latent.nu_raw")(0) = std::log(nu0);
  }
}

}  // namespace fpflow
