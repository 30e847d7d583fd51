#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <random>

#include "fpflow/param_vector.hpp"

namespace fpflow {

enum class LatentFamily { Gaussian, StudentT };
enum class CovarianceParam { CholeskyLower, IdentityPlusAAT };

struct LatentSpec {
  LatentFamily family = LatentFamily::Gaussian;
  int dim = 0;
  CovarianceParam covariance = CovarianceParam::IdentityPlusAAT;
};

/// Latent distribution resolved from one parameter state. Construction
/// rebuilds mu, the covariance factor and its Cholesky; afterwards all
/// methods are pure and safe to call concurrently.
///
/// Parameter groups (in layout order):
///   latent.mu          d entries
///   latent.cov_factor  d*d entries, the matrix A stored column-major.
///                      CholeskyLower uses L = tril(A) with Sigma = L L^T
///                      (strict upper entries are inert); IdentityPlusAAT
///                      uses Sigma = I + A A^T.
///   latent.nu_raw      1 entry, StudentT only; nu = exp(nu_raw)
class Latent {
 public:
  Latent(const LatentSpec& spec, const ParameterVector& params);

  int dim() const { return spec_.dim; }
  const LatentSpec& spec() const { return spec_; }

  double log_prob(const Eigen::VectorXd& z) const;
  Eigen::VectorXd sample(std::mt19937_64& rng) const;

  /// First and second derivatives of log pi with respect to z.
  void spatial_derivatives(const Eigen::VectorXd& z, Eigen::VectorXd& grad,
                           Eigen::MatrixXd& hess) const;

  /// Derivatives of log pi with respect to the latent parameters, written
  /// into `out` laid out as mu | cov_factor | [nu_raw] (size param_count(spec)).
  void param_grad(const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> out) const;

  const Eigen::VectorXd& mean() const { return mu_; }
  const Eigen::MatrixXd& covariance() const { return sigma_; }
  double nu() const;  // throws for Gaussian

  static Eigen::Index param_count(const LatentSpec& spec);
  static void append_groups(const LatentSpec& spec, ParameterLayout& layout);

  /// Writes parameters so the latent equals N(mu0, sigma0) or
  /// StudentT(nu0, mu0, sigma0). Throws if sigma0 is not representable
  /// under the chosen covariance parameterization.
  static void encode_initial(const LatentSpec& spec, const Eigen::VectorXd& mu0,
                             const Eigen::MatrixXd& sigma0, double nu0,
                             ParameterVector& params);

 private:
  LatentSpec spec_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd factor_;  // A as stored
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd sigma_inv_;
  Eigen::LLT<Eigen::MatrixXd> sigma_llt_;
  double log_det_sigma_ = 0.0;
  double nu_ = 0.0;

  double mahalanobis_sq(const Eigen::VectorXd& z) const;
};

}  // namespace fpflow
