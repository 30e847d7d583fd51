#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <random>

#include "fpflow/ensemble.hpp"
#include "fpflow/pde.hpp"

namespace fpflow {

enum class SdeScheme { EulerMaruyama, StochasticHeun };

struct SdeConfig {
  double dt = 1e-4;
  double t_end = 1.0;
  std::uint64_t rng_seed = 0;
  SdeScheme scheme = SdeScheme::EulerMaruyama;
};

/// Integrates the particle ensemble along the stochastic dynamics matching
/// the phase-space Fokker-Planck problem:
///   dx_i = dH/dp_i dt
///   dp_i = -(gamma p_i + dH/dx_i) dt + sqrt(2 m gamma kT_i) dW_i.
/// Each particle owns an RNG stream derived from the seed, so the result does
/// not depend on evaluation order. The observer fires at t = 0, then after
/// every step that crosses `observe_interval` (0 = only start/end), and at
/// t_end.
ParticleEnsemble sde_evolve(
    const PhaseSpaceParams& params, const ParticleEnsemble& initial, const SdeConfig& config,
    double observe_interval = 0.0,
    const std::function<void(double, const ParticleEnsemble&)>& observer = {});

enum class RadialScheme { ExplicitEuler, CrankNicolson };

struct RadialGridConfig {
  double delta = 4e-3;      // grid spacing
  double r_max = 100.0;     // cutoff radius
  int lhopital_cells = 10;  // cells where (d-1)/r d_r is replaced by (d-1) d_r^2
  RadialScheme scheme = RadialScheme::CrankNicolson;
  double dt_grid = 1e-3;

  Eigen::Index n_cells() const;
  void validate() const;
};

/// Radial density profile on cell centers r_i = (i + 1/2) delta.
struct RadialProfile {
  Eigen::VectorXd p;
  int ambient_dim = 0;
  double delta = 0.0;
  double time = 0.0;
};

RadialProfile radial_profile_gaussian(int dim, const RadialGridConfig& config);
RadialProfile radial_profile_student_t(int dim, double nu, const RadialGridConfig& config);

/// Total mass of the profile under the spherical quadrature.
double radial_mass(const RadialProfile& profile);
/// Differential entropy -integral p log p (p log p taken as 0 where p <= 0).
double radial_entropy(const RadialProfile& profile);

/// Evolves d/dt p = D (d_r^2 + (d-1)/r d_r) p on the grid up to t_end, with
/// the L'Hopital replacement on the first `lhopital_cells` cells. The explicit
/// scheme refuses dt_grid above the stability bound delta^2/(2 D (1+(d-1)/2)).
RadialProfile radial_heat_evolve(const RadialProfile& initial, double diffusion,
                                 const RadialGridConfig& config, double t_end);

void save_radial_profile(const RadialProfile& profile, double r_max,
                         const std::filesystem::path& path);

/// Mean and covariance of the heat-equation solution for Gaussian initial
/// data, with its closed-form entropy.
struct GaussianHeatState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double entropy = 0.0;
};

GaussianHeatState gaussian_heat_oracle(const Eigen::MatrixXd& sigma0,
                                       const Eigen::VectorXd& mu0, double diffusion,
                                       double t);

/// Thermal steady state of the uncoupled (k = 0), uniform-temperature
/// phase-space problem.
struct GibbsSteadyState {
  Eigen::MatrixXd covariance;  // diag(kT/(m w^2) I_N, m kT I_N)
  double entropy = 0.0;
  double position_variance = 0.0;
  double momentum_variance = 0.0;

  /// P(|z| <= r) for the isotropic steady state; requires the position and
  /// momentum variances to coincide.
  double ball_prob(double radius) const;
};

GibbsSteadyState gibbs_oracle(const PhaseSpaceParams& params);

}  // namespace fpflow
