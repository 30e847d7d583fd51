#include "fpflow/reference.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "fpflow/csv.hpp"
#include "fpflow/math_util.hpp"

namespace fpflow {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

ParticleEnsemble sde_evolve(const PhaseSpaceParams& params, const ParticleEnsemble& initial,
                            const SdeConfig& config, double observe_interval,
                            const std::function<void(double, const ParticleEnsemble&)>& observer) {
  params.validate();
  if (!(config.dt > 0.0)) throw std::invalid_argument("sde dt must be positive");
  const int n_osc = params.n_oscillators;
  if (initial.dim() != params.dim()) {
    throw std::invalid_argument("sde ensemble dimension does not match the problem");
  }

  const long n_steps = static_cast<long>(std::llround(config.t_end / config.dt));
  Eigen::VectorXd noise_amp(n_osc);
  for (int i = 0; i < n_osc; ++i) {
    noise_amp(i) = std::sqrt(2.0 * params.mass * params.damping * params.k_b_temps(i));
  }
  const double sqrt_dt = std::sqrt(config.dt);

  ParticleEnsemble ensemble = initial;
  ensemble.seed = config.rng_seed;
  const Eigen::Index n = ensemble.size();

  if (observer) observer(0.0, ensemble);
  const long observe_stride =
      observe_interval > 0.0 ? static_cast<long>(std::llround(observe_interval / config.dt))
                             : n_steps + 1;

  // One RNG stream per particle keeps trajectories independent of the
  // evaluation order; a step index in the stream tag would break resumption,
  // so streams persist across the whole run.
  std::vector<std::mt19937_64> streams;
  streams.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    streams.push_back(make_rng_stream(config.rng_seed, 0x5de0000 + static_cast<std::uint64_t>(i)));
  }

  Eigen::VectorXd pos(n_osc), mom(n_osc), dh_dx(n_osc), dh_dp(n_osc);
  Eigen::VectorXd noise(n_osc), pos_mid(n_osc), mom_mid(n_osc), dh_dx2(n_osc), dh_dp2(n_osc);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (long step = 1; step <= n_steps; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      pos = ensemble.points.row(i).head(n_osc).transpose();
      mom = ensemble.points.row(i).tail(n_osc).transpose();
      auto& rng = streams[i];
      for (int j = 0; j < n_osc; ++j) noise(j) = noise_amp(j) * sqrt_dt * normal(rng);

      hamiltonian_grad(params, pos, mom, dh_dx, dh_dp);
      if (config.scheme == SdeScheme::EulerMaruyama) {
        pos += dh_dp * config.dt;
        mom += -(params.damping * mom + dh_dx) * config.dt + noise;
      } else {
        // Stochastic Heun (additive noise): average the drift over the
        // predictor and corrector states, same Wiener increment.
        pos_mid = pos + dh_dp * config.dt;
        mom_mid = mom - (params.damping * mom + dh_dx) * config.dt + noise;
        hamiltonian_grad(params, pos_mid, mom_mid, dh_dx2, dh_dp2);
        pos += 0.5 * config.dt * (dh_dp + dh_dp2);
        mom += -0.5 * config.dt *
                   (params.damping * (mom + mom_mid) + dh_dx + dh_dx2) +
               noise;
      }
      ensemble.points.row(i).head(n_osc) = pos.transpose();
      ensemble.points.row(i).tail(n_osc) = mom.transpose();
    }
    if (observer && observe_stride > 0 && step % observe_stride == 0 && step != n_steps) {
      observer(step * config.dt, ensemble);
    }
  }
  if (observer && n_steps > 0) observer(n_steps * config.dt, ensemble);
  return ensemble;
}

Eigen::Index RadialGridConfig::n_cells() const {
  return static_cast<Eigen::Index>(std::llround(r_max / delta));
}

void RadialGridConfig::validate() const {
  if (!(delta > 0.0) || !(r_max > 0.0)) {
    throw std::invalid_argument("radial grid requires positive delta and r_max");
  }
  const double cells = r_max / delta;
  if (std::abs(cells - std::llround(cells)) > 1e-9) {
    throw std::invalid_argument("r_max must be an integer multiple of delta");
  }
  if (lhopital_cells < 1) throw std::invalid_argument("lhopital_cells must be >= 1");
  if (!(dt_grid > 0.0)) throw std::invalid_argument("dt_grid must be positive");
}

RadialProfile radial_profile_gaussian(int dim, const RadialGridConfig& config) {
  config.validate();
  RadialProfile profile;
  profile.ambient_dim = dim;
  profile.delta = config.delta;
  const Eigen::Index m = config.n_cells();
  profile.p.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = (i + 0.5) * config.delta;
    profile.p(i) = std::exp(-0.5 * (dim * kLog2Pi + r * r));
  }
  return profile;
}

RadialProfile radial_profile_student_t(int dim, double nu, const RadialGridConfig& config) {
  config.validate();
  if (!(nu > 0.0)) throw std::invalid_argument("student-t nu must be positive");
  RadialProfile profile;
  profile.ambient_dim = dim;
  profile.delta = config.delta;
  const Eigen::Index m = config.n_cells();
  profile.p.resize(m);
  const double log_norm = std::lgamma(0.5 * (nu + dim)) - std::lgamma(0.5 * nu) -
                          0.5 * dim * std::log(nu * std::numbers::pi);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = (i + 0.5) * config.delta;
    profile.p(i) = std::exp(log_norm - 0.5 * (nu + dim) * std::log1p(r * r / nu));
  }
  return profile;
}

double radial_mass(const RadialProfile& profile) {
  const double area = unit_sphere_area(profile.ambient_dim);
  double mass = 0.0;
  for (Eigen::Index i = 0; i < profile.p.size(); ++i) {
    const double r = (i + 0.5) * profile.delta;
    mass += profile.p(i) * std::pow(r, profile.ambient_dim - 1);
  }
  return area * mass * profile.delta;
}

double radial_entropy(const RadialProfile& profile) {
  const double area = unit_sphere_area(profile.ambient_dim);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < profile.p.size(); ++i) {
    const double p = profile.p(i);
    if (p <= 0.0) continue;
    const double r = (i + 0.5) * profile.delta;
    acc -= p * std::log(p) * std::pow(r, profile.ambient_dim - 1);
  }
  return area * acc * profile.delta;
}

namespace {

// Tridiagonal solve (Thomas algorithm); diag/upper/lower are the matrix bands.
void solve_tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                       const Eigen::VectorXd& upper, Eigen::VectorXd& rhs,
                       Eigen::VectorXd& scratch) {
  const Eigen::Index m = diag.size();
  scratch.resize(m);
  double pivot = diag(0);
  rhs(0) /= pivot;
  for (Eigen::Index i = 1; i < m; ++i) {
    scratch(i) = upper(i - 1) / pivot;
    pivot = diag(i) - lower(i) * scratch(i);
    rhs(i) = (rhs(i) - lower(i) * rhs(i - 1)) / pivot;
  }
  for (Eigen::Index i = m - 2; i >= 0; --i) {
    rhs(i) -= scratch(i + 1) * rhs(i + 1);
  }
}

}  // namespace

RadialProfile radial_heat_evolve(const RadialProfile& initial, double diffusion,
                                 const RadialGridConfig& config, double t_end) {
  config.validate();
  if (diffusion < 0.0) throw std::invalid_argument("diffusion must be non-negative");
  if (t_end < 0.0) throw std::invalid_argument("t_end must be non-negative");
  RadialProfile profile = initial;
  if (diffusion == 0.0 || t_end == 0.0) return profile;

  const int d = profile.ambient_dim;
  const double delta = profile.delta;
  const Eigen::Index m = profile.p.size();

  if (config.scheme == RadialScheme::ExplicitEuler) {
    const double stability = delta * delta / (2.0 * diffusion * (1.0 + 0.5 * (d - 1)));
    if (config.dt_grid > stability) {
      throw std::invalid_argument("explicit radial scheme is unstable; need dt_grid <= " +
                                  std::to_string(stability));
    }
  }

  // Operator bands for L = D (d_r^2 + (d-1)/r d_r). Away from the origin the
  // operator is discretized in flux form, r^{1-d} d_r (r^{d-1} d_r p), with
  // face weights (i delta)^{d-1} midway between the cell centers; the radial
  // quadrature then telescopes and mass is conserved up to the outer
  // boundary flux. The first lhopital_cells cells use the replacement
  // L = D d d_r^2 with the symmetry ghost p_{-1} = p_0.
  Eigen::VectorXd lower(m), diag(m), upper(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i < config.lhopital_cells) {
      const double second = diffusion * static_cast<double>(d) / (delta * delta);
      lower(i) = second;
      diag(i) = -2.0 * second;
      upper(i) = second;
    } else {
      const double center_w = std::pow((i + 0.5) * delta, d - 1);
      const double left_w = std::pow(i * delta, d - 1);
      const double right_w = std::pow((i + 1) * delta, d - 1);
      const double scale = diffusion / (center_w * delta * delta);
      lower(i) = scale * left_w;
      upper(i) = scale * right_w;
      diag(i) = -scale * (left_w + right_w);
    }
  }
  // Fold the symmetry ghost into the first row.
  diag(0) += lower(0);

  const long n_steps = static_cast<long>(std::ceil(t_end / config.dt_grid - 1e-12));
  Eigen::VectorXd& p = profile.p;
  Eigen::VectorXd lp(m), rhs(m), scratch(m);
  Eigen::VectorXd cn_lower(m), cn_diag(m), cn_upper(m);

  auto apply_operator = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double left = (i > 0) ? v(i - 1) : 0.0;  // ghost folded into diag(0)
      const double right = (i + 1 < m) ? v(i + 1) : 0.0;
      out(i) = lower(i) * left + diag(i) * v(i) + upper(i) * right;
    }
  };

  double remaining = t_end;
  for (long step = 0; step < n_steps; ++step) {
    const double dt = std::min(config.dt_grid, remaining);
    remaining -= dt;
    if (config.scheme == RadialScheme::ExplicitEuler) {
      apply_operator(p, lp);
      p += dt * lp;
    } else {
      // (I - dt/2 L) p^{n+1} = (I + dt/2 L) p^n
      apply_operator(p, lp);
      rhs = p + 0.5 * dt * lp;
      cn_lower = -0.5 * dt * lower;
      cn_diag = Eigen::VectorXd::Ones(m) - 0.5 * dt * diag;
      cn_upper = -0.5 * dt * upper;
      solve_tridiagonal(cn_lower, cn_diag, cn_upper, rhs, scratch);
      p = rhs;
    }
  }
  profile.time = initial.time + t_end;
  return profile;
}

void save_radial_profile(const RadialProfile& profile, double r_max,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write radial profile: " + path.string());
  out << "# d=" << profile.ambient_dim << " delta=" << format_g17(profile.delta)
      << " r_max=" << format_g17(r_max) << " t=" << format_g17(profile.time) << '\n';
  for (Eigen::Index i = 0; i < profile.p.size(); ++i) {
    out << format_g17(profile.p(i)) << '\n';
  }
}

GaussianHeatState gaussian_heat_oracle(const Eigen::MatrixXd& sigma0,
                                       const Eigen::VectorXd& mu0, double diffusion,
                                       double t) {
  const int d = static_cast<int>(mu0.size());
  if (sigma0.rows() != d || sigma0.cols() != d) {
    throw std::invalid_argument("gaussian_heat_oracle: dimension mismatch");
  }
  GaussianHeatState state;
  state.mean = mu0;
  state.covariance = sigma0 + 2.0 * diffusion * t * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(state.covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_heat_oracle: covariance not positive definite");
  }
  const double log_det =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  state.entropy = 0.5 * d * (1.0 + kLog2Pi) + 0.5 * log_det;
  return state;
}

double GibbsSteadyState::ball_prob(double radius) const {
  if (radius < 0.0) throw std::invalid_argument("ball radius must be non-negative");
  if (radius == 0.0) return 0.0;
  if (std::abs(position_variance - momentum_variance) >
      1e-12 * std::max(position_variance, momentum_variance)) {
    throw std::invalid_argument(
        "ball_prob requires an isotropic steady state (m^2 w^2 = 1)");
  }
  const int d = static_cast<int>(covariance.rows());
  return reg_lower_incomplete_gamma(0.5 * d, 0.5 * radius * radius / position_variance);
}

GibbsSteadyState gibbs_oracle(const PhaseSpaceParams& params) {
  params.validate();
  if (params.coupling != 0.0) {
    throw std::invalid_argument("gibbs_oracle requires k = 0");
  }
  const double kb_t = params.k_b_temps(0);
  if ((params.k_b_temps.array() != kb_t).any()) {
    throw std::invalid_argument("gibbs_oracle requires equal bath temperatures");
  }
  if (!(kb_t > 0.0)) throw std::invalid_argument("gibbs_oracle requires kT > 0");
  const int n = params.n_oscillators;
  const int d = 2 * n;
  GibbsSteadyState state;
  state.position_variance = kb_t / (params.mass * params.omega * params.omega);
  state.momentum_variance = params.mass * kb_t;
  state.covariance = Eigen::MatrixXd::Zero(d, d);
  state.covariance.topLeftCorner(n, n) =
      state.position_variance * Eigen::MatrixXd::Identity(n, n);
  state.covariance.bottomRightCorner(n, n) =
      state.momentum_variance * Eigen::MatrixXd::Identity(n, n);
  state.entropy = 0.5 * d * (1.0 + kLog2Pi) +
                  0.5 * n * (std::log(state.position_variance) +
                             std::log(state.momentum_variance));
  return state;
}

}  // namespace fpflow
