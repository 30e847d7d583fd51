#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include "fpflow/coupling.hpp"
#include "fpflow/ensemble.hpp"
#include "fpflow/latent.hpp"
#include "fpflow/param_vector.hpp"

namespace fpflow {

/// Initial distribution encoded into the latent parameters at t = 0.
struct InitialDistribution {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double nu = 0.0;  // StudentT latent only

  static InitialDistribution standard(int dim, double nu = 0.0);
};

namespace flow_detail {
struct FlowTrace {
  std::vector<BlockTrace> blocks;
  Eigen::VectorXd z, x;
  double forward_logdet = 0.0;  // log|det d(x)/d(z)|
};
}  // namespace flow_detail

/// Invertible density model: a trainable latent distribution pushed through a
/// stack of coupling blocks. Evaluation is pure given the parameter state;
/// parameter writes must not overlap concurrent evaluation.
class DensityModel {
 public:
  /// Builds a model whose map is exactly the identity (all subnet output
  /// layers zero; hidden layers randomized from `rng_seed`) and whose latent
  /// equals `initial`.
  static DensityModel init_identity(const LatentSpec& latent,
                                    std::vector<CouplingBlockSpec> blocks,
                                    const InitialDistribution& initial,
                                    std::uint64_t rng_seed);

  int dim() const { return latent_spec_.dim; }
  Eigen::Index param_count() const { return params_.size(); }

  /// x = f(z) and log|det df/dz|.
  std::pair<Eigen::VectorXd, double> forward(const Eigen::VectorXd& z) const;
  /// z = f^{-1}(x) and log|det df^{-1}/dx|.
  std::pair<Eigen::VectorXd, double> inverse(const Eigen::VectorXd& x) const;

  double log_prob(const Eigen::VectorXd& x) const;
  ParticleEnsemble sample(Eigen::Index n, std::mt19937_64& rng) const;
  Eigen::VectorXd sample_one(std::mt19937_64& rng) const;

  Latent latent() const { return Latent(latent_spec_, params_); }
  const LatentSpec& latent_spec() const { return latent_spec_; }
  const std::vector<CouplingBlockSpec>& blocks() const { return blocks_; }
  const std::vector<flow_detail::BlockParamView>& block_views() const { return views_; }
  Eigen::Index block_offset(std::size_t i) const { return block_offsets_[i]; }

  ParameterVector& params() { return params_; }
  const ParameterVector& params() const { return params_; }

  void forward_trace(const Eigen::VectorXd& z, flow_detail::FlowTrace& trace) const;
  void inverse_trace(const Eigen::VectorXd& x, flow_detail::FlowTrace& trace) const;

  /// Checkpoint file: one JSON header line (specs, layout, time) followed by
  /// the parameter values as little-endian 64-bit reals.
  void save_checkpoint(const std::filesystem::path& path, double t) const;
  static std::pair<DensityModel, double> load_checkpoint(const std::filesystem::path& path);

 private:
  DensityModel(LatentSpec latent, std::vector<CouplingBlockSpec> blocks);
  friend struct CheckpointCodec;

  LatentSpec latent_spec_;
  std::vector<CouplingBlockSpec> blocks_;
  std::vector<flow_detail::BlockParamView> views_;
  std::vector<Eigen::Index> block_offsets_;
  ParameterVector params_;
};

}  // namespace fpflow
