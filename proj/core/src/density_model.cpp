#include "fpflow/density_model.hpp"

#include <stdexcept>
#include <string>

#include "fpflow/math_util.hpp"

namespace fpflow {

using flow_detail::BlockParamView;
using flow_detail::FlowTrace;

InitialDistribution InitialDistribution::standard(int dim, double nu) {
  InitialDistribution init;
  init.mean = Eigen::VectorXd::Zero(dim);
  init.covariance = Eigen::MatrixXd::Identity(dim, dim);
  init.nu = nu;
  return init;
}

DensityModel::DensityModel(LatentSpec latent, std::vector<CouplingBlockSpec> blocks)
    : latent_spec_(latent), blocks_(std::move(blocks)) {
  ParameterLayout layout;
  Latent::append_groups(latent_spec_, layout);
  views_.reserve(blocks_.size());
  block_offsets_.reserve(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].validate(latent_spec_.dim);
    const BlockParamView view = flow_detail::make_block_view(blocks_[i]);
    const std::string prefix = "block[" + std::to_string(i) + "].";
    block_offsets_.push_back(layout.total_size());
    layout.add_group(prefix + "s1", view.to_b.param_count());
    if (view.include_t) {
      layout.add_group(prefix + "t1", view.to_b.param_count());
    }
    layout.add_group(prefix + "s2", view.to_a.param_count());
    if (view.include_t) {
      layout.add_group(prefix + "t2", view.to_a.param_count());
    }
    views_.push_back(view);
  }
  params_ = ParameterVector(std::move(layout));
}

DensityModel DensityModel::init_identity(const LatentSpec& latent,
                                         std::vector<CouplingBlockSpec> blocks,
                                         const InitialDistribution& initial,
                                         std::uint64_t rng_seed) {
  DensityModel model(latent, std::move(blocks));
  Latent::encode_initial(latent, initial.mean, initial.covariance, initial.nu,
                         model.params_);
  std::mt19937_64 rng = make_rng_stream(rng_seed, 0x1d);
  for (std::size_t i = 0; i < model.blocks_.size(); ++i) {
    const BlockParamView& view = model.views_[i];
    auto slice = model.params_.values().segment(model.block_offsets_[i], view.total);
    flow_detail::subnet_init_identity(view.to_b, rng, slice.segment(view.s1_off,
                                      view.to_b.param_count()));
    if (view.include_t) {
      flow_detail::subnet_init_identity(view.to_b, rng,
                                        slice.segment(view.t1_off, view.to_b.param_count()));
    }
    flow_detail::subnet_init_identity(view.to_a, rng,
                                      slice.segment(view.s2_off, view.to_a.param_count()));
    if (view.include_t) {
      flow_detail::subnet_init_identity(view.to_a, rng,
                                        slice.segment(view.t2_off, view.to_a.param_count()));
    }
  }
  return model;
}

void DensityModel::forward_trace(const Eigen::VectorXd& z, FlowTrace& trace) const {
  if (z.size() != dim()) throw std::invalid_argument("point dimension mismatch");
  if (!z.allFinite()) throw std::invalid_argument("non-finite input point");
  trace.blocks.resize(blocks_.size());
  trace.z = z;
  trace.x = z;
  trace.forward_logdet = 0.0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    flow_detail::block_forward(
        blocks_[i], views_[i],
        params_.values().segment(block_offsets_[i], views_[i].total), trace.x,
        trace.blocks[i], trace.forward_logdet);
  }
}

void DensityModel::inverse_trace(const Eigen::VectorXd& x, FlowTrace& trace) const {
  if (x.size() != dim()) throw std::invalid_argument("point dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("non-finite input point");
  trace.blocks.resize(blocks_.size());
  trace.x = x;
  trace.z = x;
  double inv_logdet = 0.0;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    flow_detail::block_inverse(
        blocks_[i], views_[i],
        params_.values().segment(block_offsets_[i], views_[i].total), trace.z,
        trace.blocks[i], inv_logdet);
  }
  trace.forward_logdet = -inv_logdet;
}

std::pair<Eigen::VectorXd, double> DensityModel::forward(const Eigen::VectorXd& z) const {
  FlowTrace trace;
  forward_trace(z, trace);
  return {trace.x, trace.forward_logdet};
}

std::pair<Eigen::VectorXd, double> DensityModel::inverse(const Eigen::VectorXd& x) const {
  FlowTrace trace;
  inverse_trace(x, trace);
  return {trace.z, -trace.forward_logdet};
}

double DensityModel::log_prob(const Eigen::VectorXd& x) const {
  const auto [z, inv_logdet] = inverse(x);
  return latent().log_prob(z) + inv_logdet;
}

Eigen::VectorXd DensityModel::sample_one(std::mt19937_64& rng) const {
  const Latent lat = latent();
  FlowTrace trace;
  forward_trace(lat.sample(rng), trace);
  return trace.x;
}

ParticleEnsemble DensityModel::sample(Eigen::Index n, std::mt19937_64& rng) const {
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");
  const Latent lat = latent();
  ParticleEnsemble ensemble;
  ensemble.points.resize(n, dim());
  FlowTrace trace;
  for (Eigen::Index i = 0; i < n; ++i) {
    forward_trace(lat.sample(rng), trace);
    ensemble.points.row(i) = trace.x.transpose();
  }
  return ensemble;
}

}  // namespace fpflow
