#pragma once

#include <Eigen/Core>
#include <random>
#include <vector>

#include "fpflow/param_vector.hpp"

namespace fpflow {

/// Soft clamp bound applied to scale-net outputs: s -> c * tanh(s / c).
/// Keeps exp(s) bounded during long evolutions.
inline constexpr double kScaleClamp = 5.0;

/// One invertible coupling block. The coordinate set is split into two
/// fixed halves; the forward pass rescales/shifts half_a conditioned on
/// half_b and then half_b conditioned on the updated half_a:
///
///   v1 = u1 .* exp(s2(u2)) + t2(u2)
///   v2 = u2 .* exp(s1(v1)) + t1(v1)
///
/// The shift nets t1/t2 are optional. Every subnet maps the opposite half
/// to its own half through `hidden_widths` tanh layers and a linear output;
/// scale nets additionally pass through the soft clamp.
struct CouplingBlockSpec {
  std::vector<int> half_a;          // indices of u1 in the ambient coordinates
  std::vector<int> half_b;          // indices of u2
  std::vector<int> hidden_widths;   // hidden layer widths shared by all subnets
  bool include_t = false;

  int dim() const { return static_cast<int>(half_a.size() + half_b.size()); }
  void validate(int ambient_dim) const;

  /// Random but fixed split drawn from `rng`: a permutation of 0..dim-1,
  /// the first ceil(dim/2) indices forming half_a.
  static CouplingBlockSpec random_split(int dim, std::vector<int> hidden_widths,
                                        bool include_t, std::mt19937_64& rng);
};

namespace flow_detail {

/// Feed-forward net: widths in -> hidden... -> out, tanh on hidden layers,
/// linear output, optional soft clamp. Parameters are packed layer by layer
/// as column-major W followed by b.
struct SubnetShape {
  int in = 0;
  int out = 0;
  std::vector<int> hidden;
  bool clamp = false;

  Eigen::Index param_count() const;
};

struct SubnetTrace {
  std::vector<Eigen::VectorXd> acts;  // acts[0] = input, then tanh activations
  Eigen::VectorXd raw;                // linear output before clamp
  Eigen::VectorXd out;
};

void subnet_eval(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                 const Eigen::VectorXd& input, SubnetTrace& trace);

/// Randomizes hidden-layer weights (uniform, 1/sqrt(fan_in) scale) and zeroes
/// the output layer, so the net evaluates to exactly zero everywhere.
void subnet_init_identity(const SubnetShape& shape, std::mt19937_64& rng,
                          Eigen::Ref<Eigen::VectorXd> params);

/// Batch of scalar sensitivities: `count` chain values with gradient and
/// Hessian taken with respect to `dirs` ambient coordinates. Component j owns
/// grad row j and the Hessian block rows [j*dirs, (j+1)*dirs).
class JetArray {
 public:
  void resize(Eigen::Index count, Eigen::Index dirs);
  Eigen::Index count() const { return val.size(); }
  Eigen::Index dirs() const { return dirs_; }
  auto hess_block(Eigen::Index j) { return hess.middleRows(j * dirs_, dirs_); }
  auto hess_block(Eigen::Index j) const { return hess.middleRows(j * dirs_, dirs_); }

  Eigen::VectorXd val;
  Eigen::MatrixXd grad;  // count x dirs
  Eigen::MatrixXd hess;  // (count*dirs) x dirs

 private:
  Eigen::Index dirs_ = 0;
};

struct SubnetScratch {
  Eigen::VectorXd vec_a, vec_b;
  JetArray jet_a, jet_b;
  std::vector<Eigen::Index> layer_off;
};

/// Reverse-mode step: given d(loss)/d(out), accumulates parameter gradients
/// into `param_grad` and adds the input adjoint into `input_adjoint`.
void subnet_backward(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                     const SubnetTrace& trace, const Eigen::VectorXd& out_adjoint,
                     Eigen::Ref<Eigen::VectorXd> param_grad, Eigen::VectorXd& input_adjoint,
                     SubnetScratch& scratch);

/// Propagates jets through the net, reusing cached activation values.
void subnet_jet(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                const SubnetTrace& trace, const JetArray& input, JetArray& output,
                SubnetScratch& scratch);

struct BlockTrace {
  Eigen::VectorXd u1, u2, v1, v2;
  Eigen::VectorXd scale_a;  // exp(s2(u2)), forward scale of half_a
  Eigen::VectorXd scale_b;  // exp(s1(v1)), forward scale of half_b
  SubnetTrace s1, t1, s2, t2;
};

/// Shapes and offsets of the subnet parameter groups inside one block's
/// contiguous parameter slice (order s1, t1, s2, t2).
struct BlockParamView {
  SubnetShape to_b;  // s1/t1: half_a -> half_b
  SubnetShape to_a;  // s2/t2: half_b -> half_a
  Eigen::Index s1_off = 0, t1_off = 0, s2_off = 0, t2_off = 0;
  Eigen::Index total = 0;
  bool include_t = false;
};

BlockParamView make_block_view(const CouplingBlockSpec& spec);

/// Applies the block to `point` in place (forward direction), filling `trace`
/// and adding the block's forward log-determinant to `logdet`.
void block_forward(const CouplingBlockSpec& spec, const BlockParamView& view,
                   Eigen::Ref<const Eigen::VectorXd> params, Eigen::VectorXd& point,
                   BlockTrace& trace, double& logdet);

/// Inverse direction; adds the inverse-map log-determinant to `logdet`.
void block_inverse(const CouplingBlockSpec& spec, const BlockParamView& view,
                   Eigen::Ref<const Eigen::VectorXd> params, Eigen::VectorXd& point,
                   BlockTrace& trace, double& logdet);

struct BlockScratch {
  Eigen::VectorXd g_u1, g_u2, g_v1, g_v2, g_net;
  SubnetScratch subnet;
  JetArray ja_v1, ja_v2, ja_u1, ja_u2, ja_net, ja_tmp;
};

/// Reverse-mode sweep over the block's inverse computation. On entry
/// `point_adjoint` holds d(loss)/d(block input u); on exit it holds
/// d(loss)/d(block output v). The -sum(s) log-determinant contributions to
/// log p are folded in. Subnet gradients are accumulated into `param_grad`
/// (the block's slice).
void block_backward(const CouplingBlockSpec& spec, const BlockParamView& view,
                    Eigen::Ref<const Eigen::VectorXd> params, const BlockTrace& trace,
                    Eigen::VectorXd& point_adjoint, Eigen::Ref<Eigen::VectorXd> param_grad,
                    BlockScratch& scratch);

/// Propagates point jets through the block's inverse map (x-side to z-side),
/// adding the block's inverse log-determinant jet into `logdet_jet`
/// (a JetArray with a single component).
void block_jet_inverse(const CouplingBlockSpec& spec, const BlockParamView& view,
                       Eigen::Ref<const Eigen::VectorXd> params, const BlockTrace& trace,
                       JetArray& point_jets, JetArray& logdet_jet, BlockScratch& scratch);

}  // namespace flow_detail
}  // namespace fpflow
