#include "fpflow/coupling.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace fpflow {

void CouplingBlockSpec::validate(int ambient_dim) const {
  if (half_a.empty() || half_b.empty()) {
    throw std::invalid_argument("coupling split must leave both halves non-empty");
  }
  if (dim() != ambient_dim) {
    throw std::invalid_argument("coupling split does not match the ambient dimension");
  }
  std::vector<char> seen(ambient_dim, 0);
  auto mark = [&](const std::vector<int>& half) {
    for (int idx : half) {
      if (idx < 0 || idx >= ambient_dim || seen[idx]) {
        throw std::invalid_argument("coupling split is not a partition of the coordinates");
      }
      seen[idx] = 1;
    }
  };
  mark(half_a);
  mark(half_b);
  for (int w : hidden_widths) {
    if (w <= 0) throw std::invalid_argument("hidden layer widths must be positive");
  }
}

CouplingBlockSpec CouplingBlockSpec::random_split(int dim, std::vector<int> hidden_widths,
                                                  bool include_t, std::mt19937_64& rng) {
  if (dim < 2) throw std::invalid_argument("coupling blocks require dimension >= 2");
  std::vector<int> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  // Explicit Fisher-Yates so the split depends only on the seed.
  for (int i = dim - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  CouplingBlockSpec spec;
  const int na = (dim + 1) / 2;
  spec.half_a.assign(perm.begin(), perm.begin() + na);
  spec.half_b.assign(perm.begin() + na, perm.end());
  spec.hidden_widths = std::move(hidden_widths);
  spec.include_t = include_t;
  return spec;
}

namespace flow_detail {

Eigen::Index SubnetShape::param_count() const {
  Eigen::Index total = 0;
  int prev = in;
  for (int h : hidden) {
    total += static_cast<Eigen::Index>(h) * prev + h;
    prev = h;
  }
  total += static_cast<Eigen::Index>(out) * prev + out;
  return total;
}

void subnet_eval(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                 const Eigen::VectorXd& input, SubnetTrace& trace) {
  const std::size_t n_hidden = shape.hidden.size();
  trace.acts.resize(n_hidden + 1);
  trace.acts[0] = input;
  Eigen::Index off = 0;
  int prev = shape.in;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const int w = shape.hidden[l];
    Eigen::Map<const Eigen::MatrixXd> weight(params.data() + off, w, prev);
    off += static_cast<Eigen::Index>(w) * prev;
    Eigen::Map<const Eigen::VectorXd> bias(params.data() + off, w);
    off += w;
    trace.acts[l + 1] = (weight * trace.acts[l] + bias).array().tanh().matrix();
    prev = w;
  }
  Eigen::Map<const Eigen::MatrixXd> weight(params.data() + off, shape.out, prev);
  off += static_cast<Eigen::Index>(shape.out) * prev;
  Eigen::Map<const Eigen::VectorXd> bias(params.data() + off, shape.out);
  trace.raw = weight * trace.acts.back() + bias;
  if (shape.clamp) {
    trace.out = kScaleClamp * (trace.raw / kScaleClamp).array().tanh().matrix();
  } else {
    trace.out = trace.raw;
  }
}

void subnet_init_identity(const SubnetShape& shape, std::mt19937_64& rng,
                          Eigen::Ref<Eigen::VectorXd> params) {
  Eigen::Index off = 0;
  int prev = shape.in;
  for (int w : shape.hidden) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
    std::uniform_real_distribution<double> uniform(-scale, scale);
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(w) * prev; ++k) {
      params(off + k) = uniform(rng);
    }
    off += static_cast<Eigen::Index>(w) * prev;
    params.segment(off, w).setZero();
    off += w;
    prev = w;
  }
  params.segment(off, static_cast<Eigen::Index>(shape.out) * prev + shape.out).setZero();
}

void subnet_backward(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                     const SubnetTrace& trace, const Eigen::VectorXd& out_adjoint,
                     Eigen::Ref<Eigen::VectorXd> param_grad, Eigen::VectorXd& input_adjoint,
                     SubnetScratch& scratch) {
  const int n_layers = static_cast<int>(shape.hidden.size());
  auto& offs = scratch.layer_off;
  offs.resize(n_layers + 1);
  {
    Eigen::Index off = 0;
    int prev = shape.in;
    for (int l = 0; l < n_layers; ++l) {
      offs[l] = off;
      off += static_cast<Eigen::Index>(shape.hidden[l]) * prev + shape.hidden[l];
      prev = shape.hidden[l];
    }
    offs[n_layers] = off;
  }

  // Adjoint on the linear output of the current layer.
  Eigen::VectorXd& g = scratch.vec_a;
  Eigen::VectorXd& g_act = scratch.vec_b;
  if (shape.clamp) {
    g = out_adjoint.array() * (1.0 - (trace.out / kScaleClamp).array().square());
  } else {
    g = out_adjoint;
  }
  for (int l = n_layers;; --l) {
    const int rows = (l == n_layers) ? shape.out : shape.hidden[l];
    const int cols = (l == 0) ? shape.in : shape.hidden[l - 1];
    const Eigen::VectorXd& act_in = trace.acts[l];
    Eigen::Map<const Eigen::MatrixXd> weight(params.data() + offs[l], rows, cols);
    Eigen::Map<Eigen::MatrixXd> g_weight(param_grad.data() + offs[l], rows, cols);
    g_weight.noalias() += g * act_in.transpose();
    param_grad.segment(offs[l] + static_cast<Eigen::Index>(rows) * cols, rows) += g;
    g_act.noalias() = weight.transpose() * g;
    if (l == 0) {
      input_adjoint += g_act;
      return;
    }
    g = g_act.array() * (1.0 - trace.acts[l].array().square());
  }
}

void JetArray::resize(Eigen::Index count, Eigen::Index dirs) {
  dirs_ = dirs;
  val.resize(count);
  grad.resize(count, dirs);
  hess.resize(count * dirs, dirs);
}

namespace {

// y = tanh-like elementwise map with first derivative g1 and second g2 at
// component j; hess must be updated before grad.
inline void chain_elementwise(JetArray& jets, Eigen::Index j, double value, double g1,
                              double g2) {
  auto hb = jets.hess_block(j);
  hb *= g1;
  hb.noalias() += g2 * (jets.grad.row(j).transpose() * jets.grad.row(j));
  jets.grad.row(j) *= g1;
  jets.val(j) = value;
}

void gather_jets(const JetArray& src, const std::vector<int>& idx, JetArray& dst) {
  dst.resize(static_cast<Eigen::Index>(idx.size()), src.dirs());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    dst.val(j) = src.val(idx[j]);
    dst.grad.row(j) = src.grad.row(idx[j]);
    dst.hess_block(j) = src.hess_block(idx[j]);
  }
}

void scatter_jets(const JetArray& src, const std::vector<int>& idx, JetArray& dst) {
  for (std::size_t j = 0; j < idx.size(); ++j) {
    dst.val(idx[j]) = src.val(j);
    dst.grad.row(idx[j]) = src.grad.row(j);
    dst.hess_block(idx[j]) = src.hess_block(j);
  }
}

// out = (v - shift) .* exp(-s); `values` supplies the cached result values.
// `shift` may be null when the block has no t nets.
void coupling_inverse_jets(const JetArray& v, const JetArray* shift, const JetArray& s,
                           const Eigen::VectorXd& inv_scale, const Eigen::VectorXd& values,
                           JetArray& out, JetArray& w_scratch) {
  const Eigen::Index m = v.count();
  const Eigen::Index n = v.dirs();
  out.resize(m, n);
  w_scratch.resize(m, n);

  // w = v - shift
  w_scratch.val = v.val;
  w_scratch.grad = v.grad;
  w_scratch.hess = v.hess;
  if (shift != nullptr) {
    w_scratch.val -= shift->val;
    w_scratch.grad -= shift->grad;
    w_scratch.hess -= shift->hess;
  }

  for (Eigen::Index j = 0; j < m; ++j) {
    const double e = inv_scale(j);  // exp(-s_j)
    // E-jet for exp(-s_j)
    const auto s_g = s.grad.row(j);
    const auto s_h = s.hess_block(j);
    // product (w * E) per component
    const double wv = w_scratch.val(j);
    const auto w_g = w_scratch.grad.row(j);
    const auto w_h = w_scratch.hess_block(j);

    auto out_h = out.hess_block(j);
    // E.grad = -e s_g ; E.hess = e (s_g^T s_g - s_h)
    out_h = e * w_h + wv * e * (s_g.transpose() * s_g - s_h);
    out_h.noalias() -= e * (w_g.transpose() * s_g + s_g.transpose() * w_g);
    out.grad.row(j) = e * (w_g - wv * s_g);
    out.val(j) = values(j);
  }
}

void accumulate_logdet_jet(const JetArray& s, JetArray& logdet_jet) {
  for (Eigen::Index j = 0; j < s.count(); ++j) {
    logdet_jet.val(0) -= s.val(j);
    logdet_jet.grad.row(0) -= s.grad.row(j);
    logdet_jet.hess_block(0) -= s.hess_block(j);
  }
}

inline Eigen::Ref<const Eigen::VectorXd> slice(Eigen::Ref<const Eigen::VectorXd> params,
                                               Eigen::Index off, Eigen::Index size) {
  return params.segment(off, size);
}

}  // namespace

void subnet_jet(const SubnetShape& shape, Eigen::Ref<const Eigen::VectorXd> params,
                const SubnetTrace& trace, const JetArray& input, JetArray& output,
                SubnetScratch& scratch) {
  const int n_layers = static_cast<int>(shape.hidden.size());
  const Eigen::Index n = input.dirs();
  const JetArray* cur = &input;
  Eigen::Index off = 0;
  int prev = shape.in;
  for (int l = 0; l <= n_layers; ++l) {
    const int rows = (l == n_layers) ? shape.out : shape.hidden[l];
    JetArray* nxt = (l == n_layers) ? &output : ((cur == &scratch.jet_a) ? &scratch.jet_b
                                                                         : &scratch.jet_a);
    Eigen::Map<const Eigen::MatrixXd> weight(params.data() + off, rows, prev);
    off += static_cast<Eigen::Index>(rows) * prev + rows;
    nxt->resize(rows, n);
    nxt->grad.noalias() = weight * cur->grad;
    for (int j = 0; j < rows; ++j) {
      auto hb = nxt->hess_block(j);
      hb.setZero();
      for (int i = 0; i < prev; ++i) {
        const double w = weight(j, i);
        if (w != 0.0) hb.noalias() += w * cur->hess_block(i);
      }
    }
    if (l < n_layers) {
      for (int j = 0; j < rows; ++j) {
        const double a = trace.acts[l + 1](j);
        const double g1 = 1.0 - a * a;
        chain_elementwise(*nxt, j, a, g1, -2.0 * a * g1);
      }
    } else if (shape.clamp) {
      for (int j = 0; j < rows; ++j) {
        const double t = trace.out(j) / kScaleClamp;
        const double g1 = 1.0 - t * t;
        chain_elementwise(*nxt, j, trace.out(j), g1, -2.0 * t * g1 / kScaleClamp);
      }
    } else {
      nxt->val = trace.raw;
    }
    cur = nxt;
    prev = rows;
  }
}

BlockParamView make_block_view(const CouplingBlockSpec& spec) {
  BlockParamView view;
  const int na = static_cast<int>(spec.half_a.size());
  const int nb = static_cast<int>(spec.half_b.size());
  view.to_b = SubnetShape{na, nb, spec.hidden_widths, true};
  view.to_a = SubnetShape{nb, na, spec.hidden_widths, true};
  view.include_t = spec.include_t;
  Eigen::Index off = 0;
  view.s1_off = off;
  off += view.to_b.param_count();
  if (spec.include_t) {
    view.t1_off = off;
    off += SubnetShape{na, nb, spec.hidden_widths, false}.param_count();
  }
  view.s2_off = off;
  off += view.to_a.param_count();
  if (spec.include_t) {
    view.t2_off = off;
    off += SubnetShape{nb, na, spec.hidden_widths, false}.param_count();
  }
  view.total = off;
  return view;
}

namespace {

SubnetShape shift_shape(const SubnetShape& scale_shape) {
  SubnetShape s = scale_shape;
  s.clamp = false;
  return s;
}

void gather(const Eigen::VectorXd& point, const std::vector<int>& idx, Eigen::VectorXd& out) {
  out.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(j) = point(idx[j]);
}

void scatter(const Eigen::VectorXd& values, const std::vector<int>& idx,
             Eigen::VectorXd& point) {
  for (std::size_t j = 0; j < idx.size(); ++j) point(idx[j]) = values(j);
}

}  // namespace

void block_forward(const CouplingBlockSpec& spec, const BlockParamView& view,
                   Eigen::Ref<const Eigen::VectorXd> params, Eigen::VectorXd& point,
                   BlockTrace& trace, double& logdet) {
  gather(point, spec.half_a, trace.u1);
  gather(point, spec.half_b, trace.u2);

  subnet_eval(view.to_a, slice(params, view.s2_off, view.to_a.param_count()), trace.u2,
              trace.s2);
  trace.scale_a = trace.s2.out.array().exp();
  trace.v1 = trace.u1.cwiseProduct(trace.scale_a);
  if (view.include_t) {
    subnet_eval(shift_shape(view.to_a),
                slice(params, view.t2_off, shift_shape(view.to_a).param_count()), trace.u2,
                trace.t2);
    trace.v1 += trace.t2.out;
  }

  subnet_eval(view.to_b, slice(params, view.s1_off, view.to_b.param_count()), trace.v1,
              trace.s1);
  trace.scale_b = trace.s1.out.array().exp();
  trace.v2 = trace.u2.cwiseProduct(trace.scale_b);
  if (view.include_t) {
    subnet_eval(shift_shape(view.to_b),
                slice(params, view.t1_off, shift_shape(view.to_b).param_count()), trace.v1,
                trace.t1);
    trace.v2 += trace.t1.out;
  }

  logdet += trace.s1.out.sum() + trace.s2.out.sum();
  scatter(trace.v1, spec.half_a, point);
  scatter(trace.v2, spec.half_b, point);
  if (!point.allFinite()) {
    throw std::runtime_error("non-finite value in coupling forward; parameters are unstable");
  }
}

void block_inverse(const CouplingBlockSpec& spec, const BlockParamView& view,
                   Eigen::Ref<const Eigen::VectorXd> params, Eigen::VectorXd& point,
                   BlockTrace& trace, double& logdet) {
  gather(point, spec.half_a, trace.v1);
  gather(point, spec.half_b, trace.v2);

  subnet_eval(view.to_b, slice(params, view.s1_off, view.to_b.param_count()), trace.v1,
              trace.s1);
  trace.scale_b = trace.s1.out.array().exp();
  if (view.include_t) {
    subnet_eval(shift_shape(view.to_b),
                slice(params, view.t1_off, shift_shape(view.to_b).param_count()), trace.v1,
                trace.t1);
    trace.u2 = (trace.v2 - trace.t1.out).cwiseQuotient(trace.scale_b);
  } else {
    trace.u2 = trace.v2.cwiseQuotient(trace.scale_b);
  }

  subnet_eval(view.to_a, slice(params, view.s2_off, view.to_a.param_count()), trace.u2,
              trace.s2);
  trace.scale_a = trace.s2.out.array().exp();
  if (view.include_t) {
    subnet_eval(shift_shape(view.to_a),
                slice(params, view.t2_off, shift_shape(view.to_a).param_count()), trace.u2,
                trace.t2);
    trace.u1 = (trace.v1 - trace.t2.out).cwiseQuotient(trace.scale_a);
  } else {
    trace.u1 = trace.v1.cwiseQuotient(trace.scale_a);
  }

  logdet -= trace.s1.out.sum() + trace.s2.out.sum();
  scatter(trace.u1, spec.half_a, point);
  scatter(trace.u2, spec.half_b, point);
  if (!point.allFinite()) {
    throw std::runtime_error("non-finite value in coupling inverse; parameters are unstable");
  }
}

void block_backward(const CouplingBlockSpec& spec, const BlockParamView& view,
                    Eigen::Ref<const Eigen::VectorXd> params, const BlockTrace& trace,
                    Eigen::VectorXd& point_adjoint, Eigen::Ref<Eigen::VectorXd> param_grad,
                    BlockScratch& scratch) {
  gather(point_adjoint, spec.half_a, scratch.g_u1);
  gather(point_adjoint, spec.half_b, scratch.g_u2);

  // Stage u1 = (v1 - t2(u2)) .* exp(-s2(u2)), plus the -sum(s2) logdet term.
  scratch.g_v1 = scratch.g_u1.cwiseQuotient(trace.scale_a);
  scratch.g_net = -scratch.g_u1.cwiseProduct(trace.u1);
  scratch.g_net.array() -= 1.0;
  subnet_backward(view.to_a, slice(params, view.s2_off, view.to_a.param_count()), trace.s2,
                  scratch.g_net, param_grad.segment(view.s2_off, view.to_a.param_count()),
                  scratch.g_u2, scratch.subnet);
  if (view.include_t) {
    const SubnetShape t_shape = shift_shape(view.to_a);
    scratch.g_net = -scratch.g_u1.cwiseQuotient(trace.scale_a);
    subnet_backward(t_shape, slice(params, view.t2_off, t_shape.param_count()), trace.t2,
                    scratch.g_net, param_grad.segment(view.t2_off, t_shape.param_count()),
                    scratch.g_u2, scratch.subnet);
  }

  // Stage u2 = (v2 - t1(v1)) .* exp(-s1(v1)), plus the -sum(s1) logdet term.
  scratch.g_v2 = scratch.g_u2.cwiseQuotient(trace.scale_b);
  scratch.g_net = -scratch.g_u2.cwiseProduct(trace.u2);
  scratch.g_net.array() -= 1.0;
  subnet_backward(view.to_b, slice(params, view.s1_off, view.to_b.param_count()), trace.s1,
                  scratch.g_net, param_grad.segment(view.s1_off, view.to_b.param_count()),
                  scratch.g_v1, scratch.subnet);
  if (view.include_t) {
    const SubnetShape t_shape = shift_shape(view.to_b);
    scratch.g_net = -scratch.g_u2.cwiseQuotient(trace.scale_b);
    subnet_backward(t_shape, slice(params, view.t1_off, t_shape.param_count()), trace.t1,
                    scratch.g_net, param_grad.segment(view.t1_off, t_shape.param_count()),
                    scratch.g_v1, scratch.subnet);
  }

  scatter(scratch.g_v1, spec.half_a, point_adjoint);
  scatter(scratch.g_v2, spec.half_b, point_adjoint);
}

void block_jet_inverse(const CouplingBlockSpec& spec, const BlockParamView& view,
                       Eigen::Ref<const Eigen::VectorXd> params, const BlockTrace& trace,
                       JetArray& point_jets, JetArray& logdet_jet, BlockScratch& scratch) {
  gather_jets(point_jets, spec.half_a, scratch.ja_v1);
  gather_jets(point_jets, spec.half_b, scratch.ja_v2);

  // u2 = (v2 - t1(v1)) .* exp(-s1(v1))
  subnet_jet(view.to_b, slice(params, view.s1_off, view.to_b.param_count()), trace.s1,
             scratch.ja_v1, scratch.ja_net, scratch.subnet);
  accumulate_logdet_jet(scratch.ja_net, logdet_jet);
  const JetArray* shift_b = nullptr;
  if (view.include_t) {
    const SubnetShape t_shape = shift_shape(view.to_b);
    subnet_jet(t_shape, slice(params, view.t1_off, t_shape.param_count()), trace.t1,
               scratch.ja_v1, scratch.ja_tmp, scratch.subnet);
    shift_b = &scratch.ja_tmp;
  }
  coupling_inverse_jets(scratch.ja_v2, shift_b, scratch.ja_net,
                        trace.scale_b.cwiseInverse(), trace.u2, scratch.ja_u2,
                        scratch.ja_u1 /*spare*/);

  // u1 = (v1 - t2(u2)) .* exp(-s2(u2))
  subnet_jet(view.to_a, slice(params, view.s2_off, view.to_a.param_count()), trace.s2,
             scratch.ja_u2, scratch.ja_net, scratch.subnet);
  accumulate_logdet_jet(scratch.ja_net, logdet_jet);
  const JetArray* shift_a = nullptr;
  if (view.include_t) {
    const SubnetShape t_shape = shift_shape(view.to_a);
    subnet_jet(t_shape, slice(params, view.t2_off, t_shape.param_count()), trace.t2,
               scratch.ja_u2, scratch.ja_tmp, scratch.subnet);
    shift_a = &scratch.ja_tmp;
  }
  coupling_inverse_jets(scratch.ja_v1, shift_a, scratch.ja_net,
                        trace.scale_a.cwiseInverse(), trace.u1, scratch.ja_u1,
                        scratch.ja_v2 /*spare*/);

  scatter_jets(scratch.ja_u1, spec.half_a, point_jets);
  scatter_jets(scratch.ja_u2, spec.half_b, point_jets);
}

}  // namespace flow_detail
}  // namespace fpflow
