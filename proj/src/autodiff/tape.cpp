#include "dpinn/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::ad {

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sin") return Activation::kSin;
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  throw ValidationError("unsupported activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSin:
      return "sin";
    case Activation::kIdentity:
      return "identity";
  }
  return "?";
}

double activation_derivative(Activation act, int k, double x) {
  switch (act) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      const double d1 = 1.0 - t * t;
      switch (k) {
        case 0:
          return t;
        case 1:
          return d1;
        case 2:
          return -2.0 * t * d1;
        case 3:
          return d1 * (6.0 * t * t - 2.0);
      }
      break;
    }
    case Activation::kSin:
      switch (k & 3) {
        case 0:
          return std::sin(x);
        case 1:
          return std::cos(x);
        case 2:
          return -std::sin(x);
        case 3:
          return -std::cos(x);
      }
      break;
    case Activation::kIdentity:
      return k == 0 ? x : (k == 1 ? 1.0 : 0.0);
  }
  return 0.0;
}

namespace {

// Vectorized tanh through exp(-2|x|); absolute error stays at rounding level
// and the tiny-argument branch keeps the relative error small near zero.
void tanh_block(const double* x, double* t, Index n) {
  const Eigen::Map<const Eigen::ArrayXd> xs(x, n);
  Eigen::Map<Eigen::ArrayXd> ts(t, n);
  ts = (-2.0 * xs.abs()).exp();
  ts = (1.0 - ts) / (1.0 + ts);
  for (Index i = 0; i < n; ++i) {
    const double xi = x[i];
    if (std::abs(xi) < 1e-2) {
      const double x2 = xi * xi;
      t[i] = xi * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))));
    } else if (xi < 0.0) {
      t[i] = -t[i];
    } else if (xi != xi) {
      t[i] = xi;
    }
  }
}

void activation_kernel(Activation act, int order, const double* x, double* o, Index n) {
  switch (act) {
    case Activation::kTanh:
      tanh_block(x, o, n);
      switch (order) {
        case 0:
          break;
        case 1:
          for (Index i = 0; i < n; ++i) o[i] = 1.0 - o[i] * o[i];
          break;
        case 2:
          for (Index i = 0; i < n; ++i) o[i] = -2.0 * o[i] * (1.0 - o[i] * o[i]);
          break;
        default:
          for (Index i = 0; i < n; ++i) o[i] = (1.0 - o[i] * o[i]) * (6.0 * o[i] * o[i] - 2.0);
          break;
      }
      break;
    case Activation::kSin: {
      const double sign = (order & 2) ? -1.0 : 1.0;
      if (order & 1) {
        for (Index i = 0; i < n; ++i) o[i] = sign * std::cos(x[i]);
      } else {
        for (Index i = 0; i < n; ++i) o[i] = sign * std::sin(x[i]);
      }
      break;
    }
    case Activation::kIdentity: {
      if (order == 0) {
        for (Index i = 0; i < n; ++i) o[i] = x[i];
      } else {
        const double c = order == 1 ? 1.0 : 0.0;
        for (Index i = 0; i < n; ++i) o[i] = c;
      }
      break;
    }
  }
}

// Jet activation kernels work in cache-sized chunks of the value block. For
// tanh every derivative follows from s0 = tanh(z); sin keeps cos(z) in aux.
constexpr Index kJetChunk = 512;

void chunk_derivatives(Activation act, const double* s0, const double* cs, Index n, double* s1, double* s2,
                       double* s3) {
  switch (act) {
    case Activation::kTanh:
      for (Index i = 0; i < n; ++i) {
        const double t = s0[i];
        const double d1 = 1.0 - t * t;
        s1[i] = d1;
        s2[i] = -2.0 * t * d1;
        s3[i] = d1 * (6.0 * t * t - 2.0);
      }
      break;
    case Activation::kSin:
      for (Index i = 0; i < n; ++i) {
        s1[i] = cs[i];
        s2[i] = -s0[i];
        s3[i] = -cs[i];
      }
      break;
    case Activation::kIdentity:
      for (Index i = 0; i < n; ++i) {
        s1[i] = 1.0;
        s2[i] = 0.0;
        s3[i] = 0.0;
      }
      break;
  }
}

// out = [s(v) | s'(v) g_k | s''(v) g_k^2 + s'(v) l_k], m entries per block.
void jet_activation_forward(Activation act, const double* z, double* out, double* cs, Index m, int d) {
  switch (act) {
    case Activation::kTanh:
      tanh_block(z, out, m);
      break;
    case Activation::kSin:
      for (Index i = 0; i < m; ++i) {
        out[i] = std::sin(z[i]);
        cs[i] = std::cos(z[i]);
      }
      break;
    case Activation::kIdentity:
      for (Index i = 0; i < m; ++i) out[i] = z[i];
      break;
  }
  double s1[kJetChunk], s2[kJetChunk], s3[kJetChunk];
  for (Index c = 0; c < m; c += kJetChunk) {
    const Index n = std::min(kJetChunk, m - c);
    chunk_derivatives(act, out + c, cs == nullptr ? nullptr : cs + c, n, s1, s2, s3);
    for (int k = 0; k < d; ++k) {
      const double* __restrict zg = z + (1 + k) * m + c;
      const double* __restrict zl = z + (1 + d + k) * m + c;
      double* __restrict og = out + (1 + k) * m + c;
      double* __restrict ol = out + (1 + d + k) * m + c;
      for (Index e = 0; e < n; ++e) {
        og[e] = s1[e] * zg[e];
        ol[e] = s2[e] * zg[e] * zg[e] + s1[e] * zl[e];
      }
    }
  }
}

// dz_v  = g_v s1 + sum_k [g_gk s2 z_gk + g_lk (s3 z_gk^2 + s2 z_lk)]
// dz_gk = g_gk s1 + 2 g_lk s2 z_gk,  dz_lk = g_lk s1
template <bool kAccumulate>
void jet_activation_backward(Activation act, const double* z, const double* out, const double* cs,
                             const double* g, double* dz, Index m, int d) {
  double s1[kJetChunk], s2[kJetChunk], s3[kJetChunk], acc[kJetChunk];
  for (Index c = 0; c < m; c += kJetChunk) {
    const Index n = std::min(kJetChunk, m - c);
    chunk_derivatives(act, out + c, cs == nullptr ? nullptr : cs + c, n, s1, s2, s3);
    for (Index e = 0; e < n; ++e) acc[e] = g[c + e] * s1[e];
    for (int k = 0; k < d; ++k) {
      const Index og = (1 + k) * m + c;
      const Index ol = (1 + d + k) * m + c;
      const double* __restrict zg = z + og;
      const double* __restrict zl = z + ol;
      const double* __restrict gg = g + og;
      const double* __restrict gl = g + ol;
      double* __restrict dg = dz + og;
      double* __restrict dl = dz + ol;
      for (Index e = 0; e < n; ++e) {
        acc[e] += gg[e] * s2[e] * zg[e] + gl[e] * (s3[e] * zg[e] * zg[e] + s2[e] * zl[e]);
        const double vg = gg[e] * s1[e] + 2.0 * gl[e] * s2[e] * zg[e];
        const double vl = gl[e] * s1[e];
        if constexpr (kAccumulate) {
          dg[e] += vg;
          dl[e] += vl;
        } else {
          dg[e] = vg;
          dl[e] = vl;
        }
      }
    }
    for (Index e = 0; e < n; ++e) {
      if constexpr (kAccumulate) {
        dz[c + e] += acc[e];
      } else {
        dz[c + e] = acc[e];
      }
    }
  }
}

double sequential_sum(const Matrix& m) {
  double acc = 0.0;
  const double* p = m.data();
  for (Index i = 0; i < m.size(); ++i) acc += p[i];
  return acc;
}

}  // namespace

NodeId Tape::push(Node node) {
  require_open();
  if (node.rows <= 0 || node.cols <= 0) {
    throw ValidationError("tape node with empty shape " + std::to_string(node.rows) + "x" +
                          std::to_string(node.cols));
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::checked(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ValidationError("tape node id " + std::to_string(id) + " out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::require_open() const {
  if (frozen_) throw ValidationError("tape topology is frozen after the first execution");
}

NodeId Tape::input(Index rows, Index cols) {
  Node n{OpKind::kInput};
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::param(int slot, Index rows, Index cols) {
  if (slot < 0) throw ValidationError("negative parameter slot");
  const auto s = static_cast<std::size_t>(slot);
  if (s >= slot_shapes_.size()) slot_shapes_.resize(s + 1, {-1, -1});
  if (slot_shapes_[s].first >= 0 && slot_shapes_[s] != std::pair{rows, cols}) {
    throw ValidationError("parameter slot " + std::to_string(slot) + " bound with two shapes");
  }
  slot_shapes_[s] = {rows, cols};
  Node n{OpKind::kParam};
  n.rows = rows;
  n.cols = cols;
  n.slot = slot;
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const auto& na = checked(a);
  const auto& nb = checked(b);
  if (na.cols != nb.rows) throw ValidationError("matmul shape mismatch");
  Node n{OpKind::kMatMul, a, b};
  n.rows = na.rows;
  n.cols = nb.cols;
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias, Index col_begin, Index col_count) {
  const auto& nx = checked(x);
  const auto& nb = checked(bias);
  if (nb.cols != 1 || nb.rows != nx.rows) throw ValidationError("bias shape mismatch");
  if (col_begin < 0 || col_count < 0 || col_begin + col_count > nx.cols) {
    throw ValidationError("bias column range out of bounds");
  }
  Node n{OpKind::kAddBias, x, bias};
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.col0 = col_begin;
  n.col_count = col_count;
  return push(std::move(n));
}

NodeId Tape::affine(NodeId w, NodeId x, NodeId bias, Index bias_cols) {
  const auto& nw = checked(w);
  const auto& nx = checked(x);
  const auto& nb = checked(bias);
  if (nw.cols != nx.rows) throw ValidationError("affine shape mismatch");
  if (nb.cols != 1 || nb.rows != nw.rows) throw ValidationError("bias shape mismatch");
  if (bias_cols < 0 || bias_cols > nx.cols) throw ValidationError("bias column range out of bounds");
  Node n{OpKind::kAffine, w, x};
  n.list = {bias};
  n.rows = nw.rows;
  n.cols = nx.cols;
  n.col_count = bias_cols;
  return push(std::move(n));
}

NodeId Tape::jet_activation(NodeId z, Activation act, Index batch, int dim) {
  const auto& nz = checked(z);
  if (batch < 1 || dim < 0 || nz.cols != (1 + 2 * static_cast<Index>(dim)) * batch) {
    throw ValidationError("jet_activation: input is not a jet of the given batch and dimension");
  }
  Node n{OpKind::kJetActivation, z};
  n.rows = nz.rows;
  n.cols = nz.cols;
  n.act = act;
  n.col_count = batch;
  n.order = dim;
  return push(std::move(n));
}

NodeId Tape::activation(NodeId x, Activation act, int order) {
  const auto& nx = checked(x);
  if (order < 0 || order > 2) throw ValidationError("activation order must be 0, 1 or 2");
  Node n{OpKind::kActivation, x};
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.act = act;
  n.order = order;
  return push(std::move(n));
}

namespace {
void require_same_shape(Index ra, Index ca, Index rb, Index cb, const char* what) {
  if (ra != rb || ca != cb) throw ValidationError(std::string(what) + ": shape mismatch");
}
}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  const auto& na = checked(a);
  const auto& nb = checked(b);
  require_same_shape(na.rows, na.cols, nb.rows, nb.cols, "add");
  Node n{OpKind::kAdd, a, b};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const auto& na = checked(a);
  const auto& nb = checked(b);
  require_same_shape(na.rows, na.cols, nb.rows, nb.cols, "sub");
  Node n{OpKind::kSub, a, b};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const auto& na = checked(a);
  const auto& nb = checked(b);
  require_same_shape(na.rows, na.cols, nb.rows, nb.cols, "mul");
  Node n{OpKind::kMul, a, b};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::mul_broadcast_cols(NodeId a, NodeId b) {
  const auto& na = checked(a);
  const auto& nb = checked(b);
  if (na.rows != nb.rows || nb.cols % na.cols != 0) {
    throw ValidationError("mul_broadcast_cols: shape mismatch");
  }
  Node n{OpKind::kMulBroadcastCols, a, b};
  n.rows = nb.rows;
  n.cols = nb.cols;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double s) {
  const auto& na = checked(a);
  Node n{OpKind::kScale, a};
  n.rows = na.rows;
  n.cols = na.cols;
  n.s = s;
  return push(std::move(n));
}

NodeId Tape::scale_by(NodeId a, NodeId s) {
  const auto& na = checked(a);
  const auto& ns = checked(s);
  if (ns.rows != 1 || ns.cols != 1) throw ValidationError("scale_by expects a 1x1 factor");
  Node n{OpKind::kScaleBy, a, s};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::square(NodeId a) {
  const auto& na = checked(a);
  Node n{OpKind::kSquare, a};
  n.rows = na.rows;
  n.cols = na.cols;
  return push(std::move(n));
}

NodeId Tape::block(NodeId a, Index row, Index col, Index rows, Index cols) {
  const auto& na = checked(a);
  if (row < 0 || col < 0 || row + rows > na.rows || col + cols > na.cols) {
    throw ValidationError("block out of bounds");
  }
  Node n{OpKind::kBlock, a};
  n.row0 = row;
  n.col0 = col;
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::concat_cols(std::vector<NodeId> parts) {
  if (parts.empty()) throw ValidationError("concat_cols of nothing");
  Index rows = checked(parts.front()).rows;
  Index cols = 0;
  for (NodeId p : parts) {
    const auto& np = checked(p);
    if (np.rows != rows) throw ValidationError("concat_cols: row mismatch");
    cols += np.cols;
  }
  Node n{OpKind::kConcatCols};
  n.list = std::move(parts);
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  checked(a);
  Node n{OpKind::kSum, a};
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

NodeId Tape::weighted_sum(std::vector<NodeId> scalars, std::vector<double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    throw ValidationError("weighted_sum: need one weight per term");
  }
  for (NodeId id : scalars) {
    const auto& ns = checked(id);
    if (ns.rows != 1 || ns.cols != 1) throw ValidationError("weighted_sum terms must be 1x1");
  }
  Node n{OpKind::kWeightedSum};
  n.list = std::move(scalars);
  n.coeffs = std::move(weights);
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

void Tape::freeze() {
  if (frozen_) return;
  for (std::size_t s = 0; s < slot_shapes_.size(); ++s) {
    if (slot_shapes_[s].first < 0) {
      throw ValidationError("parameter slot " + std::to_string(s) + " is never used");
    }
  }
  const std::size_t n = nodes_.size();
  values_.resize(n);
  adjoints_.resize(n);
  aux_.resize(n);
  touched_.assign(n, 0);
  param_ptr_.assign(n, nullptr);
  needs_grad_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const Node& node = nodes_[i];
    if (node.op == OpKind::kParam) {
      needs_grad_[i] = true;
    } else {
      bool ng = false;
      if (node.a >= 0) ng = ng || needs_grad_[static_cast<std::size_t>(node.a)];
      if (node.b >= 0) ng = ng || needs_grad_[static_cast<std::size_t>(node.b)];
      for (NodeId id : node.list) ng = ng || needs_grad_[static_cast<std::size_t>(id)];
      needs_grad_[i] = ng;
      if (values_[i].rows() != node.rows || values_[i].cols() != node.cols) {
        values_[i] = Matrix::Zero(node.rows, node.cols);
      }
    }
    if (needs_grad_[i]) adjoints_[i] = Matrix::Zero(node.rows, node.cols);
    if (node.op == OpKind::kJetActivation) {
      if (node.act == Activation::kSin) aux_[i].assign(1, Matrix::Zero(node.rows, node.col_count));
    } else if (node.op == OpKind::kActivation && needs_grad_[i]) {
      aux_[i].assign(1, Matrix::Zero(node.rows, node.cols));
    }
  }
  frozen_ = true;
}

Matrix& Tape::input_value(NodeId id) {
  const auto& node = checked(id);
  if (node.op != OpKind::kInput) throw ValidationError("node is not an input");
  const auto i = static_cast<std::size_t>(id);
  if (values_.size() <= i) values_.resize(nodes_.size());
  if (values_[i].rows() != node.rows || values_[i].cols() != node.cols) {
    values_[i] = Matrix::Zero(node.rows, node.cols);
  }
  return values_[i];
}

const Matrix& Tape::value(NodeId id) const {
  const auto& node = checked(id);
  const auto i = static_cast<std::size_t>(id);
  if (node.op == OpKind::kParam) {
    if (!executed_ || param_ptr_[i] == nullptr) throw RuntimeFailure("parameter not bound");
    return *param_ptr_[i];
  }
  if (values_.size() <= i) throw RuntimeFailure("tape has not been executed");
  return values_[i];
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.size() != 1) throw ValidationError("node is not a scalar");
  return v(0, 0);
}

void Tape::forward(std::span<const Matrix> params) {
  freeze();
  if (params.size() < slot_shapes_.size()) {
    throw ValidationError("tape needs " + std::to_string(slot_shapes_.size()) +
                          " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t s = 0; s < slot_shapes_.size(); ++s) {
    if (params[s].rows() != slot_shapes_[s].first || params[s].cols() != slot_shapes_[s].second) {
      throw ValidationError("parameter slot " + std::to_string(s) + " has the wrong shape");
    }
  }
  const auto val = [this](NodeId id) -> const Matrix& {
    const auto i = static_cast<std::size_t>(id);
    return param_ptr_[i] != nullptr ? *param_ptr_[i] : values_[i];
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    Matrix& out = values_[i];
    switch (node.op) {
      case OpKind::kInput:
        break;
      case OpKind::kParam:
        param_ptr_[i] = &params[static_cast<std::size_t>(node.slot)];
        break;
      case OpKind::kMatMul:
        out.noalias() = val(node.a) * val(node.b);
        break;
      case OpKind::kAddBias: {
        out = val(node.a);
        const Matrix& b = val(node.b);
        out.middleCols(node.col0, node.col_count).colwise() += b.col(0);
        break;
      }
      case OpKind::kAffine: {
        out.noalias() = val(node.a) * val(node.b);
        if (node.col_count > 0) out.leftCols(node.col_count).colwise() += val(node.list[0]).col(0);
        break;
      }
      case OpKind::kActivation: {
        const Matrix& x = val(node.a);
        activation_kernel(node.act, node.order, x.data(), out.data(), x.size());
        if (!aux_[i].empty()) activation_kernel(node.act, node.order + 1, x.data(), aux_[i][0].data(), x.size());
        break;
      }
      case OpKind::kJetActivation: {
        // Blocks are contiguous in column-major storage, m entries each.
        double* cs = aux_[i].empty() ? nullptr : aux_[i][0].data();
        jet_activation_forward(node.act, val(node.a).data(), out.data(), cs, node.rows * node.col_count,
                               node.order);
        break;
      }
      case OpKind::kAdd:
        out = val(node.a) + val(node.b);
        break;
      case OpKind::kSub:
        out = val(node.a) - val(node.b);
        break;
      case OpKind::kMul:
        out = val(node.a).cwiseProduct(val(node.b));
        break;
      case OpKind::kMulBroadcastCols: {
        const Matrix& a = val(node.a);
        const Matrix& b = val(node.b);
        const Index w = a.cols();
        for (Index k = 0; k < b.cols() / w; ++k) {
          out.middleCols(k * w, w) = a.cwiseProduct(b.middleCols(k * w, w));
        }
        break;
      }
      case OpKind::kScale:
        out = node.s * val(node.a);
        break;
      case OpKind::kScaleBy:
        out = val(node.b)(0, 0) * val(node.a);
        break;
      case OpKind::kSquare:
        out = val(node.a).array().square().matrix();
        break;
      case OpKind::kBlock:
        out = val(node.a).block(node.row0, node.col0, node.rows, node.cols);
        break;
      case OpKind::kConcatCols: {
        Index c = 0;
        for (NodeId p : node.list) {
          const Matrix& m = val(p);
          out.middleCols(c, m.cols()) = m;
          c += m.cols();
        }
        break;
      }
      case OpKind::kSum:
        out(0, 0) = sequential_sum(val(node.a));
        break;
      case OpKind::kWeightedSum: {
        double acc = 0.0;
        for (std::size_t k = 0; k < node.list.size(); ++k) acc += node.coeffs[k] * val(node.list[k])(0, 0);
        out(0, 0) = acc;
        break;
      }
    }
  }
  executed_ = true;
}

std::vector<Matrix> Tape::backward(NodeId seed) {
  std::vector<Matrix> grads(slot_shapes_.size());
  for (std::size_t s = 0; s < slot_shapes_.size(); ++s) {
    grads[s] = Matrix::Zero(slot_shapes_[s].first, slot_shapes_[s].second);
  }
  backward(seed, grads);
  return grads;
}

void Tape::backward(NodeId seed, std::span<Matrix> grads) {
  if (!executed_) throw RuntimeFailure("backward called before forward");
  const auto& seed_node = checked(seed);
  if (seed_node.rows != 1 || seed_node.cols != 1) throw ValidationError("backward seed must be 1x1");
  if (grads.size() < slot_shapes_.size()) throw ValidationError("gradient buffer too small");

  const auto val = [this](NodeId id) -> const Matrix& {
    const auto i = static_cast<std::size_t>(id);
    return param_ptr_[i] != nullptr ? *param_ptr_[i] : values_[i];
  };
  const auto ng = [this](NodeId id) { return id >= 0 && needs_grad_[static_cast<std::size_t>(id)]; };
  // adj(id) <- expr on first touch, += afterwards.
  const auto put = [this](NodeId id, const auto& expr) {
    const auto i = static_cast<std::size_t>(id);
    if (touched_[i]) {
      adjoints_[i].noalias() += expr;
    } else {
      adjoints_[i].noalias() = expr;
      touched_[i] = 1;
    }
  };
  const auto zeroed = [this](NodeId id) -> Matrix& {
    const auto i = static_cast<std::size_t>(id);
    if (!touched_[i]) {
      adjoints_[i].setZero();
      touched_[i] = 1;
    }
    return adjoints_[i];
  };

  const auto last = static_cast<std::size_t>(seed);
  std::fill(touched_.begin(), touched_.end(), 0);
  if (!needs_grad_[last]) return;
  adjoints_[last](0, 0) = 1.0;
  touched_[last] = 1;

  for (std::size_t ii = last + 1; ii-- > 0;) {
    if (!needs_grad_[ii] || !touched_[ii]) continue;
    const Node& node = nodes_[ii];
    const Matrix& g = adjoints_[ii];
    switch (node.op) {
      case OpKind::kInput:
        break;
      case OpKind::kParam: {
        Matrix& dst = grads[static_cast<std::size_t>(node.slot)];
        if (dst.rows() != node.rows || dst.cols() != node.cols) {
          throw ValidationError("gradient buffer for slot " + std::to_string(node.slot) +
                                " has the wrong shape");
        }
        dst += g;
        break;
      }
      case OpKind::kMatMul:
        if (ng(node.a)) put(node.a, g * val(node.b).transpose());
        if (ng(node.b)) put(node.b, val(node.a).transpose() * g);
        break;
      case OpKind::kAddBias:
        if (ng(node.a)) put(node.a, g);
        if (ng(node.b)) put(node.b, g.middleCols(node.col0, node.col_count).rowwise().sum());
        break;
      case OpKind::kAffine: {
        const NodeId bias = node.list[0];
        if (ng(node.a)) put(node.a, g * val(node.b).transpose());
        if (ng(node.b)) put(node.b, val(node.a).transpose() * g);
        if (ng(bias)) {
          if (node.col_count > 0) {
            put(bias, g.leftCols(node.col_count).rowwise().sum());
          } else {
            zeroed(bias);
          }
        }
        break;
      }
      case OpKind::kActivation:
        if (ng(node.a)) put(node.a, g.cwiseProduct(aux_[ii][0]));
        break;
      case OpKind::kJetActivation: {
        if (!ng(node.a)) break;
        const auto ai = static_cast<std::size_t>(node.a);
        const double* cs = aux_[ii].empty() ? nullptr : aux_[ii][0].data();
        const Index m = node.rows * node.col_count;
        if (touched_[ai]) {
          jet_activation_backward<true>(node.act, val(node.a).data(), values_[ii].data(), cs, g.data(),
                                        adjoints_[ai].data(), m, node.order);
        } else {
          jet_activation_backward<false>(node.act, val(node.a).data(), values_[ii].data(), cs, g.data(),
                                         adjoints_[ai].data(), m, node.order);
          touched_[ai] = 1;
        }
        break;
      }
      case OpKind::kAdd:
        if (ng(node.a)) put(node.a, g);
        if (ng(node.b)) put(node.b, g);
        break;
      case OpKind::kSub:
        if (ng(node.a)) put(node.a, g);
        if (ng(node.b)) put(node.b, -g);
        break;
      case OpKind::kMul:
        if (ng(node.a)) put(node.a, g.cwiseProduct(val(node.b)));
        if (ng(node.b)) put(node.b, g.cwiseProduct(val(node.a)));
        break;
      case OpKind::kMulBroadcastCols: {
        const Matrix& a = val(node.a);
        const Matrix& b = val(node.b);
        const Index w = a.cols();
        const Index blocks = b.cols() / w;
        if (ng(node.a)) {
          Matrix& da = zeroed(node.a);
          for (Index k = 0; k < blocks; ++k) da += g.middleCols(k * w, w).cwiseProduct(b.middleCols(k * w, w));
        }
        if (ng(node.b)) {
          Matrix& db = zeroed(node.b);
          for (Index k = 0; k < blocks; ++k) db.middleCols(k * w, w) += g.middleCols(k * w, w).cwiseProduct(a);
        }
        break;
      }
      case OpKind::kScale:
        if (ng(node.a)) put(node.a, node.s * g);
        break;
      case OpKind::kScaleBy:
        if (ng(node.a)) put(node.a, val(node.b)(0, 0) * g);
        if (ng(node.b)) {
          const Matrix prod = g.cwiseProduct(val(node.a));
          zeroed(node.b)(0, 0) += sequential_sum(prod);
        }
        break;
      case OpKind::kSquare:
        if (ng(node.a)) put(node.a, 2.0 * g.cwiseProduct(val(node.a)));
        break;
      case OpKind::kBlock:
        if (ng(node.a)) zeroed(node.a).block(node.row0, node.col0, node.rows, node.cols) += g;
        break;
      case OpKind::kConcatCols: {
        Index c = 0;
        for (NodeId p : node.list) {
          const Index w = nodes_[static_cast<std::size_t>(p)].cols;
          if (ng(p)) put(p, g.middleCols(c, w));
          c += w;
        }
        break;
      }
      case OpKind::kSum:
        if (ng(node.a)) zeroed(node.a).array() += g(0, 0);
        break;
      case OpKind::kWeightedSum:
        for (std::size_t k = 0; k < node.list.size(); ++k) {
          if (ng(node.list[k])) zeroed(node.list[k])(0, 0) += node.coeffs[k] * g(0, 0);
        }
        break;
    }
  }
}

}  // namespace dpinn::ad
