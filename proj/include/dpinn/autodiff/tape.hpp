#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dpinn::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using NodeId = std::int32_t;

enum class Activation : std::uint8_t { kTanh = 0, kSin = 1, kIdentity = 2 };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

// k-th derivative of the activation, elementwise (k in 0..3).
double activation_derivative(Activation act, int k, double x);

enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kMatMul,
  kAddBias,
  kAffine,
  kActivation,
  kJetActivation,
  kAdd,
  kSub,
  kMul,
  kMulBroadcastCols,
  kScale,
  kScaleBy,
  kSquare,
  kBlock,
  kConcatCols,
  kSum,
  kWeightedSum,
};

// A static reverse-mode tape over dense column-major matrices.
//
// Nodes are appended through the builder methods; the first call to forward()
// freezes the topology and allocates every buffer. After that only the bound
// values (inputs and parameters) change between executions, so one tape is
// built per batch shape and reused for the whole training run.
//
// Reductions are plain sequential loops so that repeated executions with the
// same bound values are bit-identical.
class Tape {
 public:
  Tape() = default;

  // --- builder -------------------------------------------------------------
  NodeId input(Index rows, Index cols);
  // Parameter slot `slot`; bound at forward() time from the params span.
  NodeId param(int slot, Index rows, Index cols);
  NodeId matmul(NodeId a, NodeId b);
  // x + b broadcast over columns [col_begin, col_begin + col_count) only.
  NodeId add_bias(NodeId x, NodeId bias, Index col_begin, Index col_count);
  // w * x, plus bias on the first bias_cols columns.
  NodeId affine(NodeId w, NodeId x, NodeId bias, Index bias_cols);
  NodeId activation(NodeId x, Activation act, int order);
  // Pushes a jet [v | g_0..g_{d-1} | l_0..l_{d-1}] (blocks `batch` wide)
  // through the activation: v -> s(v), g -> s'(v) g, l -> s''(v) g^2 + s'(v) l.
  NodeId jet_activation(NodeId z, Activation act, Index batch, int dim);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  // a (r x n) repeated across the column blocks of b (r x k*n), times b.
  NodeId mul_broadcast_cols(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  // a times the 1x1 node s.
  NodeId scale_by(NodeId a, NodeId s);
  NodeId square(NodeId a);
  NodeId block(NodeId a, Index row, Index col, Index rows, Index cols);
  NodeId concat_cols(std::vector<NodeId> parts);
  NodeId sum(NodeId a);
  NodeId weighted_sum(std::vector<NodeId> scalars, std::vector<double> weights);

  // --- execution -----------------------------------------------------------
  // Writable buffer of an input node. Shape is fixed at construction.
  Matrix& input_value(NodeId id);

  void forward(std::span<const Matrix> params);
  // Accumulates d(seed)/d(param) into grads (grads[slot] += ...). The seed
  // must be a 1x1 node.
  void backward(NodeId seed, std::span<Matrix> grads);
  std::vector<Matrix> backward(NodeId seed);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;

  bool frozen() const { return frozen_; }
  std::size_t node_count() const { return nodes_.size(); }
  int param_slot_count() const { return static_cast<int>(slot_shapes_.size()); }

 private:
  struct Node {
    OpKind op;
    NodeId a = -1;
    NodeId b = -1;
    std::vector<NodeId> list;
    std::vector<double> coeffs;
    Index rows = 0;
    Index cols = 0;
    Index row0 = 0;
    Index col0 = 0;
    Index col_count = 0;
    double s = 0.0;
    Activation act = Activation::kIdentity;
    int order = 0;
    int slot = -1;
  };

  NodeId push(Node node);
  const Node& checked(NodeId id) const;
  void require_open() const;
  void freeze();

  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<Matrix> adjoints_;
  // Per-node scratch kept from forward for backward (activation derivatives).
  std::vector<std::vector<Matrix>> aux_;
  // Adjoints are written on first touch instead of being zeroed up front.
  std::vector<char> touched_;
  std::vector<const Matrix*> param_ptr_;
  std::vector<bool> needs_grad_;
  std::vector<std::pair<Index, Index>> slot_shapes_;
  bool frozen_ = false;
  bool executed_ = false;
};

}  // namespace dpinn::ad
