#pragma once

#include <span>
#include <vector>

#include "dpinn/autodiff/tape.hpp"

namespace dpinn::ad {

// Output bundle of a network at one point: values, first input-derivatives,
// and the diagonal of the input Hessian. grad(o, i) = d out_o / d in_i and
// lap(o, i) = d^2 out_o / d in_i^2.
struct Jet {
  Eigen::VectorXd value;
  Matrix grad;
  Matrix lap;
};

// Layer sizes [in, h1, ..., hL, out] plus the hidden activation. The output
// layer is always affine.
struct Architecture {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kTanh;
  // Multiplies the first affine layer's pre-activation (sin "omega_0"); 1 = off.
  double first_layer_scale = 1.0;

  void validate() const;
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

enum class TapeMode { kValue, kJet, kJetLoss };

// Fixed affine map applied to raw coordinates before the first layer:
// xhat = (x - center) / half_range. Empty vectors mean identity.
struct InputScaling {
  Eigen::VectorXd center;
  Eigen::VectorXd half_range;
};

// Handles into a network sub-graph on a tape.
//
// Column layout (jet mode), n = batch:
//   [ value | d/dx_0 ... d/dx_{d-1} | d2/dx_0^2 ... d2/dx_{d-1}^2 ]
// each block n columns wide. Value mode has the value block only.
struct NetworkGraph {
  NodeId input = -1;
  NodeId output = -1;
  Index batch = 0;
  int input_dim = 0;
  int output_dim = 0;
  bool jet = false;

  int channels() const { return jet ? 1 + 2 * input_dim : 1; }
  // 1 x batch views of one output row.
  NodeId value(Tape& tape, int out) const;
  NodeId grad(Tape& tape, int out, int in) const;
  NodeId lap(Tape& tape, int out, int in) const;

  // Writes points (batch x input_dim, one row per point) into the input node,
  // including the derivative seeds for jet mode.
  void bind(Tape& tape, const Matrix& points, const InputScaling& scaling = {}) const;
};

// Appends the network to an open tape. Parameter slots are 2l (weights,
// fan_out x fan_in) and 2l+1 (bias, fan_out x 1) for layer l.
NetworkGraph append_network(Tape& tape, const Architecture& arch, Index batch, bool jet);

struct NetworkTape {
  Tape tape;
  NetworkGraph graph;
};

// Builds a network tape. kValue and kJet tapes are complete; kJetLoss tapes
// carry the jet graph and stay open so loss nodes can be appended before the
// first execution.
NetworkTape build_tape(const Architecture& arch, Index batch, TapeMode mode);

// Runs the jet tape and unpacks one Jet per point. Throws on non-finite inputs
// or parameters, naming the offending index.
std::vector<Jet> forward_jet(NetworkTape& net, std::span<const Matrix> params, const Matrix& points,
                             const InputScaling& scaling = {});

// Runs a value tape (or the value block of a jet tape); returns batch x out.
Matrix forward_value(NetworkTape& net, std::span<const Matrix> params, const Matrix& points,
                     const InputScaling& scaling = {});

void check_finite_params(std::span<const Matrix> params);
void check_finite_points(const Matrix& points);

}  // namespace dpinn::ad
