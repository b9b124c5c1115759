#include "dpinn/autodiff/jet.hpp"

#include <cmath>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::ad {

void Architecture::validate() const {
  if (layer_sizes.size() < 3) {
    throw ValidationError("architecture needs an input, at least one hidden layer, and an output");
  }
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] <= 0) {
      throw ValidationError("layer " + std::to_string(i) + " has zero width");
    }
  }
  if (!(std::isfinite(first_layer_scale) && first_layer_scale > 0.0)) {
    throw ValidationError("first_layer_scale must be positive");
  }
  switch (activation) {
    case Activation::kTanh:
    case Activation::kSin:
    case Activation::kIdentity:
      break;
    default:
      throw ValidationError("unsupported activation");
  }
}

NodeId NetworkGraph::value(Tape& tape, int out) const {
  return tape.block(output, out, 0, 1, batch);
}

NodeId NetworkGraph::grad(Tape& tape, int out, int in) const {
  if (!jet) throw ValidationError("derivative requested from a value-only network");
  return tape.block(output, out, (1 + in) * batch, 1, batch);
}

NodeId NetworkGraph::lap(Tape& tape, int out, int in) const {
  if (!jet) throw ValidationError("derivative requested from a value-only network");
  return tape.block(output, out, (1 + input_dim + in) * batch, 1, batch);
}

void NetworkGraph::bind(Tape& tape, const Matrix& points, const InputScaling& scaling) const {
  if (points.cols() != input_dim) {
    throw ValidationError("points have " + std::to_string(points.cols()) + " coordinates, network expects " +
                          std::to_string(input_dim));
  }
  if (points.rows() != batch) {
    throw ValidationError("tape batch is " + std::to_string(batch) + ", got " + std::to_string(points.rows()) +
                          " points");
  }
  const bool scaled = scaling.center.size() > 0;
  if (scaled && (scaling.center.size() != input_dim || scaling.half_range.size() != input_dim)) {
    throw ValidationError("input scaling has the wrong dimension");
  }
  Matrix& in = tape.input_value(input);
  for (int i = 0; i < input_dim; ++i) {
    const double c = scaled ? scaling.center(i) : 0.0;
    const double inv = scaled ? 1.0 / scaling.half_range(i) : 1.0;
    for (Index p = 0; p < batch; ++p) in(i, p) = (points(p, i) - c) * inv;
    if (jet) {
      // d xhat_i / d x_j = delta_ij / half_range_i; second derivatives vanish.
      for (int j = 0; j < input_dim; ++j) {
        in.block(i, (1 + j) * batch, 1, batch).setConstant(i == j ? inv : 0.0);
      }
      in.block(i, (1 + input_dim) * batch, 1, input_dim * batch).setZero();
    }
  }
}

NetworkGraph append_network(Tape& tape, const Architecture& arch, Index batch, bool jet) {
  arch.validate();
  if (batch < 1) throw ValidationError("batch size must be at least 1");
  NetworkGraph g;
  g.batch = batch;
  g.input_dim = arch.input_dim();
  g.output_dim = arch.output_dim();
  g.jet = jet;
  const Index d = g.input_dim;
  const Index width = batch * g.channels();

  g.input = tape.input(arch.input_dim(), width);
  NodeId a = g.input;
  const int layers = arch.layer_count();
  for (int l = 0; l < layers; ++l) {
    const int fan_in = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fan_out = arch.layer_sizes[static_cast<std::size_t>(l + 1)];
    const NodeId w = tape.param(2 * l, fan_out, fan_in);
    const NodeId b = tape.param(2 * l + 1, fan_out, 1);
    // One product covers value, gradient and curvature channels at once; the
    // bias only shifts the value block.
    NodeId z = tape.affine(w, a, b, batch);
    if (l == 0 && arch.first_layer_scale != 1.0) z = tape.scale(z, arch.first_layer_scale);
    if (l == layers - 1) {
      a = z;
      break;
    }
    a = jet ? tape.jet_activation(z, arch.activation, batch, static_cast<int>(d))
            : tape.activation(z, arch.activation, 0);
  }
  g.output = a;
  return g;
}

NetworkTape build_tape(const Architecture& arch, Index batch, TapeMode mode) {
  NetworkTape net;
  net.graph = append_network(net.tape, arch, batch, mode != TapeMode::kValue);
  return net;
}

void check_finite_params(std::span<const Matrix> params) {
  for (std::size_t s = 0; s < params.size(); ++s) {
    const Matrix& m = params[s];
    for (Index k = 0; k < m.size(); ++k) {
      if (!std::isfinite(m.data()[k])) {
        throw RuntimeFailure("non-finite parameter in slot " + std::to_string(s) + " at flat index " +
                             std::to_string(k));
      }
    }
  }
}

void check_finite_points(const Matrix& points) {
  for (Index r = 0; r < points.rows(); ++r) {
    for (Index c = 0; c < points.cols(); ++c) {
      if (!std::isfinite(points(r, c))) {
        throw RuntimeFailure("non-finite input at point " + std::to_string(r) + ", coordinate " +
                             std::to_string(c));
      }
    }
  }
}

std::vector<Jet> forward_jet(NetworkTape& net, std::span<const Matrix> params, const Matrix& points,
                             const InputScaling& scaling) {
  const NetworkGraph& g = net.graph;
  if (!g.jet) throw ValidationError("forward_jet needs a jet tape");
  check_finite_points(points);
  check_finite_params(params);
  g.bind(net.tape, points, scaling);
  net.tape.forward(params);
  const Matrix& out = net.tape.value(g.output);
  const Index n = g.batch;
  const int d = g.input_dim;
  std::vector<Jet> jets(static_cast<std::size_t>(n));
  for (Index p = 0; p < n; ++p) {
    Jet& j = jets[static_cast<std::size_t>(p)];
    j.value = out.col(p);
    j.grad.resize(g.output_dim, d);
    j.lap.resize(g.output_dim, d);
    for (int i = 0; i < d; ++i) {
      j.grad.col(i) = out.col((1 + i) * n + p);
      j.lap.col(i) = out.col((1 + d + i) * n + p);
    }
  }
  return jets;
}

Matrix forward_value(NetworkTape& net, std::span<const Matrix> params, const Matrix& points,
                     const InputScaling& scaling) {
  const NetworkGraph& g = net.graph;
  check_finite_points(points);
  check_finite_params(params);
  g.bind(net.tape, points, scaling);
  net.tape.forward(params);
  return net.tape.value(g.output).leftCols(g.batch).transpose();
}

}  // namespace dpinn::ad
