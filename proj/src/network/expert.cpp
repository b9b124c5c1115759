#include "dpinn/network/expert.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <tuple>

#include "dpinn/error.hpp"

namespace dpinn::net {

void ExpertConfig::validate() const {
  if (hidden_layers < 1) throw ValidationError("expert needs at least one hidden layer");
  if (width < 1) throw ValidationError("expert width must be positive");
  // (x,y)->(u,v,p), (t,x,y)->(u,v,p), (t,x,y,z)->(u,v,w,p)
  const bool ok = (input_dim == 2 && output_dim == 3) || (input_dim == 3 && output_dim == 3) ||
                  (input_dim == 4 && output_dim == 4);
  if (!ok) {
    throw ValidationError("unsupported expert shape: input_dim " + std::to_string(input_dim) + ", output_dim " +
                          std::to_string(output_dim));
  }
  architecture().validate();
}

ad::Architecture ExpertConfig::architecture() const {
  ad::Architecture arch;
  arch.layer_sizes.push_back(input_dim);
  for (int i = 0; i < hidden_layers; ++i) arch.layer_sizes.push_back(width);
  arch.layer_sizes.push_back(output_dim);
  arch.activation = activation;
  arch.first_layer_scale = first_layer_scale;
  return arch;
}

std::size_t ExpertConfig::parameter_count() const {
  const auto arch = architecture();
  std::size_t n = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const auto fi = static_cast<std::size_t>(arch.layer_sizes[static_cast<std::size_t>(l)]);
    const auto fo = static_cast<std::size_t>(arch.layer_sizes[static_cast<std::size_t>(l + 1)]);
    n += fi * fo + fo;
  }
  return n;
}

std::size_t ExpertParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

void ExpertParams::validate() const {
  config.validate();
  const auto arch = config.architecture();
  if (tensors.size() != static_cast<std::size_t>(2 * arch.layer_count())) {
    throw ValidationError("expert parameter tensor count does not match config");
  }
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int fi = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fo = arch.layer_sizes[static_cast<std::size_t>(l + 1)];
    if (weight(l).rows() != fo || weight(l).cols() != fi || bias(l).rows() != fo || bias(l).cols() != 1) {
      throw ValidationError("expert layer " + std::to_string(l) + " has inconsistent shapes");
    }
  }
  ad::check_finite_params(tensors);
  if (scaling.center.size() != 0) {
    if (scaling.center.size() != config.input_dim || scaling.half_range.size() != config.input_dim) {
      throw ValidationError("input scaling dimension mismatch");
    }
    for (int i = 0; i < config.input_dim; ++i) {
      if (!(scaling.half_range(i) > 0.0) || !std::isfinite(scaling.center(i))) {
        throw ValidationError("input scaling must have finite center and positive half range");
      }
    }
  }
}

ExpertParams init_params(const ExpertConfig& config, std::uint64_t seed) {
  config.validate();
  ExpertParams p;
  p.config = config;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  // 53-bit uniform in [0, 1) built by hand so the stream is identical across
  // standard library implementations.
  const auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const auto arch = config.architecture();
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int fi = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fo = arch.layer_sizes[static_cast<std::size_t>(l + 1)];
    const double limit = std::sqrt(6.0 / static_cast<double>(fi + fo));
    Matrix w(fo, fi);
    for (int r = 0; r < fo; ++r) {
      for (int c = 0; c < fi; ++c) w(r, c) = limit * (2.0 * uniform() - 1.0);
    }
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(Matrix::Zero(fo, 1));
  }
  return p;
}

void set_input_box(ExpertParams& params, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != params.config.input_dim || hi.size() != params.config.input_dim) {
    throw ValidationError("input box dimension mismatch");
  }
  params.scaling.center = 0.5 * (lo + hi);
  params.scaling.half_range = 0.5 * (hi - lo);
  for (int i = 0; i < lo.size(); ++i) {
    if (!(params.scaling.half_range(i) > 0.0)) throw ValidationError("input box must have positive extent");
  }
}

namespace {
constexpr ad::Index kPredictChunk = 256;
}  // namespace

bool Evaluator::Key::operator<(const Key& o) const {
  const auto tie = [](const Key& k) {
    return std::make_tuple(k.config.input_dim, k.config.hidden_layers, k.config.width,
                           static_cast<int>(k.config.activation), k.config.output_dim, k.config.first_layer_scale,
                           k.batch, k.jet);
  };
  return tie(*this) < tie(o);
}

ad::NetworkTape& Evaluator::tape_for(const ExpertConfig& config, ad::Index batch, bool jet) {
  Key key{config, batch, jet};
  auto it = tapes_.find(key);
  if (it == tapes_.end()) {
    it = tapes_.emplace(key, ad::build_tape(config.architecture(), batch, jet ? ad::TapeMode::kJet : ad::TapeMode::kValue))
             .first;
  }
  return it->second;
}

Matrix Evaluator::predict(const ExpertParams& params, const Matrix& points) {
  if (points.cols() != params.config.input_dim) {
    throw ValidationError("points have " + std::to_string(points.cols()) + " coordinates, expert expects " +
                          std::to_string(params.config.input_dim));
  }
  if (points.rows() == 0) return Matrix(0, params.config.output_dim);
  // Every point goes through the same tape shape (the last chunk is padded
  // with copies of its final row), so a point's value does not depend on the
  // batch it came in: small products would otherwise take a different kernel.
  ad::NetworkTape& tape = tape_for(params.config, kPredictChunk, false);
  const Eigen::Index n = points.rows();
  Matrix out(n, params.config.output_dim);
  Matrix chunk(kPredictChunk, points.cols());
  for (Eigen::Index lo = 0; lo < n; lo += kPredictChunk) {
    const Eigen::Index m = std::min(kPredictChunk, n - lo);
    chunk.topRows(m) = points.middleRows(lo, m);
    for (Eigen::Index r = m; r < kPredictChunk; ++r) chunk.row(r) = points.row(lo + m - 1);
    out.middleRows(lo, m) = ad::forward_value(tape, params.tensors, chunk, params.scaling).topRows(m);
  }
  return out;
}

std::vector<ad::Jet> Evaluator::jets(const ExpertParams& params, const Matrix& points) {
  if (points.cols() != params.config.input_dim) {
    throw ValidationError("points have " + std::to_string(points.cols()) + " coordinates, expert expects " +
                          std::to_string(params.config.input_dim));
  }
  if (points.rows() == 0) return {};
  return ad::forward_jet(tape_for(params.config, points.rows(), true), params.tensors, points, params.scaling);
}

Matrix predict(const ExpertParams& params, const Matrix& points) {
  Evaluator ev;
  return ev.predict(params, points);
}

}  // namespace dpinn::net
