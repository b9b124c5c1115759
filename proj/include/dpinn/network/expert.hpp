#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpinn/autodiff/jet.hpp"

namespace dpinn::net {

using ad::Matrix;

// Shape of one local expert: (t, x, y[, z]) -> (u, v[, w], p), or (x, y) ->
// (u, v, p) for steady flows.
struct ExpertConfig {
  int input_dim = 3;
  int hidden_layers = 4;
  int width = 64;
  ad::Activation activation = ad::Activation::kTanh;
  int output_dim = 3;
  double first_layer_scale = 1.0;

  void validate() const;
  ad::Architecture architecture() const;
  std::size_t parameter_count() const;
  bool operator==(const ExpertConfig&) const = default;
};

// Trainable tensors are interleaved as [W0, b0, W1, b1, ...], matching the
// tape's parameter slots. The input scaling is fixed at construction and not
// trained.
struct ExpertParams {
  ExpertConfig config;
  std::uint64_t seed = 0;
  std::vector<Matrix> tensors;
  ad::InputScaling scaling;

  int layer_count() const { return static_cast<int>(tensors.size() / 2); }
  Matrix& weight(int layer) { return tensors[static_cast<std::size_t>(2 * layer)]; }
  Matrix& bias(int layer) { return tensors[static_cast<std::size_t>(2 * layer + 1)]; }
  const Matrix& weight(int layer) const { return tensors[static_cast<std::size_t>(2 * layer)]; }
  const Matrix& bias(int layer) const { return tensors[static_cast<std::size_t>(2 * layer + 1)]; }
  std::size_t parameter_count() const;
  void validate() const;
};

// Glorot-uniform weights, zero biases, deterministic per (config, seed).
ExpertParams init_params(const ExpertConfig& config, std::uint64_t seed);

// Sets the fixed input map so that the box [lo, hi] maps onto [-1, 1].
void set_input_box(ExpertParams& params, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

// Evaluates experts with tapes cached per batch size. Not thread-safe; each
// rank worker owns its own evaluator.
class Evaluator {
 public:
  // points: n x input_dim. Returns n x output_dim.
  Matrix predict(const ExpertParams& params, const Matrix& points);
  std::vector<ad::Jet> jets(const ExpertParams& params, const Matrix& points);

 private:
  ad::NetworkTape& tape_for(const ExpertConfig& config, ad::Index batch, bool jet);

  struct Key {
    ExpertConfig config;
    ad::Index batch;
    bool jet;
    bool operator<(const Key& o) const;
  };
  std::map<Key, ad::NetworkTape> tapes_;
};

// One-shot prediction without a cached evaluator.
Matrix predict(const ExpertParams& params, const Matrix& points);

// Binary checkpoint, little-endian:
//   char[8] "DPINNCK1"; u32 version (=1); u32 input_dim, hidden_layers, width,
//   activation (0 tanh, 1 sin, 2 identity), output_dim; f64 first_layer_scale;
//   u64 seed; f64[input_dim] center; f64[input_dim] half_range;
//   then for each layer: f64 W row-major (fan_out x fan_in), f64 b (fan_out).
void write_checkpoint(std::ostream& out, const ExpertParams& params);
ExpertParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ExpertParams& params);
ExpertParams load_checkpoint(const std::string& path);

}  // namespace dpinn::net
