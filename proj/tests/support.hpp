#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpinn/autodiff/jet.hpp"
#include "dpinn/random.hpp"

namespace dpinn::test {

using ad::Matrix;

// Parameters for an architecture with weights ~ U(-w, w) and biases ~ U(-b, b).
inline std::vector<Matrix> random_params(const ad::Architecture& arch, std::uint64_t seed, double w_scale = 1.0,
                                         double b_scale = 0.5) {
  std::mt19937_64 rng(mix_seed(seed, 7));
  std::vector<Matrix> out;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int fi = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fo = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
    const double a = w_scale * std::sqrt(6.0 / (fi + fo));
    Matrix w(fo, fi), b(fo, 1);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = a * (2.0 * uniform01(rng) - 1.0);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = b_scale * (2.0 * uniform01(rng) - 1.0);
    out.push_back(w);
    out.push_back(b);
  }
  return out;
}

inline Matrix random_points(Eigen::Index n, int dim, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(mix_seed(seed, 11));
  Matrix p(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) p(i, j) = lo + (hi - lo) * uniform01(rng);
  }
  return p;
}

// Relative error normalized by the larger magnitude, with an absolute floor.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct JetFdError {
  double grad = 0.0;
  double lap = 0.0;
};

// Worst per-point error of the jet against central differences of the value
// network, relative to the Frobenius norm of the analytic block at that point
// (floored at 1e-3 so vanishing blocks do not divide by zero).
inline JetFdError jet_fd_error(const ad::Architecture& arch, const std::vector<Matrix>& params, const Matrix& points,
                               double h) {
  const int d = arch.input_dim();
  const Eigen::Index n = points.rows();
  auto jet_net = ad::build_tape(arch, n, ad::TapeMode::kJet);
  const auto jets = ad::forward_jet(jet_net, params, points);

  // Stencil rows: x, then x +- h e_i for every axis.
  const Eigen::Index per = 1 + 2 * d;
  Matrix stencil(n * per, d);
  for (Eigen::Index p = 0; p < n; ++p) {
    stencil.row(p * per) = points.row(p);
    for (int i = 0; i < d; ++i) {
      stencil.row(p * per + 1 + 2 * i) = points.row(p);
      stencil.row(p * per + 2 + 2 * i) = points.row(p);
      stencil(p * per + 1 + 2 * i, i) += h;
      stencil(p * per + 2 + 2 * i, i) -= h;
    }
  }
  auto value_net = ad::build_tape(arch, stencil.rows(), ad::TapeMode::kValue);
  const Matrix f = ad::forward_value(value_net, params, stencil);

  JetFdError worst;
  const int out = arch.output_dim();
  for (Eigen::Index p = 0; p < n; ++p) {
    Matrix g(out, d), l(out, d);
    for (int i = 0; i < d; ++i) {
      const auto fp = f.row(p * per + 1 + 2 * i);
      const auto fm = f.row(p * per + 2 + 2 * i);
      const auto f0 = f.row(p * per);
      g.col(i) = (fp - fm).transpose() / (2.0 * h);
      l.col(i) = (fp - 2.0 * f0 + fm).transpose() / (h * h);
    }
    const auto& jet = jets[static_cast<std::size_t>(p)];
    worst.grad = std::max(worst.grad, (g - jet.grad).norm() / std::max(jet.grad.norm(), 1e-3));
    worst.lap = std::max(worst.lap, (l - jet.lap).norm() / std::max(jet.lap.norm(), 1e-3));
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("dpinn_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace dpinn::test
