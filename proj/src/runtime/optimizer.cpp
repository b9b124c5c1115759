#include "dpinn/runtime/optimizer.hpp"

#include <cmath>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::rt {

double global_norm(std::span<const Matrix> grads) {
  double acc = 0.0;
  for (const auto& g : grads) {
    const double* p = g.data();
    for (Eigen::Index k = 0; k < g.size(); ++k) acc += p[k] * p[k];
  }
  return std::sqrt(acc);
}

double optimizer_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, double lr,
                      std::optional<double> clip_norm) {
  if (params.size() != grads.size()) throw ValidationError("optimizer: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols()) {
      throw ValidationError("optimizer: gradient " + std::to_string(i) + " has the wrong shape");
    }
    if (!grads[i].allFinite()) throw RuntimeFailure("optimizer: non-finite gradient in tensor " + std::to_string(i));
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw ValidationError("optimizer state does not match the parameters");

  const double norm = global_norm(grads);
  double scale = 1.0;
  if (clip_norm && norm > *clip_norm) scale = *clip_norm / norm;

  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = (scale * grads[i].array()).eval();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.square();
    params[i].array() -= lr * (m / bc1) / ((v / bc2).sqrt() + kAdamEps);
  }
  return norm * scale;
}

double lr_at(int epoch, const LrSchedule& schedule) {
  if (epoch < 0) throw ValidationError("epoch must be >= 0");
  if (schedule.interval < 1) throw ValidationError("learning-rate interval must be >= 1");
  return schedule.initial * std::pow(schedule.factor, static_cast<double>(epoch / schedule.interval));
}

}  // namespace dpinn::rt
