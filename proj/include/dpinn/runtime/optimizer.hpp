#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dpinn/autodiff/tape.hpp"

namespace dpinn::rt {

using ad::Matrix;

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected Adam update. With clip_norm set, the global gradient
// norm is rescaled to at most clip_norm first. Returns the norm of the
// gradient actually applied. Throws on non-finite gradients.
double optimizer_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, double lr,
                      std::optional<double> clip_norm = std::nullopt);

double global_norm(std::span<const Matrix> grads);

struct LrSchedule {
  double initial = 1e-3;
  double factor = 1.0;
  int interval = 1000;
};

// initial * factor^floor(epoch / interval)
double lr_at(int epoch, const LrSchedule& schedule);

}  // namespace dpinn::rt
