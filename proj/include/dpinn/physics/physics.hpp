#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dpinn/autodiff/jet.hpp"

namespace dpinn::phys {

using ad::Matrix;

enum class RegimeKind { kSteady2d, kUnsteady2d, kUnsteady3d };

RegimeKind parse_regime(std::string_view name);
std::string_view to_string(RegimeKind kind);

struct FlowRegime {
  RegimeKind kind = RegimeKind::kSteady2d;
  double reynolds = 100.0;

  void validate() const;
  bool has_time() const { return kind != RegimeKind::kSteady2d; }
  int spatial_dim() const { return kind == RegimeKind::kUnsteady3d ? 3 : 2; }
  // Network input coordinates: (x, y), (t, x, y) or (t, x, y, z).
  int input_dim() const { return spatial_dim() + (has_time() ? 1 : 0); }
  int output_dim() const { return spatial_dim() + 1; }
  // Column of spatial axis `axis` (0 = x) in the input coordinates.
  int space_column(int axis) const { return axis + (has_time() ? 1 : 0); }
};

// n x (spatial_dim + 1): momentum residuals then continuity.
using ResidualBatch = Matrix;

ResidualBatch ns_residuals(std::span<const ad::Jet> jets, const FlowRegime& regime);

// Per-component weights; empty means all ones.
using ComponentWeights = std::vector<double>;

// Mean over points of the component-weighted squared velocity error.
double loss_obs(const Matrix& pred_vel, const Matrix& obs_vel, const ComponentWeights& weights = {});
// Mean over points of the squared residual-vector norm.
double loss_pde(const ResidualBatch& residuals);
double loss_ghost_u(const Matrix& pred_vel, const Matrix& cached_vel, const ComponentWeights& weights = {});
// Mean squared pressure mismatch; an empty subset gives 0.
double loss_ghost_p(const Eigen::VectorXd& pred_p, const Eigen::VectorXd& cached_p);

struct LossWeights {
  double obs = 1.0;
  double pde = 1.0;
  double ghost_u = 1.0;
  double ghost_p_space = 1.0;
  double ghost_p_time = 1.0;
  ComponentWeights velocity_components;

  void validate() const;
  double component(int c) const;
};

struct LossParts {
  double obs = 0.0;
  double pde = 0.0;
  double ghost_u = 0.0;
  double ghost_p_space = 0.0;
  double ghost_p_time = 0.0;
};

double compose_loss(const LossParts& parts, const LossWeights& weights);

// Tape-side residuals for a jet network graph; each node is 1 x batch.
std::vector<ad::NodeId> append_ns_residuals(ad::Tape& tape, const ad::NetworkGraph& graph, const FlowRegime& regime);

}  // namespace dpinn::phys
