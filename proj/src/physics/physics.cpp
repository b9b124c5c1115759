#include "dpinn/physics/physics.hpp"

#include <cmath>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::phys {

RegimeKind parse_regime(std::string_view name) {
  if (name == "steady2d") return RegimeKind::kSteady2d;
  if (name == "unsteady2d") return RegimeKind::kUnsteady2d;
  if (name == "unsteady3d") return RegimeKind::kUnsteady3d;
  throw ValidationError("unknown flow regime '" + std::string(name) + "'");
}

std::string_view to_string(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::kSteady2d:
      return "steady2d";
    case RegimeKind::kUnsteady2d:
      return "unsteady2d";
    case RegimeKind::kUnsteady3d:
      return "unsteady3d";
  }
  return "?";
}

void FlowRegime::validate() const {
  if (!(reynolds > 0.0) || !std::isfinite(reynolds)) throw ValidationError("Reynolds number must be positive");
}

ResidualBatch ns_residuals(std::span<const ad::Jet> jets, const FlowRegime& regime) {
  regime.validate();
  const int ds = regime.spatial_dim();
  const int din = regime.input_dim();
  const int t_off = regime.has_time() ? 1 : 0;
  const double nu = 1.0 / regime.reynolds;
  ResidualBatch r(static_cast<Eigen::Index>(jets.size()), ds + 1);
  for (std::size_t n = 0; n < jets.size(); ++n) {
    const ad::Jet& j = jets[n];
    if (j.value.size() != ds + 1 || j.grad.rows() != ds + 1 || j.grad.cols() != din || j.lap.cols() != din) {
      throw ValidationError("jet at index " + std::to_string(n) + " does not match the " +
                            std::string(to_string(regime.kind)) + " regime");
    }
    const auto row = static_cast<Eigen::Index>(n);
    double div = 0.0;
    for (int i = 0; i < ds; ++i) {
      double acc = regime.has_time() ? j.grad(i, 0) : 0.0;
      double visc = 0.0;
      for (int k = 0; k < ds; ++k) {
        acc += j.value(k) * j.grad(i, t_off + k);
        visc += j.lap(i, t_off + k);
      }
      acc += j.grad(ds, t_off + i);
      r(row, i) = acc - nu * visc;
      div += j.grad(i, t_off + i);
    }
    r(row, ds) = div;
  }
  return r;
}

namespace {

double weighted_sq_error(const Matrix& pred, const Matrix& ref, const ComponentWeights& w, bool allow_empty,
                         const char* what) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
    throw ValidationError(std::string(what) + ": batch shapes differ");
  }
  if (pred.rows() == 0) {
    if (allow_empty) return 0.0;
    throw ValidationError(std::string(what) + ": empty batch");
  }
  if (!w.empty() && static_cast<Eigen::Index>(w.size()) != pred.cols()) {
    throw ValidationError(std::string(what) + ": need one weight per velocity component");
  }
  double acc = 0.0;
  for (Eigen::Index n = 0; n < pred.rows(); ++n) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const double e = pred(n, c) - ref(n, c);
      acc += (w.empty() ? 1.0 : w[static_cast<std::size_t>(c)]) * e * e;
    }
  }
  return acc / static_cast<double>(pred.rows());
}

}  // namespace

double loss_obs(const Matrix& pred_vel, const Matrix& obs_vel, const ComponentWeights& weights) {
  return weighted_sq_error(pred_vel, obs_vel, weights, false, "loss_obs");
}

double loss_pde(const ResidualBatch& residuals) {
  if (residuals.rows() == 0) throw ValidationError("loss_pde: empty batch");
  double acc = 0.0;
  for (Eigen::Index n = 0; n < residuals.rows(); ++n) {
    for (Eigen::Index c = 0; c < residuals.cols(); ++c) acc += residuals(n, c) * residuals(n, c);
  }
  return acc / static_cast<double>(residuals.rows());
}

double loss_ghost_u(const Matrix& pred_vel, const Matrix& cached_vel, const ComponentWeights& weights) {
  return weighted_sq_error(pred_vel, cached_vel, weights, false, "loss_ghost_u");
}

double loss_ghost_p(const Eigen::VectorXd& pred_p, const Eigen::VectorXd& cached_p) {
  if (pred_p.size() != cached_p.size()) throw ValidationError("loss_ghost_p: batch sizes differ");
  if (pred_p.size() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index n = 0; n < pred_p.size(); ++n) {
    const double e = pred_p(n) - cached_p(n);
    acc += e * e;
  }
  return acc / static_cast<double>(pred_p.size());
}

void LossWeights::validate() const {
  const auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string("loss weight ") + name + " must be >= 0");
  };
  check(obs, "obs");
  check(pde, "pde");
  check(ghost_u, "ghost_u");
  check(ghost_p_space, "ghost_p_space");
  check(ghost_p_time, "ghost_p_time");
  for (double w : velocity_components) check(w, "velocity_components");
}

double LossWeights::component(int c) const {
  return velocity_components.empty() ? 1.0 : velocity_components.at(static_cast<std::size_t>(c));
}

double compose_loss(const LossParts& parts, const LossWeights& weights) {
  weights.validate();
  return weights.obs * parts.obs + weights.pde * parts.pde + weights.ghost_u * parts.ghost_u +
         weights.ghost_p_space * parts.ghost_p_space + weights.ghost_p_time * parts.ghost_p_time;
}

std::vector<ad::NodeId> append_ns_residuals(ad::Tape& tape, const ad::NetworkGraph& graph, const FlowRegime& regime) {
  regime.validate();
  if (!graph.jet) throw ValidationError("residuals need a jet network");
  const int ds = regime.spatial_dim();
  if (graph.input_dim != regime.input_dim() || graph.output_dim != regime.output_dim()) {
    throw ValidationError("network shape does not match the " + std::string(to_string(regime.kind)) + " regime");
  }
  const int t_off = regime.has_time() ? 1 : 0;
  const double nu = 1.0 / regime.reynolds;
  std::vector<ad::NodeId> vel;
  for (int k = 0; k < ds; ++k) vel.push_back(graph.value(tape, k));

  std::vector<ad::NodeId> out;
  ad::NodeId div = -1;
  for (int i = 0; i < ds; ++i) {
    ad::NodeId acc = graph.grad(tape, ds, t_off + i);  // p_i
    if (regime.has_time()) acc = tape.add(acc, graph.grad(tape, i, 0));
    ad::NodeId visc = -1;
    for (int k = 0; k < ds; ++k) {
      acc = tape.add(acc, tape.mul(vel[static_cast<std::size_t>(k)], graph.grad(tape, i, t_off + k)));
      const ad::NodeId l = graph.lap(tape, i, t_off + k);
      visc = visc < 0 ? l : tape.add(visc, l);
    }
    out.push_back(tape.sub(acc, tape.scale(visc, nu)));
    const ad::NodeId d = graph.grad(tape, i, t_off + i);
    div = div < 0 ? d : tape.add(div, d);
  }
  out.push_back(div);
  return out;
}

}  // namespace dpinn::phys
