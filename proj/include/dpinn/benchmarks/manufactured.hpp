#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dpinn/autodiff/jet.hpp"
#include "dpinn/physics/physics.hpp"

namespace dpinn::bench {

using ad::Matrix;

enum class SolutionKind { kKovasznay, kTaylorGreen, kBeltrami };

SolutionKind parse_solution(std::string_view name);
std::string_view to_string(SolutionKind kind);

// Closed-form incompressible Navier-Stokes solutions.
//
//  Kovasznay (steady 2D):
//    u = 1 - e^{lx} cos(2 pi y), v = l/(2 pi) e^{lx} sin(2 pi y),
//    p = (1 - e^{2 l x}) / 2,  l = Re/2 - sqrt(Re^2/4 + 4 pi^2)
//  Taylor-Green (unsteady 2D):
//    u = -cos x sin y F, v = sin x cos y F, p = -(cos 2x + cos 2y)/4 F^2,
//    F = e^{-2t/Re}
//  Beltrami (unsteady 3D, Ethier-Steinman):
//    u = -a [e^{ax} sin(ay + dz) + e^{az} cos(ax + dy)] G, v and w by cyclic
//    permutation, G = e^{-d^2 t / Re}; p from the same family with G^2.
struct ManufacturedSolution {
  SolutionKind kind = SolutionKind::kKovasznay;
  double reynolds = 40.0;
  double a = 1.0;
  double d = 1.0;

  phys::FlowRegime regime() const;
  double kovasznay_lambda() const;

  // Values (u, v[, w], p) at one point in network input coordinates.
  Eigen::VectorXd value(const Eigen::VectorXd& point) const;
  // Values plus exact first and diagonal second derivatives in the same
  // coordinates, packed like a network jet.
  ad::Jet jet(const Eigen::VectorXd& point) const;

  // Batched versions; points is n x input_dim, result n x output_dim.
  Matrix values(const Matrix& points) const;
  std::vector<ad::Jet> jets(const Matrix& points) const;
};

// Default spatial box (per axis lo/hi) and time window for each solution.
struct DefaultDomain {
  std::vector<double> lo;
  std::vector<double> hi;
  double t0 = 0.0;
  double t1 = 0.0;
};
DefaultDomain default_domain(SolutionKind kind);

}  // namespace dpinn::bench
