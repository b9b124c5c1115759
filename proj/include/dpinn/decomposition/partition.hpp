#pragma once

#include <string>
#include <vector>

#include "dpinn/autodiff/tape.hpp"
#include "dpinn/physics/physics.hpp"

namespace dpinn::decomp {

using ad::Matrix;

// Axis-aligned box in network input coordinates ((x, y) steady, (t, x, y[, z])
// unsteady).
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double extent(int axis) const { return hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]; }
  bool contains_closed(const Eigen::VectorXd& p, double tol = 0.0) const;
  bool operator==(const Box&) const = default;
};

struct GlobalDomain {
  std::vector<double> space_lo;
  std::vector<double> space_hi;
  double t0 = 0.0;
  double t1 = 0.0;
  phys::FlowRegime regime;

  void validate() const;
  Box box() const;
};

enum class InterfaceKind { kSpatial, kTemporal };
std::string to_string(InterfaceKind kind);

struct GhostComponent {
  Box region;
  int neighbor = -1;
  InterfaceKind kind = InterfaceKind::kSpatial;
  int axis = 0;  // input-coordinate axis that was extended
  int side = 1;  // +1 toward higher coordinates, -1 toward lower
};

struct SubdomainSpec {
  int rank = 0;
  int rank_count = 1;
  int k = 0;  // spatial cell index, x fastest
  int m = 0;  // time interval index
  std::vector<int> cell;  // per input axis
  Box interior;
  Box extended;
  Box global;
  std::vector<GhostComponent> ghosts;
};

struct PartitionSpec {
  std::vector<int> spatial_grid{1, 1};
  int time_splits = 1;
  double delta_space = 0.0;
  double delta_time = 0.0;

  int spatial_count() const;
  int rank_count() const { return spatial_count() * time_splits; }
  // "2x2", or "2x2xt2" with a time split.
  std::string label() const;
};

// Equal-size K x M split. Rank id = m * K + k. Ghost components are the
// face-adjacent parts of the dilated interior; corner regions are excluded.
std::vector<SubdomainSpec> partition(const GlobalDomain& domain, const PartitionSpec& spec);

// Half-open membership [lo, hi) per axis, closed at the global upper bound.
bool owns(const SubdomainSpec& sub, const Eigen::VectorXd& point);
// Rank owning the point; throws ValidationError outside the domain.
int owner_of(const std::vector<SubdomainSpec>& subs, const Eigen::VectorXd& point);

// Ranks whose spatial interior contains the anchor, one per time interval.
std::vector<int> identify_masters(const std::vector<SubdomainSpec>& subs, const std::vector<double>& anchor);

}  // namespace dpinn::decomp
