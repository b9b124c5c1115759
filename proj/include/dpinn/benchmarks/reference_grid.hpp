#pragma once

#include <vector>

#include "dpinn/benchmarks/manufactured.hpp"
#include "dpinn/decomposition/flow_csv.hpp"

namespace dpinn::bench {

// Uniform tensor grid including both end points of every axis. Steady
// solutions take a single snapshot at t = 0.
struct GridSpec {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> counts;  // per spatial axis, each >= 2
  double t0 = 0.0;
  double t1 = 0.0;
  int snapshots = 1;

  void validate(const phys::FlowRegime& regime) const;
  std::size_t rows() const;
};

// Rows are ordered by time, then z, y, x with x fastest.
decomp::FlowTable make_reference_grid(const ManufacturedSolution& solution, const GridSpec& grid);

}  // namespace dpinn::bench
