#include "dpinn/benchmarks/reference_grid.hpp"

#include <algorithm>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::bench {

void GridSpec::validate(const phys::FlowRegime& regime) const {
  const auto ds = static_cast<std::size_t>(regime.spatial_dim());
  if (lo.size() != ds || hi.size() != ds || counts.size() != ds) {
    throw ValidationError("grid needs lo, hi and counts for each of the " + std::to_string(ds) + " spatial axes");
  }
  for (std::size_t a = 0; a < ds; ++a) {
    if (!(lo[a] < hi[a])) throw ValidationError("grid axis " + std::to_string(a) + " needs lo < hi");
    if (counts[a] < 2) throw ValidationError("grid axis " + std::to_string(a) + " needs at least 2 points");
  }
  if (snapshots < 1) throw ValidationError("grid needs at least one snapshot");
  if (!regime.has_time() && snapshots != 1) throw ValidationError("steady grids have exactly one snapshot");
  if (regime.has_time() && snapshots > 1 && !(t0 < t1)) throw ValidationError("grid time window needs t0 < t1");
}

std::size_t GridSpec::rows() const {
  std::size_t n = static_cast<std::size_t>(snapshots);
  for (int c : counts) n *= static_cast<std::size_t>(c);
  return n;
}

namespace {

double node(double lo, double hi, int n, int i) {
  if (i == n - 1) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

decomp::FlowTable make_reference_grid(const ManufacturedSolution& solution, const GridSpec& grid) {
  const phys::FlowRegime regime = solution.regime();
  grid.validate(regime);
  const int ds = regime.spatial_dim();
  const auto n = static_cast<Eigen::Index>(grid.rows());
  decomp::FlowTable table;
  table.spatial_dim = ds;
  table.coords.resize(n, 1 + ds);
  Matrix inputs(n, regime.input_dim());
  const int t_off = regime.has_time() ? 1 : 0;
  std::vector<int> idx(static_cast<std::size_t>(ds), 0);
  Eigen::Index row = 0;
  for (int s = 0; s < grid.snapshots; ++s) {
    const double t = regime.has_time() ? (grid.snapshots == 1 ? grid.t0 : node(grid.t0, grid.t1, grid.snapshots, s)) : 0.0;
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      table.coords(row, 0) = t;
      if (t_off) inputs(row, 0) = t;
      for (int a = 0; a < ds; ++a) {
        const auto i = static_cast<std::size_t>(a);
        const double c = node(grid.lo[i], grid.hi[i], grid.counts[i], idx[i]);
        table.coords(row, 1 + a) = c;
        inputs(row, t_off + a) = c;
      }
      ++row;
      int a = 0;
      while (a < ds && ++idx[static_cast<std::size_t>(a)] == grid.counts[static_cast<std::size_t>(a)]) {
        idx[static_cast<std::size_t>(a)] = 0;
        ++a;
      }
      if (a == ds) break;
    }
  }
  const Matrix vals = solution.values(inputs);
  table.velocity = vals.leftCols(ds);
  table.pressure = vals.col(ds);
  return table;
}

}  // namespace dpinn::bench
