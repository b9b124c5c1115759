#include "dpinn/decomposition/partition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dpinn/error.hpp"

namespace dpinn::decomp {

bool Box::contains_closed(const Eigen::VectorXd& p, double tol) const {
  if (p.size() != dim()) return false;
  for (int a = 0; a < dim(); ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (p(a) < lo[i] - tol || p(a) > hi[i] + tol) return false;
  }
  return true;
}

void GlobalDomain::validate() const {
  regime.validate();
  if (static_cast<int>(space_lo.size()) != regime.spatial_dim() || space_hi.size() != space_lo.size()) {
    throw ValidationError("domain box dimension does not match the flow regime");
  }
  for (std::size_t a = 0; a < space_lo.size(); ++a) {
    if (!(space_lo[a] < space_hi[a])) throw ValidationError("domain axis " + std::to_string(a) + " needs min < max");
  }
  if (regime.has_time() && !(t0 < t1)) throw ValidationError("time interval needs t0 < t1");
}

Box GlobalDomain::box() const {
  Box b;
  if (regime.has_time()) {
    b.lo.push_back(t0);
    b.hi.push_back(t1);
  }
  b.lo.insert(b.lo.end(), space_lo.begin(), space_lo.end());
  b.hi.insert(b.hi.end(), space_hi.begin(), space_hi.end());
  return b;
}

std::string to_string(InterfaceKind kind) { return kind == InterfaceKind::kSpatial ? "spatial" : "temporal"; }

int PartitionSpec::spatial_count() const {
  int k = 1;
  for (int n : spatial_grid) k *= n;
  return k;
}

std::string PartitionSpec::label() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < spatial_grid.size(); ++i) {
    if (i) os << 'x';
    os << spatial_grid[i];
  }
  if (time_splits > 1) os << "xt" << time_splits;
  return os.str();
}

namespace {

double boundary(double lo, double hi, int n, int i) {
  if (i == 0) return lo;
  if (i == n) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
}

}  // namespace

std::vector<SubdomainSpec> partition(const GlobalDomain& domain, const PartitionSpec& spec) {
  domain.validate();
  const int ds = domain.regime.spatial_dim();
  if (static_cast<int>(spec.spatial_grid.size()) != ds) {
    throw ValidationError("spatial grid needs one count per spatial axis");
  }
  for (int n : spec.spatial_grid) {
    if (n < 1) throw ValidationError("spatial split counts must be >= 1");
  }
  if (spec.time_splits < 1) throw ValidationError("time split count must be >= 1");
  if (!domain.regime.has_time() && spec.time_splits != 1) {
    throw ValidationError("steady flows cannot be split in time");
  }
  if (!(spec.delta_space >= 0.0) || !(spec.delta_time >= 0.0)) {
    throw ValidationError("ghost thickness must be >= 0");
  }

  const Box global = domain.box();
  const int dims = global.dim();
  const int t_off = domain.regime.has_time() ? 1 : 0;
  std::vector<int> counts;
  std::vector<double> delta;
  if (t_off) {
    counts.push_back(spec.time_splits);
    delta.push_back(spec.delta_time);
  }
  for (int n : spec.spatial_grid) {
    counts.push_back(n);
    delta.push_back(spec.delta_space);
  }
  for (int a = 0; a < dims; ++a) {
    const auto i = static_cast<std::size_t>(a);
    const double extent = global.extent(a) / counts[i];
    if (counts[i] > 1 && delta[i] >= extent) {
      throw ValidationError("ghost thickness " + std::to_string(delta[i]) + " on axis " + std::to_string(a) +
                            " is not smaller than the subdomain extent " + std::to_string(extent));
    }
  }

  const int K = spec.spatial_count();
  const int M = spec.time_splits;
  const int P = K * M;
  std::vector<SubdomainSpec> subs(static_cast<std::size_t>(P));

  // Strides of the linear rank index over input axes.
  std::vector<int> stride(static_cast<std::size_t>(dims));
  {
    int s = 1;
    for (int a = t_off; a < dims; ++a) {
      stride[static_cast<std::size_t>(a)] = s;
      s *= counts[static_cast<std::size_t>(a)];
    }
    if (t_off) stride[0] = K;
  }

  for (int r = 0; r < P; ++r) {
    SubdomainSpec& sub = subs[static_cast<std::size_t>(r)];
    sub.rank = r;
    sub.rank_count = P;
    sub.k = r % K;
    sub.m = r / K;
    sub.global = global;
    sub.cell.resize(static_cast<std::size_t>(dims));
    int rem = sub.k;
    for (int a = t_off; a < dims; ++a) {
      const auto i = static_cast<std::size_t>(a);
      sub.cell[i] = rem % counts[i];
      rem /= counts[i];
    }
    if (t_off) sub.cell[0] = sub.m;
    sub.interior.lo.resize(static_cast<std::size_t>(dims));
    sub.interior.hi.resize(static_cast<std::size_t>(dims));
    for (int a = 0; a < dims; ++a) {
      const auto i = static_cast<std::size_t>(a);
      sub.interior.lo[i] = boundary(global.lo[i], global.hi[i], counts[i], sub.cell[i]);
      sub.interior.hi[i] = boundary(global.lo[i], global.hi[i], counts[i], sub.cell[i] + 1);
    }
    sub.extended = sub.interior;
    for (int a = 0; a < dims; ++a) {
      const auto i = static_cast<std::size_t>(a);
      sub.extended.lo[i] = std::max(global.lo[i], sub.interior.lo[i] - delta[i]);
      sub.extended.hi[i] = std::min(global.hi[i], sub.interior.hi[i] + delta[i]);
    }
  }

  for (auto& sub : subs) {
    for (int a = 0; a < dims; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (delta[i] <= 0.0) continue;
      for (int side : {-1, 1}) {
        const int nc = sub.cell[i] + side;
        if (nc < 0 || nc >= counts[i]) continue;
        GhostComponent g;
        g.neighbor = sub.rank + side * stride[i];
        g.kind = (t_off && a == 0) ? InterfaceKind::kTemporal : InterfaceKind::kSpatial;
        g.axis = a;
        g.side = side;
        g.region = sub.interior;
        if (side > 0) {
          g.region.lo[i] = sub.interior.hi[i];
          g.region.hi[i] = sub.extended.hi[i];
        } else {
          g.region.lo[i] = sub.extended.lo[i];
          g.region.hi[i] = sub.interior.lo[i];
        }
        sub.ghosts.push_back(std::move(g));
      }
    }
  }
  return subs;
}

bool owns(const SubdomainSpec& sub, const Eigen::VectorXd& point) {
  const int dims = sub.interior.dim();
  if (point.size() != dims) throw ValidationError("point dimension does not match the decomposition");
  for (int a = 0; a < dims; ++a) {
    const auto i = static_cast<std::size_t>(a);
    const double c = point(a);
    const double lo = sub.interior.lo[i];
    const double hi = sub.interior.hi[i];
    const bool at_global_top = hi == sub.global.hi[i] && c == hi;
    if (!(c >= lo && (c < hi || at_global_top))) return false;
  }
  return true;
}

int owner_of(const std::vector<SubdomainSpec>& subs, const Eigen::VectorXd& point) {
  for (const auto& s : subs) {
    if (owns(s, point)) return s.rank;
  }
  std::ostringstream os;
  os << "point (" << point.transpose() << ") lies outside the global domain";
  throw ValidationError(os.str());
}

std::vector<int> identify_masters(const std::vector<SubdomainSpec>& subs, const std::vector<double>& anchor) {
  if (subs.empty()) throw ValidationError("no subdomains");
  const Box& global = subs.front().global;
  const int dims = global.dim();
  const auto ds = static_cast<int>(anchor.size());
  const int t_off = dims - ds;
  if (t_off != 0 && t_off != 1) throw ValidationError("anchor dimension does not match the domain");
  for (int a = 0; a < ds; ++a) {
    const auto i = static_cast<std::size_t>(t_off + a);
    const double c = anchor[static_cast<std::size_t>(a)];
    if (!(c >= global.lo[i] && c <= global.hi[i])) throw ValidationError("anchor lies outside the spatial domain");
  }
  std::vector<int> masters;
  for (const auto& s : subs) {
    Eigen::VectorXd p(dims);
    if (t_off) p(0) = s.interior.lo[0];
    for (int a = 0; a < ds; ++a) p(t_off + a) = anchor[static_cast<std::size_t>(a)];
    if (owns(s, p)) masters.push_back(s.rank);
  }
  return masters;
}

}  // namespace dpinn::decomp
