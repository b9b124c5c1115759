#pragma once

#include <iosfwd>
#include <string>

#include "dpinn/autodiff/tape.hpp"

namespace dpinn::decomp {

using ad::Matrix;

// Reference / observation table with header t,x,y[,z],u,v[,w][,p].
// Pressure feeds evaluation only.
struct FlowTable {
  int spatial_dim = 2;
  Matrix coords;    // n x (1 + spatial_dim): t, x, y[, z]
  Matrix velocity;  // n x spatial_dim
  Eigen::VectorXd pressure;  // empty when the file has no p column
  bool has_pressure() const { return pressure.size() > 0; }
  Eigen::Index rows() const { return coords.rows(); }

  // Network input coordinates: drops t when `steady`.
  Matrix inputs(bool steady) const;
};

FlowTable read_flow_csv(std::istream& in);
FlowTable read_flow_csv(const std::string& path);
// Values are printed with 17 significant digits so a write/read round trip
// is exact and output is byte-stable.
void write_flow_csv(std::ostream& out, const FlowTable& table);
void write_flow_csv(const std::string& path, const FlowTable& table);

}  // namespace dpinn::decomp
