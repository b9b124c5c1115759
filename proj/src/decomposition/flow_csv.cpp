#include "dpinn/decomposition/flow_csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpinn/error.hpp"

namespace dpinn::decomp {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

Matrix FlowTable::inputs(bool steady) const {
  if (steady) return coords.rightCols(spatial_dim);
  return coords;
}

FlowTable read_flow_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty flow CSV");
  const auto header = split(line);
  FlowTable t;
  bool has_p = false;
  if (header == std::vector<std::string>{"t", "x", "y", "u", "v"}) {
    t.spatial_dim = 2;
  } else if (header == std::vector<std::string>{"t", "x", "y", "u", "v", "p"}) {
    t.spatial_dim = 2;
    has_p = true;
  } else if (header == std::vector<std::string>{"t", "x", "y", "z", "u", "v", "w"}) {
    t.spatial_dim = 3;
  } else if (header == std::vector<std::string>{"t", "x", "y", "z", "u", "v", "w", "p"}) {
    t.spatial_dim = 3;
    has_p = true;
  } else {
    throw ValidationError("unrecognized flow CSV header '" + line + "'");
  }
  const std::size_t ncol = header.size();
  std::vector<double> data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != ncol) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncol) + " fields");
    }
    for (const auto& f : fields) data.push_back(parse_double(f, line_no));
  }
  const auto n = static_cast<Eigen::Index>(data.size() / ncol);
  const int ds = t.spatial_dim;
  t.coords.resize(n, 1 + ds);
  t.velocity.resize(n, ds);
  if (has_p) t.pressure.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* row = data.data() + static_cast<std::size_t>(r) * ncol;
    for (int c = 0; c <= ds; ++c) t.coords(r, c) = row[c];
    for (int c = 0; c < ds; ++c) t.velocity(r, c) = row[1 + ds + c];
    if (has_p) t.pressure(r) = row[1 + 2 * ds];
  }
  return t;
}

FlowTable read_flow_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open flow CSV " + path);
  return read_flow_csv(in);
}

void write_flow_csv(std::ostream& out, const FlowTable& table) {
  const int ds = table.spatial_dim;
  out << (ds == 3 ? "t,x,y,z,u,v,w" : "t,x,y,u,v");
  if (table.has_pressure()) out << ",p";
  out << '\n';
  char buf[40];
  const auto put = [&](double v) {
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    out.write(buf, len);
  };
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (int c = 0; c <= ds; ++c) {
      if (c) out << ',';
      put(table.coords(r, c));
    }
    for (int c = 0; c < ds; ++c) {
      out << ',';
      put(table.velocity(r, c));
    }
    if (table.has_pressure()) {
      out << ',';
      put(table.pressure(r));
    }
    out << '\n';
  }
}

void write_flow_csv(const std::string& path, const FlowTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  write_flow_csv(out, table);
  if (!out) throw RuntimeFailure("write failed for " + path);
}

}  // namespace dpinn::decomp
