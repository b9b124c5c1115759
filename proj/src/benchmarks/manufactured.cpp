#include "dpinn/benchmarks/manufactured.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "dpinn/error.hpp"

namespace dpinn::bench {

namespace {

// Value plus first and second derivative along one seeded direction.
struct Hyper {
  double v = 0.0;
  double d = 0.0;
  double dd = 0.0;
};

Hyper operator+(Hyper a, Hyper b) { return {a.v + b.v, a.d + b.d, a.dd + b.dd}; }
Hyper operator*(Hyper a, Hyper b) { return {a.v * b.v, a.d * b.v + a.v * b.d, a.dd * b.v + 2.0 * a.d * b.d + a.v * b.dd}; }
Hyper operator*(double s, Hyper a) { return {s * a.v, s * a.d, s * a.dd}; }
Hyper operator+(double s, Hyper a) { return {s + a.v, a.d, a.dd}; }

double exp(double a) { return std::exp(a); }
double sin(double a) { return std::sin(a); }
double cos(double a) { return std::cos(a); }

Hyper exp(Hyper a) {
  const double e = std::exp(a.v);
  return {e, e * a.d, e * (a.dd + a.d * a.d)};
}
Hyper sin(Hyper a) {
  const double s = std::sin(a.v);
  const double c = std::cos(a.v);
  return {s, c * a.d, c * a.dd - s * a.d * a.d};
}
Hyper cos(Hyper a) {
  const double s = std::sin(a.v);
  const double c = std::cos(a.v);
  return {c, -s * a.d, -s * a.dd - c * a.d * a.d};
}

// Coordinates are (x, y) for Kovasznay, (t, x, y) for Taylor-Green and
// (t, x, y, z) for Beltrami; outputs (u, v[, w], p).
template <typename S>
std::array<S, 4> kovasznay(const ManufacturedSolution& s, const std::array<S, 4>& c) {
  const double lam = s.kovasznay_lambda();
  const double two_pi = 2.0 * std::numbers::pi;
  const S x = c[0];
  const S y = c[1];
  const S ex = exp(lam * x);
  const S u = 1.0 + (-1.0 * (ex * cos(two_pi * y)));
  const S v = (lam / two_pi) * (ex * sin(two_pi * y));
  const S p = 0.5 * (1.0 + (-1.0 * exp(2.0 * lam * x)));
  return {u, v, p, S{}};
}

template <typename S>
std::array<S, 4> taylor_green(const ManufacturedSolution& s, const std::array<S, 4>& c) {
  const S t = c[0];
  const S x = c[1];
  const S y = c[2];
  const S f = exp((-2.0 / s.reynolds) * t);
  const S u = -1.0 * (cos(x) * sin(y) * f);
  const S v = sin(x) * cos(y) * f;
  const S p = -0.25 * ((cos(2.0 * x) + cos(2.0 * y)) * (f * f));
  return {u, v, p, S{}};
}

template <typename S>
std::array<S, 4> beltrami(const ManufacturedSolution& s, const std::array<S, 4>& c) {
  const double a = s.a;
  const double d = s.d;
  const S t = c[0];
  const S x = c[1];
  const S y = c[2];
  const S z = c[3];
  const S g = exp((-d * d / s.reynolds) * t);
  const S ex = exp(a * x);
  const S ey = exp(a * y);
  const S ez = exp(a * z);
  const S s_ay_dz = sin(a * y + d * z);
  const S s_az_dx = sin(a * z + d * x);
  const S s_ax_dy = sin(a * x + d * y);
  const S c_ax_dy = cos(a * x + d * y);
  const S c_ay_dz = cos(a * y + d * z);
  const S c_az_dx = cos(a * z + d * x);
  const S u = (-a) * ((ex * s_ay_dz + ez * c_ax_dy) * g);
  const S v = (-a) * ((ey * s_az_dx + ex * c_ay_dz) * g);
  const S w = (-a) * ((ez * s_ax_dy + ey * c_az_dx) * g);
  const S bracket = exp(2.0 * a * x) + exp(2.0 * a * y) + exp(2.0 * a * z) +
                    2.0 * (s_ax_dy * c_az_dx * (ey * ez)) + 2.0 * (s_ay_dz * c_ax_dy * (ez * ex)) +
                    2.0 * (s_az_dx * c_ay_dz * (ex * ey));
  const S p = (-0.5 * a * a) * (bracket * (g * g));
  return {u, v, w, p};
}

template <typename S>
std::array<S, 4> fields(const ManufacturedSolution& s, const std::array<S, 4>& c) {
  switch (s.kind) {
    case SolutionKind::kKovasznay:
      return kovasznay(s, c);
    case SolutionKind::kTaylorGreen:
      return taylor_green(s, c);
    case SolutionKind::kBeltrami:
      return beltrami(s, c);
  }
  return {};
}

}  // namespace

SolutionKind parse_solution(std::string_view name) {
  if (name == "kovasznay") return SolutionKind::kKovasznay;
  if (name == "taylor_green") return SolutionKind::kTaylorGreen;
  if (name == "beltrami") return SolutionKind::kBeltrami;
  throw ValidationError("unknown benchmark '" + std::string(name) + "'");
}

std::string_view to_string(SolutionKind kind) {
  switch (kind) {
    case SolutionKind::kKovasznay:
      return "kovasznay";
    case SolutionKind::kTaylorGreen:
      return "taylor_green";
    case SolutionKind::kBeltrami:
      return "beltrami";
  }
  return "?";
}

phys::FlowRegime ManufacturedSolution::regime() const {
  switch (kind) {
    case SolutionKind::kKovasznay:
      return {phys::RegimeKind::kSteady2d, reynolds};
    case SolutionKind::kTaylorGreen:
      return {phys::RegimeKind::kUnsteady2d, reynolds};
    case SolutionKind::kBeltrami:
      return {phys::RegimeKind::kUnsteady3d, reynolds};
  }
  return {};
}

double ManufacturedSolution::kovasznay_lambda() const {
  const double pi = std::numbers::pi;
  return 0.5 * reynolds - std::sqrt(0.25 * reynolds * reynolds + 4.0 * pi * pi);
}

Eigen::VectorXd ManufacturedSolution::value(const Eigen::VectorXd& point) const {
  const auto reg = regime();
  if (point.size() != reg.input_dim()) throw ValidationError("point dimension does not match the solution");
  std::array<double, 4> c{};
  for (int i = 0; i < reg.input_dim(); ++i) c[static_cast<std::size_t>(i)] = point(i);
  const auto f = fields(*this, c);
  Eigen::VectorXd out(reg.output_dim());
  for (int o = 0; o < reg.output_dim(); ++o) out(o) = f[static_cast<std::size_t>(o)];
  return out;
}

ad::Jet ManufacturedSolution::jet(const Eigen::VectorXd& point) const {
  const auto reg = regime();
  const int din = reg.input_dim();
  const int dout = reg.output_dim();
  if (point.size() != din) throw ValidationError("point dimension does not match the solution");
  ad::Jet j;
  j.value.resize(dout);
  j.grad.resize(dout, din);
  j.lap.resize(dout, din);
  for (int dir = 0; dir < din; ++dir) {
    std::array<Hyper, 4> c{};
    for (int i = 0; i < din; ++i) c[static_cast<std::size_t>(i)] = {point(i), i == dir ? 1.0 : 0.0, 0.0};
    const auto f = fields(*this, c);
    for (int o = 0; o < dout; ++o) {
      const Hyper& h = f[static_cast<std::size_t>(o)];
      j.value(o) = h.v;
      j.grad(o, dir) = h.d;
      j.lap(o, dir) = h.dd;
    }
  }
  return j;
}

Matrix ManufacturedSolution::values(const Matrix& points) const {
  const auto reg = regime();
  Matrix out(points.rows(), reg.output_dim());
  for (Eigen::Index n = 0; n < points.rows(); ++n) out.row(n) = value(points.row(n).transpose()).transpose();
  return out;
}

std::vector<ad::Jet> ManufacturedSolution::jets(const Matrix& points) const {
  std::vector<ad::Jet> out;
  out.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index n = 0; n < points.rows(); ++n) out.push_back(jet(points.row(n).transpose()));
  return out;
}

DefaultDomain default_domain(SolutionKind kind) {
  const double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case SolutionKind::kKovasznay:
      return {{-0.5, -0.5}, {1.0, 1.5}, 0.0, 0.0};
    case SolutionKind::kTaylorGreen:
      return {{0.0, 0.0}, {two_pi, two_pi}, 0.0, 7.35};
    case SolutionKind::kBeltrami:
      return {{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}, 0.0, 1.0};
  }
  return {};
}

}  // namespace dpinn::bench
