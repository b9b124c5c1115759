#include "dpinn/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <ostream>

#include "dpinn/error.hpp"
#include "dpinn/random.hpp"

namespace dpinn::eval {

namespace {

constexpr Eigen::Index kChunk = 4096;

Matrix predict_rows(net::Evaluator& ev, const net::ExpertParams& params, const Matrix& points) {
  Matrix out(points.rows(), params.config.output_dim);
  for (Eigen::Index lo = 0; lo < points.rows(); lo += kChunk) {
    const Eigen::Index n = std::min(kChunk, points.rows() - lo);
    out.middleRows(lo, n) = ev.predict(params, points.middleRows(lo, n));
  }
  return out;
}

}  // namespace

RankField expert_field(const std::vector<net::ExpertParams>& experts) {
  auto ev = std::make_shared<net::Evaluator>();
  return [ev, &experts](int rank, const Matrix& points) {
    if (rank < 0 || static_cast<std::size_t>(rank) >= experts.size()) {
      throw ValidationError("no expert for rank " + std::to_string(rank));
    }
    return predict_rows(*ev, experts[static_cast<std::size_t>(rank)], points);
  };
}

StitchedField stitch(const std::vector<net::ExpertParams>& experts, const std::vector<decomp::SubdomainSpec>& subs,
                     const Matrix& points) {
  if (experts.size() != subs.size()) throw ValidationError("need one expert per subdomain");
  return stitch(expert_field(experts), subs, points);
}

StitchedField stitch(const RankField& model, const std::vector<decomp::SubdomainSpec>& subs, const Matrix& points) {
  if (subs.empty()) throw ValidationError("no subdomains to stitch");
  StitchedField f;
  f.points = points;
  f.owner.resize(static_cast<std::size_t>(points.rows()));
  f.provenance.assign(subs.size(), 0);
  std::vector<std::vector<Eigen::Index>> rows(subs.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int r = decomp::owner_of(subs, points.row(i).transpose());
    f.owner[static_cast<std::size_t>(i)] = r;
    rows[static_cast<std::size_t>(r)].push_back(i);
  }
  for (std::size_t r = 0; r < subs.size(); ++r) {
    f.provenance[r] = rows[r].size();
    if (rows[r].empty()) continue;
    Matrix pts(static_cast<Eigen::Index>(rows[r].size()), points.cols());
    for (std::size_t j = 0; j < rows[r].size(); ++j) pts.row(static_cast<Eigen::Index>(j)) = points.row(rows[r][j]);
    const Matrix vals = model(static_cast<int>(r), pts);
    if (vals.rows() != pts.rows()) throw RuntimeFailure("model returned the wrong number of rows");
    if (f.values.size() == 0) f.values.resize(points.rows(), vals.cols());
    for (std::size_t j = 0; j < rows[r].size(); ++j) f.values.row(rows[r][j]) = vals.row(static_cast<Eigen::Index>(j));
  }
  return f;
}

Eigen::VectorXd remove_snapshot_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& times) {
  if (values.size() != times.size()) throw ValidationError("value and time counts differ");
  std::map<double, std::pair<double, std::size_t>> acc;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto& a = acc[times(i)];
    a.first += values(i);
    ++a.second;
  }
  Eigen::VectorXd out(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto& a = acc[times(i)];
    out(i) = values(i) - a.first / static_cast<double>(a.second);
  }
  return out;
}

AlignedPressure align_pressure(const StitchedField& field, const Eigen::VectorXd& reference_p,
                               const std::vector<int>& masters, const std::vector<double>& anchor,
                               const RankField& model, const phys::FlowRegime& regime) {
  const Eigen::Index n = field.points.rows();
  if (reference_p.size() != n) throw ValidationError("reference pressure does not match the evaluation points");
  if (static_cast<int>(anchor.size()) != regime.spatial_dim()) {
    throw ValidationError("anchor needs one coordinate per spatial axis");
  }
  const int ds = regime.spatial_dim();
  const int t_off = regime.has_time() ? 1 : 0;
  Eigen::VectorXd times = regime.has_time() ? Eigen::VectorXd(field.points.col(0)) : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd pred = field.values.col(ds);

  for (int m : masters) {
    std::map<double, double> anchor_p;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (field.owner[static_cast<std::size_t>(i)] == m) anchor_p.emplace(times(i), 0.0);
    }
    if (anchor_p.empty()) continue;
    Matrix pts(static_cast<Eigen::Index>(anchor_p.size()), regime.input_dim());
    Eigen::Index row = 0;
    for (const auto& [t, unused] : anchor_p) {
      if (t_off) pts(row, 0) = t;
      for (int a = 0; a < ds; ++a) pts(row, t_off + a) = anchor[static_cast<std::size_t>(a)];
      ++row;
    }
    const Matrix vals = model(m, pts);
    row = 0;
    for (auto& [t, v] : anchor_p) {
      v = vals(row++, ds);
      if (!std::isfinite(v)) throw RuntimeFailure("anchor pressure is not finite on rank " + std::to_string(m));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (field.owner[static_cast<std::size_t>(i)] == m) pred(i) -= anchor_p.at(times(i));
    }
  }
  AlignedPressure out;
  out.prediction = remove_snapshot_mean(pred, times);
  out.reference = remove_snapshot_mean(reference_p, times);
  return out;
}

double relative_l2(const Matrix& pred, const Matrix& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) throw ValidationError("relative_l2: size mismatch");
  const double den = ref.norm();
  if (!(den > 0.0)) throw ValidationError("relative_l2 is undefined for a zero reference");
  return (pred - ref).norm() / den;
}

double rms_error(const Matrix& pred, const Matrix& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) throw ValidationError("rms_error: size mismatch");
  if (pred.rows() == 0) throw ValidationError("rms_error needs at least one point");
  return std::sqrt((pred - ref).squaredNorm() / static_cast<double>(pred.rows()));
}

namespace {

// Whether b sits directly above a along `axis` and they share a face.
bool face_adjacent(const decomp::SubdomainSpec& a, const decomp::SubdomainSpec& b, int axis) {
  const auto ax = static_cast<std::size_t>(axis);
  for (std::size_t i = 0; i < a.cell.size(); ++i) {
    if (i == ax) {
      if (b.cell[i] != a.cell[i] + 1) return false;
    } else if (b.cell[i] != a.cell[i]) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::vector<InterfaceJump> interface_jump(const RankField& model, const std::vector<decomp::SubdomainSpec>& subs,
                                          const phys::FlowRegime& regime, const ProbeSpec& probe) {
  if (!(probe.epsilon > 0.0) || probe.probes_per_interface < 1) throw ValidationError("bad probe spec");
  std::vector<InterfaceJump> out;
  if (subs.size() < 2) return out;
  const decomp::Box& global = subs.front().global;
  const int dims = global.dim();
  const bool has_time = regime.has_time();
  const int ds = regime.spatial_dim();
  std::mt19937_64 rng(mix_seed(probe.seed, 0x1F));
  for (const auto& a : subs) {
    for (const auto& b : subs) {
      for (int axis = 0; axis < dims; ++axis) {
        if (!face_adjacent(a, b, axis)) continue;
        const auto ax = static_cast<std::size_t>(axis);
        const double face = a.interior.hi[ax];
        const double off = probe.epsilon * global.extent(axis);
        Matrix lo(probe.probes_per_interface, dims);
        for (Eigen::Index k = 0; k < lo.rows(); ++k) {
          for (int c = 0; c < dims; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            lo(k, c) = a.interior.lo[ci] + a.interior.extent(c) * uniform01(rng);
          }
        }
        Matrix hi = lo;
        lo.col(axis).setConstant(face - off);
        hi.col(axis).setConstant(face + off);
        const Matrix ua = model(a.rank, lo);
        const Matrix ub = model(b.rank, hi);
        InterfaceJump j;
        j.rank_a = a.rank;
        j.rank_b = b.rank;
        j.axis = axis;
        j.kind = (has_time && axis == 0) ? decomp::InterfaceKind::kTemporal : decomp::InterfaceKind::kSpatial;
        for (Eigen::Index k = 0; k < lo.rows(); ++k) {
          j.max_velocity_jump = std::max(j.max_velocity_jump, (ua.row(k).head(ds) - ub.row(k).head(ds)).norm());
          j.max_pressure_jump = std::max(j.max_pressure_jump, std::abs(ua(k, ds) - ub(k, ds)));
        }
        out.push_back(j);
      }
    }
  }
  return out;
}

double ErrorSeries::aggregate() const {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < diff_sq.size(); ++i) {
    num += diff_sq[i];
    den += ref_sq[i];
  }
  if (!(den > 0.0)) throw ValidationError("relative_l2 is undefined for a zero reference");
  return std::sqrt(num / den);
}

ErrorSeries error_over_time(const std::string& variable, const Matrix& pred, const Matrix& ref,
                            const Eigen::VectorXd& pred_times, const Eigen::VectorXd& ref_times) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols() || pred_times.size() != pred.rows() ||
      ref_times.size() != ref.rows()) {
    throw ValidationError("error_over_time: size mismatch");
  }
  if (pred_times != ref_times) throw ValidationError("error_over_time: prediction and reference snapshots differ");
  std::map<double, std::pair<double, double>> acc;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    auto& a = acc[pred_times(i)];
    a.first += (pred.row(i) - ref.row(i)).squaredNorm();
    a.second += ref.row(i).squaredNorm();
  }
  ErrorSeries s;
  s.variable = variable;
  for (const auto& [t, a] : acc) {
    s.times.push_back(t);
    s.diff_sq.push_back(a.first);
    s.ref_sq.push_back(a.second);
    if (a.second > 0.0) {
      s.error.push_back(std::sqrt(a.first / a.second));
    } else if (a.first == 0.0) {
      s.error.push_back(0.0);
    } else {
      throw ValidationError("relative_l2 is undefined for a zero reference snapshot at t = " + std::to_string(t));
    }
  }
  return s;
}

std::vector<std::string> variable_names(const phys::FlowRegime& regime) {
  std::vector<std::string> v{"u", "v"};
  if (regime.spatial_dim() == 3) v.push_back("w");
  v.push_back("vel");
  v.push_back("p");
  return v;
}

std::vector<VariableError> field_errors(const Matrix& pred_velocity, const Matrix& ref_velocity,
                                        const AlignedPressure& pressure) {
  static const char* names[] = {"u", "v", "w"};
  std::vector<VariableError> out;
  for (Eigen::Index c = 0; c < ref_velocity.cols(); ++c) {
    out.push_back({names[c], relative_l2(pred_velocity.col(c), ref_velocity.col(c))});
  }
  out.push_back({"vel", relative_l2(pred_velocity, ref_velocity)});
  out.push_back({"p", relative_l2(pressure.prediction, pressure.reference)});
  return out;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size()));
  }
  return a;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "variable,seed,P,decomposition,relative_l2\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.relative_l2);
    out << r.variable << ',' << r.seed << ',' << r.P << ',' << r.decomposition << ',' << buf << '\n';
  }
}

void write_series_csv(std::ostream& out, const std::vector<ErrorSeries>& series) {
  out << "variable,t,relative_l2\n";
  char buf[96];
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.times.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", s.times[i], s.error[i]);
      out << s.variable << ',' << buf << '\n';
    }
  }
}

void write_jumps_csv(std::ostream& out, const std::vector<InterfaceJump>& jumps) {
  out << "rank_a,rank_b,kind,axis,max_velocity_jump,max_pressure_jump\n";
  char buf[96];
  for (const auto& j : jumps) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", j.max_velocity_jump, j.max_pressure_jump);
    out << j.rank_a << ',' << j.rank_b << ',' << decomp::to_string(j.kind) << ',' << j.axis << ',' << buf << '\n';
  }
}

}  // namespace dpinn::eval
