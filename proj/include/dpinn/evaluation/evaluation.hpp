#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpinn/decomposition/partition.hpp"
#include "dpinn/network/expert.hpp"
#include "dpinn/physics/physics.hpp"

namespace dpinn::eval {

using ad::Matrix;

struct StitchedField {
  Matrix points;           // n x input_dim
  Matrix values;           // n x output_dim, (u, v[, w], p)
  std::vector<int> owner;  // owning rank per point
  std::vector<std::size_t> provenance;  // points per rank
};

// Field of one rank's model: points (n x input_dim) -> n x output_dim.
using RankField = std::function<Matrix(int rank, const Matrix& points)>;

// Wraps trained experts; evaluation is chunked and not thread-safe.
RankField expert_field(const std::vector<net::ExpertParams>& experts);

// Evaluates every point with its interior owner's model only.
StitchedField stitch(const RankField& field, const std::vector<decomp::SubdomainSpec>& subs, const Matrix& points);
StitchedField stitch(const std::vector<net::ExpertParams>& experts, const std::vector<decomp::SubdomainSpec>& subs,
                     const Matrix& points);

struct AlignedPressure {
  Eigen::VectorXd prediction;
  Eigen::VectorXd reference;
};

// Master-owned predictions are pinned to zero at the anchor (their own
// expert evaluated at (anchor, t)); slave-owned ones pass through. Then the
// per-snapshot spatial mean is removed from prediction and reference.
AlignedPressure align_pressure(const StitchedField& field, const Eigen::VectorXd& reference_p,
                               const std::vector<int>& masters, const std::vector<double>& anchor,
                               const RankField& model, const phys::FlowRegime& regime);

// Subtracts the mean of each snapshot (points sharing a time value).
Eigen::VectorXd remove_snapshot_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& times);

// ||pred - ref|| / ||ref|| in the Frobenius norm; throws when ||ref|| = 0.
double relative_l2(const Matrix& pred, const Matrix& ref);

// sqrt(mean_n |pred_n - ref_n|^2) over rows.
double rms_error(const Matrix& pred, const Matrix& ref);

struct ProbeSpec {
  double epsilon = 1e-4;  // fraction of the global axis extent
  int probes_per_interface = 256;
  std::uint64_t seed = 0;
};

struct InterfaceJump {
  int rank_a = -1;  // lower side
  int rank_b = -1;  // upper side
  int axis = 0;     // input-coordinate axis normal to the face
  decomp::InterfaceKind kind = decomp::InterfaceKind::kSpatial;
  double max_velocity_jump = 0.0;  // max over probes of |u_a - u_b|
  double max_pressure_jump = 0.0;  // raw pressure, no gauge alignment
};

// One entry per pair of face-adjacent subdomains; empty for P = 1.
std::vector<InterfaceJump> interface_jump(const RankField& model, const std::vector<decomp::SubdomainSpec>& subs,
                                          const phys::FlowRegime& regime, const ProbeSpec& probe = {});

struct ErrorSeries {
  std::string variable;
  std::vector<double> times;
  std::vector<double> error;  // relative L2 per snapshot
  // Squared norms kept so the series can be aggregated exactly.
  std::vector<double> diff_sq;
  std::vector<double> ref_sq;

  // sqrt(sum diff_sq / sum ref_sq), equal to relative_l2 over all points.
  double aggregate() const;
};

// Per-snapshot relative L2 of the given columns. Throws when the time
// coordinates of prediction and reference differ.
ErrorSeries error_over_time(const std::string& variable, const Matrix& pred, const Matrix& ref,
                            const Eigen::VectorXd& pred_times, const Eigen::VectorXd& ref_times);

// Variable names in report order: u, v[, w], vel, p.
std::vector<std::string> variable_names(const phys::FlowRegime& regime);

struct VariableError {
  std::string variable;
  double relative_l2 = 0.0;
};

// Errors for every variable; pressure uses the aligned pair.
std::vector<VariableError> field_errors(const Matrix& pred_velocity, const Matrix& ref_velocity,
                                        const AlignedPressure& pressure);

struct Aggregate {
  double mean = 0.0;
  std::optional<double> std;  // population std, only for >= 2 values
  std::size_t count = 0;
};
Aggregate aggregate(const std::vector<double>& values);

struct MetricRow {
  std::string variable;
  std::string seed;  // a seed number, or "mean" / "std"
  int P = 1;
  std::string decomposition;
  double relative_l2 = 0.0;
};
// variable,seed,P,decomposition,relative_l2
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
// variable,t,relative_l2
void write_series_csv(std::ostream& out, const std::vector<ErrorSeries>& series);
// rank_a,rank_b,kind,axis,max_velocity_jump,max_pressure_jump
void write_jumps_csv(std::ostream& out, const std::vector<InterfaceJump>& jumps);

}  // namespace dpinn::eval
