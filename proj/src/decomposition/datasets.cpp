#include "dpinn/decomposition/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

#include "dpinn/error.hpp"
#include "dpinn/random.hpp"

namespace dpinn::decomp {

namespace {

ObservationSet take_rows(const FlowTable& ref, const std::vector<Eigen::Index>& rows, bool steady) {
  const Matrix inputs = ref.inputs(steady);
  ObservationSet obs;
  obs.points.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  obs.velocity.resize(static_cast<Eigen::Index>(rows.size()), ref.spatial_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    obs.points.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
    obs.velocity.row(static_cast<Eigen::Index>(i)) = ref.velocity.row(rows[i]);
  }
  return obs;
}

}  // namespace

ObservationSet grid_observation_plan(const FlowTable& reference, int per_axis, bool steady) {
  if (per_axis < 1) throw ValidationError("grid observation plan needs at least one point per axis");
  const int ds = reference.spatial_dim;
  std::vector<std::set<double>> chosen(static_cast<std::size_t>(ds));
  for (int a = 0; a < ds; ++a) {
    std::set<double> uniq;
    for (Eigen::Index r = 0; r < reference.rows(); ++r) uniq.insert(reference.coords(r, 1 + a));
    const std::vector<double> vals(uniq.begin(), uniq.end());
    if (static_cast<int>(vals.size()) < per_axis) {
      throw ValidationError("reference has only " + std::to_string(vals.size()) + " distinct values on axis " +
                            std::to_string(a) + ", cannot pick " + std::to_string(per_axis));
    }
    for (int i = 0; i < per_axis; ++i) {
      const std::size_t idx =
          per_axis == 1 ? vals.size() / 2
                        : static_cast<std::size_t>(std::llround(static_cast<double>(i) *
                                                                static_cast<double>(vals.size() - 1) /
                                                                static_cast<double>(per_axis - 1)));
      chosen[static_cast<std::size_t>(a)].insert(vals[idx]);
    }
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < reference.rows(); ++r) {
    bool keep = true;
    for (int a = 0; a < ds && keep; ++a) keep = chosen[static_cast<std::size_t>(a)].count(reference.coords(r, 1 + a)) > 0;
    if (keep) rows.push_back(r);
  }
  return take_rows(reference, rows, steady);
}

ObservationSet random_observation_plan(const FlowTable& reference, std::size_t count, bool steady,
                                       std::uint64_t seed) {
  std::map<double, std::vector<Eigen::Index>> by_time;
  for (Eigen::Index r = 0; r < reference.rows(); ++r) by_time[reference.coords(r, 0)].push_back(r);
  std::mt19937_64 rng(mix_seed(seed, 0x0B5));
  std::vector<Eigen::Index> rows;
  const int snapshots = static_cast<int>(by_time.size());
  int s = 0;
  for (auto& [t, candidates] : by_time) {
    const std::size_t want = share(count, snapshots, s++);
    if (want > candidates.size()) {
      throw ValidationError("snapshot t=" + std::to_string(t) + " has fewer rows than requested observations");
    }
    shuffle(candidates.begin(), candidates.end(), rng);
    std::vector<Eigen::Index> pick(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(want));
    std::sort(pick.begin(), pick.end());
    rows.insert(rows.end(), pick.begin(), pick.end());
  }
  return take_rows(reference, rows, steady);
}

std::size_t share(std::size_t total, int ranks, int rank) {
  if (ranks < 1 || rank < 0 || rank >= ranks) throw ValidationError("bad rank in share()");
  const auto r = static_cast<std::size_t>(ranks);
  const auto k = static_cast<std::size_t>(rank);
  return total / r + (k < total % r ? 1 : 0);
}

Matrix sample_uniform(const Box& box, std::size_t count, std::mt19937_64& rng) {
  Matrix pts(static_cast<Eigen::Index>(count), box.dim());
  for (Eigen::Index n = 0; n < pts.rows(); ++n) {
    for (int a = 0; a < box.dim(); ++a) {
      const auto i = static_cast<std::size_t>(a);
      pts(n, a) = box.lo[i] + (box.hi[i] - box.lo[i]) * uniform01(rng);
    }
  }
  return pts;
}

RankDatasets sample_rank_datasets(const SubdomainSpec& spec, const SamplingBudget& budget, const ObservationSet& plan,
                                  std::uint64_t seed) {
  RankDatasets d;
  const int dims = spec.interior.dim();
  if (plan.points.rows() > 0 && plan.points.cols() != dims) {
    throw ValidationError("observation plan dimension does not match the decomposition");
  }
  std::vector<Eigen::Index> mine;
  for (Eigen::Index r = 0; r < plan.points.rows(); ++r) {
    if (owns(spec, plan.points.row(r).transpose())) mine.push_back(r);
  }
  if (plan.points.rows() > 0 && mine.empty()) {
    throw ValidationError("reference gap: rank " + std::to_string(spec.rank) + " (k=" + std::to_string(spec.k) +
                          ", m=" + std::to_string(spec.m) + ") has no observations inside its interior");
  }
  d.obs_points.resize(static_cast<Eigen::Index>(mine.size()), dims);
  d.obs_velocity.resize(static_cast<Eigen::Index>(mine.size()), plan.velocity.cols());
  for (std::size_t i = 0; i < mine.size(); ++i) {
    d.obs_points.row(static_cast<Eigen::Index>(i)) = plan.points.row(mine[i]);
    d.obs_velocity.row(static_cast<Eigen::Index>(i)) = plan.velocity.row(mine[i]);
  }

  std::mt19937_64 rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(spec.rank)));
  d.pde_points = sample_uniform(spec.interior, share(budget.n_pde, spec.rank_count, spec.rank), rng);
  for (const auto& g : spec.ghosts) d.ghost_points.push_back(sample_uniform(g.region, budget.n_ghost_per_interface, rng));
  return d;
}

GhostDiagnostic ghost_generalization_diagnostic(const net::ExpertParams& expert, const NeighborEval& neighbor,
                                                const SubdomainSpec& spec, const RankDatasets& data,
                                                std::uint64_t seed) {
  if (data.ghost_points.size() != spec.ghosts.size()) throw ValidationError("ghost sets do not match the spec");
  net::Evaluator ev;
  std::mt19937_64 rng(mix_seed(seed, 5000 + static_cast<std::uint64_t>(spec.rank)));
  double sel = 0.0;
  double fresh = 0.0;
  std::size_t n_sel = 0;
  std::size_t n_fresh = 0;
  const auto accumulate = [&](const Matrix& pts, int nbr, double& acc, std::size_t& count) {
    if (pts.rows() == 0) return;
    const Matrix mine = ev.predict(expert, pts);
    const Matrix theirs = neighbor(nbr, pts);
    acc += (mine - theirs).squaredNorm();
    count += static_cast<std::size_t>(pts.rows());
  };
  for (std::size_t i = 0; i < spec.ghosts.size(); ++i) {
    const auto& g = spec.ghosts[i];
    accumulate(data.ghost_points[i], g.neighbor, sel, n_sel);
    const Matrix extra = sample_uniform(g.region, static_cast<std::size_t>(data.ghost_points[i].rows()), rng);
    accumulate(extra, g.neighbor, fresh, n_fresh);
  }
  GhostDiagnostic out;
  out.mismatch_selected = n_sel ? sel / static_cast<double>(n_sel) : 0.0;
  out.mismatch_fresh = n_fresh ? fresh / static_cast<double>(n_fresh) : 0.0;
  if (out.mismatch_selected > 0.0) {
    out.ratio = out.mismatch_fresh / out.mismatch_selected;
  } else {
    out.ratio = out.mismatch_fresh > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return out;
}

}  // namespace dpinn::decomp
