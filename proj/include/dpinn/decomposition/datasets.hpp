#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dpinn/decomposition/flow_csv.hpp"
#include "dpinn/decomposition/partition.hpp"
#include "dpinn/network/expert.hpp"

namespace dpinn::decomp {

// Velocity observations in network input coordinates.
struct ObservationSet {
  Matrix points;    // n x input_dim
  Matrix velocity;  // n x spatial_dim
};

// Lattice of reference rows: for each spatial axis, `per_axis` evenly spaced
// values out of the distinct coordinates present, at every snapshot.
ObservationSet grid_observation_plan(const FlowTable& reference, int per_axis, bool steady);
// `count` random reference rows, spread evenly over the snapshots.
ObservationSet random_observation_plan(const FlowTable& reference, std::size_t count, bool steady, std::uint64_t seed);

struct SamplingBudget {
  std::size_t n_pde = 0;  // global collocation total
  std::size_t n_ghost_per_interface = 0;
};

struct RankDatasets {
  Matrix obs_points;
  Matrix obs_velocity;
  Matrix pde_points;
  std::vector<Matrix> ghost_points;  // one per SubdomainSpec::ghosts entry
};

// Number of the `total` points assigned to `rank` out of `ranks`.
std::size_t share(std::size_t total, int ranks, int rank);

// Observations are the plan rows the rank owns; collocation points are
// uniform in the interior; each ghost component gets exactly
// n_ghost_per_interface uniform points. Deterministic per (spec, seed).
RankDatasets sample_rank_datasets(const SubdomainSpec& spec, const SamplingBudget& budget, const ObservationSet& plan,
                                  std::uint64_t seed);

Matrix sample_uniform(const Box& box, std::size_t count, std::mt19937_64& rng);

struct GhostDiagnostic {
  double mismatch_selected = 0.0;
  double mismatch_fresh = 0.0;
  double ratio = 0.0;  // fresh / selected; +inf when selected is 0 and fresh is not
};

// Returns the (u, p) values a neighbor would send for the given points.
using NeighborEval = std::function<Matrix(int neighbor, const Matrix& points)>;

// Mean squared (u, p) mismatch between the expert and its neighbors on the
// training ghost points and on a fresh same-size sample of each ghost
// component. A large fresh/selected ratio means the ghost set is too sparse.
GhostDiagnostic ghost_generalization_diagnostic(const net::ExpertParams& expert, const NeighborEval& neighbor,
                                                const SubdomainSpec& spec, const RankDatasets& data,
                                                std::uint64_t seed);

}  // namespace dpinn::decomp
