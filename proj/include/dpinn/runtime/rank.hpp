#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dpinn/decomposition/datasets.hpp"
#include "dpinn/decomposition/partition.hpp"
#include "dpinn/network/expert.hpp"
#include "dpinn/physics/physics.hpp"
#include "dpinn/runtime/optimizer.hpp"

namespace dpinn::rt {

enum class Role { kMaster, kSlave };
std::string_view to_string(Role role);

struct TrainConfig {
  int epochs = 1000;
  std::size_t batch_size = 1024;
  LrSchedule lr;
  int comm_interval = 1;
  std::optional<double> clip_norm;
  std::uint64_t seed = 0;
  phys::LossWeights weights;
  std::vector<double> anchor;  // spatial coordinates only
  // Both on is the full protocol; switching them off gives the symmetric,
  // unnormalized ablation.
  bool anchor_normalization = true;
  bool asymmetric_weighting = true;

  void validate() const;
};

// Masters drop the spatial ghost-pressure term when weighting is asymmetric.
phys::LossWeights effective_weights(const phys::LossWeights& base, Role role, bool asymmetric);

// Last values received for one ghost component, at this rank's ghost points.
struct NeighborCache {
  Matrix velocity;  // n x spatial_dim
  Eigen::VectorXd pressure;
  bool normalized = false;
  int epoch = -1;  // exchange epoch that filled it; -1 before the first one
};

struct RankState {
  decomp::SubdomainSpec spec;
  Role role = Role::kSlave;
  phys::FlowRegime regime;
  net::ExpertParams params;
  AdamState adam;
  decomp::RankDatasets data;
  std::vector<NeighborCache> cache;  // one per spec.ghosts entry
  phys::LossWeights weights;         // effective
  std::mt19937_64 rng;               // mini-batch shuffling
  int epoch = 0;                     // next epoch to train
};

// Parameters are seeded by (seed, rank), with the input map fitted to the
// extended box so ghost points stay inside [-1, 1].
RankState make_rank_state(const decomp::SubdomainSpec& spec, bool is_master, const net::ExpertConfig& expert,
                          decomp::RankDatasets data, const phys::FlowRegime& regime, const TrainConfig& config);

// ---- Ghost exchange ----

struct GhostMessage {
  int source = -1;
  int destination = -1;
  int interface = -1;  // index into the destination's ghost components
  decomp::InterfaceKind kind = decomp::InterfaceKind::kSpatial;
  int epoch = 0;
  Matrix points;  // the destination's ghost points
  Matrix velocity;
  Eigen::VectorXd pressure;
  bool normalized = false;
};

// A master's pressure at (anchor, t) for each distinct time it needs.
struct AnchorPressure {
  std::vector<double> times;
  std::vector<double> values;

  // Throws RuntimeFailure when t was not evaluated.
  double at(double t) const;
};

// p[i] - anchor(times[i]).
Eigen::VectorXd anchor_normalize(const Eigen::VectorXd& p, const Eigen::VectorXd& times, const AnchorPressure& anchor);

// Time coordinate per point; zeros for steady flows.
Eigen::VectorXd point_times(const Matrix& points, const phys::FlowRegime& regime);

AnchorPressure evaluate_anchor(net::Evaluator& ev, const net::ExpertParams& params, const phys::FlowRegime& regime,
                               const std::vector<double>& anchor, const Eigen::VectorXd& times);

struct OutgoingLink {
  int destination = -1;
  int interface = -1;
  decomp::InterfaceKind kind = decomp::InterfaceKind::kSpatial;
  Matrix points;
};

// For every rank, the ghost sets it must fill on its neighbors.
std::vector<std::vector<OutgoingLink>> outgoing_links(const std::vector<RankState>& ranks);

// Evaluates the source expert on the destination's ghost points; masters
// subtract their anchor pressure at matching times when normalization is on.
GhostMessage make_message(const RankState& source, const OutgoingLink& link, int epoch, const TrainConfig& config,
                          net::Evaluator& ev);

void apply_message(RankState& destination, const GhostMessage& message);

// Sequential exchange over all ranks: every message is built from the
// current parameters before any cache is replaced. Returns the messages.
std::vector<GhostMessage> exchange_ghosts(std::vector<RankState>& ranks, int epoch, const TrainConfig& config);

// ---- Local training ----

// Per-term tapes, cached by micro-batch size. Each accumulate call runs one
// micro-batch, adds scale * d(sum)/d(theta) into grads and returns the
// unscaled sum(s).
class LossTapes {
 public:
  LossTapes(const net::ExpertConfig& expert, const phys::FlowRegime& regime, phys::ComponentWeights components);

  // sum_n sum_c w_c (u_c - target_c)^2
  double accumulate_obs(const net::ExpertParams& params, const Matrix& points, const Matrix& targets, double scale,
                        std::span<Matrix> grads);
  // sum_n |r_n|^2 over momentum and continuity residuals
  double accumulate_pde(const net::ExpertParams& params, const Matrix& points, double scale, std::span<Matrix> grads);

  struct GhostSums {
    double velocity = 0.0;        // sum_n sum_c w_c (u_c - u_nbr)^2
    double pressure_space = 0.0;  // over points with space_mask = 1
    double pressure_time = 0.0;   // over points with time_mask = 1
  };
  struct GhostScales {
    double velocity = 0.0;
    double pressure_space = 0.0;
    double pressure_time = 0.0;
  };
  GhostSums accumulate_ghost(const net::ExpertParams& params, const Matrix& points, const Matrix& nbr_velocity,
                             const Eigen::VectorXd& nbr_pressure, const Eigen::VectorXd& space_mask,
                             const Eigen::VectorXd& time_mask, const GhostScales& scales, std::span<Matrix> grads);

 private:
  struct ObsTape {
    ad::NetworkTape net;
    ad::NodeId target = -1, scale = -1, sum = -1, loss = -1;
  };
  struct PdeTape {
    ad::NetworkTape net;
    ad::NodeId scale = -1, sum = -1, loss = -1;
  };
  struct GhostTape {
    ad::NetworkTape net;
    ad::NodeId target = -1, mask = -1, cu = -1, cs = -1, ct = -1;
    ad::NodeId su = -1, ss = -1, st = -1, loss = -1;
  };
  ObsTape& obs_tape(ad::Index batch);
  PdeTape& pde_tape(ad::Index batch);
  GhostTape& ghost_tape(ad::Index batch);

  net::ExpertConfig expert_;
  phys::FlowRegime regime_;
  std::vector<double> components_;
  std::map<ad::Index, ObsTape> obs_;
  std::map<ad::Index, PdeTape> pde_;
  std::map<ad::Index, GhostTape> ghost_;
};

struct EpochGradient {
  std::vector<Matrix> grads;
  phys::LossParts parts;  // full-set means, before the lambda weights
  double total = 0.0;     // compose_loss with the effective weights
};

// One full pass over the local data in shuffled mini-batches of the
// configured size, accumulating d(total)/d(theta). Advances the shuffle RNG
// but not the parameters. Throws on a non-finite loss.
EpochGradient epoch_gradient(RankState& state, LossTapes& tapes, const TrainConfig& config);

struct EpochReport {
  int rank = 0;
  int epoch = 0;
  phys::LossParts parts;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double end_time = 0.0;  // seconds since training started
};

// epoch_gradient followed by exactly one optimizer step.
EpochReport train_epoch(RankState& state, LossTapes& tapes, const TrainConfig& config);

}  // namespace dpinn::rt
