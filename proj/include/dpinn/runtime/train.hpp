#pragma once

#include <chrono>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpinn/runtime/rank.hpp"

namespace dpinn::rt {

struct TrainProblem {
  std::vector<decomp::SubdomainSpec> subdomains;
  std::vector<decomp::RankDatasets> datasets;  // one per subdomain
  net::ExpertConfig expert;
  phys::FlowRegime regime;
  TrainConfig config;
};

struct TrainHooks {
  // Sees every message before delivery. Called from worker threads, one at a
  // time.
  std::function<void(const GhostMessage&)> on_message;
  // Returning true drops the message instead of delivering it.
  std::function<bool(const GhostMessage&)> drop_message;
  // Called by the coordinator for every epoch report, in arrival order.
  std::function<void(const EpochReport&)> on_report;
  std::chrono::milliseconds message_timeout{std::chrono::minutes(10)};
};

struct TrainResult {
  std::vector<net::ExpertParams> experts;
  std::vector<std::vector<EpochReport>> history;  // per rank, by epoch
  std::vector<int> masters;
  // Largest observed gap between a rank's epoch counter and a neighbor's.
  int max_epoch_lead = 0;
  double wall_seconds = 0.0;
};

std::vector<RankState> make_rank_states(const TrainProblem& problem);

// One worker thread per rank, ghost exchange every comm_interval epochs
// (including epoch 0), a coordinator collecting the reports. Deterministic
// for fixed inputs. The first rank failure aborts all ranks and is rethrown.
TrainResult train(const TrainProblem& problem, const TrainHooks& hooks = {});

// Seconds per epoch from the slowest rank's completion times, median over
// epochs.
double median_epoch_seconds(const TrainResult& result);

// epoch,loss_obs,loss_pde,loss_gh_u,loss_gh_p_space,loss_gh_p_time,lr
void write_loss_history(std::ostream& out, const std::vector<EpochReport>& history);
void write_loss_history(const std::string& path, const std::vector<EpochReport>& history);

}  // namespace dpinn::rt
