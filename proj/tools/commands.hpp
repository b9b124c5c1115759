#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "dpinn/decomposition/flow_csv.hpp"
#include "dpinn/evaluation/evaluation.hpp"
#include "dpinn/runtime/train.hpp"

namespace dpinn::cli {

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<int> procs;
  std::optional<std::string> out;
  std::optional<int> epochs;
  bool force = false;
};

// Loads the config (or the default benchmark config) and applies flags.
RunConfig resolve_config(const Overrides& o);

// Observation plan, per-rank samples and configs for one seed.
rt::TrainProblem build_problem(const RunConfig& config, const decomp::FlowTable& reference,
                               const decomp::PartitionSpec& part, std::uint64_t seed);

struct FieldEvaluation {
  std::vector<eval::VariableError> errors;  // u, v[, w], vel, p
  std::vector<eval::ErrorSeries> series;
  std::vector<eval::InterfaceJump> jumps;
  double velocity_rms = 0.0;
  std::vector<std::size_t> provenance;
};

// Stitches the model over every reference row, aligns pressure and computes
// all reported metrics.
FieldEvaluation evaluate_field(const RunConfig& config, const decomp::FlowTable& reference,
                               const decomp::PartitionSpec& part, const eval::RankField& model);

std::string run_dir(const RunConfig& config, const decomp::PartitionSpec& part);
std::string seed_dir(const RunConfig& config, const decomp::PartitionSpec& part, std::uint64_t seed);

// Git-style blob hash (SHA-1 of "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);

void cmd_generate(const RunConfig& config, bool force);
void cmd_train(const RunConfig& config, bool force);
void cmd_evaluate(const RunConfig& config);
void cmd_scaling(const RunConfig& config, bool force);
void cmd_plot(const RunConfig& config);

}  // namespace dpinn::cli
