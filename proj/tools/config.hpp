#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpinn/benchmarks/manufactured.hpp"
#include "dpinn/benchmarks/reference_grid.hpp"
#include "dpinn/decomposition/partition.hpp"
#include "dpinn/network/expert.hpp"
#include "dpinn/runtime/rank.hpp"
#include "json.hpp"

namespace dpinn::cli {

inline constexpr int kSchemaVersion = 1;

enum class ObsPlan { kGrid, kRandom };

struct RunConfig {
  bench::SolutionKind benchmark = bench::SolutionKind::kKovasznay;
  double reynolds = 100.0;
  double beltrami_a = 1.0;
  double beltrami_d = 1.0;

  bench::GridSpec grid;  // domain box, time window and reference resolution

  int procs = 1;  // used when no explicit spatial grid is given
  std::vector<int> spatial_grid;
  int time_splits = 1;
  double delta_space = 0.0;
  double delta_time = 0.0;
  std::vector<double> anchor;

  std::size_t n_obs = 100;
  std::size_t n_pde = 5000;
  std::size_t n_ghost = 100;
  ObsPlan obs_plan = ObsPlan::kGrid;

  net::ExpertConfig expert;
  rt::TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output_dir = "runs";
  std::string reference_file = "reference.csv";  // relative to output_dir

  std::vector<int> scaling_procs{1, 2, 4};
  int scaling_epochs = 50;

  bench::ManufacturedSolution solution() const;
  phys::FlowRegime regime() const;
  decomp::GlobalDomain domain() const;
  // Explicit grid if given, otherwise the standard layout for `procs`.
  decomp::PartitionSpec partition_spec() const;
  decomp::PartitionSpec partition_spec_for(int p) const;
  std::string reference_path() const;
  void validate() const;
};

// Default settings for a benchmark (see README for the values).
RunConfig default_config(bench::SolutionKind kind);

// Standard layouts: 2 -> 2x1, 4 -> 2x2, 8 -> 2x2 plus a time split (2D
// unsteady), 2x2x2 (3D) or 4x2 (steady).
decomp::PartitionSpec layout_for(int procs, const phys::FlowRegime& regime);

// Parses a config document over the benchmark defaults. Unknown keys, wrong
// types and invalid values throw ValidationError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// Fully resolved config echo, schema_version included.
nlohmann::json to_json(const RunConfig& config);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace dpinn::cli
