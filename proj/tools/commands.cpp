#include "commands.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "dpinn/benchmarks/reference_grid.hpp"
#include "dpinn/decomposition/datasets.hpp"
#include "dpinn/error.hpp"
#include "svg_plot.hpp"

namespace dpinn::cli {

namespace fs = std::filesystem;
using ad::Matrix;
using nlohmann::json;

RunConfig resolve_config(const Overrides& o) {
  RunConfig c;
  if (o.config_path) {
    c = load_config(*o.config_path);
  } else {
    c = parse_config(json::object());
  }
  if (o.seeds) c.seeds = *o.seeds;
  if (o.procs) {
    c.procs = *o.procs;
    c.spatial_grid.clear();
    c.time_splits = 1;
  }
  if (o.out) c.output_dir = *o.out;
  if (o.epochs) c.train.epochs = *o.epochs;
  c.validate();
  return c;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  f << text;
  if (!f) throw RuntimeFailure("write failed for " + path);
}

decomp::FlowTable load_reference(const RunConfig& c) {
  const std::string path = c.reference_path();
  if (!fs::exists(path)) throw ValidationError("reference dataset " + path + " is missing; run `generate` first");
  decomp::FlowTable t = decomp::read_flow_csv(path);
  if (t.spatial_dim != c.regime().spatial_dim()) throw ValidationError("reference dataset has the wrong dimension");
  if (!t.has_pressure()) throw ValidationError("reference dataset needs a pressure column for evaluation");
  return t;
}

void write_manifest(const RunConfig& c, const std::string& dir, const std::string& command,
                    const std::vector<std::string>& inputs, json extra = json::object()) {
  json m;
  m["command"] = command;
  m["config"] = to_json(c);
  const std::string config_text = m["config"].dump(2);
  json hashes = json::object();
  std::string combined = git_blob_hash(config_text);
  hashes["config"] = combined;
  for (const auto& path : inputs) {
    const std::string h = git_blob_hash(read_file(path));
    hashes[fs::path(path).filename().string()] = h;
    combined += h;
  }
  m["input_hashes"] = hashes;
  m["inputs_hash"] = git_blob_hash(combined);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text((fs::path(dir) / ("manifest_" + command + ".json")).string(), m.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw RuntimeFailure("SHA-1 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string run_dir(const RunConfig& c, const decomp::PartitionSpec& part) {
  return (fs::path(c.output_dir) / ("P" + std::to_string(part.rank_count()) + "_" + part.label())).string();
}

std::string seed_dir(const RunConfig& c, const decomp::PartitionSpec& part, std::uint64_t seed) {
  return (fs::path(run_dir(c, part)) / ("seed_" + std::to_string(seed))).string();
}

rt::TrainProblem build_problem(const RunConfig& c, const decomp::FlowTable& reference,
                               const decomp::PartitionSpec& part, std::uint64_t seed) {
  const phys::FlowRegime regime = c.regime();
  const bool steady = !regime.has_time();
  decomp::ObservationSet plan;
  if (c.n_obs > 0) {
    if (c.obs_plan == ObsPlan::kGrid) {
      const int ds = regime.spatial_dim();
      const int per_axis = static_cast<int>(std::lround(std::pow(static_cast<double>(c.n_obs), 1.0 / ds)));
      std::size_t total = 1;
      for (int a = 0; a < ds; ++a) total *= static_cast<std::size_t>(per_axis);
      if (total != c.n_obs) {
        throw ValidationError("grid observation plan needs n_obs to be a perfect " + std::to_string(ds) +
                              "-th power, got " + std::to_string(c.n_obs));
      }
      plan = decomp::grid_observation_plan(reference, per_axis, steady);
    } else {
      plan = decomp::random_observation_plan(reference, c.n_obs, steady, seed);
    }
  }
  rt::TrainProblem p;
  p.subdomains = decomp::partition(c.domain(), part);
  p.regime = regime;
  p.expert = c.expert;
  p.config = c.train;
  p.config.seed = seed;
  p.config.anchor = c.anchor;
  for (const auto& s : p.subdomains) {
    p.datasets.push_back(decomp::sample_rank_datasets(s, {c.n_pde, c.n_ghost}, plan, seed));
  }
  return p;
}

FieldEvaluation evaluate_field(const RunConfig& c, const decomp::FlowTable& reference,
                               const decomp::PartitionSpec& part, const eval::RankField& model) {
  const phys::FlowRegime regime = c.regime();
  const int ds = regime.spatial_dim();
  const auto subs = decomp::partition(c.domain(), part);
  const Matrix points = reference.inputs(!regime.has_time());
  const eval::StitchedField field = eval::stitch(model, subs, points);
  const auto masters = decomp::identify_masters(subs, c.anchor);
  const eval::AlignedPressure p = eval::align_pressure(field, reference.pressure, masters, c.anchor, model, regime);
  const Matrix pred_vel = field.values.leftCols(ds);

  FieldEvaluation out;
  out.errors = eval::field_errors(pred_vel, reference.velocity, p);
  out.velocity_rms = eval::rms_error(pred_vel, reference.velocity);
  out.provenance = field.provenance;
  const Eigen::VectorXd times = reference.coords.col(0);
  const auto names = eval::variable_names(regime);
  for (const auto& name : names) {
    if (name == "vel") {
      out.series.push_back(eval::error_over_time(name, pred_vel, reference.velocity, times, times));
    } else if (name == "p") {
      out.series.push_back(eval::error_over_time(name, p.prediction, p.reference, times, times));
    } else {
      const Eigen::Index col = name == "u" ? 0 : (name == "v" ? 1 : 2);
      out.series.push_back(
          eval::error_over_time(name, pred_vel.col(col), reference.velocity.col(col), times, times));
    }
  }
  out.jumps = eval::interface_jump(model, subs, regime);
  return out;
}

void cmd_generate(const RunConfig& c, bool force) {
  const std::string path = c.reference_path();
  if (fs::exists(path) && !force) throw ValidationError(path + " exists; pass --force to overwrite");
  fs::create_directories(fs::path(path).parent_path().empty() ? fs::path(".") : fs::path(path).parent_path());
  const decomp::FlowTable table = bench::make_reference_grid(c.solution(), c.grid);
  decomp::write_flow_csv(path, table);
  write_manifest(c, fs::path(path).parent_path().string(), "generate", {});
  std::cout << "wrote " << table.rows() << " rows to " << path << "\n";
}

namespace {

rt::TrainResult train_one(const RunConfig& c, const decomp::FlowTable& reference, const decomp::PartitionSpec& part,
                          std::uint64_t seed, const std::string& dir, bool force) {
  if (fs::exists(fs::path(dir) / "rank_0.ckpt") && !force) {
    throw ValidationError(dir + " already holds checkpoints; pass --force to overwrite");
  }
  const rt::TrainProblem problem = build_problem(c, reference, part, seed);
  const int total = c.train.epochs;
  const int every = std::max(1, total / 10);
  rt::TrainHooks hooks;
  hooks.on_report = [&](const rt::EpochReport& r) {
    if (r.rank == 0 && ((r.epoch + 1) % every == 0 || r.epoch + 1 == total)) {
      std::cout << "  seed " << seed << " epoch " << r.epoch + 1 << "/" << total << " rank 0 loss " << fmt(r.total)
                << "\n"
                << std::flush;
    }
  };
  rt::TrainResult result = rt::train(problem, hooks);
  fs::create_directories(dir);
  for (std::size_t r = 0; r < result.experts.size(); ++r) {
    net::save_checkpoint((fs::path(dir) / ("rank_" + std::to_string(r) + ".ckpt")).string(), result.experts[r]);
    rt::write_loss_history((fs::path(dir) / ("loss_rank_" + std::to_string(r) + ".csv")).string(),
                           result.history[r]);
  }
  return result;
}

}  // namespace

void cmd_train(const RunConfig& c, bool force) {
  const decomp::FlowTable reference = load_reference(c);
  const auto part = c.partition_spec();
  fs::create_directories(run_dir(c, part));
  for (std::uint64_t seed : c.seeds) {
    const std::string dir = seed_dir(c, part, seed);
    std::cout << "training seed " << seed << " on " << part.rank_count() << " rank(s) (" << part.label() << ")\n";
    const auto result = train_one(c, reference, part, seed, dir, force);
    std::cout << "  done in " << fmt(result.wall_seconds) << " s, masters:";
    for (int m : result.masters) std::cout << ' ' << m;
    std::cout << "\n";
  }
  write_manifest(c, run_dir(c, part), "train", {c.reference_path()});
}

void cmd_evaluate(const RunConfig& c) {
  const decomp::FlowTable reference = load_reference(c);
  const auto part = c.partition_spec();
  const int P = part.rank_count();
  std::vector<eval::MetricRow> rows;
  std::map<std::string, std::vector<double>> per_var;
  std::vector<std::string> order;
  std::vector<std::string> inputs{c.reference_path()};
  for (std::uint64_t seed : c.seeds) {
    const std::string dir = seed_dir(c, part, seed);
    std::vector<net::ExpertParams> experts;
    for (int r = 0; r < P; ++r) {
      const std::string path = (fs::path(dir) / ("rank_" + std::to_string(r) + ".ckpt")).string();
      if (!fs::exists(path)) {
        throw ValidationError("missing checkpoint for rank " + std::to_string(r) + ", seed " + std::to_string(seed) +
                              " (" + path + ")");
      }
      experts.push_back(net::load_checkpoint(path));
      inputs.push_back(path);
    }
    const FieldEvaluation ev = evaluate_field(c, reference, part, eval::expert_field(experts));
    for (const auto& e : ev.errors) {
      rows.push_back({e.variable, std::to_string(seed), P, part.label(), e.relative_l2});
      if (!per_var.count(e.variable)) order.push_back(e.variable);
      per_var[e.variable].push_back(e.relative_l2);
    }
    {
      std::ofstream f((fs::path(dir) / "error_over_time.csv").string(), std::ios::binary);
      eval::write_series_csv(f, ev.series);
    }
    {
      std::ofstream f((fs::path(dir) / "interface_jumps.csv").string(), std::ios::binary);
      eval::write_jumps_csv(f, ev.jumps);
    }
  }
  for (const auto& name : order) {
    const eval::Aggregate a = eval::aggregate(per_var[name]);
    rows.push_back({name, "mean", P, part.label(), a.mean});
    if (a.std) rows.push_back({name, "std", P, part.label(), *a.std});
    std::cout << name << ": " << fmt(a.mean);
    if (a.std) std::cout << " +- " << fmt(*a.std);
    std::cout << " (" << a.count << " seed" << (a.count == 1 ? "" : "s") << ")\n";
  }
  std::ofstream f((fs::path(run_dir(c, part)) / "metrics.csv").string(), std::ios::binary);
  eval::write_metrics_csv(f, rows);
  f.close();
  write_manifest(c, run_dir(c, part), "evaluate", inputs);
}

void cmd_scaling(const RunConfig& c, bool force) {
  const decomp::FlowTable reference = load_reference(c);
  RunConfig sc = c;
  sc.train.epochs = c.scaling_epochs;
  sc.output_dir = (fs::path(c.output_dir) / "scaling").string();
  const unsigned cores = std::thread::hardware_concurrency();
  int max_p = 1;
  for (int p : c.scaling_procs) max_p = std::max(max_p, p);
  const bool flagged = cores != 0 && static_cast<unsigned>(max_p) > cores;
  if (flagged) {
    std::cerr << "warning: " << max_p << " ranks requested but only " << cores
              << " hardware threads; timings are flagged as oversubscribed\n";
  }
  fs::create_directories(sc.output_dir);
  std::ostringstream csv;
  csv << "P,decomposition,wall_time_s,speedup_vs_prev,vel_l2,pres_l2\n";
  double prev = 0.0;
  const std::uint64_t seed = c.seeds.front();
  for (int p : c.scaling_procs) {
    const auto part = sc.partition_spec_for(p);
    std::cout << "scaling P=" << p << " (" << part.label() << ")\n";
    const auto result = train_one(sc, reference, part, seed, seed_dir(sc, part, seed), force);
    const double t = rt::median_epoch_seconds(result);
    const FieldEvaluation ev = evaluate_field(sc, reference, part, eval::expert_field(result.experts));
    double vel = 0.0, pres = 0.0;
    for (const auto& e : ev.errors) {
      if (e.variable == "vel") vel = e.relative_l2;
      if (e.variable == "p") pres = e.relative_l2;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.9g", t);
    csv << p << ',' << part.label() << ',' << buf << ',';
    if (prev > 0.0) {
      std::snprintf(buf, sizeof buf, "%.6g", prev / t);
      csv << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", vel, pres);
    csv << buf;
    prev = t;
    std::cout << "  median epoch " << fmt(t) << " s, vel " << fmt(vel) << ", p " << fmt(pres) << "\n";
  }
  write_text((fs::path(sc.output_dir) / "scaling.csv").string(), csv.str());
  write_manifest(sc, sc.output_dir, "scaling", {c.reference_path()},
                 {{"hardware_threads", cores}, {"oversubscribed", flagged}});
}

namespace {

// Minimal reader for the numeric CSVs this tool writes.
std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void cmd_plot(const RunConfig& c) {
  const auto part = c.partition_spec();
  int written = 0;
  for (std::uint64_t seed : c.seeds) {
    const fs::path dir = seed_dir(c, part, seed);
    for (int r = 0; r < part.rank_count(); ++r) {
      const fs::path loss = dir / ("loss_rank_" + std::to_string(r) + ".csv");
      if (!fs::exists(loss)) continue;
      const auto rows = read_csv(loss.string());
      if (rows.size() < 2) continue;
      std::vector<plot::Series> series;
      for (std::size_t col = 1; col + 1 < rows[0].size(); ++col) {
        plot::Series s{rows[0][col], {}, {}};
        for (std::size_t i = 1; i < rows.size(); ++i) {
          const double v = std::stod(rows[i][col]);
          if (v > 0.0) {
            s.x.push_back(std::stod(rows[i][0]));
            s.y.push_back(v);
          }
        }
        if (!s.x.empty()) series.push_back(std::move(s));
      }
      write_text((dir / ("loss_rank_" + std::to_string(r) + ".svg")).string(),
                 plot::line_chart("Loss history, seed " + std::to_string(seed) + ", rank " + std::to_string(r),
                                  "epoch", "loss", series, true));
      ++written;
    }
    const fs::path eot = dir / "error_over_time.csv";
    if (fs::exists(eot)) {
      const auto rows = read_csv(eot.string());
      std::map<std::string, plot::Series> by_var;
      std::vector<std::string> order;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string& v = rows[i][0];
        if (!by_var.count(v)) {
          order.push_back(v);
          by_var[v].label = v;
        }
        by_var[v].x.push_back(std::stod(rows[i][1]));
        by_var[v].y.push_back(std::stod(rows[i][2]));
      }
      std::vector<plot::Series> series;
      for (const auto& v : order) series.push_back(by_var[v]);
      write_text((dir / "error_over_time.svg").string(),
                 plot::line_chart("Relative L2 error over time, seed " + std::to_string(seed), "t", "relative L2",
                                  series, false));
      ++written;
    }
  }
  const fs::path scaling = fs::path(c.output_dir) / "scaling" / "scaling.csv";
  if (fs::exists(scaling)) {
    const auto rows = read_csv(scaling.string());
    plot::Series s{"median epoch time", {}, {}};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      s.x.push_back(std::stod(rows[i][0]));
      s.y.push_back(std::stod(rows[i][2]));
    }
    write_text((scaling.parent_path() / "scaling.svg").string(),
               plot::line_chart("Strong scaling", "P", "seconds per epoch", {s}, true));
    ++written;
  }
  if (written == 0) throw ValidationError("nothing to plot under " + c.output_dir + "; run train/evaluate first");
  std::cout << "wrote " << written << " plot(s)\n";
}

}  // namespace dpinn::cli
