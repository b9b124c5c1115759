#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "dpinn/error.hpp"

namespace dpinn::cli {

using nlohmann::json;

bench::ManufacturedSolution RunConfig::solution() const {
  bench::ManufacturedSolution s;
  s.kind = benchmark;
  s.reynolds = reynolds;
  s.a = beltrami_a;
  s.d = beltrami_d;
  return s;
}

phys::FlowRegime RunConfig::regime() const { return solution().regime(); }

decomp::GlobalDomain RunConfig::domain() const {
  decomp::GlobalDomain d;
  d.space_lo = grid.lo;
  d.space_hi = grid.hi;
  d.t0 = grid.t0;
  d.t1 = grid.t1;
  d.regime = regime();
  return d;
}

decomp::PartitionSpec layout_for(int procs, const phys::FlowRegime& regime) {
  decomp::PartitionSpec s;
  const bool three_d = regime.spatial_dim() == 3;
  const auto grid = [&](std::vector<int> g) { s.spatial_grid = three_d ? std::vector<int>{g[0], g[1], g[2]} : std::vector<int>{g[0], g[1]}; };
  switch (procs) {
    case 1:
      grid({1, 1, 1});
      break;
    case 2:
      grid({2, 1, 1});
      break;
    case 4:
      grid({2, 2, 1});
      break;
    case 8:
      if (three_d) {
        grid({2, 2, 2});
      } else if (regime.has_time()) {
        grid({2, 2, 1});
        s.time_splits = 2;
      } else {
        grid({4, 2, 1});
      }
      break;
    default:
      throw ValidationError("no standard layout for " + std::to_string(procs) + " ranks (use 1, 2, 4 or 8)");
  }
  return s;
}

decomp::PartitionSpec RunConfig::partition_spec_for(int p) const {
  decomp::PartitionSpec s = layout_for(p, regime());
  s.delta_space = delta_space;
  s.delta_time = delta_time;
  return s;
}

decomp::PartitionSpec RunConfig::partition_spec() const {
  if (spatial_grid.empty()) return partition_spec_for(procs);
  decomp::PartitionSpec s;
  s.spatial_grid = spatial_grid;
  s.time_splits = time_splits;
  s.delta_space = delta_space;
  s.delta_time = delta_time;
  return s;
}

std::string RunConfig::reference_path() const {
  const std::filesystem::path p(reference_file);
  return p.is_absolute() ? p.string() : (std::filesystem::path(output_dir) / p).string();
}

void RunConfig::validate() const {
  const phys::FlowRegime reg = regime();
  reg.validate();
  grid.validate(reg);
  if (benchmark == bench::SolutionKind::kBeltrami && (!(beltrami_a > 0.0) || !(beltrami_d > 0.0))) {
    throw ValidationError("beltrami parameters a and d must be > 0");
  }
  expert.validate();
  if (expert.input_dim != reg.input_dim() || expert.output_dim != reg.output_dim()) {
    throw ValidationError("expert shape does not match the benchmark");
  }
  train.validate();
  if (static_cast<int>(train.anchor.size()) != reg.spatial_dim()) {
    throw ValidationError("anchor needs " + std::to_string(reg.spatial_dim()) + " coordinates");
  }
  if (!train.weights.velocity_components.empty() &&
      static_cast<int>(train.weights.velocity_components.size()) != reg.spatial_dim()) {
    throw ValidationError("velocity_component_weights needs one entry per velocity component");
  }
  decomp::partition(domain(), partition_spec());
  if (n_obs == 0 && train.weights.obs > 0.0) throw ValidationError("n_obs must be > 0 when the obs weight is positive");
  if (n_pde == 0) throw ValidationError("n_pde must be > 0");
  if (seeds.empty()) throw ValidationError("seed list is empty");
  if (output_dir.empty()) throw ValidationError("output_dir is empty");
  if (scaling_epochs < 1) throw ValidationError("scaling epochs must be >= 1");
  for (int p : scaling_procs) layout_for(p, reg);
}

RunConfig default_config(bench::SolutionKind kind) {
  RunConfig c;
  c.benchmark = kind;
  const auto dom = bench::default_domain(kind);
  c.grid.lo = dom.lo;
  c.grid.hi = dom.hi;
  c.grid.t0 = dom.t0;
  c.grid.t1 = dom.t1;
  c.train.clip_norm.reset();
  c.train.comm_interval = 1;
  switch (kind) {
    case bench::SolutionKind::kKovasznay:  // 2D cavity column
      c.reynolds = 100.0;
      c.grid.counts = {257, 257};
      c.grid.snapshots = 1;
      c.delta_space = 0.2;
      c.anchor = {0.0, 0.0};
      c.n_obs = 100;
      c.n_pde = 5000;
      c.n_ghost = 100;
      c.obs_plan = ObsPlan::kGrid;
      c.expert = {2, 6, 80, ad::Activation::kTanh, 3, 1.0};
      c.train.epochs = 12000;
      c.train.batch_size = 1250;
      c.train.lr = {1e-2, 0.5, 1500};
      c.train.weights = {10.0, 4.0, 1.0, 1.0, 1.0, {}};
      break;
    case bench::SolutionKind::kTaylorGreen:  // 2D cylinder column
      c.reynolds = 100.0;
      c.grid.counts = {64, 64};
      c.grid.snapshots = 50;
      c.delta_space = 2.0;
      c.delta_time = 1.0;
      c.anchor = {std::numbers::pi / 2, std::numbers::pi / 2};
      c.n_obs = 10000;
      c.n_pde = 500000;
      c.n_ghost = 1000;
      c.obs_plan = ObsPlan::kRandom;
      c.expert = {3, 6, 150, ad::Activation::kSin, 3, 1.0};
      c.train.epochs = 8000;
      c.train.batch_size = 25000;
      c.train.lr = {1e-3, 0.2, 2000};
      c.train.weights = {10.0, 5.0, 1.0, 1.0, 1.0, {}};
      c.scaling_procs = {1, 2, 4, 8};
      break;
    case bench::SolutionKind::kBeltrami:  // 3D cylinder column
      c.reynolds = 300.0;
      c.grid.counts = {32, 32, 32};
      c.grid.snapshots = 11;
      // The table's 2.0 exceeds a half-domain extent of 1.0 here.
      c.delta_space = 0.2;
      c.delta_time = 0.1;
      c.anchor = {-0.5, -0.5, -0.5};
      c.n_obs = 100000;
      c.n_pde = 600000;
      c.n_ghost = 5000;
      c.obs_plan = ObsPlan::kRandom;
      c.expert = {4, 8, 200, ad::Activation::kSin, 4, 1.0};
      c.train.epochs = 25000;
      c.train.batch_size = 25000;
      c.train.lr = {1e-3, 0.3, 5000};
      c.train.weights = {10.0, 10.0, 1.0, 1.0, 1.0, {}};
      c.train.clip_norm = 1.0;
      c.scaling_procs = {1, 2, 4, 8};
      break;
  }
  c.train.anchor = c.anchor;
  c.output_dir = "runs/" + std::string(bench::to_string(kind));
  return c;
}

namespace {

// Reads keys from one object and rejects any it did not consume.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(where() + " must be an object");
  }
  ~Reader() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }
  const json& at(const std::string& key) const { return obj_.at(key); }
  std::string where(const std::string& key = {}) const {
    return key.empty() ? (path_.empty() ? "config" : path_) : (path_.empty() ? key : path_ + "." + key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(where(key) + " has the wrong type");
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("unknown config key " + where(it.key()));
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
void get_positive(Reader& r, const std::string& key, T& out) {
  if (!r.has(key)) return;
  const json& v = r.at(key);
  if (!v.is_number()) throw ValidationError(r.where(key) + " must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError(r.where(key) + " must be an integer >= 0");
  }
  out = v.get<T>();
}

std::string obs_plan_name(ObsPlan p) { return p == ObsPlan::kGrid ? "grid" : "random"; }

}  // namespace

RunConfig parse_config(const json& doc) {
  Reader top(doc, "");
  int version = kSchemaVersion;
  top.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ValidationError("unsupported schema_version " + std::to_string(version) + " (expected " +
                          std::to_string(kSchemaVersion) + ")");
  }
  std::string name = "kovasznay";
  top.get("benchmark", name);
  RunConfig c = default_config(bench::parse_solution(name));

  top.get("reynolds", c.reynolds);
  if (top.has("beltrami")) {
    Reader b(top.at("beltrami"), "beltrami");
    b.get("a", c.beltrami_a);
    b.get("d", c.beltrami_d);
    b.finish();
  }
  if (top.has("domain")) {
    Reader d(top.at("domain"), "domain");
    d.get("lo", c.grid.lo);
    d.get("hi", c.grid.hi);
    d.get("t0", c.grid.t0);
    d.get("t1", c.grid.t1);
    d.finish();
  }
  if (top.has("reference_grid")) {
    Reader g(top.at("reference_grid"), "reference_grid");
    g.get("counts", c.grid.counts);
    g.get("snapshots", c.grid.snapshots);
    g.get("file", c.reference_file);
    g.finish();
  }
  if (top.has("decomposition")) {
    Reader d(top.at("decomposition"), "decomposition");
    get_positive(d, "procs", c.procs);
    d.get("spatial_grid", c.spatial_grid);
    d.get("time_splits", c.time_splits);
    get_positive(d, "delta_space", c.delta_space);
    get_positive(d, "delta_time", c.delta_time);
    d.finish();
  }
  top.get("anchor", c.anchor);
  if (top.has("budgets")) {
    Reader b(top.at("budgets"), "budgets");
    get_positive(b, "n_obs", c.n_obs);
    get_positive(b, "n_pde", c.n_pde);
    get_positive(b, "n_ghost_per_interface", c.n_ghost);
    if (b.has("obs_plan")) {
      std::string p;
      b.get("obs_plan", p);
      if (p == "grid") {
        c.obs_plan = ObsPlan::kGrid;
      } else if (p == "random") {
        c.obs_plan = ObsPlan::kRandom;
      } else {
        throw ValidationError("budgets.obs_plan must be \"grid\" or \"random\"");
      }
    }
    b.finish();
  }
  if (top.has("expert")) {
    Reader e(top.at("expert"), "expert");
    get_positive(e, "hidden_layers", c.expert.hidden_layers);
    get_positive(e, "width", c.expert.width);
    if (e.has("activation")) {
      std::string a;
      e.get("activation", a);
      c.expert.activation = ad::parse_activation(a);
    }
    e.get("first_layer_scale", c.expert.first_layer_scale);
    e.finish();
  }
  if (top.has("train")) {
    Reader t(top.at("train"), "train");
    get_positive(t, "epochs", c.train.epochs);
    get_positive(t, "batch_size", c.train.batch_size);
    t.get("learning_rate", c.train.lr.initial);
    t.get("lr_factor", c.train.lr.factor);
    get_positive(t, "lr_interval", c.train.lr.interval);
    get_positive(t, "comm_interval", c.train.comm_interval);
    if (t.has("clip_norm")) {
      double v = 0.0;
      t.get("clip_norm", v);
      c.train.clip_norm = v;
    } else if (doc.contains("train") && doc.at("train").contains("clip_norm")) {
      c.train.clip_norm.reset();  // explicit null disables clipping
    }
    if (t.has("loss_weights")) {
      Reader w(t.at("loss_weights"), "train.loss_weights");
      w.get("obs", c.train.weights.obs);
      w.get("pde", c.train.weights.pde);
      w.get("ghost_u", c.train.weights.ghost_u);
      if (w.has("ghost_p")) {
        double v = 0.0;
        w.get("ghost_p", v);
        c.train.weights.ghost_p_space = v;
        c.train.weights.ghost_p_time = v;
      }
      w.get("ghost_p_space", c.train.weights.ghost_p_space);
      w.get("ghost_p_time", c.train.weights.ghost_p_time);
      w.finish();
    }
    t.get("velocity_component_weights", c.train.weights.velocity_components);
    t.get("anchor_normalization", c.train.anchor_normalization);
    t.get("asymmetric_weighting", c.train.asymmetric_weighting);
    t.finish();
  }
  top.get("seeds", c.seeds);
  top.get("output_dir", c.output_dir);
  if (top.has("scaling")) {
    Reader s(top.at("scaling"), "scaling");
    s.get("procs", c.scaling_procs);
    get_positive(s, "epochs", c.scaling_epochs);
    s.finish();
  }
  top.finish();
  c.train.anchor = c.anchor;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["benchmark"] = std::string(bench::to_string(c.benchmark));
  j["reynolds"] = c.reynolds;
  if (c.benchmark == bench::SolutionKind::kBeltrami) j["beltrami"] = {{"a", c.beltrami_a}, {"d", c.beltrami_d}};
  j["domain"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"t0", c.grid.t0}, {"t1", c.grid.t1}};
  j["reference_grid"] = {{"counts", c.grid.counts}, {"snapshots", c.grid.snapshots}, {"file", c.reference_file}};
  const auto part = c.partition_spec();
  j["decomposition"] = {{"procs", part.rank_count()},
                        {"spatial_grid", part.spatial_grid},
                        {"time_splits", part.time_splits},
                        {"delta_space", c.delta_space},
                        {"delta_time", c.delta_time}};
  j["anchor"] = c.anchor;
  j["budgets"] = {{"n_obs", c.n_obs},
                  {"n_pde", c.n_pde},
                  {"n_ghost_per_interface", c.n_ghost},
                  {"obs_plan", obs_plan_name(c.obs_plan)}};
  j["expert"] = {{"hidden_layers", c.expert.hidden_layers},
                 {"width", c.expert.width},
                 {"activation", std::string(ad::to_string(c.expert.activation))},
                 {"first_layer_scale", c.expert.first_layer_scale}};
  const auto& w = c.train.weights;
  json t = {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.lr.initial},
            {"lr_factor", c.train.lr.factor},
            {"lr_interval", c.train.lr.interval},
            {"comm_interval", c.train.comm_interval},
            {"loss_weights",
             {{"obs", w.obs}, {"pde", w.pde}, {"ghost_u", w.ghost_u}, {"ghost_p_space", w.ghost_p_space},
              {"ghost_p_time", w.ghost_p_time}}},
            {"velocity_component_weights", w.velocity_components},
            {"anchor_normalization", c.train.anchor_normalization},
            {"asymmetric_weighting", c.train.asymmetric_weighting}};
  t["clip_norm"] = c.train.clip_norm ? json(*c.train.clip_norm) : json(nullptr);
  j["train"] = t;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["scaling"] = {{"procs", c.scaling_procs}, {"epochs", c.scaling_epochs}};
  return j;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError("bad seed list \"" + text + "\" (expected e.g. 0,1,2)");
    }
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ValidationError("seed list is empty");
  return seeds;
}

}  // namespace dpinn::cli
