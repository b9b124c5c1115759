// Acceptance runner. `dpinn_acceptance N` checks criterion N, no argument
// checks all of them. Each criterion prints one PASS/FAIL line; the exit code
// is nonzero when any checked criterion fails.
#define DOCTEST_CONFIG_IMPLEMENT
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "commands.hpp"
#include "doctest.h"
#include "dpinn/benchmarks/reference_grid.hpp"
#include "dpinn/runtime/train.hpp"
#include "support.hpp"

using namespace dpinn;
using ad::Matrix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- 1: jet derivatives against central differences ----

Outcome criterion_1() {
  const auto t0 = Clock::now();
  double worst_grad = 0.0, worst_lap = 0.0;
  int nets = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto act : {ad::Activation::kTanh, ad::Activation::kSin}) {
      for (int in = 2; in <= 4; ++in) {
        for (int layers = 2; layers <= 3; ++layers) {
          const int width = 4 + static_cast<int>((seed * 7 + static_cast<std::uint64_t>(in * 5 + layers * 3)) % 29);
          std::vector<int> sizes{in};
          for (int l = 0; l < layers; ++l) sizes.push_back(width);
          sizes.push_back(in + 1);
          const ad::Architecture arch{sizes, act, 1.0};
          const auto params = test::random_params(arch, seed * 100 + static_cast<std::uint64_t>(nets));
          const Matrix pts = test::random_points(100, in, seed * 1000 + static_cast<std::uint64_t>(nets));
          const auto e = test::jet_fd_error(arch, params, pts, 1e-4);
          worst_grad = std::max(worst_grad, e.grad);
          worst_lap = std::max(worst_lap, e.lap);
          ++nets;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_grad <= 1e-5 && worst_lap <= 1e-5 && secs < 60.0;
  return {ok, std::to_string(nets) + " nets x 100 points, max rel err grad " + fmt("%.2e", worst_grad) + ", lap " +
                  fmt("%.2e", worst_lap) + " (tol 1e-5), " + fmt("%.1f", secs) + " s"};
}

// ---- 2: composite loss gradient against finite differences ----

Outcome criterion_2() {
  const auto t0 = Clock::now();
  const double L = 2 * std::numbers::pi;
  const bench::ManufacturedSolution sol{bench::SolutionKind::kTaylorGreen, 100.0};
  const auto ref = bench::make_reference_grid(sol, {{0.0, 0.0}, {L, L}, {12, 12}, 0.0, 2.0, 5});
  rt::TrainProblem p;
  p.regime = sol.regime();
  // 2x1 cells and two time intervals: rank 1 is a slave with one spatial and
  // one temporal ghost component.
  p.subdomains = decomp::partition({{0.0, 0.0}, {L, L}, 0.0, 2.0, p.regime}, {{2, 1}, 2, 0.5, 0.3});
  const auto plan = decomp::random_observation_plan(ref, 400, false, 1);
  for (const auto& s : p.subdomains) p.datasets.push_back(decomp::sample_rank_datasets(s, {120, 10}, plan, 1));
  p.expert = {3, 2, 8, ad::Activation::kTanh, 3, 1.0};
  p.config.epochs = 1;
  p.config.batch_size = 1000;
  p.config.weights = {10.0, 5.0, 1.0, 1.0, 2.0, {}};
  p.config.anchor = {1.0, 1.0};
  auto& d = p.datasets[1];
  if (d.obs_points.rows() < 20) return {false, "not enough observations on rank 1"};
  d.obs_points.conservativeResize(20, Eigen::NoChange);
  d.obs_velocity.conservativeResize(20, Eigen::NoChange);
  auto ranks = rt::make_rank_states(p);
  rt::exchange_ghosts(ranks, 0, p.config);
  const rt::RankState& base = ranks[1];
  if (base.role != rt::Role::kSlave || base.spec.ghosts.size() != 2 || base.data.pde_points.rows() != 30) {
    return {false, "unexpected rank layout"};
  }
  rt::LossTapes tapes(p.expert, p.regime, {});
  auto loss_at = [&](const net::ExpertParams& params) {
    rt::RankState s = base;
    s.params = params;
    return rt::epoch_gradient(s, tapes, p.config);
  };
  const rt::EpochGradient g = loss_at(base.params);
  if (!(g.parts.ghost_u > 0.0 && g.parts.ghost_p_space > 0.0 && g.parts.ghost_p_time > 0.0)) {
    return {false, "a ghost term is zero"};
  }
  const double h = 1e-6;
  double worst = 0.0, num = 0.0, den = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < base.params.tensors.size(); ++t) {
    for (Eigen::Index k = 0; k < base.params.tensors[t].size(); ++k) {
      auto q = base.params;
      q.tensors[t].data()[k] += h;
      const double fp = loss_at(q).total;
      q.tensors[t].data()[k] -= 2 * h;
      const double fm = loss_at(q).total;
      const double fd = (fp - fm) / (2 * h);
      const double an = g.grads[t].data()[k];
      worst = std::max(worst, test::rel_err(an, fd, 1e-6));
      num += (an - fd) * (an - fd);
      den += an * an;
      ++count;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && secs < 120.0;
  return {ok, std::to_string(count) + " parameters of a [3,8,8,3] slave (20 obs, 30 pde, 10+10 ghost), max rel err " +
                  fmt("%.2e", worst) + ", vector rel err " + fmt("%.2e", std::sqrt(num / den)) + " (tol 1e-4), " +
                  fmt("%.1f", secs) + " s"};
}

// ---- 3: manufactured-solution residual gate ----

Outcome criterion_3() {
  const auto t0 = Clock::now();
  struct Case {
    bench::ManufacturedSolution sol;
    const char* name;
  };
  const Case cases[] = {{{bench::SolutionKind::kKovasznay, 40.0}, "kovasznay Re 40"},
                        {{bench::SolutionKind::kTaylorGreen, 100.0}, "taylor_green Re 100"},
                        {{bench::SolutionKind::kBeltrami, 1.0, 1.0, 1.0}, "beltrami a=d=1"}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto dom = bench::default_domain(c.sol.kind);
    const auto reg = c.sol.regime();
    Matrix pts = test::random_points(10000, reg.input_dim(), 42, 0.0, 1.0);
    const int off = reg.has_time() ? 1 : 0;
    if (off) pts.col(0) = dom.t0 + (dom.t1 - dom.t0) * pts.col(0).array();
    for (std::size_t a = 0; a < dom.lo.size(); ++a) {
      const auto col = static_cast<Eigen::Index>(a) + off;
      pts.col(col) = dom.lo[a] + (dom.hi[a] - dom.lo[a]) * pts.col(col).array();
    }
    const Matrix r = phys::ns_residuals(c.sol.jets(pts), reg);
    const Eigen::Index dcol = r.cols() - 1;
    const double mom = r.leftCols(dcol).cwiseAbs().maxCoeff();
    const double cont = r.col(dcol).cwiseAbs().maxCoeff();
    ok = ok && mom <= 1e-10 && cont <= 1e-12;
    detail += std::string(detail.empty() ? "" : "; ") + c.name + ": momentum " + fmt("%.1e", mom) + ", continuity " +
              fmt("%.1e", cont);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, detail + " (tol 1e-10 / 1e-12 at 1e4 points), " + fmt("%.1f", secs) + " s"};
}

// ---- 4: pressure gauge invariance ----

Outcome criterion_4() {
  const auto t0 = Clock::now();
  const phys::FlowRegime reg{phys::RegimeKind::kUnsteady2d, 100.0};
  const net::ExpertConfig cfg{3, 3, 24, ad::Activation::kSin, 3, 1.0};
  std::vector<net::ExpertParams> experts{net::init_params(cfg, 3)};
  // A trained expert: a short run on a small Taylor-Green problem.
  {
    const double L = 2 * std::numbers::pi;
    const bench::ManufacturedSolution sol{bench::SolutionKind::kTaylorGreen, 100.0};
    const auto ref = bench::make_reference_grid(sol, {{0.0, 0.0}, {L, L}, {12, 12}, 0.0, 2.0, 3});
    rt::TrainProblem p;
    p.regime = reg;
    p.subdomains = decomp::partition({{0.0, 0.0}, {L, L}, 0.0, 2.0, reg}, {{1, 1}, 1, 0.0, 0.0});
    p.datasets.push_back(
        decomp::sample_rank_datasets(p.subdomains[0], {300, 0}, decomp::random_observation_plan(ref, 200, false, 0), 0));
    p.expert = cfg;
    p.config.epochs = 200;
    p.config.batch_size = 512;
    p.config.lr = {3e-3, 1.0, 1000};
    p.config.weights = {10.0, 5.0, 1.0, 1.0, 1.0, {}};
    p.config.anchor = {1.0, 1.0};
    experts.push_back(rt::train(p).experts[0]);
  }
  const Matrix pts = test::random_points(2000, 3, 17, 0.0, 2.0);
  net::Evaluator ev;
  double worst_r = 0.0, worst_loss = 0.0;
  for (const auto& base : experts) {
    const Matrix r0 = phys::ns_residuals(ev.jets(base, pts), reg);
    const double l0 = phys::loss_pde(r0);
    for (double c : {-1e3, -3.5, 1e-3, 0.37, 42.0, 1e4}) {
      auto shifted = base;
      shifted.bias(shifted.layer_count() - 1)(2) += c;
      const Matrix r1 = phys::ns_residuals(ev.jets(shifted, pts), reg);
      worst_r = std::max(worst_r, (r1 - r0).cwiseAbs().maxCoeff());
      worst_loss = std::max(worst_loss, std::abs(phys::loss_pde(r1) - l0));
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_r <= 1e-12 && worst_loss <= 1e-12;
  return {ok, "random and trained experts, shifts in [-1e3, 1e4]: max |d residual| " + fmt("%.1e", worst_r) +
                  ", max |d loss_pde| " + fmt("%.1e", worst_loss) + " (tol 1e-12), " + fmt("%.1f", secs) + " s"};
}

// ---- 5: anchor protocol efficacy ----

struct SpreadResult {
  double spread = 0.0;
  double raw_spread = 0.0;  // without pinning the masters
  double p_error = 0.0;
  double vel_error = 0.0;
};

SpreadResult pressure_spread(const rt::TrainProblem& p, const rt::TrainResult& res, const decomp::FlowTable& ref) {
  const Matrix pts = ref.inputs(false);
  const auto field = eval::expert_field(res.experts);
  const auto st = eval::stitch(field, p.subdomains, pts);
  // Master-owned points pinned at the anchor, slave-owned points raw, with
  // no mean removal.
  Eigen::VectorXd pinned = st.values.col(2);
  for (int m : res.masters) {
    std::map<double, double> anchor_p;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      if (st.owner[static_cast<std::size_t>(i)] != m) continue;
      auto it = anchor_p.find(pts(i, 0));
      if (it == anchor_p.end()) {
        Matrix a(1, 3);
        a << pts(i, 0), p.config.anchor[0], p.config.anchor[1];
        it = anchor_p.emplace(pts(i, 0), field(m, a)(0, 2)).first;
      }
      pinned(i) -= it->second;
    }
  }
  auto spread_of = [&](const Eigen::VectorXd& pred) {
    std::map<double, std::map<int, std::pair<double, int>>> offsets;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      auto& o = offsets[pts(i, 0)][st.owner[static_cast<std::size_t>(i)]];
      o.first += pred(i) - ref.pressure(i);
      o.second += 1;
    }
    double worst = 0.0;
    for (const auto& [t, per_rank] : offsets) {
      double lo = 1e300, hi = -1e300;
      for (const auto& [r, o] : per_rank) {
        lo = std::min(lo, o.first / o.second);
        hi = std::max(hi, o.first / o.second);
      }
      worst = std::max(worst, hi - lo);
    }
    return worst;
  };
  SpreadResult out;
  out.spread = spread_of(pinned);
  out.raw_spread = spread_of(st.values.col(2));
  const auto a = eval::align_pressure(st, ref.pressure, res.masters, p.config.anchor, field, p.regime);
  out.p_error = eval::relative_l2(a.prediction, a.reference);
  out.vel_error = eval::relative_l2(st.values.leftCols(2), ref.velocity);
  return out;
}

Outcome criterion_5() {
  const auto t0 = Clock::now();
  const double L = 2 * std::numbers::pi;
  const bench::ManufacturedSolution sol{bench::SolutionKind::kTaylorGreen, 100.0};
  const auto ref = bench::make_reference_grid(sol, {{0.0, 0.0}, {L, L}, {33, 33}, 0.0, 2.0, 5});
  rt::TrainProblem p;
  p.regime = sol.regime();
  p.subdomains = decomp::partition({{0.0, 0.0}, {L, L}, 0.0, 2.0, p.regime}, {{2, 1}, 1, 0.5, 0.0});
  const auto plan = decomp::random_observation_plan(ref, 1000, false, 0);
  for (const auto& s : p.subdomains) p.datasets.push_back(decomp::sample_rank_datasets(s, {4000, 200}, plan, 0));
  p.expert = {3, 3, 40, ad::Activation::kSin, 3, 1.0};
  p.config.epochs = 3000;
  p.config.batch_size = 2000;
  p.config.lr = {2e-3, 0.5, 1000};
  p.config.seed = 0;
  p.config.weights = {10.0, 5.0, 1.0, 1.0, 1.0, {}};
  p.config.anchor = {std::numbers::pi / 2, std::numbers::pi / 2};

  const auto full = rt::train(p);
  rt::TrainProblem ablation = p;
  ablation.config.anchor_normalization = false;
  ablation.config.asymmetric_weighting = false;
  const auto abl = rt::train(ablation);

  const SpreadResult a = pressure_spread(p, full, ref);
  const SpreadResult b = pressure_spread(ablation, abl, ref);
  const double p_rms = std::sqrt(ref.pressure.squaredNorm() / static_cast<double>(ref.pressure.size()));
  const double secs = seconds_since(t0);
  const bool ok = a.spread < b.spread && a.spread <= 0.1 * p_rms && secs <= 1200.0;
  return {ok, "TG 2x1, max offset spread full " + fmt("%.3e", a.spread) + " vs ablation " + fmt("%.3e", b.spread) +
                  " (unpinned: " + fmt("%.3e", a.raw_spread) + " vs " + fmt("%.3e", b.raw_spread) + "), 10% of p RMS = " + fmt("%.3e", 0.1 * p_rms) + " (p err full " + fmt("%.3f", a.p_error) +
                  ", ablation " + fmt("%.3f", b.p_error) + "; vel err " + fmt("%.4f", a.vel_error) + "), " +
                  fmt("%.0f", secs) + " s"};
}

// ---- 6 and 7: desk-scale Kovasznay reconstruction ----

cli::RunConfig kovasznay_desk_config() {
  cli::RunConfig c = cli::default_config(bench::SolutionKind::kKovasznay);
  c.reynolds = 40.0;
  c.n_obs = 100;
  c.n_pde = 2000;
  c.expert = {2, 4, 64, ad::Activation::kTanh, 3, 1.0};
  c.train.epochs = 5000;
  c.validate();
  return c;
}

struct SeedRun {
  std::uint64_t seed = 0;
  double vel = 0.0;
  double p = 0.0;
  double rms = 0.0;
  double max_jump = 0.0;
  double seconds = 0.0;
};

std::vector<SeedRun> run_kovasznay(const cli::RunConfig& c, const decomp::PartitionSpec& part) {
  const auto ref = bench::make_reference_grid(c.solution(), c.grid);
  auto one = [&](std::uint64_t seed) {
    const auto t0 = Clock::now();
    const auto problem = cli::build_problem(c, ref, part, seed);
    const auto res = rt::train(problem);
    const auto fe = cli::evaluate_field(c, ref, part, eval::expert_field(res.experts));
    SeedRun r;
    r.seed = seed;
    for (const auto& e : fe.errors) {
      if (e.variable == "vel") r.vel = e.relative_l2;
      if (e.variable == "p") r.p = e.relative_l2;
    }
    r.rms = fe.velocity_rms;
    for (const auto& j : fe.jumps) r.max_jump = std::max(r.max_jump, j.max_velocity_jump);
    r.seconds = seconds_since(t0);
    std::cerr << "  seed " << seed << " (" << part.label() << "): vel " << fmt("%.4f", r.vel) << ", p "
              << fmt("%.4f", r.p) << ", jump/rms " << fmt("%.2f", r.rms > 0.0 ? r.max_jump / r.rms : 0.0) << ", "
              << fmt("%.0f", r.seconds) << " s\n";
    return r;
  };
  // Seeds run concurrently up to the number of hardware threads (after the
  // ranks of one run are accounted for).
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned lanes = std::max(1u, hw / static_cast<unsigned>(part.rank_count()));
  std::vector<SeedRun> out;
  for (std::size_t i = 0; i < c.seeds.size(); i += lanes) {
    std::vector<std::future<SeedRun>> jobs;
    for (std::size_t k = i; k < std::min(c.seeds.size(), i + lanes); ++k) {
      jobs.push_back(std::async(std::launch::async, one, c.seeds[k]));
    }
    for (auto& j : jobs) out.push_back(j.get());
  }
  return out;
}

fs::path cache_path() { return fs::current_path() / "acceptance_cache" / "criterion_6.json"; }

struct C6Data {
  std::vector<SeedRun> runs;
  double seconds = 0.0;
};

C6Data criterion_6_data(bool reuse) {
  const auto c = kovasznay_desk_config();
  const json key = cli::to_json(c);
  if (reuse && fs::exists(cache_path())) {
    std::ifstream f(cache_path());
    const json j = json::parse(f);
    if (j.value("config", json()) == key) {
      C6Data d;
      d.seconds = j["seconds"];
      for (const auto& r : j["runs"]) d.runs.push_back({r["seed"], r["vel"], r["p"], r["rms"], 0.0, r["seconds"]});
      return d;
    }
  }
  const auto t0 = Clock::now();
  C6Data d;
  d.runs = run_kovasznay(c, c.partition_spec_for(1));
  d.seconds = seconds_since(t0);
  json j;
  j["config"] = key;
  j["seconds"] = d.seconds;
  for (const auto& r : d.runs) {
    j["runs"].push_back({{"seed", r.seed}, {"vel", r.vel}, {"p", r.p}, {"rms", r.rms}, {"seconds", r.seconds}});
  }
  fs::create_directories(cache_path().parent_path());
  std::ofstream(cache_path()) << j.dump(2) << "\n";
  return d;
}

double mean_vel(const std::vector<SeedRun>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.vel;
  return s / static_cast<double>(runs.size());
}

Outcome criterion_6() {
  const C6Data d = criterion_6_data(false);
  int good = 0;
  std::string per_seed;
  for (const auto& r : d.runs) {
    good += r.vel <= 0.05 && r.p <= 0.20;
    per_seed += (per_seed.empty() ? "" : ", ") + std::to_string(r.seed) + ":" + fmt("%.4f", r.vel) + "/" +
                fmt("%.4f", r.p);
  }
  const bool ok = good >= 4 && d.seconds <= 900.0;
  return {ok, std::to_string(good) + "/5 seeds within vel 5% and p 20% (seed:vel/p " + per_seed + "), " +
                  fmt("%.0f", d.seconds) + " s on " + std::to_string(std::thread::hardware_concurrency()) +
                  " hardware thread(s)"};
}

Outcome criterion_7() {
  const C6Data base = criterion_6_data(true);
  const auto t0 = Clock::now();
  cli::RunConfig c = kovasznay_desk_config();
  c.delta_space = 0.1;
  c.n_ghost = 100;
  c.train.comm_interval = 1;
  const auto runs = run_kovasznay(c, c.partition_spec_for(4));
  const double secs = seconds_since(t0);
  const double p1 = mean_vel(base.runs), p4 = mean_vel(runs);
  double worst_ratio = 0.0;
  for (const auto& r : runs) worst_ratio = std::max(worst_ratio, r.max_jump / r.rms);
  const bool ok = p4 <= 1.5 * p1 && worst_ratio <= 5.0;
  return {ok, "2x2 mean vel err " + fmt("%.4f", p4) + " vs P=1 " + fmt("%.4f", p1) + " (ratio " +
                  fmt("%.2f", p4 / p1) + ", tol 1.5); max interface jump / RMS vel err " + fmt("%.2f", worst_ratio) +
                  " (tol 5); " + fmt("%.0f", secs) + " s on " + std::to_string(std::thread::hardware_concurrency()) +
                  " hardware thread(s), runtime not asserted below 4 cores"};
}

// ---- 8: strong-scaling smoke ----

Outcome criterion_8() {
  const auto t0 = Clock::now();
  cli::RunConfig c = cli::default_config(bench::SolutionKind::kTaylorGreen);
  c.grid.counts = {32, 32};
  c.grid.snapshots = 11;
  c.n_obs = 2000;
  c.n_pde = 200000;
  c.n_ghost = 1000;
  c.delta_space = 0.5;
  c.delta_time = 0.5;
  c.expert = {3, 3, 32, ad::Activation::kSin, 3, 1.0};
  c.train.epochs = 50;
  c.train.batch_size = 25000;
  c.seeds = {0};
  c.validate();
  const auto ref = bench::make_reference_grid(c.solution(), c.grid);
  std::map<int, double> t;
  for (int procs : {1, 4}) {
    const auto part = c.partition_spec_for(procs);
    const auto res = rt::train(cli::build_problem(c, ref, part, 0));
    t[procs] = rt::median_epoch_seconds(res);
    std::cerr << "  P=" << procs << " (" << part.label() << "): median epoch " << fmt("%.3f", t[procs]) << " s\n";
  }
  const unsigned hw = std::thread::hardware_concurrency();
  const double secs = seconds_since(t0);
  const bool ok = hw >= 4 && t[4] <= 0.6 * t[1] && secs <= 600.0;
  std::string detail = "median epoch P=1 " + fmt("%.3f", t[1]) + " s, P=4 " + fmt("%.3f", t[4]) + " s, ratio " +
                       fmt("%.2f", t[4] / t[1]) + " (tol 0.6), " + std::to_string(hw) + " hardware thread(s), " +
                       fmt("%.0f", secs) + " s";
  if (hw < 4) detail += "; needs a machine with at least 4 cores";
  return {ok, detail};
}

// ---- 9 and 10: named unit-test groups ----

Outcome run_doctest_filter(const char* filter, double budget_s, const char* what) {
  const auto t0 = Clock::now();
  doctest::Context ctx;
  ctx.setOption("test-case", filter);
  ctx.setOption("no-intro", true);
  ctx.setOption("minimal", true);
  std::ostringstream sink;
  ctx.setCout(&sink);
  const int rc = ctx.run();
  const double secs = seconds_since(t0);
  const std::string out = sink.str();
  const bool ok = rc == 0 && secs < budget_s;
  std::string detail = std::string(what) + " (" + filter + "): " + (rc == 0 ? "all passed" : "failures") + ", " +
                       fmt("%.1f", secs) + " s";
  if (rc != 0) std::cerr << out;
  return {ok, detail};
}

Outcome criterion_9() { return run_doctest_filter("protocol:*", 300.0, "protocol invariants"); }
Outcome criterion_10() { return run_doctest_filter("trivial:*", 60.0, "trivial examples"); }

const std::map<int, std::pair<const char*, std::function<Outcome()>>> kCriteria = {
    {1, {"derivative oracle", criterion_1}},
    {2, {"gradient oracle", criterion_2}},
    {3, {"manufactured residual gate", criterion_3}},
    {4, {"gauge invariance", criterion_4}},
    {5, {"anchor protocol efficacy", criterion_5}},
    {6, {"desk-scale reconstruction", criterion_6}},
    {7, {"distributed parity and continuity", criterion_7}},
    {8, {"strong-scaling smoke", criterion_8}},
    {9, {"protocol invariants suite", criterion_9}},
    {10, {"metric/unit suite", criterion_10}},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) {
    for (const auto& [n, unused] : kCriteria) which.push_back(n);
  }
  bool all = true;
  for (int n : which) {
    const auto it = kCriteria.find(n);
    if (it == kCriteria.end()) {
      std::cerr << "unknown criterion " << n << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << it->second.first << "): " << o.detail
              << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
