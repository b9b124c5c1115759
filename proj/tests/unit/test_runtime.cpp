#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "dpinn/benchmarks/reference_grid.hpp"
#include "dpinn/error.hpp"
#include "dpinn/runtime/optimizer.hpp"
#include "dpinn/runtime/train.hpp"
#include "support.hpp"

using namespace dpinn;
using ad::Matrix;

namespace {

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_params(const net::ExpertParams& a, const net::ExpertParams& b) {
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (!bit_equal(a.tensors[i], b.tensors[i])) return false;
  }
  return true;
}

// Small Taylor-Green problem on [0, 2pi]^2 x [0, 2].
rt::TrainProblem tg_problem(std::vector<int> grid, int time_splits, int epochs, std::uint64_t seed) {
  const double L = 2 * std::numbers::pi;
  const bench::ManufacturedSolution sol{bench::SolutionKind::kTaylorGreen, 100.0};
  const auto ref = bench::make_reference_grid(sol, {{0.0, 0.0}, {L, L}, {12, 12}, 0.0, 2.0, 5});
  const auto plan = decomp::random_observation_plan(ref, 80, false, seed);
  rt::TrainProblem p;
  p.regime = sol.regime();
  p.subdomains = decomp::partition({{0.0, 0.0}, {L, L}, 0.0, 2.0, p.regime},
                                   {std::move(grid), time_splits, 0.5, 0.3});
  for (const auto& s : p.subdomains) p.datasets.push_back(decomp::sample_rank_datasets(s, {120, 20}, plan, seed));
  p.expert = {3, 2, 10, ad::Activation::kTanh, 3, 1.0};
  p.config.epochs = epochs;
  p.config.batch_size = 64;
  p.config.lr = {2e-3, 1.0, 1000};
  p.config.seed = seed;
  p.config.weights = {10.0, 1.0, 1.0, 1.0, 1.0, {}};
  p.config.anchor = {1.0, 1.0};
  return p;
}

// Steady problem on the unit square, anchor inside rank 0.
rt::TrainProblem steady_problem(std::vector<int> grid, std::uint64_t seed) {
  const bench::ManufacturedSolution sol{bench::SolutionKind::kKovasznay, 40.0};
  const auto ref = bench::make_reference_grid(sol, {{0.0, 0.0}, {1.0, 1.0}, {11, 11}, 0.0, 0.0, 1});
  const auto plan = decomp::grid_observation_plan(ref, 6, true);
  rt::TrainProblem p;
  p.regime = sol.regime();
  p.subdomains = decomp::partition({{0.0, 0.0}, {1.0, 1.0}, 0.0, 0.0, p.regime}, {std::move(grid), 1, 0.2, 0.0});
  for (const auto& s : p.subdomains) p.datasets.push_back(decomp::sample_rank_datasets(s, {90, 15}, plan, seed));
  p.expert = {2, 2, 8, ad::Activation::kTanh, 3, 1.0};
  p.config.epochs = 5;
  p.config.batch_size = 32;
  p.config.lr = {1e-3, 1.0, 1000};
  p.config.seed = seed;
  p.config.weights = {10.0, 4.0, 1.0, 1.0, 1.0, {}};
  p.config.anchor = {0.4, 0.5};
  return p;
}

std::vector<Matrix> zero_like(const net::ExpertParams& p) {
  std::vector<Matrix> g;
  for (const auto& t : p.tensors) g.push_back(Matrix::Zero(t.rows(), t.cols()));
  return g;
}

}  // namespace

TEST_SUITE("runtime") {

TEST_CASE("trivial: anchor normalization of a constant field") {
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 5.0);
  Eigen::VectorXd t(4);
  t << 0.0, 0.5, 0.5, 1.0;
  const rt::AnchorPressure a{{0.0, 0.5, 1.0}, {5.0, 5.0, 5.0}};
  CHECK(rt::anchor_normalize(p, t, a) == Eigen::VectorXd::Zero(4));
}

TEST_CASE("trivial: anchor normalization removes a time-dependent gauge") {
  // p(x, t) = x + t with the anchor at x = 0.
  Eigen::VectorXd x(3), t(3);
  x << 0.2, -0.7, 1.5;
  t << 0.0, 1.0, 2.0;
  const Eigen::VectorXd p = x + t;
  const rt::AnchorPressure a{{0.0, 1.0, 2.0}, {0.0, 1.0, 2.0}};
  CHECK((rt::anchor_normalize(p, t, a) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("trivial: steady anchor normalization") {
  Eigen::VectorXd p(3);
  p << 2.0, 3.5, 2.0;
  const rt::AnchorPressure a{{0.0}, {2.0}};
  Eigen::VectorXd expect(3);
  expect << 0.0, 1.5, 0.0;
  CHECK(rt::anchor_normalize(p, Eigen::VectorXd::Zero(3), a) == expect);
  CHECK_THROWS_AS(rt::anchor_normalize(p, Eigen::VectorXd::Constant(3, 0.5), a), RuntimeFailure);
}

TEST_CASE("trivial: P=2 exchange sends normalized pressure from the master only") {
  auto prob = steady_problem({2, 1}, 3);
  // Put one of the slave's ghost points exactly on the anchor.
  prob.datasets[1].ghost_points[0].row(0) << 0.4, 0.5;
  auto ranks = rt::make_rank_states(prob);
  REQUIRE(ranks[0].role == rt::Role::kMaster);
  REQUIRE(ranks[1].role == rt::Role::kSlave);
  const auto msgs = rt::exchange_ghosts(ranks, 0, prob.config);
  CHECK(msgs.size() == 2);
  CHECK(ranks[1].cache[0].normalized);
  CHECK(std::abs(ranks[1].cache[0].pressure(0)) <= 1e-12);
  CHECK_FALSE(ranks[0].cache[0].normalized);
  const Matrix raw = net::predict(ranks[1].params, ranks[0].data.ghost_points[0]);
  CHECK(bit_equal(ranks[0].cache[0].pressure, raw.col(2)));
  CHECK(bit_equal(ranks[0].cache[0].velocity, raw.leftCols(2)));
}

TEST_CASE("trivial: P=1 exchange is a no-op") {
  auto prob = steady_problem({1, 1}, 0);
  auto ranks = rt::make_rank_states(prob);
  CHECK(rt::exchange_ghosts(ranks, 0, prob.config).empty());
  CHECK(ranks[0].cache.empty());
}

TEST_CASE("trivial: repeated exchange with unchanged parameters gives identical caches") {
  auto prob = tg_problem({2, 1}, 2, 1, 4);
  auto ranks = rt::make_rank_states(prob);
  rt::exchange_ghosts(ranks, 0, prob.config);
  const auto before = ranks;
  rt::exchange_ghosts(ranks, 0, prob.config);
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    for (std::size_t i = 0; i < ranks[r].cache.size(); ++i) {
      CHECK(bit_equal(ranks[r].cache[i].velocity, before[r].cache[i].velocity));
      CHECK(bit_equal(ranks[r].cache[i].pressure, before[r].cache[i].pressure));
    }
  }
}

TEST_CASE("exchange off the schedule is rejected") {
  auto prob = tg_problem({2, 1}, 1, 1, 4);
  prob.config.comm_interval = 3;
  auto ranks = rt::make_rank_states(prob);
  CHECK_THROWS_AS(rt::exchange_ghosts(ranks, 2, prob.config), ValidationError);
}

TEST_CASE("gradient accumulation matches a single full batch") {
  auto prob = tg_problem({2, 1}, 2, 1, 5);
  auto ranks = rt::make_rank_states(prob);
  rt::exchange_ghosts(ranks, 0, prob.config);
  for (auto& state : ranks) {
    const auto n = static_cast<std::size_t>(std::max({state.data.pde_points.rows(), state.data.obs_points.rows(),
                                                      Eigen::Index{40}}));
    rt::TrainConfig full = prob.config, half = prob.config;
    full.batch_size = 2 * n;
    half.batch_size = n / 2 + 1;
    auto a = state, b = state;
    rt::LossTapes ta(prob.expert, prob.regime, {}), tb(prob.expert, prob.regime, {});
    const auto ga = rt::epoch_gradient(a, ta, full);
    const auto gb = rt::epoch_gradient(b, tb, half);
    CHECK(ga.total == doctest::Approx(gb.total).epsilon(1e-13));
    for (std::size_t i = 0; i < ga.grads.size(); ++i) {
      const double scale = std::max(1.0, ga.grads[i].cwiseAbs().maxCoeff());
      CHECK((ga.grads[i] - gb.grads[i]).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
  }
}

TEST_CASE("trivial: master gradient ignores spatial ghost pressure, slave gradient does not") {
  auto prob = tg_problem({2, 1}, 1, 1, 6);
  auto ranks = rt::make_rank_states(prob);
  rt::exchange_ghosts(ranks, 0, prob.config);
  for (auto& state : ranks) {
    auto a = state, b = state;
    for (auto& c : b.cache) c.pressure.array() += 3.0;
    rt::LossTapes tapes(prob.expert, prob.regime, {});
    const auto ga = rt::epoch_gradient(a, tapes, prob.config);
    const auto gb = rt::epoch_gradient(b, tapes, prob.config);
    bool same = true;
    for (std::size_t i = 0; i < ga.grads.size(); ++i) same = same && bit_equal(ga.grads[i], gb.grads[i]);
    CHECK(same == (state.role == rt::Role::kMaster));
  }
}

TEST_CASE("pure regression decreases the loss") {
  rt::TrainProblem p;
  p.regime = {phys::RegimeKind::kSteady2d, 1.0};
  p.subdomains = decomp::partition({{0.0, 0.0}, {1.0, 1.0}, 0.0, 0.0, p.regime}, {{1, 1}, 1, 0.0, 0.0});
  decomp::RankDatasets d;
  d.obs_points.resize(4, 2);
  d.obs_points << 0.1, 0.1, 0.9, 0.2, 0.4, 0.8, 0.6, 0.5;
  d.obs_velocity.resize(4, 2);
  d.obs_velocity << 0.3, -0.2, 0.1, 0.4, -0.5, 0.2, 0.0, 0.1;
  d.pde_points = test::random_points(8, 2, 1, 0.0, 1.0);
  p.datasets = {d};
  p.expert = {2, 1, 6, ad::Activation::kTanh, 3, 1.0};
  p.config.epochs = 50;
  p.config.batch_size = 4;
  p.config.lr = {1e-2, 1.0, 1000};
  p.config.weights = {1.0, 0.0, 0.0, 0.0, 0.0, {}};
  p.config.anchor = {0.5, 0.5};
  const auto res = rt::train(p);
  const auto& h = res.history[0];
  REQUIRE(h.size() == 50);
  CHECK(h.back().total < h.front().total);
  for (const auto& r : h) CHECK(r.parts.pde >= 0.0);
}

TEST_CASE("trivial: zero gradient leaves parameters unchanged and counts the step") {
  std::vector<Matrix> params{Matrix::Constant(2, 2, 0.7)};
  const std::vector<Matrix> grads{Matrix::Zero(2, 2)};
  rt::AdamState st;
  rt::optimizer_step(params, grads, st, 0.1);
  CHECK(params[0] == Matrix::Constant(2, 2, 0.7));
  CHECK(st.step == 1);
}

TEST_CASE("first Adam step on a unit gradient") {
  std::vector<Matrix> params{Matrix::Zero(1, 1)};
  const std::vector<Matrix> grads{Matrix::Ones(1, 1)};
  rt::AdamState st;
  rt::optimizer_step(params, grads, st, 0.1);
  // m_hat / (sqrt(v_hat) + eps) = 1 / (1 + 1e-8).
  CHECK(std::abs(params[0](0, 0) + 0.1) <= 1e-8);
  rt::optimizer_step(params, grads, st, 0.1);
  CHECK(std::abs(params[0](0, 0) + 0.2) <= 1e-8);
}

TEST_CASE("trivial: clipping rescales the gradient norm") {
  std::vector<Matrix> params{Matrix::Zero(2, 1), Matrix::Zero(1, 1)};
  std::vector<Matrix> grads{Matrix::Zero(2, 1), Matrix::Zero(1, 1)};
  grads[0] << 6.0, 0.0;
  grads[1] << 8.0;
  CHECK(rt::global_norm(grads) == 10.0);
  rt::AdamState st;
  CHECK(rt::optimizer_step(params, grads, st, 0.1, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  rt::AdamState st2;
  CHECK(rt::optimizer_step(params, grads, st2, 0.1, 100.0) == 10.0);
  grads[1](0, 0) = std::nan("");
  CHECK_THROWS_AS(rt::optimizer_step(params, grads, st2, 0.1), RuntimeFailure);
}

TEST_CASE("learning-rate schedule") {
  CHECK(rt::lr_at(3000, {1e-2, 0.5, 1500}) == doctest::Approx(2.5e-3).epsilon(1e-15));
  CHECK(rt::lr_at(2999, {1e-2, 0.5, 1500}) == doctest::Approx(5e-3).epsilon(1e-15));
}

TEST_CASE("trivial: learning rate at epoch 0 and with factor 1") {
  CHECK(rt::lr_at(0, {1e-2, 0.5, 1500}) == 1e-2);
  CHECK(rt::lr_at(123456, {3e-4, 1.0, 10}) == 3e-4);
}

TEST_CASE("trivial: P=1 training has no ghost terms") {
  auto prob = steady_problem({1, 1}, 1);
  int messages = 0;
  rt::TrainHooks hooks;
  hooks.on_message = [&](const rt::GhostMessage&) { ++messages; };
  const auto res = rt::train(prob, hooks);
  CHECK(messages == 0);
  CHECK(res.masters == std::vector<int>{0});
  for (const auto& r : res.history[0]) {
    CHECK(r.parts.ghost_u == 0.0);
    CHECK(r.parts.ghost_p_space == 0.0);
    CHECK(r.parts.ghost_p_time == 0.0);
  }
}

TEST_CASE("trivial: P=2 training is bit-identical across runs") {
  const auto prob = tg_problem({2, 1}, 1, 8, 0);
  const auto a = rt::train(prob);
  const auto b = rt::train(prob);
  for (std::size_t r = 0; r < 2; ++r) {
    REQUIRE(a.history[r].size() == b.history[r].size());
    for (std::size_t e = 0; e < a.history[r].size(); ++e) CHECK(a.history[r][e].total == b.history[r][e].total);
    CHECK(same_params(a.experts[r], b.experts[r]));
  }
}

TEST_CASE("effective weights and config validation") {
  const phys::LossWeights w{10.0, 4.0, 1.0, 2.0, 3.0, {}};
  CHECK(rt::effective_weights(w, rt::Role::kMaster, true).ghost_p_space == 0.0);
  CHECK(rt::effective_weights(w, rt::Role::kMaster, false).ghost_p_space == 2.0);
  CHECK(rt::effective_weights(w, rt::Role::kSlave, true).ghost_p_space == 2.0);
  CHECK(rt::effective_weights(w, rt::Role::kMaster, true).ghost_p_time == 3.0);
  rt::TrainConfig c;
  c.anchor = {0.0, 0.0};
  CHECK_NOTHROW(c.validate());
  c.comm_interval = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.comm_interval = 1;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.epochs = 1;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("loss history CSV") {
  rt::EpochReport r;
  r.epoch = 3;
  r.parts = {0.5, 0.25, 0.125, 0.0, 1.0};
  r.lr = 1e-3;
  std::ostringstream os;
  rt::write_loss_history(os, {r});
  const std::string s = os.str();
  CHECK(s.substr(0, s.find('\n')) == "epoch,loss_obs,loss_pde,loss_gh_u,loss_gh_p_space,loss_gh_p_time,lr");
  CHECK(s.find("\n3,0.5,0.25,0.125,0,1,0.001") != std::string::npos);
}

// ---- Protocol invariants ----

TEST_CASE("protocol: role and weight invariants") {
  auto prob = tg_problem({2, 2}, 2, 1, 0);
  prob.config.weights.ghost_p_time = 2.5;
  const auto ranks = rt::make_rank_states(prob);
  const auto masters = decomp::identify_masters(prob.subdomains, prob.config.anchor);
  CHECK(masters.size() == 2);
  for (const auto& s : ranks) {
    const bool is_master = std::find(masters.begin(), masters.end(), s.spec.rank) != masters.end();
    CHECK((s.role == rt::Role::kMaster) == is_master);
    if (is_master) CHECK(s.weights.ghost_p_space == 0.0);
    if (!is_master) CHECK(s.weights.ghost_p_space == 1.0);
    CHECK(s.weights.ghost_p_time == 2.5);
  }
  // A temporal interface needs a positive temporal pressure weight.
  prob.config.weights.ghost_p_time = 0.0;
  CHECK_THROWS_AS(rt::make_rank_states(prob), ValidationError);
}

TEST_CASE("protocol: intercepted messages recompute from the source expert") {
  auto prob = tg_problem({2, 1}, 2, 4, 1);
  const auto initial = rt::make_rank_states(prob);
  std::mutex mu;
  std::vector<rt::GhostMessage> seen;
  rt::TrainHooks hooks;
  hooks.on_message = [&](const rt::GhostMessage& m) {
    std::lock_guard lock(mu);
    seen.push_back(m);
  };
  const auto full = rt::train(prob, hooks);
  // The run with one epoch fewer ends with the parameters used at the last exchange.
  prob.config.epochs = 3;
  const auto prefix = rt::train(prob);
  std::size_t links = 0;
  for (const auto& s : initial) links += s.spec.ghosts.size();
  CHECK(seen.size() == 4 * links);
  net::Evaluator ev;
  int checked = 0;
  for (const auto& m : seen) {
    const bool master = initial[static_cast<std::size_t>(m.source)].role == rt::Role::kMaster;
    CHECK(m.normalized == master);
    if (m.epoch != 0 && m.epoch != 3) continue;
    const auto& params = m.epoch == 0 ? initial[static_cast<std::size_t>(m.source)].params
                                      : prefix.experts[static_cast<std::size_t>(m.source)];
    const Matrix raw = ev.predict(params, m.points);
    CHECK(bit_equal(m.velocity, raw.leftCols(2)));
    Eigen::VectorXd p = raw.col(2);
    if (master) {
      const Eigen::VectorXd t = m.points.col(0);
      const auto anchor = rt::evaluate_anchor(ev, params, prob.regime, prob.config.anchor, t);
      p = rt::anchor_normalize(p, t, anchor);
    }
    CHECK(bit_equal(m.pressure, p));
    ++checked;
  }
  CHECK(checked == static_cast<int>(2 * links));
  CHECK(full.history[0].size() == 4);
}

TEST_CASE("protocol: master update is invariant to spatial ghost pressure") {
  auto prob = tg_problem({2, 1}, 2, 1, 2);
  auto ranks = rt::make_rank_states(prob);
  rt::exchange_ghosts(ranks, 0, prob.config);
  int masters = 0;
  for (const auto& state : ranks) {
    if (state.role != rt::Role::kMaster) continue;
    ++masters;
    auto a = state, b = state;
    for (std::size_t i = 0; i < b.cache.size(); ++i) {
      if (b.spec.ghosts[i].kind == decomp::InterfaceKind::kSpatial) {
        b.cache[i].pressure = test::random_points(b.cache[i].pressure.size(), 1, 77, -50.0, 50.0);
      }
    }
    rt::LossTapes ta(prob.expert, prob.regime, {}), tb(prob.expert, prob.regime, {});
    for (int e = 0; e < 3; ++e) {
      rt::train_epoch(a, ta, prob.config);
      rt::train_epoch(b, tb, prob.config);
    }
    CHECK(same_params(a.params, b.params));
  }
  CHECK(masters == 2);
}

TEST_CASE("protocol: barrier bounds the epoch lead by the communication interval") {
  for (int interval : {1, 3}) {
    auto prob = tg_problem({2, 2}, 1, 9, 3);
    prob.config.comm_interval = interval;
    std::mutex mu;
    std::vector<int> epochs;
    rt::TrainHooks hooks;
    hooks.on_message = [&](const rt::GhostMessage& m) {
      std::lock_guard lock(mu);
      epochs.push_back(m.epoch);
    };
    const auto res = rt::train(prob, hooks);
    CHECK(res.max_epoch_lead <= interval);
    for (int e : epochs) CHECK(e % interval == 0);
    CHECK(epochs.size() == static_cast<std::size_t>(8 * ((9 + interval - 1) / interval)));
  }
}

TEST_CASE("protocol: a 100-epoch P=2 run is bit-deterministic") {
  const auto prob = tg_problem({2, 1}, 1, 100, 7);
  const auto a = rt::train(prob);
  const auto b = rt::train(prob);
  bool same = true;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t e = 0; e < 100; ++e) {
      const auto& x = a.history[r][e];
      const auto& y = b.history[r][e];
      same = same && x.total == y.total && x.parts.obs == y.parts.obs && x.parts.pde == y.parts.pde &&
             x.parts.ghost_u == y.parts.ghost_u && x.parts.ghost_p_space == y.parts.ghost_p_space;
    }
    same = same && same_params(a.experts[r], b.experts[r]);
  }
  CHECK(same);
}

TEST_CASE("protocol: a missing message is reported as a deadlock naming the interface") {
  auto prob = tg_problem({2, 1}, 1, 6, 0);
  rt::TrainHooks hooks;
  hooks.drop_message = [](const rt::GhostMessage& m) { return m.epoch == 2 && m.destination == 1; };
  hooks.message_timeout = std::chrono::milliseconds(500);
  try {
    rt::train(prob, hooks);
    FAIL("expected a deadlock");
  } catch (const RuntimeFailure& e) {
    const std::string what = e.what();
    CHECK(what.find("deadlock") != std::string::npos);
    CHECK(what.find("rank 1") != std::string::npos);
    CHECK(what.find("epoch 2") != std::string::npos);
    CHECK(what.find("spatial interface 0 with rank 0") != std::string::npos);
  }
}

TEST_CASE("protocol: P=1 reduces to a single-network objective") {
  auto prob = steady_problem({1, 1}, 2);
  auto ranks = rt::make_rank_states(prob);
  REQUIRE(ranks.size() == 1);
  CHECK(ranks[0].role == rt::Role::kMaster);
  rt::LossTapes tapes(prob.expert, prob.regime, {});
  auto s = ranks[0];
  const auto g = rt::epoch_gradient(s, tapes, prob.config);
  CHECK(g.total == doctest::Approx(10.0 * g.parts.obs + 4.0 * g.parts.pde).epsilon(1e-15));
  // Plain mean losses computed directly.
  net::Evaluator ev;
  const Matrix obs_pred = ev.predict(s.params, s.data.obs_points);
  CHECK(g.parts.obs == doctest::Approx(phys::loss_obs(obs_pred.leftCols(2), s.data.obs_velocity)).epsilon(1e-12));
  const auto res = phys::ns_residuals(ev.jets(s.params, s.data.pde_points), prob.regime);
  CHECK(g.parts.pde == doctest::Approx(phys::loss_pde(res)).epsilon(1e-12));
}

}  // TEST_SUITE
