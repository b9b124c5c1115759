#include "dpinn/runtime/rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "dpinn/error.hpp"
#include "dpinn/random.hpp"

namespace dpinn::rt {

std::string_view to_string(Role role) { return role == Role::kMaster ? "master" : "slave"; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (comm_interval < 1) throw ValidationError("communication interval must be >= 1");
  if (!(lr.initial > 0.0) || !std::isfinite(lr.initial)) throw ValidationError("learning rate must be > 0");
  if (!(lr.factor > 0.0) || !std::isfinite(lr.factor)) throw ValidationError("learning-rate factor must be > 0");
  if (lr.interval < 1) throw ValidationError("learning-rate interval must be >= 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw ValidationError("clip norm must be > 0");
  if (anchor.empty()) throw ValidationError("anchor point is required");
  weights.validate();
}

phys::LossWeights effective_weights(const phys::LossWeights& base, Role role, bool asymmetric) {
  phys::LossWeights w = base;
  if (role == Role::kMaster && asymmetric) w.ghost_p_space = 0.0;
  return w;
}

RankState make_rank_state(const decomp::SubdomainSpec& spec, bool is_master, const net::ExpertConfig& expert,
                          decomp::RankDatasets data, const phys::FlowRegime& regime, const TrainConfig& config) {
  config.validate();
  expert.validate();
  if (expert.input_dim != regime.input_dim() || expert.output_dim != regime.output_dim()) {
    throw ValidationError("expert shape does not match the " + std::string(phys::to_string(regime.kind)) + " regime");
  }
  if (static_cast<int>(config.anchor.size()) != regime.spatial_dim()) {
    throw ValidationError("anchor needs one coordinate per spatial axis");
  }
  if (data.ghost_points.size() != spec.ghosts.size()) throw ValidationError("ghost sets do not match the subdomain");
  for (const auto& g : spec.ghosts) {
    if (g.kind == decomp::InterfaceKind::kTemporal && !(config.weights.ghost_p_time > 0.0)) {
      throw ValidationError("temporal interfaces need a positive ghost_p_time weight");
    }
  }
  if (data.obs_points.rows() == 0 && config.weights.obs > 0.0) {
    throw ValidationError("rank " + std::to_string(spec.rank) + " has no observations but the obs weight is positive");
  }
  if (data.pde_points.rows() == 0 && config.weights.pde > 0.0) {
    throw ValidationError("rank " + std::to_string(spec.rank) + " has no collocation points");
  }

  RankState s;
  s.spec = spec;
  s.role = is_master ? Role::kMaster : Role::kSlave;
  s.regime = regime;
  s.params = net::init_params(expert, mix_seed(config.seed, static_cast<std::uint64_t>(spec.rank)));
  const auto& box = spec.extended;
  net::set_input_box(s.params, Eigen::Map<const Eigen::VectorXd>(box.lo.data(), box.dim()),
                     Eigen::Map<const Eigen::VectorXd>(box.hi.data(), box.dim()));
  s.data = std::move(data);
  s.cache.resize(spec.ghosts.size());
  s.weights = effective_weights(config.weights, s.role, config.asymmetric_weighting);
  s.rng.seed(mix_seed(config.seed, 100000 + static_cast<std::uint64_t>(spec.rank)));
  return s;
}

// ---- Ghost exchange ----

double AnchorPressure::at(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] == t) return values[i];
  }
  std::ostringstream os;
  os.precision(17);
  os << "no anchor pressure evaluated for t = " << t;
  throw RuntimeFailure(os.str());
}

Eigen::VectorXd anchor_normalize(const Eigen::VectorXd& p, const Eigen::VectorXd& times, const AnchorPressure& anchor) {
  if (p.size() != times.size()) throw ValidationError("pressure and time counts differ");
  Eigen::VectorXd out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out(i) = p(i) - anchor.at(times(i));
  return out;
}

Eigen::VectorXd point_times(const Matrix& points, const phys::FlowRegime& regime) {
  if (regime.has_time()) return points.col(0);
  return Eigen::VectorXd::Zero(points.rows());
}

AnchorPressure evaluate_anchor(net::Evaluator& ev, const net::ExpertParams& params, const phys::FlowRegime& regime,
                               const std::vector<double>& anchor, const Eigen::VectorXd& times) {
  AnchorPressure ap;
  ap.times.assign(times.data(), times.data() + times.size());
  std::sort(ap.times.begin(), ap.times.end());
  ap.times.erase(std::unique(ap.times.begin(), ap.times.end()), ap.times.end());
  if (ap.times.empty()) return ap;
  const int t_off = regime.has_time() ? 1 : 0;
  Matrix pts(static_cast<Eigen::Index>(ap.times.size()), regime.input_dim());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    if (t_off) pts(i, 0) = ap.times[static_cast<std::size_t>(i)];
    for (std::size_t a = 0; a < anchor.size(); ++a) pts(i, t_off + static_cast<Eigen::Index>(a)) = anchor[a];
  }
  const Matrix out = ev.predict(params, pts);
  ap.values.resize(ap.times.size());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) ap.values[static_cast<std::size_t>(i)] = out(i, regime.spatial_dim());
  return ap;
}

std::vector<std::vector<OutgoingLink>> outgoing_links(const std::vector<RankState>& ranks) {
  std::vector<std::vector<OutgoingLink>> links(ranks.size());
  for (const auto& dst : ranks) {
    for (std::size_t i = 0; i < dst.spec.ghosts.size(); ++i) {
      const auto& g = dst.spec.ghosts[i];
      if (g.neighbor < 0 || static_cast<std::size_t>(g.neighbor) >= ranks.size()) {
        throw ValidationError("ghost component of rank " + std::to_string(dst.spec.rank) + " names an unknown neighbor");
      }
      links[static_cast<std::size_t>(g.neighbor)].push_back(
          {dst.spec.rank, static_cast<int>(i), g.kind, dst.data.ghost_points[i]});
    }
  }
  return links;
}

GhostMessage make_message(const RankState& source, const OutgoingLink& link, int epoch, const TrainConfig& config,
                          net::Evaluator& ev) {
  GhostMessage msg;
  msg.source = source.spec.rank;
  msg.destination = link.destination;
  msg.interface = link.interface;
  msg.kind = link.kind;
  msg.epoch = epoch;
  msg.points = link.points;
  const int ds = source.regime.spatial_dim();
  const Matrix out = ev.predict(source.params, link.points);
  msg.velocity = out.leftCols(ds);
  msg.pressure = out.col(ds);
  if (source.role == Role::kMaster && config.anchor_normalization) {
    const Eigen::VectorXd times = point_times(link.points, source.regime);
    const AnchorPressure ap = evaluate_anchor(ev, source.params, source.regime, config.anchor, times);
    msg.pressure = anchor_normalize(msg.pressure, times, ap);
    msg.normalized = true;
  }
  return msg;
}

void apply_message(RankState& destination, const GhostMessage& message) {
  if (message.destination != destination.spec.rank) throw RuntimeFailure("message delivered to the wrong rank");
  if (message.interface < 0 || static_cast<std::size_t>(message.interface) >= destination.cache.size()) {
    throw RuntimeFailure("message names an unknown interface");
  }
  const auto i = static_cast<std::size_t>(message.interface);
  const auto& g = destination.spec.ghosts[i];
  if (g.neighbor != message.source) {
    throw RuntimeFailure("interface " + std::to_string(i) + " of rank " + std::to_string(destination.spec.rank) +
                         " expects rank " + std::to_string(g.neighbor) + ", got rank " + std::to_string(message.source));
  }
  const Eigen::Index n = destination.data.ghost_points[i].rows();
  if (message.velocity.rows() != n || message.pressure.size() != n ||
      message.velocity.cols() != destination.regime.spatial_dim()) {
    throw RuntimeFailure("ghost message has the wrong shape");
  }
  NeighborCache& c = destination.cache[i];
  c.velocity = message.velocity;
  c.pressure = message.pressure;
  c.normalized = message.normalized;
  c.epoch = message.epoch;
}

std::vector<GhostMessage> exchange_ghosts(std::vector<RankState>& ranks, int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch % config.comm_interval != 0) {
    throw ValidationError("exchange at epoch " + std::to_string(epoch) + " is off the communication schedule");
  }
  const auto links = outgoing_links(ranks);
  net::Evaluator ev;
  std::vector<GhostMessage> messages;
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    for (const auto& link : links[r]) messages.push_back(make_message(ranks[r], link, epoch, config, ev));
  }
  for (const auto& m : messages) apply_message(ranks[static_cast<std::size_t>(m.destination)], m);
  for (const auto& s : ranks) {
    for (std::size_t i = 0; i < s.cache.size(); ++i) {
      if (s.cache[i].epoch != epoch) {
        throw RuntimeFailure("deadlock: rank " + std::to_string(s.spec.rank) + " got no message on its " +
                             decomp::to_string(s.spec.ghosts[i].kind) + " interface with rank " +
                             std::to_string(s.spec.ghosts[i].neighbor));
      }
    }
  }
  return messages;
}

// ---- Loss tapes ----

namespace {
constexpr Eigen::Index kJetColumns = 1280;
}  // namespace

LossTapes::LossTapes(const net::ExpertConfig& expert, const phys::FlowRegime& regime,
                     phys::ComponentWeights components)
    : expert_(expert), regime_(regime), components_(std::move(components)) {
  expert_.validate();
  regime_.validate();
  if (components_.empty()) components_.assign(static_cast<std::size_t>(regime_.spatial_dim()), 1.0);
  if (static_cast<int>(components_.size()) != regime_.spatial_dim()) {
    throw ValidationError("need one velocity component weight per spatial axis");
  }
}

LossTapes::ObsTape& LossTapes::obs_tape(ad::Index batch) {
  auto it = obs_.find(batch);
  if (it != obs_.end()) return it->second;
  ObsTape t;
  t.net = ad::build_tape(expert_.architecture(), batch, ad::TapeMode::kValue);
  ad::Tape& tape = t.net.tape;
  const int ds = regime_.spatial_dim();
  t.target = tape.input(ds, batch);
  t.scale = tape.input(1, 1);
  std::vector<ad::NodeId> sums;
  for (int c = 0; c < ds; ++c) {
    const ad::NodeId diff = tape.sub(t.net.graph.value(tape, c), tape.block(t.target, c, 0, 1, batch));
    sums.push_back(tape.sum(tape.square(diff)));
  }
  t.sum = tape.weighted_sum(sums, components_);
  t.loss = tape.scale_by(t.sum, t.scale);
  return obs_.emplace(batch, std::move(t)).first->second;
}

LossTapes::PdeTape& LossTapes::pde_tape(ad::Index batch) {
  auto it = pde_.find(batch);
  if (it != pde_.end()) return it->second;
  PdeTape t;
  t.net = ad::build_tape(expert_.architecture(), batch, ad::TapeMode::kJetLoss);
  ad::Tape& tape = t.net.tape;
  t.scale = tape.input(1, 1);
  std::vector<ad::NodeId> sums;
  for (ad::NodeId r : phys::append_ns_residuals(tape, t.net.graph, regime_)) sums.push_back(tape.sum(tape.square(r)));
  t.sum = tape.weighted_sum(sums, std::vector<double>(sums.size(), 1.0));
  t.loss = tape.scale_by(t.sum, t.scale);
  return pde_.emplace(batch, std::move(t)).first->second;
}

LossTapes::GhostTape& LossTapes::ghost_tape(ad::Index batch) {
  auto it = ghost_.find(batch);
  if (it != ghost_.end()) return it->second;
  GhostTape t;
  t.net = ad::build_tape(expert_.architecture(), batch, ad::TapeMode::kValue);
  ad::Tape& tape = t.net.tape;
  const int ds = regime_.spatial_dim();
  t.target = tape.input(ds + 1, batch);
  t.mask = tape.input(2, batch);
  t.cu = tape.input(1, 1);
  t.cs = tape.input(1, 1);
  t.ct = tape.input(1, 1);
  std::vector<ad::NodeId> sums;
  for (int c = 0; c < ds; ++c) {
    const ad::NodeId diff = tape.sub(t.net.graph.value(tape, c), tape.block(t.target, c, 0, 1, batch));
    sums.push_back(tape.sum(tape.square(diff)));
  }
  t.su = tape.weighted_sum(sums, components_);
  const ad::NodeId dp2 =
      tape.square(tape.sub(t.net.graph.value(tape, ds), tape.block(t.target, ds, 0, 1, batch)));
  t.ss = tape.sum(tape.mul(tape.block(t.mask, 0, 0, 1, batch), dp2));
  t.st = tape.sum(tape.mul(tape.block(t.mask, 1, 0, 1, batch), dp2));
  t.loss = tape.add(tape.add(tape.scale_by(t.su, t.cu), tape.scale_by(t.ss, t.cs)), tape.scale_by(t.st, t.ct));
  return ghost_.emplace(batch, std::move(t)).first->second;
}

double LossTapes::accumulate_obs(const net::ExpertParams& params, const Matrix& points, const Matrix& targets,
                                 double scale, std::span<Matrix> grads) {
  if (points.rows() == 0) return 0.0;
  if (targets.rows() != points.rows()) throw ValidationError("observation targets do not match the points");
  ObsTape& t = obs_tape(points.rows());
  t.net.graph.bind(t.net.tape, points, params.scaling);
  t.net.tape.input_value(t.target) = targets.transpose();
  t.net.tape.input_value(t.scale)(0, 0) = scale;
  t.net.tape.forward(params.tensors);
  if (scale != 0.0) t.net.tape.backward(t.loss, grads);
  return t.net.tape.scalar(t.sum);
}

double LossTapes::accumulate_pde(const net::ExpertParams& params, const Matrix& points, double scale,
                                 std::span<Matrix> grads) {
  const Eigen::Index n = points.rows();
  if (n == 0) return 0.0;
  // Jet buffers grow with (1 + 2d) columns per point; large micro-batches are
  // run as near-equal pieces that stay cache resident. The sum is the same.
  const Eigen::Index chunk = std::max<Eigen::Index>(32, kJetColumns / (1 + 2 * regime_.input_dim()));
  const Eigen::Index pieces = (n + chunk - 1) / chunk;
  double total = 0.0;
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < pieces; ++k) {
    const Eigen::Index m = n / pieces + (k < n % pieces ? 1 : 0);
    PdeTape& t = pde_tape(m);
    t.net.graph.bind(t.net.tape, pieces == 1 ? points : Matrix(points.middleRows(row, m)), params.scaling);
    t.net.tape.input_value(t.scale)(0, 0) = scale;
    t.net.tape.forward(params.tensors);
    if (scale != 0.0) t.net.tape.backward(t.loss, grads);
    total += t.net.tape.scalar(t.sum);
    row += m;
  }
  return total;
}

LossTapes::GhostSums LossTapes::accumulate_ghost(const net::ExpertParams& params, const Matrix& points,
                                                 const Matrix& nbr_velocity, const Eigen::VectorXd& nbr_pressure,
                                                 const Eigen::VectorXd& space_mask, const Eigen::VectorXd& time_mask,
                                                 const GhostScales& scales, std::span<Matrix> grads) {
  GhostSums out;
  const Eigen::Index n = points.rows();
  if (n == 0) return out;
  if (nbr_velocity.rows() != n || nbr_pressure.size() != n || space_mask.size() != n || time_mask.size() != n) {
    throw ValidationError("ghost targets do not match the points");
  }
  GhostTape& t = ghost_tape(n);
  ad::Tape& tape = t.net.tape;
  t.net.graph.bind(tape, points, params.scaling);
  const int ds = regime_.spatial_dim();
  Matrix& target = tape.input_value(t.target);
  target.topRows(ds) = nbr_velocity.transpose();
  target.row(ds) = nbr_pressure.transpose();
  Matrix& mask = tape.input_value(t.mask);
  mask.row(0) = space_mask.transpose();
  mask.row(1) = time_mask.transpose();
  tape.input_value(t.cu)(0, 0) = scales.velocity;
  tape.input_value(t.cs)(0, 0) = scales.pressure_space;
  tape.input_value(t.ct)(0, 0) = scales.pressure_time;
  tape.forward(params.tensors);
  if (scales.velocity != 0.0 || scales.pressure_space != 0.0 || scales.pressure_time != 0.0) {
    tape.backward(t.loss, grads);
  }
  out.velocity = tape.scalar(t.su);
  out.pressure_space = tape.scalar(t.ss);
  out.pressure_time = tape.scalar(t.st);
  return out;
}

// ---- Epoch ----

namespace {

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& order, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(order[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& order, std::size_t begin,
                       std::size_t end) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out(static_cast<Eigen::Index>(i - begin)) = v(order[i]);
  return out;
}

std::vector<Eigen::Index> shuffled(Eigen::Index n, std::mt19937_64& rng) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  shuffle(order.begin(), order.end(), rng);
  return order;
}

double mean_of(double sum, Eigen::Index n) { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
double scale_of(double lambda, Eigen::Index n) { return n > 0 ? lambda / static_cast<double>(n) : 0.0; }

}  // namespace

EpochGradient epoch_gradient(RankState& state, LossTapes& tapes, const TrainConfig& config) {
  const auto& data = state.data;
  const int ds = state.regime.spatial_dim();

  // Flatten the ghost components into one set with per-point masks.
  Eigen::Index n_ghost = 0;
  for (const auto& g : data.ghost_points) n_ghost += g.rows();
  Matrix g_points(n_ghost, state.regime.input_dim());
  Matrix g_vel(n_ghost, ds);
  Eigen::VectorXd g_p(n_ghost), g_space(n_ghost), g_time(n_ghost);
  {
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < data.ghost_points.size(); ++i) {
      const Eigen::Index n = data.ghost_points[i].rows();
      if (n == 0) continue;
      const NeighborCache& c = state.cache[i];
      if (c.epoch < 0) {
        throw RuntimeFailure("rank " + std::to_string(state.spec.rank) + " trains before its ghost cache on interface " +
                             std::to_string(i) + " was filled");
      }
      const bool temporal = state.spec.ghosts[i].kind == decomp::InterfaceKind::kTemporal;
      g_points.middleRows(row, n) = data.ghost_points[i];
      g_vel.middleRows(row, n) = c.velocity;
      g_p.segment(row, n) = c.pressure;
      g_space.segment(row, n).setConstant(temporal ? 0.0 : 1.0);
      g_time.segment(row, n).setConstant(temporal ? 1.0 : 0.0);
      row += n;
    }
  }
  const auto n_space = static_cast<Eigen::Index>(g_space.sum());
  const Eigen::Index n_time = n_ghost - n_space;

  const Eigen::Index n_obs = data.obs_points.rows();
  const Eigen::Index n_pde = data.pde_points.rows();
  const auto order_obs = shuffled(n_obs, state.rng);
  const auto order_pde = shuffled(n_pde, state.rng);
  const auto order_ghost = shuffled(n_ghost, state.rng);

  const phys::LossWeights& w = state.weights;
  const double c_obs = scale_of(w.obs, n_obs);
  const double c_pde = scale_of(w.pde, n_pde);
  LossTapes::GhostScales c_gh;
  c_gh.velocity = scale_of(w.ghost_u, n_ghost);
  c_gh.pressure_space = scale_of(w.ghost_p_space, n_space);
  c_gh.pressure_time = scale_of(w.ghost_p_time, n_time);

  EpochGradient out;
  for (const auto& p : state.params.tensors) out.grads.push_back(Matrix::Zero(p.rows(), p.cols()));

  const auto B = config.batch_size;
  const auto batches = [B](Eigen::Index n) { return (static_cast<std::size_t>(n) + B - 1) / B; };
  const std::size_t n_batches = std::max({batches(n_obs), batches(n_pde), batches(n_ghost)});

  double s_obs = 0.0, s_pde = 0.0;
  LossTapes::GhostSums s_gh;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t lo = b * B;
    if (lo < static_cast<std::size_t>(n_obs)) {
      const std::size_t hi = std::min(lo + B, static_cast<std::size_t>(n_obs));
      s_obs += tapes.accumulate_obs(state.params, gather(data.obs_points, order_obs, lo, hi),
                                    gather(data.obs_velocity, order_obs, lo, hi), c_obs, out.grads);
    }
    if (lo < static_cast<std::size_t>(n_pde)) {
      const std::size_t hi = std::min(lo + B, static_cast<std::size_t>(n_pde));
      s_pde += tapes.accumulate_pde(state.params, gather(data.pde_points, order_pde, lo, hi), c_pde, out.grads);
    }
    if (lo < static_cast<std::size_t>(n_ghost)) {
      const std::size_t hi = std::min(lo + B, static_cast<std::size_t>(n_ghost));
      const auto s = tapes.accumulate_ghost(state.params, gather(g_points, order_ghost, lo, hi),
                                            gather(g_vel, order_ghost, lo, hi), gather(g_p, order_ghost, lo, hi),
                                            gather(g_space, order_ghost, lo, hi), gather(g_time, order_ghost, lo, hi),
                                            c_gh, out.grads);
      s_gh.velocity += s.velocity;
      s_gh.pressure_space += s.pressure_space;
      s_gh.pressure_time += s.pressure_time;
    }
  }

  out.parts.obs = mean_of(s_obs, n_obs);
  out.parts.pde = mean_of(s_pde, n_pde);
  out.parts.ghost_u = mean_of(s_gh.velocity, n_ghost);
  out.parts.ghost_p_space = mean_of(s_gh.pressure_space, n_space);
  out.parts.ghost_p_time = mean_of(s_gh.pressure_time, n_time);
  out.total = phys::compose_loss(out.parts, w);
  if (!std::isfinite(out.total)) {
    std::ostringstream os;
    os << "rank " << state.spec.rank << " epoch " << state.epoch << ": non-finite loss (obs " << out.parts.obs
       << ", pde " << out.parts.pde << ", gh_u " << out.parts.ghost_u << ", gh_p_space " << out.parts.ghost_p_space
       << ", gh_p_time " << out.parts.ghost_p_time << ")";
    throw RuntimeFailure(os.str());
  }
  return out;
}

EpochReport train_epoch(RankState& state, LossTapes& tapes, const TrainConfig& config) {
  EpochGradient g = epoch_gradient(state, tapes, config);
  EpochReport rep;
  rep.rank = state.spec.rank;
  rep.epoch = state.epoch;
  rep.parts = g.parts;
  rep.total = g.total;
  rep.lr = lr_at(state.epoch, config.lr);
  rep.grad_norm = optimizer_step(state.params.tensors, g.grads, state.adam, rep.lr, config.clip_norm);
  ++state.epoch;
  return rep;
}

}  // namespace dpinn::rt
