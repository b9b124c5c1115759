#include "dpinn/runtime/train.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "dpinn/error.hpp"

namespace dpinn::rt {

std::vector<RankState> make_rank_states(const TrainProblem& problem) {
  problem.config.validate();
  if (problem.subdomains.empty()) throw ValidationError("no subdomains");
  if (problem.datasets.size() != problem.subdomains.size()) {
    throw ValidationError("need one dataset per subdomain");
  }
  const auto masters = decomp::identify_masters(problem.subdomains, problem.config.anchor);
  std::vector<RankState> ranks;
  for (std::size_t r = 0; r < problem.subdomains.size(); ++r) {
    const auto& spec = problem.subdomains[r];
    if (spec.rank != static_cast<int>(r)) throw ValidationError("subdomains must be ordered by rank");
    const bool master = std::find(masters.begin(), masters.end(), spec.rank) != masters.end();
    ranks.push_back(
        make_rank_state(spec, master, problem.expert, problem.datasets[r], problem.regime, problem.config));
  }
  return ranks;
}

namespace {

struct Aborted {};

struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<GhostMessage> inbox;
};

class Coordinator {
 public:
  void post(EpochReport r) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(r));
    }
    cv_.notify_one();
  }
  void worker_done() {
    {
      std::lock_guard lock(mu_);
      ++done_;
    }
    cv_.notify_one();
  }
  // Drains reports until every worker has finished.
  void run(int workers, const std::function<void(EpochReport&&)>& sink) {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return !queue_.empty() || done_ == workers; });
      while (!queue_.empty()) {
        EpochReport r = std::move(queue_.front());
        queue_.pop_front();
        lock.unlock();
        sink(std::move(r));
        lock.lock();
      }
      if (done_ == workers) return;
    }
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<EpochReport> queue_;
  int done_ = 0;
};

}  // namespace

TrainResult train(const TrainProblem& problem, const TrainHooks& hooks) {
  std::vector<RankState> ranks = make_rank_states(problem);
  const TrainConfig& cfg = problem.config;
  const auto links = outgoing_links(ranks);
  const int P = static_cast<int>(ranks.size());

  std::vector<Mailbox> mail(static_cast<std::size_t>(P));
  std::vector<std::atomic<int>> progress(static_cast<std::size_t>(P));
  for (auto& p : progress) p.store(0);
  std::atomic<int> max_lead{0};
  std::atomic<bool> abort{false};
  std::mutex hook_mu;
  std::mutex error_mu;
  std::exception_ptr first_error;
  Coordinator coord;

  const auto start = std::chrono::steady_clock::now();
  const auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!first_error) first_error = e;
    }
    abort.store(true);
    for (auto& m : mail) {
      std::lock_guard lock(m.mu);
      m.cv.notify_all();
    }
  };

  const auto worker = [&](int r) {
    RankState& state = ranks[static_cast<std::size_t>(r)];
    const auto& ghosts = state.spec.ghosts;
    std::set<int> neighbors;
    for (const auto& g : ghosts) neighbors.insert(g.neighbor);
    try {
      net::Evaluator ev;
      LossTapes tapes(problem.expert, problem.regime, cfg.weights.velocity_components);
      Mailbox& box = mail[static_cast<std::size_t>(r)];
      for (int e = 0; e < cfg.epochs; ++e) {
        if (abort.load()) throw Aborted{};
        progress[static_cast<std::size_t>(r)].store(e);
        for (int n : neighbors) {
          const int lead = e - progress[static_cast<std::size_t>(n)].load();
          int cur = max_lead.load();
          while (lead > cur && !max_lead.compare_exchange_weak(cur, lead)) {
          }
        }

        if (e % cfg.comm_interval == 0 && !(links[static_cast<std::size_t>(r)].empty() && ghosts.empty())) {
          for (const auto& link : links[static_cast<std::size_t>(r)]) {
            GhostMessage msg = make_message(state, link, e, cfg, ev);
            bool drop = false;
            if (hooks.on_message || hooks.drop_message) {
              std::lock_guard lock(hook_mu);
              if (hooks.on_message) hooks.on_message(msg);
              if (hooks.drop_message) drop = hooks.drop_message(msg);
            }
            if (drop) continue;
            Mailbox& dst = mail[static_cast<std::size_t>(link.destination)];
            {
              std::lock_guard lock(dst.mu);
              dst.inbox.push_back(std::move(msg));
            }
            dst.cv.notify_all();
          }

          // Barrier: wait for this epoch's message on every interface.
          std::vector<GhostMessage> got(ghosts.size());
          std::vector<bool> have(ghosts.size(), false);
          std::size_t count = 0;
          std::unique_lock lock(box.mu);
          const auto deadline = std::chrono::steady_clock::now() + hooks.message_timeout;
          while (count < ghosts.size()) {
            for (auto it = box.inbox.begin(); it != box.inbox.end();) {
              if (it->epoch == e) {
                const auto i = static_cast<std::size_t>(it->interface);
                if (i >= ghosts.size() || have[i]) throw RuntimeFailure("duplicate or unknown ghost message");
                got[i] = std::move(*it);
                have[i] = true;
                ++count;
                it = box.inbox.erase(it);
              } else {
                ++it;
              }
            }
            if (count == ghosts.size()) break;
            if (abort.load()) throw Aborted{};
            if (box.cv.wait_until(lock, deadline) == std::cv_status::timeout && std::chrono::steady_clock::now() >= deadline) {
              std::string missing;
              for (std::size_t i = 0; i < ghosts.size(); ++i) {
                if (have[i]) continue;
                if (!missing.empty()) missing += "; ";
                missing += decomp::to_string(ghosts[i].kind) + " interface " + std::to_string(i) + " with rank " +
                           std::to_string(ghosts[i].neighbor);
              }
              throw RuntimeFailure("deadlock: rank " + std::to_string(r) + " missing ghost messages at epoch " +
                                   std::to_string(e) + " (" + missing + ")");
            }
          }
          lock.unlock();
          for (const auto& m : got) apply_message(state, m);
        }

        EpochReport rep = train_epoch(state, tapes, cfg);
        rep.end_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        coord.post(std::move(rep));
      }
    } catch (const Aborted&) {
    } catch (const ValidationError& e) {
      fail(std::make_exception_ptr(ValidationError("rank " + std::to_string(r) + ": " + e.what())));
    } catch (const std::exception& e) {
      fail(std::make_exception_ptr(RuntimeFailure("rank " + std::to_string(r) + ": " + e.what())));
    }
    coord.worker_done();
  };

  TrainResult result;
  result.history.resize(static_cast<std::size_t>(P));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(P));
  for (int r = 0; r < P; ++r) threads.emplace_back(worker, r);
  coord.run(P, [&](EpochReport&& rep) {
    if (hooks.on_report) hooks.on_report(rep);
    result.history[static_cast<std::size_t>(rep.rank)].push_back(std::move(rep));
  });
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  for (auto& h : result.history) {
    std::sort(h.begin(), h.end(), [](const EpochReport& a, const EpochReport& b) { return a.epoch < b.epoch; });
  }
  for (auto& s : ranks) {
    if (s.role == Role::kMaster) result.masters.push_back(s.spec.rank);
    result.experts.push_back(std::move(s.params));
  }
  result.max_epoch_lead = max_lead.load();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double median_epoch_seconds(const TrainResult& result) {
  if (result.history.empty() || result.history.front().empty()) return 0.0;
  const std::size_t epochs = result.history.front().size();
  std::vector<double> end(epochs, 0.0);
  for (const auto& h : result.history) {
    for (std::size_t e = 0; e < std::min(epochs, h.size()); ++e) end[e] = std::max(end[e], h[e].end_time);
  }
  std::vector<double> dt(epochs);
  for (std::size_t e = 0; e < epochs; ++e) dt[e] = end[e] - (e ? end[e - 1] : 0.0);
  std::sort(dt.begin(), dt.end());
  const std::size_t m = dt.size() / 2;
  return dt.size() % 2 ? dt[m] : 0.5 * (dt[m - 1] + dt[m]);
}

void write_loss_history(std::ostream& out, const std::vector<EpochReport>& history) {
  out << "epoch,loss_obs,loss_pde,loss_gh_u,loss_gh_p_space,loss_gh_p_time,lr\n";
  char buf[512];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.parts.obs, r.parts.pde,
                  r.parts.ghost_u, r.parts.ghost_p_space, r.parts.ghost_p_time, r.lr);
    out << buf;
  }
}

void write_loss_history(const std::string& path, const std::vector<EpochReport>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path);
  write_loss_history(f, history);
  if (!f) throw RuntimeFailure("write failed for " + path);
}

}  // namespace dpinn::rt
