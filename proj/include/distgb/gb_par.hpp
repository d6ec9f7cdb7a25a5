#pragma once

// Shared-memory parallel Buchberger: N reducer threads over one PairList.
//
// Termination uses an idle counter. A worker that finds the queue empty
// counts itself idle and runs the two-condition check (queue empty, all
// workers idle) under the queue lock. Before taking a pair a worker counts
// itself busy again, so a pair is never held by a thread that the counter
// calls idle.

#include "distgb/gb_seq.hpp"

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace distgb {

/// Injection points for interleaving tests. All optional; called from the
/// worker threads.
struct ParallelHooks {
  std::function<void(std::size_t worker, const CriticalPair&)> on_pair;
  std::function<void(std::size_t worker, const CriticalPair&)> before_record;
  std::function<void(std::size_t worker, bool terminated)> on_termination_check;
};

/// Idle accounting for a fixed set of consumers of one PairList.
template <CoefficientField F>
class IdleTracker {
 public:
  IdleTracker(PairList<F>& pairs, std::size_t total) : pairs_(pairs), total_(total) {}

  /// The next pair for consumer `id`, or nothing once the computation has
  /// terminated (or the list was closed). Consumers start out busy.
  std::optional<CriticalPair> acquire(std::size_t id,
                                      const std::function<void(std::size_t, bool)>& on_check = {}) {
    if (auto p = pairs_.remove_next()) return p;
    idle_.fetch_add(1, std::memory_order_acq_rel);
    for (;;) {
      bool done = termination_check(pairs_, idle_, total_);
      if (on_check) on_check(id, done);
      if (done || pairs_.finished()) return std::nullopt;
      pairs_.wait_for_work(std::chrono::milliseconds(20));
      if (pairs_.finished()) return std::nullopt;
      idle_.fetch_sub(1, std::memory_order_acq_rel);
      if (auto p = pairs_.remove_next()) return p;
      idle_.fetch_add(1, std::memory_order_acq_rel);
    }
  }

  std::size_t idle() const { return idle_.load(); }

 private:
  PairList<F>& pairs_;
  std::size_t total_;
  std::atomic<std::size_t> idle_{0};
};

template <CoefficientField F>
GBResult<F> gb_parallel(const std::vector<Polynomial<F>>& gens, std::size_t threads, PairListOptions options = {},
                        const ParallelHooks& hooks = {}) {
  if (threads == 0) throw ConfigurationError("thread count must be at least 1");
  Stopwatch clock;
  GBResult<F> out;
  out.stats.nodes = 1;
  out.stats.threads_per_node = threads;
  auto input = preprocess_generators(gens);
  if (input.empty()) {
    out.stats.wall_ms = clock.elapsed_ms();
    return out;
  }
  PairList<F> pairs(input.front().ring(), options);
  for (const auto& g : input) pairs.put(g);

  IdleTracker<F> tracker(pairs, threads);
  std::atomic<std::uint64_t> zeros{0}, restarts{0};
  std::mutex error_mu;
  std::exception_ptr error;

  auto worker = [&](std::size_t id) {
    try {
      while (auto pair = tracker.acquire(id, hooks.on_termination_check)) {
        if (hooks.on_pair) hooks.on_pair(id, *pair);
        auto pi = pairs.polynomial(pair->i);
        auto pj = pairs.polynomial(pair->j);
        ReductionStats st;
        auto h = normal_form_restartable(pairs, s_polynomial(*pi, *pj), &st);
        restarts.fetch_add(st.restarts, std::memory_order_relaxed);
        if (h.is_zero()) zeros.fetch_add(1, std::memory_order_relaxed);
        if (hooks.before_record) hooks.before_record(id, *pair);
        pairs.record(*pair, std::move(h));
      }
    } catch (...) {
      {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
      pairs.close();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<Polynomial<F>> full;
  for (const auto& p : pairs.polynomials()) full.push_back(*p);
  out.basis = reduced_gb(full);
  auto c = pairs.counters();
  out.stats.put_count = c.put;
  out.stats.rem_count = c.rem;
  out.stats.zero_reductions = zeros.load();
  out.stats.restarts = restarts.load();
  out.stats.wall_ms = clock.elapsed_ms();
  return out;
}

}  // namespace distgb
