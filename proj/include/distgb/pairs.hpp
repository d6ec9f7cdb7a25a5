#pragma once

// The critical-pair work queue shared by all Buchberger drivers.
//
// Pairs are formed when a polynomial is put. Buchberger's product criterion
// (coprime head terms) is applied at creation, the chain criterion when a
// pair is removed. remove_next() never blocks; an empty queue yields
// std::nullopt. All operations are serialized by one internal mutex.

#include "distgb/reduce.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace distgb {

/// Order in which pending pairs are handed out.
enum class PairOrder : std::uint8_t {
  HeadTermOrder,  ///< order-minimal lcm first, ties by creation sequence
  SequenceOrder,  ///< creation sequence
};

/// Order in which reduction results are entered into the basis.
enum class Selection : std::uint8_t {
  GreedyFirstFinished,  ///< as soon as a result arrives
  SequentialOrder,      ///< in the order the pairs were handed out
};

struct PairCriteria {
  bool product = true;
  bool chain = true;
};

struct PairListOptions {
  PairOrder order = PairOrder::HeadTermOrder;
  Selection selection = Selection::GreedyFirstFinished;
  PairCriteria criteria{};
};

struct CriticalPair {
  std::size_t i = 0;
  std::size_t j = 0;
  ExpVec lcm;
  std::uint64_t seq = 0;
};

struct PairCounters {
  std::uint64_t put = 0;
  std::uint64_t rem = 0;
  friend bool operator==(const PairCounters&, const PairCounters&) = default;
};

template <CoefficientField F>
struct IndexedPoly {
  std::size_t index;
  PolyPtr<F> poly;
};

template <CoefficientField F>
class PairList {
 public:
  explicit PairList(RingPtr<F> ring, PairListOptions options = {})
      : ring_(std::move(ring)),
        options_(options),
        queue_(QueueOrder{ring_->order(), options.order}),
        basis_(std::make_shared<const std::vector<PolyPtr<F>>>()) {}

  PairList(const PairList&) = delete;
  PairList& operator=(const PairList&) = delete;

  const PairListOptions& options() const { return options_; }
  const RingPtr<F>& ring() const { return ring_; }

  /// Appends p (made monic) and forms its pairs; returns the new index.
  std::size_t put(const Polynomial<F>& p) {
    std::lock_guard lock(mu_);
    return put_locked(p).index;
  }

  /// The next pair surviving the chain criterion, or nothing if none is
  /// pending or the list is finished. Never blocks.
  std::optional<CriticalPair> remove_next() {
    std::lock_guard lock(mu_);
    if (one_ || finished_) return std::nullopt;
    while (!queue_.empty()) {
      CriticalPair pair = queue_.extract(queue_.begin()).value();
      pending_[pair.j][pair.i] = 0;
      if (options_.criteria.chain && chain_redundant(pair)) continue;
      ++rem_;
      if (options_.selection == Selection::SequentialOrder) {
        issue_of_.emplace(pair.seq, next_issue_);
        in_progress_.emplace(next_issue_++, Slot{});
      }
      return pair;
    }
    return std::nullopt;
  }

  /// Reports the reduction result of a pair handed out by remove_next(); an
  /// empty or zero result means the S-polynomial reduced to zero. Returns
  /// the polynomials entered into the basis by this call.
  std::vector<IndexedPoly<F>> record(const CriticalPair& pair, std::optional<Polynomial<F>> result) {
    std::lock_guard lock(mu_);
    std::vector<IndexedPoly<F>> added;
    if (result && result->is_zero()) result.reset();
    if (options_.selection == Selection::GreedyFirstFinished) {
      if (result) added.push_back(put_locked(*result));
      return added;
    }
    auto it = issue_of_.find(pair.seq);
    if (it == issue_of_.end()) throw std::logic_error("result recorded for a pair that was not handed out");
    Slot& slot = in_progress_.at(it->second);
    issue_of_.erase(it);
    slot.done = true;
    slot.result = std::move(result);
    while (!in_progress_.empty() && in_progress_.begin()->second.done) {
      auto node = in_progress_.extract(in_progress_.begin());
      if (node.mapped().result) added.push_back(put_locked(*node.mapped().result));
    }
    return added;
  }

  PairCounters counters() const {
    std::lock_guard lock(mu_);
    return {put_, rem_};
  }

  bool has_pending() const {
    std::lock_guard lock(mu_);
    return !one_ && !queue_.empty();
  }

  std::size_t pending_count() const {
    std::lock_guard lock(mu_);
    return one_ ? 0 : queue_.size();
  }

  /// True once a constant polynomial was put; the ideal is then the whole ring.
  bool one_in_basis() const {
    std::lock_guard lock(mu_);
    return one_;
  }

  /// Termination test: the queue is empty and `no_active()` holds, both
  /// evaluated under the queue lock so no pair can be handed out or put in
  /// between. On success the list is marked finished and waiters are woken.
  template <class Pred>
  bool check_quiescent(Pred&& no_active) {
    std::lock_guard lock(mu_);
    if (finished_) return true;
    if (!one_ && !queue_.empty()) return false;
    if (!no_active()) return false;
    finished_ = true;
    cv_.notify_all();
    return true;
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return finished_;
  }

  /// Marks the list finished without a quiescence check (abort path).
  void close() {
    std::lock_guard lock(mu_);
    finished_ = true;
    cv_.notify_all();
  }

  /// Blocks until a pair is pending, the list is finished, or the timeout
  /// expires. Returns true if a pair is pending.
  bool wait_for_work(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return finished_ || (!one_ && !queue_.empty()); });
    return !finished_ && !one_ && !queue_.empty();
  }

  // Versioned basis view over the polynomials put so far.
  std::uint64_t version() const { return version_.load(std::memory_order_acquire); }
  BasisSnapshot<F> snapshot() const {
    std::lock_guard lock(mu_);
    return {version_.load(std::memory_order_relaxed), basis_};
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return basis_->size();
  }
  PolyPtr<F> polynomial(std::size_t i) const {
    std::lock_guard lock(mu_);
    return basis_->at(i);
  }
  std::vector<PolyPtr<F>> polynomials() const {
    std::lock_guard lock(mu_);
    return *basis_;
  }

 private:
  struct QueueOrder {
    TermOrder order;
    PairOrder strategy;
    bool operator()(const CriticalPair& a, const CriticalPair& b) const {
      if (strategy == PairOrder::HeadTermOrder) {
        int c = order.compare(a.lcm.span(), b.lcm.span());
        if (c != 0) return c < 0;
      }
      return a.seq < b.seq;
    }
  };

  struct Slot {
    bool done = false;
    std::optional<Polynomial<F>> result;
  };

  IndexedPoly<F> put_locked(const Polynomial<F>& p) {
    if (p.is_zero()) throw PreconditionError("zero polynomial put into pair list");
    if (p.ring() != ring_ && !(*p.ring() == *ring_)) throw RingMismatch();
    auto poly = std::make_shared<const Polynomial<F>>(p.monic());
    const std::size_t idx = heads_.size();
    auto head = poly->lead_exponent();
    pending_.emplace_back(idx, 0);
    for (std::size_t k = 0; k < idx; ++k) {
      if (options_.criteria.product && monomial::coprime(heads_[k].span(), head)) continue;
      pending_[idx][k] = 1;
      queue_.insert(CriticalPair{k, idx, monomial::lcm(heads_[k].span(), head), next_seq_++});
    }
    heads_.emplace_back(head);
    auto grown = std::make_shared<std::vector<PolyPtr<F>>>(*basis_);
    grown->push_back(poly);
    basis_ = std::move(grown);
    version_.store(basis_->size(), std::memory_order_release);
    ++put_;
    if (poly->is_constant()) {
      one_ = true;
      queue_.clear();
    }
    cv_.notify_all();
    return {idx, poly};
  }

  bool is_pending(std::size_t a, std::size_t b) const {
    return a < b ? pending_[b][a] != 0 : pending_[a][b] != 0;
  }

  /// Chain criterion: some third head term divides lcm(i, j) and both pairs
  /// (i, k) and (j, k) are no longer pending.
  bool chain_redundant(const CriticalPair& pair) const {
    const std::size_t n = ring_->nvars();
    for (std::size_t k = 0; k < heads_.size(); ++k) {
      if (k == pair.i || k == pair.j) continue;
      if (!monomial::divides(heads_[k].data(), pair.lcm.data(), n)) continue;
      if (!is_pending(pair.i, k) && !is_pending(pair.j, k)) return true;
    }
    return false;
  }

  RingPtr<F> ring_;
  PairListOptions options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::set<CriticalPair, QueueOrder> queue_;
  std::vector<ExpVec> heads_;
  std::vector<std::vector<std::uint8_t>> pending_;  // pending_[j][i], i < j
  std::shared_ptr<const std::vector<PolyPtr<F>>> basis_;
  std::atomic<std::uint64_t> version_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t put_ = 0;
  std::uint64_t rem_ = 0;
  bool one_ = false;
  bool finished_ = false;

  // SequentialOrder bookkeeping: pairs in hand-out order.
  std::uint64_t next_issue_ = 0;
  std::map<std::uint64_t, Slot> in_progress_;
  std::unordered_map<std::uint64_t, std::uint64_t> issue_of_;
};

/// Two-condition termination for a pool of `total` workers sharing `queue`:
/// the queue is empty and every worker is idle, checked consistently.
template <CoefficientField F>
bool termination_check(PairList<F>& queue, const std::atomic<std::size_t>& idle, std::size_t total) {
  return queue.check_quiescent([&] { return idle.load(std::memory_order_acquire) == total; });
}

}  // namespace distgb
