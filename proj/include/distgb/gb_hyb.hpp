#pragma once

// Distributed hybrid Buchberger: each worker node runs several reducer
// threads that share one control connection to the master.
//
// Every reducer thread owns two tags on its node's channel, one for PAIR
// (and TERM, an empty body) and one for ACK. REQUEST and RESULT use two
// node-level tags and carry the thread id in the body.
//
//   REQUEST  worker -> master   u32 thread
//   PAIR     master -> worker   u64 i, u64 j, u64 seq          (thread tag)
//   TERM     master -> worker   empty                          (thread tag)
//   RESULT   worker -> master   u32 thread, u64 seq, u8 zero, polynomial?
//   ACK      master -> worker   u64 seq                        (thread tag)
//
// A thread waits for the ACK of its last RESULT before it requests again.
// The master sends the ACK only after the result is recorded and published,
// and counts a thread as in flight from pair hand-out until that point.
// Termination is declared when the queue is empty and nothing is in flight.

#include "distgb/gb_dist.hpp"

namespace distgb {

namespace tags {
inline constexpr ChannelTag kRequest = 6;
inline constexpr ChannelTag kHybridResult = 7;
inline constexpr ChannelTag kThreadBase = ChannelTag{1} << 40;

inline ChannelTag pair_tag(std::uint32_t node, std::uint32_t thread) {
  return kThreadBase | (ChannelTag{node} << 20) | (ChannelTag{thread} << 1);
}
inline ChannelTag ack_tag(std::uint32_t node, std::uint32_t thread) { return pair_tag(node, thread) | 1; }
inline bool is_thread_tag(ChannelTag t) { return (t & kThreadBase) != 0; }
inline bool is_ack_tag(ChannelTag t) { return is_thread_tag(t) && (t & 1); }
}  // namespace tags

struct HybridNode {
  Endpoint address;  ///< daemon running the node's worker job
  std::uint32_t threads = 1;
};

/// Master-side injection points for protocol tests.
struct HybridMasterHooks {
  /// A request was parked because the queue was empty with work in flight.
  std::function<void(std::uint32_t node, std::uint32_t thread)> on_defer;
  /// Called after a result is recorded, before its ACK is sent.
  std::function<void(std::uint32_t node, std::uint32_t thread, std::uint64_t seq)> before_ack;
};

enum class ProtocolEvent { Request, Pair, Result, Ack, Term };

/// Worker-side injection points.
struct HybridWorkerHooks {
  std::function<void(std::uint32_t thread, ProtocolEvent, std::uint64_t seq)> on_event;
  std::function<void(std::uint32_t thread, std::uint64_t seq)> before_reduce;
  /// Return true to drop the node's connection (crash simulation).
  std::function<bool(std::uint32_t thread, std::uint64_t pairs)> crash;
};

struct HybridStats {
  std::uint64_t deferred_requests = 0;
  std::uint64_t max_in_flight = 0;
};

template <CoefficientField F>
class HybridMaster {
 public:
  HybridMaster(RingPtr<F> ring, std::vector<Polynomial<F>> gens, DistOptions opts = {},
               HybridMasterHooks hooks = {})
      : ring_(std::move(ring)), gens_(std::move(gens)), opts_(std::move(opts)), hooks_(std::move(hooks)),
        listener_(opts_.bind), dht_(opts_.dht_bind) {}

  Endpoint endpoint() const { return listener_.endpoint(); }

  /// Accepts `nodes` worker connections and runs to completion.
  GBResult<F> run(std::size_t nodes) {
    if (nodes == 0) throw ConfigurationError("need at least one node");
    Stopwatch clock;
    for (const auto& g : gens_)
      if (!(*g.ring() == *ring_)) throw RingMismatch();
    auto input = preprocess_generators(gens_);
    PairList<F> pairs(ring_, opts_.pairs);
    for (const auto& g : input) pairs.put(g);
    for (const auto& p : pairs.polynomials()) dht_.put(next_key_++, encode(*p));

    auto links = detail::accept_workers(listener_, nodes, WorkerRole::Hybrid, ring_, dht_.endpoint(),
                                        opts_.connect_timeout,
                                        [this](std::size_t n, Direction d, const Frame& f) { observe(n, d, f); });
    transport_.control_connections = links.size();
    std::size_t total_threads = 0;
    std::vector<NodeState> state(links.size());
    for (std::size_t n = 0; n < links.size(); ++n) {
      state[n].held.resize(links[n].threads);
      total_threads += links[n].threads;
    }

    Shared sh(pairs);
    std::vector<std::thread> threads;
    for (std::size_t n = 0; n < links.size(); ++n) {
      threads.emplace_back([&, n] { guarded(sh, [&] { serve_requests(sh, links[n], state[n]); }); });
      threads.emplace_back([&, n] { guarded(sh, [&] { receive_results(sh, links[n], state[n]); }); });
    }
    for (auto& t : threads) t.join();

    dht_.stop();
    {
      std::lock_guard lock(obs_mu_);
      transport_.dht_max_sends_per_link_key = dht_.max_sends_per_link_key();
      transport_.dht_value_bytes = dht_.value_bytes_sent();
    }
    for (auto& l : links) l.channel->close();
    links.clear();
    if (sh.failure) throw DistributedFailure(*sh.failure);

    GBResult<F> out;
    std::vector<Polynomial<F>> full;
    for (const auto& p : pairs.polynomials()) full.push_back(*p);
    out.basis = reduced_gb(full);
    auto c = pairs.counters();
    out.stats.put_count = c.put;
    out.stats.rem_count = c.rem;
    out.stats.zero_reductions = sh.zeros.load();
    out.stats.nodes = nodes;
    out.stats.threads_per_node = total_threads / nodes;
    out.stats.wall_ms = clock.elapsed_ms();
    hybrid_.deferred_requests = sh.deferred.load();
    hybrid_.max_in_flight = sh.max_in_flight.load();
    return out;
  }

  TransportReport transport() const {
    std::lock_guard lock(obs_mu_);
    return transport_;
  }
  HybridStats hybrid_stats() const { return hybrid_; }

 private:
  struct NodeState {
    std::mutex mu;
    std::vector<std::optional<CriticalPair>> held;  ///< unacknowledged pair per thread
  };

  struct Shared {
    explicit Shared(PairList<F>& p) : pairs(p) {}
    PairList<F>& pairs;
    std::atomic<std::size_t> in_flight{0};
    std::atomic<std::size_t> max_in_flight{0};
    std::atomic<std::uint64_t> zeros{0};
    std::atomic<std::uint64_t> deferred{0};
    std::atomic<bool> done{false};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::optional<std::string> failure;
  };

  void guarded(Shared& sh, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(sh.mu);
        if (!sh.failure) sh.failure = e.what();
      }
      sh.failed = true;
      sh.done = true;
      sh.pairs.close();
    }
  }

  /// A pair for a requesting thread, parking until one appears. Nothing once
  /// the computation is over.
  std::optional<CriticalPair> next_pair(Shared& sh, std::uint32_t node, std::uint32_t thread) {
    bool parked = false;
    for (;;) {
      if (sh.done) return std::nullopt;
      // Count the thread busy before taking the pair so the quiescence check
      // can never see an empty queue while a pair is in transit.
      std::size_t now = sh.in_flight.fetch_add(1) + 1;
      if (auto p = sh.pairs.remove_next()) {
        std::size_t prev = sh.max_in_flight.load();
        while (now > prev && !sh.max_in_flight.compare_exchange_weak(prev, now)) {
        }
        return p;
      }
      sh.in_flight.fetch_sub(1);
      if (sh.pairs.check_quiescent([&] { return sh.in_flight.load() == 0; })) {
        sh.done = true;
        return std::nullopt;
      }
      if (!parked) {
        parked = true;
        sh.deferred.fetch_add(1);
        if (hooks_.on_defer) hooks_.on_defer(node, thread);
      }
      sh.pairs.wait_for_work(std::chrono::milliseconds(20));
    }
  }

  void serve_requests(Shared& sh, detail::WorkerLink& link, NodeState& st) {
    TaggedChannel& ch = *link.channel;
    const std::uint32_t node = link.node_id;
    while (!sh.done) {
      auto msg = ch.receive_for(tags::kRequest, std::chrono::milliseconds(50));
      if (!msg) {
        if (ch.at_eof() && !sh.done) throw DistributedFailure("node " + std::to_string(node) + " connection lost");
        continue;
      }
      wire::Reader r(*msg);
      std::uint32_t thread = r.u32();
      if (thread >= link.threads) throw DistributedFailure("request from an unknown thread");
      {
        std::lock_guard lock(st.mu);
        if (st.held[thread]) throw DistributedFailure("request while a result is unacknowledged");
      }
      auto pair = next_pair(sh, node, thread);
      if (!pair) break;
      {
        std::lock_guard lock(st.mu);
        st.held[thread] = *pair;
      }
      ch.send(tags::pair_tag(node, thread), detail::encode_pair(*pair));
    }
    // Every ACK of this node precedes these on the connection, since the
    // computation only ends with nothing in flight.
    if (sh.failed) return;
    for (std::uint32_t t = 0; t < link.threads; ++t) ch.send(tags::pair_tag(node, t), {});
  }

  void receive_results(Shared& sh, detail::WorkerLink& link, NodeState& st) {
    TaggedChannel& ch = *link.channel;
    const std::uint32_t node = link.node_id;
    while (!sh.done) {
      auto msg = ch.receive_for(tags::kHybridResult, std::chrono::milliseconds(50));
      if (!msg) {
        if (ch.at_eof() && !sh.done) throw DistributedFailure("node " + std::to_string(node) + " connection lost");
        continue;
      }
      wire::Reader r(*msg);
      std::uint32_t thread = r.u32();
      std::uint64_t seq = r.u64();
      bool zero = r.u8() != 0;
      if (thread >= link.threads) throw DistributedFailure("result from an unknown thread");
      CriticalPair pair;
      {
        std::lock_guard lock(st.mu);
        if (!st.held[thread] || st.held[thread]->seq != seq) throw DistributedFailure("result for an unexpected pair");
        pair = *st.held[thread];
      }
      std::optional<Polynomial<F>> h;
      if (zero)
        sh.zeros.fetch_add(1);
      else
        h = decode(ring_, r.rest());
      for (const auto& a : sh.pairs.record(pair, std::move(h))) {
        dht_.put(a.index, encode(*a.poly));
        std::lock_guard lock(obs_mu_);
        ++transport_.nonzero_results;
      }
      if (hooks_.before_ack) hooks_.before_ack(node, thread, seq);
      {
        std::lock_guard lock(st.mu);
        st.held[thread].reset();
      }
      Bytes ack;
      wire::put_u64(ack, seq);
      ch.send(tags::ack_tag(node, thread), ack);
      sh.in_flight.fetch_sub(1);
    }
  }

  void observe(std::size_t, Direction d, const Frame& f) {
    if (f.payload.size() < 8) return;
    wire::Reader r(f.payload);
    ChannelTag tag = r.u64();
    std::size_t body = f.payload.size() - 8;
    std::lock_guard lock(obs_mu_);
    if (d == Direction::Sent) {
      if (tags::is_ack_tag(tag)) {
        ++transport_.ack_messages;
      } else if (tags::is_thread_tag(tag)) {
        if (body > 0) {
          ++transport_.pair_messages;
          transport_.max_pair_body = std::max(transport_.max_pair_body, body);
        }
      } else if (tag != tags::kConfig) {
        ++transport_.unexpected_master_frames;
      }
    } else if (tag == tags::kHybridResult) {
      ++transport_.result_messages;
      transport_.result_bytes += body;
    }
  }

  RingPtr<F> ring_;
  std::vector<Polynomial<F>> gens_;
  DistOptions opts_;
  HybridMasterHooks hooks_;
  Listener listener_;
  DhtMaster dht_;
  std::uint64_t next_key_ = 0;
  mutable std::mutex obs_mu_;
  TransportReport transport_;
  HybridStats hybrid_;
};

struct HybridWorkerReport {
  std::uint32_t node_id = 0;
  std::uint64_t pairs = 0;
  std::uint64_t restarts = 0;
  std::size_t connections = 0;
};

template <CoefficientField F>
HybridWorkerReport hybrid_worker_loop(TaggedChannel& ch, std::uint32_t node, std::uint32_t nthreads,
                                      RingPtr<F> ring, const Endpoint& dht_ep, const HybridWorkerHooks& hooks) {
  HybridWorkerReport rep;
  rep.node_id = node;
  rep.connections = 1;
  DhtClient dht(dht_ep);
  DistPolyList<F> list(dht.store(), ring);
  std::atomic<std::uint64_t> pairs{0}, restarts{0};
  std::atomic<bool> crashed{false};
  std::mutex error_mu;
  std::exception_ptr error;

  auto event = [&](std::uint32_t t, ProtocolEvent e, std::uint64_t seq) {
    if (hooks.on_event) hooks.on_event(t, e, seq);
  };

  auto reducer = [&](std::uint32_t t) {
    const ChannelTag mine = tags::pair_tag(node, t);
    const ChannelTag ack = tags::ack_tag(node, t);
    std::uint64_t own = 0;
    try {
      for (;;) {
        Bytes req;
        wire::put_u32(req, t);
        event(t, ProtocolEvent::Request, 0);
        try {
          ch.send(tags::kRequest, req);
        } catch (const TransportError&) {
          // The master may have finished and closed before this request
          // went out; its TERM is then already queued for this thread.
          auto term = ch.receive(mine);
          if (!term || !term->empty()) throw;
          event(t, ProtocolEvent::Term, 0);
          return;
        }
        auto msg = ch.receive(mine);
        if (!msg) {
          if (crashed) return;
          throw DistributedFailure("master connection lost");
        }
        if (msg->empty()) {
          event(t, ProtocolEvent::Term, 0);
          return;
        }
        auto pm = detail::decode_pair(*msg);
        event(t, ProtocolEvent::Pair, pm.seq);
        pairs.fetch_add(1);
        if (hooks.crash && hooks.crash(t, ++own)) {
          crashed = true;
          ch.close();
          return;
        }
        if (hooks.before_reduce) hooks.before_reduce(t, pm.seq);
        ReductionStats st;
        auto h = detail::reduce_remote_pair(list, pm.i, pm.j, &st);
        restarts.fetch_add(st.restarts);
        Bytes res;
        wire::put_u32(res, t);
        wire::put_u64(res, pm.seq);
        auto tail = detail::encode_result_tail(h.is_zero(), h.is_zero() ? Bytes{} : encode(h));
        res.insert(res.end(), tail.begin(), tail.end());
        event(t, ProtocolEvent::Result, pm.seq);
        ch.send(tags::kHybridResult, res);
        auto a = ch.receive(ack);
        if (!a) {
          if (crashed) return;
          throw DistributedFailure("master connection lost while awaiting an acknowledgment");
        }
        wire::Reader r(*a);
        std::uint64_t seq = r.u64();
        if (seq != pm.seq) throw DistributedFailure("acknowledgment for the wrong pair");
        event(t, ProtocolEvent::Ack, seq);
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  for (std::uint32_t t = 0; t < nthreads; ++t) pool.emplace_back(reducer, t);
  for (auto& th : pool) th.join();
  rep.pairs = pairs.load();
  rep.restarts = restarts.load();
  if (error) std::rethrow_exception(error);
  return rep;
}

/// Connects once to the master and runs `threads` reducers on that
/// connection until terminated.
inline HybridWorkerReport run_hybrid_worker(const Endpoint& master, std::uint32_t threads,
                                            const HybridWorkerHooks& hooks = {}) {
  if (threads == 0) throw ConfigurationError("thread count must be at least 1");
  TaggedChannel ch(connect_to(master));
  auto cfg = detail::handshake(ch, WorkerRole::Hybrid, threads);
  if (!cfg.ring.field) throw DistributedFailure("master sent no field");
  return visit_field(*cfg.ring.field, [&](auto field) {
    return hybrid_worker_loop(ch, cfg.node_id, threads, ring_from(cfg.ring, field), cfg.dht, hooks);
  });
}

/// Master plus in-process worker nodes over loopback TCP.
template <CoefficientField F>
GBResult<F> gb_hybrid_loopback(const std::vector<Polynomial<F>>& gens, std::size_t nodes, std::uint32_t threads,
                               DistOptions opts = {}, HybridMasterHooks master_hooks = {},
                               const std::vector<HybridWorkerHooks>& hooks = {}, TransportReport* transport = nullptr,
                               HybridStats* hstats = nullptr) {
  if (gens.empty()) throw ConfigurationError("empty generator list");
  HybridMaster<F> master(gens.front().ring(), gens, std::move(opts), std::move(master_hooks));
  Endpoint ep = master.endpoint();
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nodes);
  for (std::size_t n = 0; n < nodes; ++n) {
    pool.emplace_back([&, n] {
      try {
        run_hybrid_worker(ep, threads, n < hooks.size() ? hooks[n] : HybridWorkerHooks{});
      } catch (...) {
        errors[n] = std::current_exception();
      }
    });
  }
  std::optional<GBResult<F>> result;
  std::exception_ptr master_error;
  try {
    result = master.run(nodes);
  } catch (...) {
    master_error = std::current_exception();
  }
  for (auto& t : pool) t.join();
  if (transport) *transport = master.transport();
  if (hstats) *hstats = master.hybrid_stats();
  if (master_error) std::rethrow_exception(master_error);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return std::move(*result);
}

}  // namespace distgb
