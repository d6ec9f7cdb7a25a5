#pragma once

// Pure distributed Buchberger. The master keeps the pair queue and the
// authoritative polynomial table; each worker process runs one reducer.
// Pairs go out as indexes, results come back once and are broadcast to all
// workers through the table.
//
// Control channel messages (tagged, all integers big-endian):
//   HELLO   worker -> master   u8 role, u32 threads
//   CONFIG  master -> worker   string ring header, string table host,
//                              u16 table port, u32 node id
//   PAIR    master -> worker   u64 i, u64 j, u64 seq
//   RESULT  worker -> master   u64 seq, u8 zero, encoded polynomial if nonzero
//   TERM    master -> worker   empty

#include "distgb/dht.hpp"
#include "distgb/gb_par.hpp"

namespace distgb {

struct DistributedFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace tags {
inline constexpr ChannelTag kHello = 1;
inline constexpr ChannelTag kConfig = 2;
inline constexpr ChannelTag kPair = 3;
inline constexpr ChannelTag kResult = 4;
inline constexpr ChannelTag kTerm = 5;
}  // namespace tags

enum class WorkerRole : std::uint8_t { Dist = 1, Hybrid = 2 };

/// Observed master-side traffic, for checking the index-only transport.
struct TransportReport {
  std::uint64_t pair_messages = 0;
  std::size_t max_pair_body = 0;  ///< bytes in the largest PAIR body
  std::uint64_t result_messages = 0;
  std::uint64_t result_bytes = 0;
  std::uint64_t ack_messages = 0;
  /// Master-to-worker control frames other than CONFIG, PAIR, ACK and TERM.
  std::uint64_t unexpected_master_frames = 0;
  std::size_t control_connections = 0;
  std::size_t dht_max_sends_per_link_key = 0;
  std::uint64_t dht_value_bytes = 0;
  std::uint64_t nonzero_results = 0;
};

struct DistOptions {
  PairListOptions pairs{};
  Endpoint bind{"127.0.0.1", 0};
  Endpoint dht_bind{"127.0.0.1", 0};
  std::chrono::milliseconds connect_timeout{30000};
};

namespace detail {

inline Bytes encode_pair(const CriticalPair& p) {
  Bytes b;
  wire::put_u64(b, p.i);
  wire::put_u64(b, p.j);
  wire::put_u64(b, p.seq);
  return b;
}

struct PairMsg {
  std::uint64_t i, j, seq;
};

inline PairMsg decode_pair(std::span<const std::uint8_t> b) {
  wire::Reader r(b);
  PairMsg m{r.u64(), r.u64(), r.u64()};
  if (!r.done()) throw ParseError("trailing bytes in pair message");
  return m;
}

/// The accepted worker connections of one master run.
struct WorkerLink {
  std::unique_ptr<TaggedChannel> channel;
  std::uint32_t threads = 1;
  std::uint32_t node_id = 0;
};

/// Master side of the handshake: accepts `count` workers of `role` and
/// sends each its configuration. The observer sees every control frame.
template <CoefficientField F>
std::vector<WorkerLink> accept_workers(Listener& listener, std::size_t count, WorkerRole role, const RingPtr<F>& ring,
                                       const Endpoint& dht, std::chrono::milliseconds timeout,
                                       const std::function<void(std::size_t, Direction, const Frame&)>& observe) {
  std::vector<WorkerLink> links;
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (links.size() < count) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) break;
    auto s = listener.accept_for(left);
    if (!s) break;
    auto conn = std::make_shared<Connection>(std::move(*s));
    std::size_t node = links.size();
    conn->set_observer([observe, node](Direction d, const Frame& f) { observe(node, d, f); });
    WorkerLink link;
    link.channel = std::make_unique<TaggedChannel>(conn);
    auto hello = link.channel->receive_for(tags::kHello, timeout);
    if (!hello) throw DistributedFailure("worker " + std::to_string(node) + " sent no greeting");
    wire::Reader r(*hello);
    if (r.u8() != static_cast<std::uint8_t>(role)) throw DistributedFailure("worker of the wrong kind connected");
    link.threads = r.u32();
    if (link.threads == 0) throw DistributedFailure("worker announced zero threads");
    link.node_id = static_cast<std::uint32_t>(node);
    Bytes cfg;
    wire::put_string(cfg, ring->descriptor());
    wire::put_string(cfg, dht.host);
    wire::put_u16(cfg, dht.port);
    wire::put_u32(cfg, link.node_id);
    link.channel->send(tags::kConfig, cfg);
    links.push_back(std::move(link));
  }
  if (links.size() < count)
    throw DistributedFailure("only " + std::to_string(links.size()) + " of " + std::to_string(count) +
                             " workers connected");
  return links;
}

/// Worker side of the handshake.
struct WorkerConfig {
  SystemText ring;
  Endpoint dht;
  std::uint32_t node_id;
};

inline WorkerConfig handshake(TaggedChannel& ch, WorkerRole role, std::uint32_t threads) {
  Bytes hello;
  wire::put_u8(hello, static_cast<std::uint8_t>(role));
  wire::put_u32(hello, threads);
  ch.send(tags::kHello, hello);
  auto cfg = ch.receive(tags::kConfig);
  if (!cfg) throw DistributedFailure("master closed the connection during the handshake");
  wire::Reader r(*cfg);
  WorkerConfig c{SystemText::parse(r.string()), {}, 0};
  c.dht.host = r.string();
  c.dht.port = r.u16();
  c.node_id = r.u32();
  return c;
}

/// Worker-side reduction of one pair against the replicated table.
template <CoefficientField F>
Polynomial<F> reduce_remote_pair(const DistPolyList<F>& list, std::uint64_t i, std::uint64_t j,
                                 ReductionStats* stats) {
  auto pi = list.get_wait(i);
  auto pj = list.get_wait(j);
  if (!pi || !pj) throw DistributedFailure("polynomial table shut down while waiting for a pair");
  return normal_form_restartable(list, s_polynomial(**pi, **pj), stats).monic();
}

inline Bytes encode_result_tail(bool zero, const Bytes& poly) {
  Bytes b;
  wire::put_u8(b, zero ? 1 : 0);
  if (!zero) b.insert(b.end(), poly.begin(), poly.end());
  return b;
}

}  // namespace detail

/// Test hooks for the worker loop.
struct WorkerHooks {
  /// Called before each reduction with the pair's sequence number.
  std::function<void(std::uint64_t seq)> before_reduce;
  /// Return true to drop the connection without answering (crash
  /// simulation); called with the number of pairs received so far.
  std::function<bool(std::uint64_t pairs)> crash;
};

struct WorkerReport {
  std::uint64_t pairs = 0;
  std::uint64_t restarts = 0;
};

template <CoefficientField F>
class DistMaster {
 public:
  DistMaster(RingPtr<F> ring, std::vector<Polynomial<F>> gens, DistOptions opts = {})
      : ring_(std::move(ring)), gens_(std::move(gens)), opts_(std::move(opts)), listener_(opts_.bind),
        dht_(opts_.dht_bind) {}

  /// Address workers connect to.
  Endpoint endpoint() const { return listener_.endpoint(); }
  Endpoint dht_endpoint() const { return dht_.endpoint(); }

  /// Accepts `workers` connections and runs to completion. Throws
  /// DistributedFailure if a worker is lost.
  GBResult<F> run(std::size_t workers) {
    if (workers == 0) throw ConfigurationError("need at least one worker");
    Stopwatch clock;
    GBResult<F> out;
    out.stats.nodes = workers;
    out.stats.threads_per_node = 1;
    for (const auto& g : gens_)
      if (!(*g.ring() == *ring_)) throw RingMismatch();
    std::vector<Polynomial<F>> input;
    input = preprocess_generators(gens_);
    PairList<F> pairs(ring_, opts_.pairs);
    for (const auto& g : input) pairs.put(g);
    for (const auto& p : pairs.polynomials()) dht_.put(publish_key_++, encode(*p));

    auto links = detail::accept_workers(listener_, workers, WorkerRole::Dist, ring_, dht_.endpoint(),
                                        opts_.connect_timeout,
                                        [this](std::size_t n, Direction d, const Frame& f) { observe(n, d, f); });
    transport_.control_connections = links.size();

    IdleTracker<F> tracker(pairs, workers);
    std::atomic<std::uint64_t> zeros{0};
    std::mutex error_mu;
    std::optional<std::string> failure;

    auto serve = [&](std::size_t w) {
      TaggedChannel& ch = *links[w].channel;
      try {
        while (auto pair = tracker.acquire(w)) {
          ch.send(tags::kPair, detail::encode_pair(*pair));
          auto msg = ch.receive(tags::kResult);
          if (!msg) throw DistributedFailure("worker " + std::to_string(w) + " connection lost");
          wire::Reader r(*msg);
          if (r.u64() != pair->seq) throw DistributedFailure("result for an unexpected pair");
          bool zero = r.u8() != 0;
          std::optional<Polynomial<F>> h;
          if (zero) {
            zeros.fetch_add(1);
          } else {
            h = decode(ring_, r.rest());
          }
          publish(pairs.record(*pair, std::move(h)));
        }
        if (!failure_flag_.load()) ch.send(tags::kTerm, {});
      } catch (const std::exception& e) {
        {
          std::lock_guard lock(error_mu);
          if (!failure) failure = e.what();
        }
        failure_flag_ = true;
        pairs.close();
      }
    };

    std::vector<std::thread> servers;
    for (std::size_t w = 0; w < links.size(); ++w) servers.emplace_back(serve, w);
    for (auto& t : servers) t.join();
    // Tell healthy workers to stop in the failure case as well.
    if (failure) {
      for (auto& l : links) {
        try {
          l.channel->send(tags::kTerm, {});
        } catch (const TransportError&) {
        }
      }
    }
    dht_.stop();
    transport_.dht_max_sends_per_link_key = dht_.max_sends_per_link_key();
    transport_.dht_value_bytes = dht_.value_bytes_sent();
    links.clear();
    if (failure) throw DistributedFailure(*failure);

    std::vector<Polynomial<F>> full;
    for (const auto& p : pairs.polynomials()) full.push_back(*p);
    out.basis = reduced_gb(full);
    auto c = pairs.counters();
    out.stats.put_count = c.put;
    out.stats.rem_count = c.rem;
    out.stats.zero_reductions = zeros.load();
    out.stats.wall_ms = clock.elapsed_ms();
    return out;
  }

  TransportReport transport() const {
    std::lock_guard lock(obs_mu_);
    return transport_;
  }

 private:
  void publish(const std::vector<IndexedPoly<F>>& added) {
    for (const auto& a : added) {
      dht_.put(a.index, encode(*a.poly));
      std::lock_guard lock(obs_mu_);
      ++transport_.nonzero_results;
    }
  }

  void observe(std::size_t, Direction d, const Frame& f) {
    if (f.payload.size() < 8) return;
    wire::Reader r(f.payload);
    ChannelTag tag = r.u64();
    std::size_t body = f.payload.size() - 8;
    std::lock_guard lock(obs_mu_);
    if (d == Direction::Sent) {
      if (tag == tags::kPair) {
        ++transport_.pair_messages;
        transport_.max_pair_body = std::max(transport_.max_pair_body, body);
      } else if (tag != tags::kConfig && tag != tags::kTerm) {
        ++transport_.unexpected_master_frames;
      }
    } else if (tag == tags::kResult) {
      ++transport_.result_messages;
      transport_.result_bytes += body;
    }
  }

  RingPtr<F> ring_;
  std::vector<Polynomial<F>> gens_;
  DistOptions opts_;
  Listener listener_;
  DhtMaster dht_;
  std::uint64_t publish_key_ = 0;
  std::atomic<bool> failure_flag_{false};
  mutable std::mutex obs_mu_;
  TransportReport transport_;
};

/// Typed worker loop after the handshake.
template <CoefficientField F>
WorkerReport dist_worker_loop(TaggedChannel& ch, RingPtr<F> ring, const Endpoint& dht_ep, const WorkerHooks& hooks) {
  WorkerReport rep;
  DhtClient dht(dht_ep);
  DistPolyList<F> list(dht.store(), ring);
  const std::vector<ChannelTag> wanted{tags::kTerm, tags::kPair};
  for (;;) {
    auto msg = ch.receive_any(wanted);
    if (!msg) throw DistributedFailure("master connection lost");
    if (msg->tag == tags::kTerm) break;
    auto pm = detail::decode_pair(msg->body);
    ++rep.pairs;
    if (hooks.crash && hooks.crash(rep.pairs)) {
      ch.close();
      return rep;
    }
    if (hooks.before_reduce) hooks.before_reduce(pm.seq);
    ReductionStats st;
    auto h = detail::reduce_remote_pair(list, pm.i, pm.j, &st);
    rep.restarts += st.restarts;
    Bytes reply;
    wire::put_u64(reply, pm.seq);
    auto tail = detail::encode_result_tail(h.is_zero(), h.is_zero() ? Bytes{} : encode(h));
    reply.insert(reply.end(), tail.begin(), tail.end());
    ch.send(tags::kResult, reply);
  }
  return rep;
}

/// Connects to a master, performs the handshake and reduces pairs until
/// told to stop.
inline WorkerReport run_dist_worker(const Endpoint& master, const WorkerHooks& hooks = {}) {
  TaggedChannel ch(connect_to(master));
  auto cfg = detail::handshake(ch, WorkerRole::Dist, 1);
  if (!cfg.ring.field) throw DistributedFailure("master sent no field");
  return visit_field(*cfg.ring.field, [&](auto field) {
    return dist_worker_loop(ch, ring_from(cfg.ring, field), cfg.dht, hooks);
  });
}

/// Master plus `workers` in-process worker threads talking over loopback
/// TCP. Worker errors are swallowed when the master fails first, since the
/// master's error is the primary one.
template <CoefficientField F>
GBResult<F> gb_distributed_loopback(const std::vector<Polynomial<F>>& gens, std::size_t workers,
                                    DistOptions opts = {}, const std::vector<WorkerHooks>& hooks = {},
                                    TransportReport* transport = nullptr) {
  if (gens.empty()) throw ConfigurationError("empty generator list");
  DistMaster<F> master(gens.front().ring(), gens, std::move(opts));
  Endpoint ep = master.endpoint();
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        run_dist_worker(ep, w < hooks.size() ? hooks[w] : WorkerHooks{});
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  std::optional<GBResult<F>> result;
  std::exception_ptr master_error;
  try {
    result = master.run(workers);
  } catch (...) {
    master_error = std::current_exception();
  }
  for (auto& t : pool) t.join();
  if (transport) *transport = master.transport();
  if (master_error) std::rethrow_exception(master_error);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return std::move(*result);
}

}  // namespace distgb
