#pragma once

// Centrally mastered, append-only, broadcast-replicated table from
// polynomial index to encoded polynomial bytes.
//
// The master owns the authoritative log. One broadcaster thread pushes every
// entry to every connected client exactly once, in log order; a client that
// connects late first receives the entries it missed. Clients are read-only
// replicas with blocking reads.
//
// Wire: DhtOp frames, u8 op (1 = Put, 2 = Bye), then for Put a u64 BE key
// and the value bytes.

#include "distgb/net.hpp"
#include "distgb/poly_io.hpp"
#include "distgb/reduce.hpp"

namespace distgb {

struct DhtError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DhtOpCode : std::uint8_t { Put = 1, Bye = 2 };

using DhtValue = std::shared_ptr<const Bytes>;

/// Local entry set with version counter and blocking reads. Shared by the
/// master and the client replicas.
class DhtStore {
 public:
  struct Snapshot {
    std::uint64_t version = 0;
    std::vector<std::pair<std::uint64_t, DhtValue>> entries;  // sorted by key
  };

  /// False if the key is already bound.
  bool insert(std::uint64_t key, DhtValue value) {
    std::lock_guard lock(mu_);
    if (!entries_.emplace(key, std::move(value)).second) return false;
    log_.push_back(key);
    version_.fetch_add(1, std::memory_order_release);
    cv_.notify_all();
    return true;
  }

  std::optional<DhtValue> get(std::uint64_t key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Blocks until the key is present; nothing if the table shuts down first.
  std::optional<DhtValue> get_wait(std::uint64_t key) const {
    std::unique_lock lock(mu_);
    std::map<std::uint64_t, DhtValue>::const_iterator it;
    cv_.wait(lock, [&] { return (it = entries_.find(key)) != entries_.end() || shut_; });
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Blocks until at least `v` entries are present or the timeout expires.
  bool wait_for_version(std::uint64_t v, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return version_.load() >= v; });
  }

  std::uint64_t version() const { return version_.load(std::memory_order_acquire); }

  Snapshot snapshot() const {
    std::lock_guard lock(mu_);
    Snapshot s;
    s.version = version_.load(std::memory_order_relaxed);
    s.entries.assign(entries_.begin(), entries_.end());
    return s;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  /// Keys in insertion order starting at `from`.
  std::vector<std::pair<std::uint64_t, DhtValue>> log_since(std::size_t from) const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::uint64_t, DhtValue>> out;
    for (std::size_t i = from; i < log_.size(); ++i) out.emplace_back(log_[i], entries_.at(log_[i]));
    return out;
  }
  std::size_t log_size() const {
    std::lock_guard lock(mu_);
    return log_.size();
  }

  /// Wakes all blocked readers; later get_wait calls on absent keys return
  /// nothing.
  void shutdown() {
    std::lock_guard lock(mu_);
    shut_ = true;
    cv_.notify_all();
  }
  bool is_shut_down() const {
    std::lock_guard lock(mu_);
    return shut_;
  }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::uint64_t, DhtValue> entries_;
  std::vector<std::uint64_t> log_;
  std::atomic<std::uint64_t> version_{0};
  bool shut_ = false;
};

namespace detail {

inline Bytes encode_dht_put(std::uint64_t key, const Bytes& value) {
  Bytes b;
  b.reserve(9 + value.size());
  wire::put_u8(b, static_cast<std::uint8_t>(DhtOpCode::Put));
  wire::put_u64(b, key);
  b.insert(b.end(), value.begin(), value.end());
  return b;
}

}  // namespace detail

/// The authoritative table. Clients connect to its port.
class DhtMaster {
 public:
  explicit DhtMaster(const Endpoint& ep = {}) : listener_(ep) {
    acceptor_ = std::thread([this] { accept_loop(); });
    broadcaster_ = std::thread([this] { broadcast_loop(); });
  }
  DhtMaster(const DhtMaster&) = delete;
  DhtMaster& operator=(const DhtMaster&) = delete;
  ~DhtMaster() { stop(); }

  std::uint16_t port() const { return listener_.port(); }
  Endpoint endpoint() const { return listener_.endpoint(); }
  DhtStore& store() { return store_; }
  const DhtStore& store() const { return store_; }

  /// Throws DhtError for a key that is already bound.
  void put(std::uint64_t key, Bytes value) {
    if (!store_.insert(key, std::make_shared<const Bytes>(std::move(value))))
      throw DhtError("duplicate key " + std::to_string(key));
    std::lock_guard lock(mu_);
    cv_.notify_all();
  }

  std::optional<DhtValue> get(std::uint64_t key) const { return store_.get(key); }

  std::size_t client_count() const {
    std::lock_guard lock(mu_);
    return links_.size();
  }

  /// Blocks until `n` clients have connected.
  bool wait_for_clients(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return links_.size() >= n; });
  }

  /// Blocks until every live link has been sent the whole log.
  bool wait_for_drain(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] {
      std::size_t n = store_.log_size();
      for (const auto& l : links_)
        if (!l->dead && l->cursor < n) return false;
      return true;
    });
  }

  /// Largest number of times one key was sent over one link.
  std::size_t max_sends_per_link_key() const {
    std::lock_guard lock(mu_);
    std::size_t m = 0;
    for (const auto& [k, c] : sends_) m = std::max(m, c);
    return m;
  }
  std::uint64_t value_bytes_sent() const {
    std::lock_guard lock(mu_);
    return value_bytes_;
  }
  std::vector<std::string> link_errors() const {
    std::lock_guard lock(mu_);
    return errors_;
  }

  /// Flushes the log to all clients, sends Bye and closes every link.
  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
      cv_.notify_all();
    }
    listener_.close();
    if (acceptor_.joinable()) acceptor_.join();
    if (broadcaster_.joinable()) broadcaster_.join();
    store_.shutdown();
  }

 private:
  struct Link {
    std::size_t id;
    std::shared_ptr<Connection> conn;
    std::size_t cursor = 0;
    bool dead = false;
  };

  void accept_loop() {
    while (auto s = listener_.accept()) {
      std::lock_guard lock(mu_);
      if (stopping_) break;
      auto link = std::make_shared<Link>();
      link->id = links_.size();
      link->conn = std::make_shared<Connection>(std::move(*s));
      links_.push_back(std::move(link));
      cv_.notify_all();
    }
  }

  void broadcast_loop() {
    for (;;) {
      std::vector<std::shared_ptr<Link>> links;
      bool stopping;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] {
          if (stopping_) return true;
          std::size_t n = store_.log_size();
          for (const auto& l : links_)
            if (!l->dead && l->cursor < n) return true;
          return false;
        });
        links = links_;
        stopping = stopping_;
      }
      for (auto& l : links) flush(*l);
      if (stopping) {
        for (auto& l : links) {
          if (!l->dead) {
            try {
              Bytes bye{static_cast<std::uint8_t>(DhtOpCode::Bye)};
              l->conn->send(FrameKind::DhtOp, bye);
            } catch (const TransportError&) {
            }
          }
          l->conn->close();
        }
        return;
      }
    }
  }

  // Only the broadcaster touches a link's cursor and connection.
  void flush(Link& l) {
    if (l.dead) return;
    auto pending = store_.log_since(l.cursor);
    for (const auto& [key, value] : pending) {
      try {
        l.conn->send(FrameKind::DhtOp, detail::encode_dht_put(key, *value));
      } catch (const TransportError& e) {
        std::lock_guard lock(mu_);
        l.dead = true;
        errors_.push_back("link " + std::to_string(l.id) + ": " + e.what());
        cv_.notify_all();
        return;
      }
      std::lock_guard lock(mu_);
      ++l.cursor;
      ++sends_[{l.id, key}];
      value_bytes_ += value->size();
      cv_.notify_all();
    }
  }

  Listener listener_;
  DhtStore store_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::shared_ptr<Link>> links_;
  std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> sends_;
  std::uint64_t value_bytes_ = 0;
  std::vector<std::string> errors_;
  bool stopping_ = false;
  std::thread acceptor_, broadcaster_;
};

/// A read-only replica fed by the master's broadcasts.
class DhtClient {
 public:
  explicit DhtClient(const Endpoint& master) : conn_(std::make_shared<Connection>(connect_to(master))) {
    receiver_ = std::thread([this] { receive_loop(); });
  }
  DhtClient(const DhtClient&) = delete;
  DhtClient& operator=(const DhtClient&) = delete;
  ~DhtClient() { close(); }

  DhtStore& store() { return store_; }
  const DhtStore& store() const { return store_; }

  std::optional<DhtValue> get(std::uint64_t key) const { return store_.get(key); }
  std::optional<DhtValue> get_wait(std::uint64_t key) const { return store_.get_wait(key); }
  std::uint64_t version() const { return store_.version(); }

  /// Set if the receiver stopped because of a transport or protocol error.
  std::optional<std::string> error() const {
    std::lock_guard lock(mu_);
    return error_;
  }

  void close() {
    conn_->close();
    if (receiver_.joinable()) receiver_.join();
    store_.shutdown();
  }

  Connection& connection() { return *conn_; }

 private:
  void receive_loop() {
    try {
      while (auto f = conn_->receive()) {
        if (f->kind != FrameKind::DhtOp) throw DhtError("unexpected frame kind on table link");
        wire::Reader r(f->payload);
        auto op = static_cast<DhtOpCode>(r.u8());
        if (op == DhtOpCode::Bye) break;
        if (op != DhtOpCode::Put) throw DhtError("unknown table operation");
        std::uint64_t key = r.u64();
        auto rest = r.rest();
        if (!store_.insert(key, std::make_shared<const Bytes>(rest.begin(), rest.end())))
          throw DhtError("duplicate key " + std::to_string(key) + " from master");
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      error_ = e.what();
    }
    store_.shutdown();
  }

  std::shared_ptr<Connection> conn_;
  DhtStore store_;
  mutable std::mutex mu_;
  std::optional<std::string> error_;
  std::thread receiver_;
};

/// Typed view of a table holding encoded polynomials, usable as the basis
/// view of the restartable reducer. Decoding is lazy and memoized.
template <CoefficientField F>
class DistPolyList {
 public:
  DistPolyList(const DhtStore& store, RingPtr<F> ring) : store_(store), ring_(std::move(ring)) {}

  std::uint64_t version() const { return store_.version(); }

  BasisSnapshot<F> snapshot() const {
    auto raw = store_.snapshot();
    std::lock_guard lock(mu_);
    if (cached_ && cached_->version == raw.version) return *cached_;
    auto polys = std::make_shared<std::vector<PolyPtr<F>>>();
    polys->reserve(raw.entries.size());
    for (const auto& [key, bytes] : raw.entries) polys->push_back(decode_locked(key, *bytes));
    cached_ = BasisSnapshot<F>{raw.version, std::move(polys)};
    return *cached_;
  }

  /// Blocks for the polynomial at `key`; nothing on shutdown.
  std::optional<PolyPtr<F>> get_wait(std::uint64_t key) const {
    auto bytes = store_.get_wait(key);
    if (!bytes) return std::nullopt;
    std::lock_guard lock(mu_);
    return decode_locked(key, **bytes);
  }

 private:
  PolyPtr<F> decode_locked(std::uint64_t key, const Bytes& bytes) const {
    auto it = decoded_.find(key);
    if (it != decoded_.end()) return it->second;
    auto p = std::make_shared<const Polynomial<F>>(decode(ring_, bytes));
    decoded_.emplace(key, p);
    return p;
  }

  const DhtStore& store_;
  RingPtr<F> ring_;
  mutable std::mutex mu_;
  mutable std::map<std::uint64_t, PolyPtr<F>> decoded_;
  mutable std::optional<BasisSnapshot<F>> cached_;
};

}  // namespace distgb
