#pragma once

// Remote execution: a daemon that runs self-contained job descriptors, and a
// pool that places jobs on daemons round-robin.
//
// Protocol on a fresh connection: client sends one Job frame with the
// encoded descriptor; the daemon runs the job and answers with one Control
// frame (u8 status, string message). Status 0 is success.

#include "distgb/net.hpp"

#include <list>

namespace distgb {

enum class JobKind : std::uint8_t { Echo = 0, DistWorker = 1, HybridWorker = 2 };

struct JobDescriptor {
  JobKind kind = JobKind::Echo;
  std::string ring;  ///< ring descriptor text (informational for workers)
  Endpoint master;
  std::uint32_t threads = 1;
  std::uint32_t node_id = 0;
  std::string argument;  ///< echo payload or free-form option

  wire::Bytes encode() const {
    wire::Bytes b;
    wire::put_u8(b, static_cast<std::uint8_t>(kind));
    wire::put_string(b, ring);
    wire::put_string(b, master.host);
    wire::put_u16(b, master.port);
    wire::put_u32(b, threads);
    wire::put_u32(b, node_id);
    wire::put_string(b, argument);
    return b;
  }

  static JobDescriptor decode(std::span<const std::uint8_t> bytes) {
    wire::Reader r(bytes);
    JobDescriptor d;
    std::uint8_t k = r.u8();
    if (k > 2) throw ParseError("unknown job kind");
    d.kind = static_cast<JobKind>(k);
    d.ring = r.string();
    d.master.host = r.string();
    d.master.port = r.u16();
    d.threads = r.u32();
    d.node_id = r.u32();
    d.argument = r.string();
    if (!r.done()) throw ParseError("trailing bytes in job descriptor");
    return d;
  }
};

struct JobFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Serves jobs on a port. Job kinds without a registered runner fail with a
/// nonzero status. Echo is built in and succeeds with `argument` as message.
class ExecDaemon {
 public:
  using Runner = std::function<void(const JobDescriptor&)>;

  explicit ExecDaemon(const Endpoint& ep = {}) : listener_(ep) {}
  ~ExecDaemon() { stop(); }

  void register_runner(JobKind kind, Runner r) {
    std::lock_guard lock(mu_);
    runners_[kind] = std::move(r);
  }

  std::uint16_t port() const { return listener_.port(); }
  Endpoint endpoint() const { return listener_.endpoint(); }

  /// Runs the accept loop in a background thread.
  void start() {
    acceptor_ = std::thread([this] { serve(); });
  }

  /// Accept loop in the calling thread, until stop().
  void serve() {
    while (auto s = listener_.accept()) {
      if (stopping_) break;
      auto conn = std::make_shared<Connection>(std::move(*s));
      std::lock_guard lock(mu_);
      jobs_.emplace_back([this, conn] { handle(conn); });
    }
  }

  /// Stops accepting and waits for running jobs.
  void stop() {
    stopping_ = true;
    listener_.close();
    if (acceptor_.joinable()) acceptor_.join();
    std::list<std::thread> jobs;
    {
      std::lock_guard lock(mu_);
      jobs.swap(jobs_);
    }
    for (auto& t : jobs)
      if (t.joinable()) t.join();
  }

  std::size_t jobs_started() const { return started_.load(); }

 private:
  void handle(const std::shared_ptr<Connection>& conn) {
    std::uint8_t status = 0;
    std::string message;
    try {
      auto f = conn->receive();
      if (!f) return;
      if (f->kind != FrameKind::Job) throw ParseError("expected a job frame");
      auto job = JobDescriptor::decode(f->payload);
      ++started_;
      Runner run;
      {
        std::lock_guard lock(mu_);
        auto it = runners_.find(job.kind);
        if (it != runners_.end()) run = it->second;
      }
      if (job.kind == JobKind::Echo && !run) {
        message = job.argument;
      } else if (!run) {
        status = 2;
        message = "no runner for job kind " + std::to_string(int(job.kind));
      } else {
        run(job);
      }
    } catch (const std::exception& e) {
      status = 1;
      message = e.what();
    }
    try {
      wire::Bytes reply;
      wire::put_u8(reply, status);
      wire::put_string(reply, message);
      conn->send(FrameKind::Control, reply);
    } catch (const TransportError&) {
      // Client went away; nothing to report to.
    }
    conn->close();
  }

  Listener listener_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> started_{0};
  std::mutex mu_;
  std::map<JobKind, Runner> runners_;
  std::list<std::thread> jobs_;
};

/// A job submitted to a daemon. join() blocks for the daemon's reply.
class JobHandle {
 public:
  JobHandle(std::shared_ptr<Connection> conn, Endpoint daemon) : conn_(std::move(conn)), daemon_(std::move(daemon)) {}

  const Endpoint& daemon() const { return daemon_; }

  /// Returns the daemon's message; throws JobFailed for a nonzero status
  /// or a lost connection.
  std::string join() {
    std::optional<Frame> f;
    try {
      f = conn_->receive();
    } catch (const TransportError& e) {
      throw JobFailed("job on " + daemon_.to_string() + ": " + e.what());
    }
    conn_->close();
    if (!f || f->kind != FrameKind::Control) throw JobFailed("job on " + daemon_.to_string() + ": connection lost");
    wire::Reader r(f->payload);
    std::uint8_t status = r.u8();
    std::string msg = r.string();
    if (status != 0) throw JobFailed("job on " + daemon_.to_string() + " failed: " + msg);
    return msg;
  }

 private:
  std::shared_ptr<Connection> conn_;
  Endpoint daemon_;
};

/// Distributes jobs over a fixed list of daemons in round-robin order.
class DistThreadPool {
 public:
  explicit DistThreadPool(std::vector<Endpoint> daemons,
                          std::chrono::milliseconds connect_timeout = std::chrono::seconds(5))
      : daemons_(std::move(daemons)), timeout_(connect_timeout) {
    if (daemons_.empty()) throw ConfigurationError("worker pool needs at least one daemon");
  }

  std::size_t size() const { return daemons_.size(); }

  /// Throws TransportError if the chosen daemon is unreachable.
  JobHandle submit(const JobDescriptor& job) {
    const Endpoint& ep = daemons_[next_++ % daemons_.size()];
    auto conn = std::make_shared<Connection>(connect_to(ep, timeout_));
    conn->send(FrameKind::Job, job.encode());
    return JobHandle(std::move(conn), ep);
  }

 private:
  std::vector<Endpoint> daemons_;
  std::chrono::milliseconds timeout_;
  std::size_t next_ = 0;
};

}  // namespace distgb
