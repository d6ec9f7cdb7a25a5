#pragma once

// Framed TCP transport and tagged message channels.
//
// Frame: u32 BE length (payload size + 1), one kind byte, payload.
// Tagged frames carry a u64 BE tag followed by the message body. One reader
// thread per channel demultiplexes bodies into per-tag FIFO queues; any
// number of threads may send.

#include "distgb/arith.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace distgb {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Big-endian field helpers

namespace wire {

using Bytes = std::vector<std::uint8_t>;

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }
inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_bytes(Bytes& out, std::span<const std::uint8_t> b) {
  put_u32(out, static_cast<std::uint32_t>(b.size()));
  out.insert(out.end(), b.begin(), b.end());
}
inline void put_string(Bytes& out, std::string_view s) {
  put_bytes(out, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

/// Sequential reader over a byte span; throws ParseError when short.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::span<const std::uint8_t> bytes() { return take(u32()); }
  std::string string() {
    auto b = bytes();
    return {b.begin(), b.end()};
  }
  std::span<const std::uint8_t> rest() { return take(b_.size() - pos_); }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (b_.size() - pos_ < n) throw ParseError("truncated message");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(std::size_t n) {
    std::uint64_t v = 0;
    for (auto x : take(n)) v = (v << 8) | x;
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace wire

// ---------------------------------------------------------------------------
// Sockets

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }

  /// "host:port".
  static Endpoint parse(std::string_view text) {
    text = detail::trim(text);
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) throw ParseError("expected host:port, got '" + std::string(text) + "'");
    Endpoint e;
    e.host = std::string(text.substr(0, colon));
    unsigned long port = 0;
    try {
      port = std::stoul(std::string(text.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ParseError("bad port in '" + std::string(text) + "'");
    }
    if (port > 65535) throw ParseError("port out of range");
    e.port = static_cast<std::uint16_t>(port);
    return e;
  }
};

/// Owning file descriptor of a TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  /// Wakes blocked readers and writers without releasing the descriptor.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || !res) throw TransportError("cannot resolve " + ep.host + ": " + gai_strerror(rc));
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

inline std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

}  // namespace detail

class Listener {
 public:
  /// Binds and listens; port 0 picks a free port (see port()).
  explicit Listener(const Endpoint& ep = {}) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw TransportError(detail::errno_text("socket"));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = detail::resolve(ep);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw TransportError(detail::errno_text("bind " + ep.to_string()));
    if (::listen(s.fd(), 64) != 0) throw TransportError(detail::errno_text("listen"));
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    host_ = ep.host;
    sock_ = std::move(s);
  }

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return {host_, port_}; }

  /// Blocks for the next connection; nothing once close() was called.
  std::optional<Socket> accept() {
    for (;;) {
      int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
      if (fd >= 0) {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
      }
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return std::nullopt;
    }
  }

  /// As accept() with a deadline; nothing on timeout.
  std::optional<Socket> accept_for(std::chrono::milliseconds timeout) {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    int rc;
    do {
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    } while (rc < 0 && errno == EINTR);
    if (rc <= 0) return std::nullopt;
    return accept();
  }

  /// Unblocks accept().
  void close() { sock_.shutdown(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
  std::string host_;
};

/// Connects with a timeout; throws TransportError on failure.
inline Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  sockaddr_in addr = detail::resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw TransportError(detail::errno_text("socket"));
  int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) throw TransportError(detail::errno_text("connect " + ep.to_string()));
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw TransportError("connect " + ep.to_string() + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (rc < 0 || err != 0)
      throw TransportError("connect " + ep.to_string() + ": " + std::strerror(err ? err : errno));
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

// ---------------------------------------------------------------------------
// Frames

enum class FrameKind : std::uint8_t { Job = 1, Tagged = 2, DhtOp = 3, Control = 4 };

struct Frame {
  FrameKind kind;
  wire::Bytes payload;
};

enum class Direction { Sent, Received };

inline constexpr std::size_t kDefaultMaxFrame = 64u << 20;

/// A framed, bidirectional connection. send() is atomic per frame with
/// respect to other senders; receive() must be called from one thread.
class Connection {
 public:
  using Observer = std::function<void(Direction, const Frame&)>;

  explicit Connection(Socket s, std::size_t max_frame = kDefaultMaxFrame) : sock_(std::move(s)), max_(max_frame) {}

  void send(FrameKind kind, std::span<const std::uint8_t> payload) {
    if (payload.size() + 1 > max_) throw TransportError("frame exceeds maximum size");
    std::lock_guard lock(send_mu_);
    if (closed_.load()) throw TransportError("send on closed connection");
    std::uint8_t header[5];
    std::uint32_t len = static_cast<std::uint32_t>(payload.size() + 1);
    header[0] = static_cast<std::uint8_t>(len >> 24);
    header[1] = static_cast<std::uint8_t>(len >> 16);
    header[2] = static_cast<std::uint8_t>(len >> 8);
    header[3] = static_cast<std::uint8_t>(len);
    header[4] = static_cast<std::uint8_t>(kind);
    write_all(header, sizeof header);
    if (!payload.empty()) write_all(payload.data(), payload.size());
    bytes_sent_ += sizeof header + payload.size();
    ++frames_sent_;
    if (observer_) observer_(Direction::Sent, Frame{kind, wire::Bytes(payload.begin(), payload.end())});
  }

  /// Next frame, or nothing on orderly end of stream or after close().
  /// Throws TransportError on malformed input.
  std::optional<Frame> receive() {
    std::uint8_t header[5];
    if (!read_all(header, sizeof header, true)) return std::nullopt;
    std::uint32_t len = (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) |
                        (std::uint32_t(header[2]) << 8) | header[3];
    if (len == 0 || len > max_) throw TransportError("bad frame length " + std::to_string(len));
    Frame f{static_cast<FrameKind>(header[4]), wire::Bytes(len - 1)};
    if (header[4] < 1 || header[4] > 4) throw TransportError("unknown frame kind");
    if (len > 1 && !read_all(f.payload.data(), f.payload.size(), false)) return std::nullopt;
    bytes_received_ += sizeof header + f.payload.size();
    if (observer_) observer_(Direction::Received, f);
    return f;
  }

  /// Set before any traffic.
  void set_observer(Observer o) { observer_ = std::move(o); }

  /// Stops traffic in both directions; blocked receive() returns nothing.
  void close() {
    closed_ = true;
    sock_.shutdown();
  }
  bool closed() const { return closed_.load(); }

  std::uint64_t bytes_sent() const { return bytes_sent_.load(); }
  std::uint64_t bytes_received() const { return bytes_received_.load(); }
  std::uint64_t frames_sent() const { return frames_sent_.load(); }

 private:
  void write_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      ssize_t w = ::send(sock_.fd(), p, n, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw TransportError(detail::errno_text("send"));
      }
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  }

  bool read_all(std::uint8_t* p, std::size_t n, bool at_boundary) {
    std::size_t got = 0;
    while (got < n) {
      ssize_t r = ::recv(sock_.fd(), p + got, n - got, 0);
      if (r == 0) {
        if ((at_boundary && got == 0) || closed_) return false;
        throw TransportError("connection closed mid-frame");
      }
      if (r < 0) {
        if (errno == EINTR) continue;
        if (closed_) return false;
        throw TransportError(detail::errno_text("recv"));
      }
      got += static_cast<std::size_t>(r);
    }
    return true;
  }

  Socket sock_;
  std::size_t max_;
  std::mutex send_mu_;
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> bytes_sent_{0}, bytes_received_{0}, frames_sent_{0};
  Observer observer_;
};

// ---------------------------------------------------------------------------
// Tagged channels

using ChannelTag = std::uint64_t;

/// Multiplexes independent message streams over one connection. Messages
/// for a tag nobody waits on yet are buffered.
class TaggedChannel {
 public:
  struct Message {
    ChannelTag tag;
    wire::Bytes body;
  };

  explicit TaggedChannel(std::shared_ptr<Connection> conn) : conn_(std::move(conn)) {
    reader_ = std::thread([this] { read_loop(); });
  }
  explicit TaggedChannel(Socket s) : TaggedChannel(std::make_shared<Connection>(std::move(s))) {}

  TaggedChannel(const TaggedChannel&) = delete;
  TaggedChannel& operator=(const TaggedChannel&) = delete;

  ~TaggedChannel() {
    close();
    if (reader_.joinable()) reader_.join();
  }

  void send(ChannelTag tag, std::span<const std::uint8_t> body) {
    wire::Bytes payload;
    payload.reserve(8 + body.size());
    wire::put_u64(payload, tag);
    payload.insert(payload.end(), body.begin(), body.end());
    conn_->send(FrameKind::Tagged, payload);
  }

  /// Next message for `tag` in FIFO order; nothing once the stream ended
  /// and the queue is drained.
  std::optional<wire::Bytes> receive(ChannelTag tag) {
    std::unique_lock lock(mu_);
    auto& q = queues_[tag];
    cv_.wait(lock, [&] { return !q.empty() || eof_; });
    if (q.empty()) return std::nullopt;
    wire::Bytes b = std::move(q.front());
    q.pop_front();
    return b;
  }

  /// As receive() with a deadline; nothing on timeout or end of stream.
  std::optional<wire::Bytes> receive_for(ChannelTag tag, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    auto& q = queues_[tag];
    if (!cv_.wait_for(lock, timeout, [&] { return !q.empty() || eof_; }) || q.empty()) return std::nullopt;
    wire::Bytes b = std::move(q.front());
    q.pop_front();
    return b;
  }

  /// The first available message among `tags`, earliest tag first.
  std::optional<Message> receive_any(std::span<const ChannelTag> tags) {
    std::unique_lock lock(mu_);
    std::optional<Message> out;
    cv_.wait(lock, [&] {
      for (auto t : tags) {
        auto& q = queues_[t];
        if (!q.empty()) {
          out = Message{t, std::move(q.front())};
          q.pop_front();
          return true;
        }
      }
      return eof_;
    });
    return out;
  }

  /// Closes the connection; pending receivers drain their queues and then
  /// see end of stream. Sending afterwards throws TransportError.
  void close() { conn_->close(); }

  bool at_eof() const {
    std::lock_guard lock(mu_);
    return eof_;
  }
  /// Set if the reader stopped on a transport error rather than orderly EOF.
  std::optional<std::string> error() const {
    std::lock_guard lock(mu_);
    return error_;
  }

  Connection& connection() { return *conn_; }

 private:
  void read_loop() {
    try {
      while (auto f = conn_->receive()) {
        if (f->kind != FrameKind::Tagged) throw TransportError("unexpected frame kind on tagged channel");
        if (f->payload.size() < 8) throw TransportError("tagged frame without tag");
        wire::Reader r(f->payload);
        ChannelTag tag = r.u64();
        auto rest = r.rest();
        std::lock_guard lock(mu_);
        queues_[tag].emplace_back(rest.begin(), rest.end());
        cv_.notify_all();
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      error_ = e.what();
    }
    std::lock_guard lock(mu_);
    eof_ = true;
    cv_.notify_all();
  }

  std::shared_ptr<Connection> conn_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<ChannelTag, std::deque<wire::Bytes>> queues_;
  bool eof_ = false;
  std::optional<std::string> error_;
  std::thread reader_;
};

}  // namespace distgb
