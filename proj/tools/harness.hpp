#pragma once

// Localhost cluster plumbing: spawn `gb` daemons and masters as child
// processes, collect their output, compare bases.

#include "gb_app.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <random>

namespace distgb::harness {

struct HarnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A child process with its stdout on a pipe and stderr in a file.
class Process {
 public:
  Process(const std::vector<std::string>& argv, const std::string& stderr_path) {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw HarnessError(std::string("pipe: ") + std::strerror(errno));
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) throw HarnessError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(fds[1], 1);
      int err = ::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      if (err >= 0) ::dup2(err, 2);
      ::execv(args[0], args.data());
      std::_Exit(127);
    }
    ::close(fds[1]);
    out_ = fds[0];
    stderr_path_ = stderr_path;
  }
  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;
  ~Process() {
    if (!reaped_) {
      kill();
      wait();
    }
    if (out_ >= 0) ::close(out_);
  }

  pid_t pid() const { return pid_; }

  /// Next stdout line, or nothing on EOF or timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{out_, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r <= 0) continue;
      char buf[4096];
      ssize_t n = ::read(out_, buf, sizeof buf);
      if (n <= 0) return std::nullopt;
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  /// Remaining stdout until EOF.
  std::string drain() {
    char buf[4096];
    ssize_t n;
    while ((n = ::read(out_, buf, sizeof buf)) > 0) buffer_.append(buf, static_cast<std::size_t>(n));
    std::string s = std::move(buffer_);
    buffer_.clear();
    return s;
  }

  void kill() {
    if (!reaped_) ::kill(pid_, SIGKILL);
  }

  /// Exit status, 128+signal for a signalled child, nothing on timeout.
  std::optional<int> wait(std::optional<std::chrono::milliseconds> timeout = std::nullopt) {
    if (reaped_) return status_;
    auto deadline = std::chrono::steady_clock::now() + timeout.value_or(std::chrono::hours(24));
    for (;;) {
      int st = 0;
      pid_t r = ::waitpid(pid_, &st, WNOHANG);
      if (r == pid_) {
        reaped_ = true;
        status_ = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + WTERMSIG(st);
        return status_;
      }
      if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  std::string stderr_text() const {
    std::ifstream f(stderr_path_);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

 private:
  pid_t pid_ = -1;
  int out_ = -1;
  std::string buffer_;
  std::string stderr_path_;
  bool reaped_ = false;
  int status_ = 0;
};

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& prefix) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = std::filesystem::temp_directory_path() / (prefix + "-" + std::to_string(rd()));
    if (std::filesystem::create_directory(p)) return p;
  }
  throw HarnessError("cannot create a scratch directory");
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw HarnessError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// `count` daemons on ephemeral ports, plus the nodes file listing them.
class Cluster {
 public:
  Cluster(const std::string& gb, std::size_t count, const std::filesystem::path& dir) : dir_(dir) {
    std::ofstream nodes(nodes_file());
    for (std::size_t k = 0; k < count; ++k) {
      auto log = (dir_ / ("daemon" + std::to_string(k) + ".err")).string();
      auto& p = daemons_.emplace_back(
          std::make_unique<Process>(std::vector<std::string>{gb, "--algo", "daemon", "--daemon-port", "0"}, log));
      auto line = p->read_line(std::chrono::seconds(30));
      if (!line || line->rfind("listening ", 0) != 0)
        throw HarnessError("daemon " + std::to_string(k) + " did not start: " + p->stderr_text());
      nodes << "127.0.0.1:" << line->substr(10) << "\n";
    }
  }

  std::string nodes_file() const { return (dir_ / "nodes.txt").string(); }
  std::size_t size() const { return daemons_.size(); }
  Process& daemon(std::size_t k) { return *daemons_[k]; }

 private:
  std::filesystem::path dir_;
  std::vector<std::unique_ptr<Process>> daemons_;
};

struct GbRun {
  int status = -1;
  bool timed_out = false;
  std::string stdout_text;
  std::string stderr_text;
  std::optional<app::ReportRow> row;
};

/// Runs `gb` with `args` to completion (or kills it at the timeout).
inline GbRun run_gb(const std::string& gb, std::vector<std::string> args, const std::filesystem::path& dir,
                    const std::string& tag, std::chrono::milliseconds timeout) {
  args.insert(args.begin(), gb);
  Process p(args, (dir / (tag + ".err")).string());
  GbRun r;
  auto st = p.wait(timeout);
  if (!st) {
    r.timed_out = true;
    p.kill();
    st = p.wait();
  }
  r.status = *st;
  r.stdout_text = p.drain();
  r.stderr_text = p.stderr_text();
  std::istringstream lines(r.stdout_text);
  std::string line;
  bool header = false;
  while (std::getline(lines, line)) {
    if (line == app::kReportHeader) {
      header = true;
      continue;
    }
    if (header) {
      auto c = app::split_csv(line);
      if (c.size() == 6) {
        app::ReportRow row;
        row.nodes = std::stoul(c[0]);
        row.ppn = std::stoul(c[1]);
        row.time_ms = std::stod(c[2]);
        if (!c[3].empty()) row.speedup = std::stod(c[3]);
        row.put = std::stoull(c[4]);
        row.rem = std::stoull(c[5]);
        r.row = row;
      }
      header = false;
    }
  }
  return r;
}

struct ClusterSpec {
  std::string gb;  ///< path to the gb binary
  std::string variant = "hyb";  ///< hyb or dist
  std::size_t nodes = 1;
  std::uint32_t ppn = 1;
  std::vector<std::string> system_args;  ///< --system/--field/... passed to every run
  std::uint64_t crash_after = 0;
  std::chrono::milliseconds timeout{600000};
};

struct ClusterOutcome {
  GbRun seq;
  GbRun master;
  bool equal = false;
  std::string error;  ///< set when the master failed or the bases differ
};

/// Starts daemons, runs seq and the distributed master as fresh processes,
/// and compares the two bases.
inline ClusterOutcome run_cluster(const ClusterSpec& spec) {
  auto dir = scratch_dir("distgb-harness");
  ClusterOutcome out;
  {
    Cluster cluster(spec.gb, spec.nodes, dir);
    auto seq_args = spec.system_args;
    seq_args.insert(seq_args.end(), {"--algo", "seq", "--quiet", "--output", (dir / "seq.txt").string()});
    out.seq = run_gb(spec.gb, seq_args, dir, "seq", spec.timeout);
    if (out.seq.status != 0) {
      out.error = "sequential run failed: " + out.seq.stderr_text;
      std::filesystem::remove_all(dir);
      return out;
    }
    auto args = spec.system_args;
    args.insert(args.end(), {"--algo", spec.variant == "dist" ? "dist-master" : "hyb-master", "--nodes-file",
                             cluster.nodes_file(), "--output", (dir / "master.txt").string()});
    if (spec.variant == "dist") {
      args.insert(args.end(), {"--workers", std::to_string(spec.nodes)});
    } else {
      args.insert(args.end(), {"--threads", std::to_string(spec.ppn)});
    }
    if (spec.crash_after) args.insert(args.end(), {"--crash-worker-after", std::to_string(spec.crash_after)});
    out.master = run_gb(spec.gb, args, dir, "master", spec.timeout);
    if (out.master.timed_out) {
      out.error = "master timed out";
    } else if (out.master.status != 0) {
      out.error = out.master.stderr_text;
      while (!out.error.empty() && out.error.back() == '\n') out.error.pop_back();
    } else {
      out.equal = slurp(dir / "seq.txt") == slurp(dir / "master.txt");
      if (!out.equal) out.error = "reduced bases differ";
    }
  }
  std::filesystem::remove_all(dir);
  return out;
}

/// Directory of the running executable, for locating sibling tools.
inline std::filesystem::path self_dir() {
  return std::filesystem::read_symlink("/proc/self/exe").parent_path();
}

}  // namespace distgb::harness
