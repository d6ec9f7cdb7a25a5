#pragma once

// Command-line front end shared by `gb` and the cluster harness.

#include "distgb/exec.hpp"
#include "distgb/gb_hyb.hpp"
#include "distgb/systems.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace distgb::app {

struct Options {
  std::string algo = "seq";
  std::uint32_t threads = 1;
  std::string nodes_file;
  std::size_t workers = 0;
  std::string system;
  std::string input;
  std::string field;
  std::string modulus = "2^127-1";
  std::string order;
  std::string strategy = "greedy";
  std::string pair_order = "head";
  std::string report;
  std::string baseline;
  std::string output;
  std::string master;
  std::string bind = "127.0.0.1:0";
  std::uint16_t dht_port = 0;
  std::uint16_t daemon_port = 0;
  std::uint64_t crash_after = 0;
  bool quiet = false;
};

inline void add_options(CLI::App& app, Options& o) {
  app.add_option("--algo", o.algo, "Variant to run")
      ->check(CLI::IsMember({"seq", "par", "dist-master", "dist-worker", "hyb-master", "hyb-worker", "daemon"}));
  app.add_option("--threads", o.threads, "Reducer threads (par) or threads per node (hyb)")
      ->check(CLI::PositiveNumber);
  app.add_option("--nodes-file", o.nodes_file, "Daemon addresses, one host:port per line");
  app.add_option("--workers", o.workers, "dist-master: worker jobs to place on the daemons (default: one per line)");
  app.add_option("--system", o.system, "Benchmark system, katsura:N or cyclic:N");
  app.add_option("--input", o.input, "System file in the polynomial text format");
  app.add_option("--field", o.field, "Q or Zp (default Q, or the input file's field)")
      ->check(CLI::IsMember({"Q", "Zp"}));
  app.add_option("--modulus", o.modulus, "Prime for Zp, decimal or 2^k-1");
  app.add_option("--order", o.order, "lex, grlex or grevlex (default grevlex)")
      ->check(CLI::IsMember({"lex", "grlex", "grevlex"}));
  app.add_option("--strategy", o.strategy, "Result selection: greedy or sequence")
      ->check(CLI::IsMember({"greedy", "sequence"}));
  app.add_option("--pair-order", o.pair_order, "Pair queue order: head or sequence")
      ->check(CLI::IsMember({"head", "sequence"}));
  app.add_option("--report", o.report, "Append a CSV row to this file");
  app.add_option("--baseline", o.baseline, "CSV report holding the 1-node 1-thread run for speedup");
  app.add_option("--output", o.output, "Write the reduced basis here");
  app.add_option("--master", o.master, "Master address for the worker variants");
  app.add_option("--bind", o.bind, "Master listen address");
  app.add_option("--dht-port", o.dht_port, "Port of the master's polynomial table");
  app.add_option("--daemon-port", o.daemon_port, "Port for --algo daemon (0 picks one)");
  app.add_option("--crash-worker-after", o.crash_after,
                 "Testing: the first worker process exits after this many pairs");
  app.add_flag("--quiet", o.quiet, "Suppress the human-readable summary");
}

struct ReportRow {
  std::size_t nodes = 0, ppn = 0;
  double time_ms = 0;
  std::optional<double> speedup;
  std::uint64_t put = 0, rem = 0;
};

inline constexpr const char* kReportHeader = "nodes,ppn,time_ms,speedup,put,rem";

inline std::string format_row(const ReportRow& r) {
  char buf[160];
  std::string sp;
  if (r.speedup) {
    char s[32];
    std::snprintf(s, sizeof s, "%.2f", *r.speedup);
    sp = s;
  }
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.1f,%s,%llu,%llu", r.nodes, r.ppn, r.time_ms, sp.c_str(),
                static_cast<unsigned long long>(r.put), static_cast<unsigned long long>(r.rem));
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a report file; throws ParseError on a foreign header.
inline std::vector<ReportRow> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != kReportHeader) throw ParseError(path + ": not a report file");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = split_csv(line);
    if (c.size() != 6) throw ParseError(path + ": malformed row '" + line + "'");
    ReportRow r;
    r.nodes = std::stoul(c[0]);
    r.ppn = std::stoul(c[1]);
    r.time_ms = std::stod(c[2]);
    if (!c[3].empty()) r.speedup = std::stod(c[3]);
    r.put = std::stoull(c[4]);
    r.rem = std::stoull(c[5]);
    rows.push_back(r);
  }
  return rows;
}

inline void append_report(const std::string& path, const ReportRow& row) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigurationError("cannot write " + path);
  if (fresh) out << kReportHeader << "\n";
  out << format_row(row) << "\n";
}

/// Time of the last 1-node 1-thread row of a baseline report.
inline std::optional<double> baseline_time(const std::string& path) {
  std::optional<double> t;
  for (const auto& r : read_report(path))
    if (r.nodes == 1 && r.ppn == 1) t = r.time_ms;
  return t;
}

inline std::vector<Endpoint> read_nodes_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open " + path);
  std::vector<Endpoint> out;
  std::string line;
  while (std::getline(in, line)) {
    auto l = detail::trim(line);
    if (l.empty() || l.front() == '#') continue;
    out.push_back(Endpoint::parse(l));
  }
  if (out.empty()) throw ConfigurationError(path + " lists no nodes");
  return out;
}

inline PairListOptions pair_options(const Options& o) {
  PairListOptions p;
  p.order = o.pair_order == "sequence" ? PairOrder::SequenceOrder : PairOrder::HeadTermOrder;
  p.selection = o.strategy == "sequence" ? Selection::SequentialOrder : Selection::GreedyFirstFinished;
  return p;
}

/// The input system as header text plus polynomial lines, with command-line
/// overrides applied.
inline SystemText load_system(const Options& o) {
  if (o.system.empty() == o.input.empty()) throw ConfigurationError("give exactly one of --system and --input");
  SystemText st;
  std::optional<FieldDescriptor> field;
  if (o.field == "Q") field = FieldDescriptor::rationals();
  if (o.field == "Zp") field = FieldDescriptor::modular(parse_modulus(o.modulus));
  std::optional<TermOrder> order;
  if (!o.order.empty()) order = TermOrder::parse(o.order);
  if (!o.input.empty()) {
    st = SystemText::read_file(o.input);
    if (field) st.field = field;
    if (order) st.order = order;
    if (!st.field) st.field = FieldDescriptor::rationals();
    return st;
  }
  auto [family, n] = parse_system_name(o.system);
  FieldDescriptor fd = field.value_or(FieldDescriptor::rationals());
  TermOrder ord = order.value_or(TermOrder{});
  return visit_field(fd, [&](auto f) {
    auto gens = generate_system(family, n, f, ord);
    return SystemText::parse(format_system(gens.front().ring(), gens));
  });
}

struct RunOutcome {
  ReportRow row;
  std::string basis_text;
};

/// Worker jobs placed on daemons: one per worker (dist) or per node (hyb).
class RemoteWorkers {
 public:
  RemoteWorkers(const Options& o, JobKind kind, const Endpoint& master, const std::string& ring) {
    auto daemons = read_nodes_file(o.nodes_file);
    DistThreadPool pool(daemons);
    count_ = kind == JobKind::DistWorker && o.workers ? o.workers : daemons.size();
    for (std::size_t k = 0; k < count_; ++k) {
      JobDescriptor job;
      job.kind = kind;
      job.ring = ring;
      job.master = master;
      job.threads = kind == JobKind::HybridWorker ? o.threads : 1;
      job.node_id = static_cast<std::uint32_t>(k);
      if (k == 0 && o.crash_after) job.argument = "crash-after=" + std::to_string(o.crash_after);
      handles_.push_back(pool.submit(job));
    }
  }

  std::size_t count() const { return count_; }

  /// Waits for every job; the first failure message, if any.
  std::optional<std::string> join() {
    std::optional<std::string> err;
    for (auto& h : handles_) {
      try {
        h.join();
      } catch (const JobFailed& e) {
        if (!err) err = e.what();
      }
    }
    return err;
  }

 private:
  std::size_t count_ = 0;
  std::vector<JobHandle> handles_;
};

template <CoefficientField F>
RunOutcome run_master_variant(const Options& o, const RingPtr<F>& ring, const std::vector<Polynomial<F>>& gens) {
  RunOutcome out;
  GBResult<F> res;
  if (o.algo == "seq") {
    res = gb_sequential(gens, pair_options(o));
    out.row.nodes = 0;
    out.row.ppn = 0;
  } else if (o.algo == "par") {
    res = gb_parallel(gens, o.threads, pair_options(o));
    out.row.nodes = 1;
    out.row.ppn = o.threads;
  } else {
    if (o.nodes_file.empty()) throw ConfigurationError("--nodes-file is required for " + o.algo);
    DistOptions d;
    d.pairs = pair_options(o);
    d.bind = Endpoint::parse(o.bind);
    d.dht_bind = {d.bind.host, o.dht_port};
    bool hybrid = o.algo == "hyb-master";
    std::optional<DistMaster<F>> dm;
    std::optional<HybridMaster<F>> hm;
    Endpoint ep;
    if (hybrid) {
      hm.emplace(ring, gens, d);
      ep = hm->endpoint();
    } else {
      dm.emplace(ring, gens, d);
      ep = dm->endpoint();
    }
    RemoteWorkers remote(o, hybrid ? JobKind::HybridWorker : JobKind::DistWorker, ep, ring->descriptor());
    try {
      res = hybrid ? hm->run(remote.count()) : dm->run(remote.count());
    } catch (...) {
      remote.join();
      throw;
    }
    if (auto err = remote.join()) throw DistributedFailure(*err);
    out.row.nodes = remote.count();
    out.row.ppn = hybrid ? o.threads : 1;
    if (!o.quiet) {
      auto t = hybrid ? hm->transport() : dm->transport();
      std::cerr << "transport: connections=" << t.control_connections << " pair_messages=" << t.pair_messages
                << " max_pair_body=" << t.max_pair_body << " result_bytes=" << t.result_bytes
                << " table_max_sends_per_link_key=" << t.dht_max_sends_per_link_key << "\n";
    }
  }
  out.row.time_ms = res.stats.wall_ms;
  out.row.put = res.stats.put_count;
  out.row.rem = res.stats.rem_count;
  out.basis_text = format_system(ring, res.basis);
  return out;
}

inline HybridWorkerHooks hybrid_crash_hooks(std::uint64_t after) {
  HybridWorkerHooks h;
  if (after) h.crash = [after](std::uint32_t, std::uint64_t n) {
    if (n >= after) std::_Exit(3);
    return false;
  };
  return h;
}

inline WorkerHooks dist_crash_hooks(std::uint64_t after) {
  WorkerHooks h;
  if (after) h.crash = [after](std::uint64_t n) {
    if (n >= after) std::_Exit(3);
    return false;
  };
  return h;
}

inline std::uint64_t crash_setting(const std::string& argument) {
  const std::string key = "crash-after=";
  if (argument.rfind(key, 0) != 0) return 0;
  return std::stoull(argument.substr(key.size()));
}

/// Serves worker jobs until killed. Prints "listening PORT" once bound.
inline int run_daemon(const Options& o) {
  ExecDaemon daemon({"127.0.0.1", o.daemon_port});
  daemon.register_runner(JobKind::DistWorker, [](const JobDescriptor& job) {
    run_dist_worker(job.master, dist_crash_hooks(crash_setting(job.argument)));
  });
  daemon.register_runner(JobKind::HybridWorker, [](const JobDescriptor& job) {
    run_hybrid_worker(job.master, job.threads, hybrid_crash_hooks(crash_setting(job.argument)));
  });
  std::cout << "listening " << daemon.port() << std::endl;
  daemon.serve();
  return 0;
}

/// Entry point after flag parsing; returns the exit status.
inline int run(const Options& o) {
  if (o.algo == "daemon") return run_daemon(o);
  if (o.algo == "dist-worker" || o.algo == "hyb-worker") {
    if (o.master.empty()) throw ConfigurationError("--master is required for " + o.algo);
    auto ep = Endpoint::parse(o.master);
    if (o.algo == "dist-worker") {
      auto r = run_dist_worker(ep, dist_crash_hooks(o.crash_after));
      if (!o.quiet) std::cerr << "worker done: pairs=" << r.pairs << "\n";
    } else {
      auto r = run_hybrid_worker(ep, o.threads, hybrid_crash_hooks(o.crash_after));
      if (!o.quiet) std::cerr << "node " << r.node_id << " done: pairs=" << r.pairs << "\n";
    }
    return 0;
  }
  auto st = load_system(o);
  RunOutcome out = visit_field(*st.field, [&](auto f) {
    auto ring = ring_from(st, f);
    return run_master_variant(o, ring, parse_polynomials(ring, st.polynomials));
  });
  if (!o.baseline.empty()) {
    if (auto base = baseline_time(o.baseline); base && out.row.time_ms > 0) out.row.speedup = *base / out.row.time_ms;
  } else if (out.row.nodes == 1 && out.row.ppn == 1) {
    out.row.speedup = 1.0;
  }
  if (!o.output.empty()) {
    std::ofstream f(o.output);
    if (!f) throw ConfigurationError("cannot write " + o.output);
    f << out.basis_text;
  }
  if (!o.report.empty()) append_report(o.report, out.row);
  std::cout << kReportHeader << "\n" << format_row(out.row) << std::endl;
  return 0;
}

/// Parses `argv` and runs. Exit status: 0 success, 1 usage, 2 bad input,
/// 3 distributed failure, 4 other errors.
inline int main(int argc, char** argv) {
  CLI::App app{"Groebner basis engine"};
  Options o;
  add_options(app, o);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    return run(o);
  } catch (const DistributedFailure& e) {
    std::cerr << "error: distributed failure: " << e.what() << "\n";
    return 3;
  } catch (const JobFailed& e) {
    std::cerr << "error: distributed failure: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace distgb::app
