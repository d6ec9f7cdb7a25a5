// Spawns a localhost cluster of gb daemons, runs a distributed master over
// it and checks the result against a sequential run.

#include "harness.hpp"

using namespace distgb;

int main(int argc, char** argv) {
  CLI::App app{"Localhost cluster harness for gb"};
  harness::ClusterSpec spec;
  std::string system = "katsura:4", field = "Zp", modulus = "2^127-1", order, report;
  std::size_t repeat = 1;
  long timeout_s = 600;
  app.add_option("--gb", spec.gb, "Path to the gb binary (default: next to this one)");
  app.add_option("--variant", spec.variant, "hyb or dist")->check(CLI::IsMember({"hyb", "dist"}));
  app.add_option("--nodes", spec.nodes, "Worker processes")->check(CLI::PositiveNumber);
  app.add_option("--ppn", spec.ppn, "Threads per node (hyb)")->check(CLI::PositiveNumber);
  app.add_option("--system", system, "katsura:N or cyclic:N");
  app.add_option("--field", field)->check(CLI::IsMember({"Q", "Zp"}));
  app.add_option("--modulus", modulus);
  app.add_option("--order", order);
  app.add_option("--repeat", repeat, "Runs of the same configuration")->check(CLI::PositiveNumber);
  app.add_option("--kill-worker-after", spec.crash_after, "First worker process dies after this many pairs");
  app.add_option("--report", report, "Append each master row to this CSV file");
  app.add_option("--timeout", timeout_s, "Seconds per gb run");
  CLI11_PARSE(app, argc, argv);

  if (spec.gb.empty()) spec.gb = (harness::self_dir() / "gb").string();
  spec.timeout = std::chrono::seconds(timeout_s);
  spec.system_args = {"--system", system, "--field", field, "--quiet"};
  if (field == "Zp") spec.system_args.insert(spec.system_args.end(), {"--modulus", modulus});
  if (!order.empty()) spec.system_args.insert(spec.system_args.end(), {"--order", order});

  std::cout << "run,nodes,ppn,time_ms,put,rem,seq_time_ms,seq_put,seq_rem,equal\n";
  std::uint64_t min_put = ~0ull, max_put = 0;
  int status = 0;
  for (std::size_t k = 0; k < repeat; ++k) {
    harness::ClusterOutcome out;
    try {
      out = harness::run_cluster(spec);
    } catch (const std::exception& e) {
      std::cerr << "harness error: " << e.what() << "\n";
      return 4;
    }
    if (!out.error.empty()) {
      std::cerr << "run " << k << ": " << out.error << "\n";
      // A declared distributed failure is the expected outcome of a kill.
      status = out.master.status == 3 ? 3 : 1;
      continue;
    }
    const auto& m = *out.master.row;
    const auto& s = *out.seq.row;
    min_put = std::min(min_put, m.put);
    max_put = std::max(max_put, m.put);
    std::cout << k << "," << m.nodes << "," << m.ppn << "," << m.time_ms << "," << m.put << "," << m.rem << ","
              << s.time_ms << "," << s.put << "," << s.rem << "," << (out.equal ? "yes" : "no") << "\n";
    if (!report.empty()) app::append_report(report, m);
  }
  if (status == 0 && repeat > 1) std::cout << "put spread: " << min_put << ".." << max_put << "\n";
  return status;
}
