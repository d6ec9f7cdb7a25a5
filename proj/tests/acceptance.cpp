// Acceptance run: one PASS/FAIL/SKIP line per criterion, details indented.
// Exit status is nonzero if any criterion fails.

#include "../tools/harness.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <future>
#include <set>

using namespace distgb;
using namespace distgb::testing;

namespace {

const std::string kGb = DISTGB_GB_PATH;
const std::string kBinDir = DISTGB_TEST_BIN_DIR;

int failures = 0;

void verdict(int id, const std::string& status, const std::string& text) {
  if (status == "FAIL") ++failures;
  std::cout << status << " " << id << ": " << text << std::endl;
}

void detail(const std::string& text) { std::cout << "    " << text << std::endl; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string fmt(double x, int prec = 2) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*f", prec, x);
  return b;
}

// Runs `fn` in a forked child and returns its output, or nothing if the
// child overran `timeout` (it is killed) or failed. Only called while the
// process is single-threaded.
std::optional<std::string> run_isolated(const std::function<std::string()>& fn, std::chrono::milliseconds timeout) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
  std::cout.flush();
  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::close(fds[0]);
    int status = 0;
    try {
      std::string out = fn();
      const char* p = out.data();
      std::size_t left = out.size();
      while (left > 0) {
        ssize_t n = ::write(fds[1], p, left);
        if (n <= 0) break;
        p += n;
        left -= static_cast<std::size_t>(n);
      }
    } catch (const std::exception& e) {
      std::cerr << "isolated run failed: " << e.what() << "\n";
      status = 1;
    }
    ::close(fds[1]);
    std::_Exit(status);
  }
  ::close(fds[1]);
  std::string out;
  auto deadline = std::chrono::steady_clock::now() + timeout;
  bool timed_out = false;
  for (;;) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    if (::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000))) <= 0) continue;
    char buf[65536];
    ssize_t n = ::read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fds[0]);
  if (timed_out) ::kill(pid, SIGKILL);
  int st = 0;
  ::waitpid(pid, &st, 0);
  if (timed_out || !WIFEXITED(st) || WEXITSTATUS(st) != 0) return std::nullopt;
  return out;
}

// 1. Every variant agrees with the sequential reduced basis, which is itself
// checked to be a Groebner basis of the input. Over Q a case gets a 10
// minute budget for its non-sequential runs; variants past it are dropped
// (the Zp counterpart of the case is checked in full regardless).
struct CaseOutcome {
  bool ok = true;
  std::vector<std::string> dropped;
};

template <CoefficientField F>
CaseOutcome matrix_case(const std::string& name, const std::vector<Polynomial<F>>& gens, bool may_drop,
                        std::string& why) {
  CaseOutcome out;
  auto ring = gens.front().ring();
  auto seq = gb_sequential(gens);
  if (!is_groebner_basis(seq.basis)) {
    why = name + ": some S-polynomial of the output has a nonzero normal form";
    out.ok = false;
    return out;
  }
  if (!generates_ideal_of(seq.basis, gens)) {
    why = name + ": an input generator does not reduce to zero";
    out.ok = false;
    return out;
  }
  const std::string expected = format_system(ring, seq.basis);
  std::vector<std::pair<std::string, std::function<GBResult<F>()>>> variants;
  for (std::size_t t : {1, 2, 4, 8})
    variants.emplace_back("par(" + std::to_string(t) + ")", [&, t] { return gb_parallel(gens, t); });
  for (std::size_t w : {1, 2, 4})
    variants.emplace_back("dist(" + std::to_string(w) + ")", [&, w] { return gb_distributed_loopback(gens, w); });
  for (auto [n, t] : std::vector<std::pair<std::size_t, std::uint32_t>>{{1, 1}, {1, 4}, {2, 2}, {3, 2}})
    variants.emplace_back("hyb(" + std::to_string(n) + "x" + std::to_string(t) + ")",
                          [&, n, t] { return gb_hybrid_loopback(gens, n, t); });

  const auto budget = std::chrono::minutes(10);
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [label, run] : variants) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(budget - (std::chrono::steady_clock::now() - start));
    if (may_drop && left.count() <= 0) {
      out.dropped.push_back(label);
      continue;
    }
    auto limit = may_drop ? left : std::chrono::milliseconds(std::chrono::minutes(30));
    auto got = run_isolated([&] { return format_system(ring, run().basis); }, limit);
    if (!got && may_drop && std::chrono::steady_clock::now() - start >= budget) {
      out.dropped.push_back(label);
      continue;
    }
    if (!got) {
      why = name + ": " + label + " failed or did not finish";
      out.ok = false;
      return out;
    }
    if (*got != expected) {
      why = name + ": " + label + " differs from seq";
      out.ok = false;
      return out;
    }
  }
  return out;
}

void criterion1() {
  Stopwatch clock;
  std::size_t cases = 0;
  std::string why;
  bool ok = true;
  std::vector<std::string> dropped;
  struct Sys {
    SystemFamily family;
    std::size_t n;
  };
  std::vector<Sys> systems{{SystemFamily::Katsura, 3}, {SystemFamily::Katsura, 4}, {SystemFamily::Katsura, 5},
                           {SystemFamily::Katsura, 6}, {SystemFamily::Cyclic, 3},  {SystemFamily::Cyclic, 4},
                           {SystemFamily::Cyclic, 5}};
  for (const auto& s : systems) {
    std::vector<TermOrder> orders{TermOrder::parse("grevlex")};
    if (s.n <= 4) orders.push_back(TermOrder::parse("lex"));
    std::string base = std::string(s.family == SystemFamily::Katsura ? "katsura:" : "cyclic:") + std::to_string(s.n);
    for (const auto& ord : orders) {
      for (int fk = 0; fk < 2 && ok; ++fk) {
        Stopwatch one;
        std::string name = base + " " + (fk ? "Zp" : "Q") + " " + ord.to_string();
        auto res = fk ? matrix_case(name, generate_system(s.family, s.n, zp127(), ord), false, why)
                      : matrix_case(name, generate_system(s.family, s.n, RationalField{}, ord), true, why);
        ok = res.ok;
        ++cases;
        std::string note;
        if (!res.dropped.empty()) {
          std::string list;
          for (const auto& d : res.dropped) list += (list.empty() ? "" : " ") + d;
          note = "; over the 10 min Q budget, dropped to Zp: " + list;
          dropped.push_back(name + " [" + list + "]");
        }
        detail(name + ": " + (ok ? "ok" : "MISMATCH") + " (" + fmt(one.elapsed_ms() / 1000, 1) + " s)" + note);
      }
    }
  }
  std::string tail;
  if (!dropped.empty()) {
    tail = "; Q runs dropped to Zp after the 10 min budget: ";
    for (std::size_t i = 0; i < dropped.size(); ++i) tail += (i ? ", " : "") + dropped[i];
  }
  if (ok)
    verdict(1, "PASS",
            "correctness oracle over " + std::to_string(cases) +
                " system/field/order cases, 11 parallel and distributed configurations each (" +
                fmt(clock.elapsed_ms() / 1000, 0) + " s)" + tail);
  else
    verdict(1, "FAIL", why);
}

// 2. Counter calibration against published counts; a deviation is reported
// and only fails if the run itself is wrong. Pairwise S-polynomial checks
// over Q take hours at this size, so the Q basis is checked modularly: it
// contains the generators' ideal (exactly, over Q) and its image mod p is
// term for term the Zp basis, which is fully verified.
template <CoefficientField F>
std::vector<Polynomial<F>> image(const std::vector<Polynomial<RationalField>>& basis, const RingPtr<F>& ring) {
  auto st = SystemText::parse(format_system(basis.front().ring(), basis));
  return parse_polynomials(ring, st.polynomials);
}

void criterion2() {
  struct Target {
    std::string name;
    std::vector<Polynomial<RationalField>> gens;
    std::vector<Polynomial<ModularField>> zp;
    double put, rem;
  };
  std::vector<Target> targets{{"katsura:8 Q", katsura(8, RationalField{}), katsura(8, zp127()), 264, 1577},
                              {"cyclic:6 Q", cyclic(6, RationalField{}), cyclic(6, zp127()), 290, 1068}};
  bool correct = true, within = true;
  for (const auto& t : targets) {
    auto r = gb_sequential(t.gens);
    auto m = gb_sequential(t.zp);
    bool gb = generates_ideal_of(r.basis, t.gens) && is_groebner_basis(m.basis) && generates_ideal_of(m.basis, t.zp);
    try {
      gb = gb && image(r.basis, t.zp.front().ring()) == m.basis;
    } catch (const std::exception&) {
      gb = false;  // a denominator vanishes mod p
    }
    correct = correct && gb;
    auto in = [](double v, double target) { return v >= 0.85 * target && v <= 1.15 * target; };
    bool ok = in(double(r.stats.put_count), t.put) && in(double(r.stats.rem_count), t.rem);
    within = within && ok;
    detail(t.name + ": put=" + std::to_string(r.stats.put_count) + " (target " + fmt(t.put, 0) + ", range " +
           fmt(0.85 * t.put, 1) + ".." + fmt(1.15 * t.put, 1) + "), rem=" + std::to_string(r.stats.rem_count) +
           " (target " + fmt(t.rem, 0) + ", range " + fmt(0.85 * t.rem, 1) + ".." + fmt(1.15 * t.rem, 1) +
           "), basis verified (ideal over Q, Groebner mod 2^127-1): " + (gb ? "yes" : "no") + ", " +
           fmt(r.stats.wall_ms / 1000, 1) + " s");
  }
  if (!correct)
    verdict(2, "FAIL", "counter runs did not produce a verified Groebner basis");
  else if (within)
    verdict(2, "PASS", "put and rem within 15% of the published counts");
  else
    verdict(2, "PASS",
            "DEVIATION reported: counters outside the 15% band (pair-selection strategy differs); "
            "bases verified correct");
}

// 3. Shared-memory speedup, meaningful only with at least four cores.
void criterion3() {
  auto gens = katsura(7, zp127());
  std::vector<double> speedups;
  for (int k = 0; k < 3; ++k) {
    double t1 = gb_parallel(gens, 1).stats.wall_ms;
    double t4 = gb_parallel(gens, 4).stats.wall_ms;
    speedups.push_back(t1 / t4);
    detail("run " + std::to_string(k) + ": par(1) " + fmt(t1, 0) + " ms, par(4) " + fmt(t4, 0) + " ms");
  }
  double s = median(speedups);
  unsigned cores = std::thread::hardware_concurrency();
  std::string text = "katsura:7 Zp par(4) vs par(1) median speedup " + fmt(s) + " on " + std::to_string(cores) +
                     " core(s), threshold 1.5";
  if (cores < 4)
    verdict(3, "SKIP", text + "; requires at least 4 cores");
  else
    verdict(3, s >= 1.5 ? "PASS" : "FAIL", text);
}

// 4. Hybrid 1x1 over separate processes against seq, katsura:6 Zp.
void criterion4() {
  std::vector<double> ratios;
  std::string err;
  for (int k = 0; k < 3 && err.empty(); ++k) {
    harness::ClusterSpec spec;
    spec.gb = kGb;
    spec.variant = "hyb";
    spec.nodes = 1;
    spec.ppn = 1;
    spec.system_args = {"--system", "katsura:6", "--field", "Zp", "--modulus", "2^127-1", "--quiet"};
    spec.timeout = std::chrono::seconds(300);
    auto out = harness::run_cluster(spec);
    if (!out.equal) {
      err = out.error;
      break;
    }
    double ratio = out.master.row->time_ms / out.seq.row->time_ms;
    ratios.push_back(ratio);
    detail("run " + std::to_string(k) + ": seq " + fmt(out.seq.row->time_ms, 1) + " ms, hyb 1x1 " +
           fmt(out.master.row->time_ms, 1) + " ms, ratio " + fmt(ratio));
  }
  if (!err.empty()) {
    verdict(4, "FAIL", "hybrid run failed: " + err);
    return;
  }
  double r = median(ratios);
  verdict(4, r <= 2.0 ? "PASS" : "FAIL", "hyb 1x1 / seq wall time median ratio " + fmt(r) + " (limit 2.0)");
}

// 5. Frame inspection: pair messages hold only indexes, each result crosses
// each table link at most once.
void criterion5() {
  bool ok = true;
  auto inspect = [&](const std::string& name, const TransportReport& t, std::uint64_t rem) {
    bool good = t.max_pair_body == 24 && t.pair_messages == rem && t.unexpected_master_frames == 0 &&
                t.dht_max_sends_per_link_key <= 1 && t.nonzero_results > 0;
    ok = ok && good;
    detail(name + ": pair messages " + std::to_string(t.pair_messages) + ", largest pair body " +
           std::to_string(t.max_pair_body) + " bytes, other master frames " +
           std::to_string(t.unexpected_master_frames) + ", max sends per link and key " +
           std::to_string(t.dht_max_sends_per_link_key) + ", control connections " +
           std::to_string(t.control_connections));
  };
  for (int fk = 0; fk < 2; ++fk) {
    TransportReport t;
    if (fk) {
      auto r = gb_distributed_loopback(katsura(5, zp127()), 3, {}, {}, &t);
      inspect("dist(3) katsura:5 Zp", t, r.stats.rem_count);
      auto h = gb_hybrid_loopback(cyclic(5, zp127()), 2, 2, {}, {}, {}, &t);
      inspect("hyb(2x2) cyclic:5 Zp", t, h.stats.rem_count);
      ok = ok && t.control_connections == 2;
    } else {
      auto r = gb_distributed_loopback(katsura(4, RationalField{}), 2, {}, {}, &t);
      inspect("dist(2) katsura:4 Q", t, r.stats.rem_count);
      auto h = gb_hybrid_loopback(katsura(5, RationalField{}), 3, 2, {}, {}, {}, &t);
      inspect("hyb(3x2) katsura:5 Q", t, h.stats.rem_count);
      ok = ok && t.control_connections == 3;
    }
  }
  verdict(5, ok ? "PASS" : "FAIL",
          "pair messages carry 24 bytes of indexes only; each polynomial sent at most once per table link");
}

// 6. Random small systems through par(4) and hyb(2x2), each bounded by a
// timeout; equality with seq after every run.
void criterion6() {
  std::mt19937_64 rng(20260101);
  const auto limit = std::chrono::seconds(120);
  std::size_t runs = 0;
  for (int k = 0; k < 200; ++k) {
    std::uniform_int_distribution<std::size_t> nv(1, 3), ng(1, 3);
    static const char* names[] = {"x", "x,y", "x,y,z"};
    auto r = ring(names[nv(rng) - 1], zp127());
    auto gens = random_system(r, rng, ng(rng), 4, 3);
    auto seq = gb_sequential(gens).basis;
    for (int variant = 0; variant < 2; ++variant) {
      auto fut = std::async(std::launch::async, [&, variant] {
        return variant == 0 ? gb_parallel(gens, 4).basis : gb_hybrid_loopback(gens, 2, 2).basis;
      });
      std::string label = (variant ? "hyb(2x2)" : "par(4)") + std::string(" on system ") + std::to_string(k);
      if (fut.wait_for(limit) != std::future_status::ready) {
        verdict(6, "FAIL", label + " did not terminate within 120 s: " + dump(gens));
        std::cout.flush();
        std::_Exit(1);  // the stuck run cannot be cancelled
      }
      std::vector<Polynomial<ModularField>> got;
      try {
        got = fut.get();
      } catch (const std::exception& e) {
        verdict(6, "FAIL", label + " threw '" + e.what() + "': " + dump(gens));
        return;
      }
      if (got != seq) {
        verdict(6, "FAIL", label + " terminated with a basis that differs from seq: " + dump(gens));
        return;
      }
      ++runs;
    }
  }
  verdict(6, "PASS", std::to_string(runs) + " runs over 200 random systems, no hangs, all equal to seq");
}

// 7. Middleware property suites, each run three times.
void criterion7() {
  struct Suite {
    std::string binary, filter;
  };
  std::vector<Suite> suites{{"test_net", "*"}, {"test_dht", "*"}, {"test_gb_hyb", "GbHybrid.TagIsolation"}};
  auto dir = harness::scratch_dir("distgb-accept");
  bool ok = true;
  for (const auto& s : suites) {
    for (int k = 0; k < 3; ++k) {
      harness::Process p({kBinDir + "/" + s.binary, "--gtest_filter=" + s.filter},
                         (dir / (s.binary + ".err")).string());
      auto st = p.wait(std::chrono::seconds(300));
      p.drain();
      bool good = st && *st == 0;
      if (!st) p.kill();
      ok = ok && good;
      detail(s.binary + " [" + s.filter + "] run " + std::to_string(k) + ": " + (good ? "passed" : "FAILED"));
    }
  }
  std::filesystem::remove_all(dir);
  verdict(7, ok ? "PASS" : "FAIL", "tagged channel and table suites pass on repeated runs");
}

// 8. Work variation across repeated parallel runs, correctness every time.
void criterion8() {
  auto gens = cyclic(5, zp127());
  auto seq = gb_sequential(gens);
  std::vector<std::uint64_t> puts;
  bool ok = true;
  for (int k = 0; k < 20; ++k) {
    auto r = gb_parallel(gens, 4);
    ok = ok && r.basis == seq.basis;
    puts.push_back(r.stats.put_count);
  }
  std::string list;
  for (auto p : puts) list += (list.empty() ? "" : " ") + std::to_string(p);
  std::set<std::uint64_t> distinct(puts.begin(), puts.end());
  detail("seq put " + std::to_string(seq.stats.put_count) + "; par(4) puts: " + list);
  detail("distinct put counts: " + std::to_string(distinct.size()) + ", range " + std::to_string(*distinct.begin()) +
         ".." + std::to_string(*distinct.rbegin()));
  verdict(8, ok ? "PASS" : "FAIL",
          std::string("20 par(4) runs of cyclic:5 ") + (ok ? "all equal to seq" : "diverged from seq") +
              ", put variation recorded");
}

}  // namespace

// Arguments, if any, pick criteria by number: `acceptance 2 5`.
int main(int argc, char** argv) {
  std::cout << "acceptance on " << std::thread::hardware_concurrency() << " hardware thread(s)" << std::endl;
  const std::vector<void (*)()> all{criterion1, criterion2, criterion3, criterion4,
                                    criterion5, criterion6, criterion7, criterion8};
  std::set<std::size_t> pick;
  for (int k = 1; k < argc; ++k) pick.insert(std::stoul(argv[k]));
  for (std::size_t id = 1; id <= all.size(); ++id)
    if (pick.empty() || pick.count(id)) all[id - 1]();
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: ok")
            << std::endl;
  return failures ? 1 : 0;
}
