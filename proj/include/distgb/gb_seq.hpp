#pragma once

// Sequential Buchberger driver and reduced Groebner basis post-processing.
// The sequential result is the correctness oracle for every other variant.

#include "distgb/pairs.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

namespace distgb {

struct GBStats {
  std::uint64_t put_count = 0;
  std::uint64_t rem_count = 0;
  std::uint64_t zero_reductions = 0;
  std::uint64_t restarts = 0;
  double wall_ms = 0;
  std::size_t nodes = 0;
  std::size_t threads_per_node = 0;
};

template <CoefficientField F>
struct GBResult {
  std::vector<Polynomial<F>> basis;
  GBStats stats;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Drops zeros, makes monic and removes duplicates (first occurrence kept).
/// Throws RingMismatch for mixed rings.
template <CoefficientField F>
std::vector<Polynomial<F>> preprocess_generators(const std::vector<Polynomial<F>>& gens) {
  std::vector<Polynomial<F>> out;
  for (const auto& g : gens) {
    gens.front().check_ring(g);
    if (g.is_zero()) continue;
    Polynomial<F> m = g.monic();
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(std::move(m));
  }
  return out;
}

/// Sorts descending by head term (then by the remaining terms, so that the
/// order is total on distinct polynomials).
template <CoefficientField F>
void sort_by_head_descending(std::vector<Polynomial<F>>& polys) {
  std::sort(polys.begin(), polys.end(), [](const Polynomial<F>& a, const Polynomial<F>& b) {
    const TermOrder& ord = a.ring()->order();
    const std::size_t n = a.nvars();
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
      int c = ord.compare(a.exponent_ptr(k), b.exponent_ptr(k), n);
      if (c != 0) return c > 0;
    }
    return a.size() > b.size();
  });
}

/// Minimal, fully inter-reduced, monic basis sorted descending by head term.
/// Unique for a given ideal and term order when the input is a Groebner basis.
template <CoefficientField F>
std::vector<Polynomial<F>> reduced_gb(const std::vector<Polynomial<F>>& basis) {
  std::vector<Polynomial<F>> g;
  for (const auto& p : basis)
    if (!p.is_zero()) g.push_back(p.monic());
  if (g.empty()) return g;
  const std::size_t n = g.front().nvars();
  // Minimality: drop polynomials whose head is divisible by another head;
  // among equal heads keep the first.
  std::vector<Polynomial<F>> minimal;
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool redundant = false;
    for (std::size_t j = 0; j < g.size() && !redundant; ++j) {
      if (i == j) continue;
      const Exponent* hi = g[i].exponent_ptr(0);
      const Exponent* hj = g[j].exponent_ptr(0);
      if (!monomial::divides(hj, hi, n)) continue;
      bool equal_heads = std::equal(hi, hi + n, hj);
      redundant = !equal_heads || j < i;
    }
    if (!redundant) minimal.push_back(g[i]);
  }
  // Inter-reduction: each element against all others. Heads stay fixed since
  // no head divides another.
  std::vector<Polynomial<F>> reduced;
  reduced.reserve(minimal.size());
  for (std::size_t i = 0; i < minimal.size(); ++i) {
    std::vector<Polynomial<F>> others;
    for (std::size_t j = 0; j < minimal.size(); ++j)
      if (j != i) others.push_back(minimal[j]);
    reduced.push_back(normal_form(others, minimal[i]).monic());
  }
  sort_by_head_descending(reduced);
  return reduced;
}

/// Buchberger's algorithm, one thread. Returns the reduced Groebner basis.
template <CoefficientField F>
GBResult<F> gb_sequential(const std::vector<Polynomial<F>>& gens, PairListOptions options = {}) {
  Stopwatch clock;
  GBResult<F> out;
  auto input = preprocess_generators(gens);
  if (input.empty()) {
    out.stats.wall_ms = clock.elapsed_ms();
    return out;
  }
  PairList<F> pairs(input.front().ring(), options);
  for (const auto& g : input) pairs.put(g);
  std::vector<PolyPtr<F>> basis = pairs.polynomials();
  while (auto pair = pairs.remove_next()) {
    auto s = s_polynomial(*basis[pair->i], *basis[pair->j]);
    auto h = normal_form(basis, s);
    if (h.is_zero()) ++out.stats.zero_reductions;
    for (auto& added : pairs.record(*pair, std::move(h))) basis.push_back(added.poly);
  }
  std::vector<Polynomial<F>> full;
  for (const auto& p : pairs.polynomials()) full.push_back(*p);
  out.basis = reduced_gb(full);
  auto c = pairs.counters();
  out.stats.put_count = c.put;
  out.stats.rem_count = c.rem;
  out.stats.wall_ms = clock.elapsed_ms();
  return out;
}

/// Every pairwise S-polynomial of `basis` reduces to zero against it.
/// Skipped pairs: coprime head terms, and pairs (i, j) with some k whose head
/// divides m = lcm(i, j) while lcm(i, k) and lcm(k, j) are both proper
/// divisors of m. Such an S-polynomial is a combination of two with smaller
/// lcm, so by induction on m it has a representation below m.
template <CoefficientField F>
bool is_groebner_basis(const std::vector<Polynomial<F>>& basis) {
  const std::size_t n = basis.size();
  if (n == 0) return true;
  const std::size_t nv = basis.front().nvars();
  auto chain = [&](std::size_t i, std::size_t j, const ExpVec& m) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || k == j) continue;
      auto lk = basis[k].lead_exponent();
      if (!monomial::divides(lk.data(), m.span().data(), nv)) continue;
      if (!(monomial::lcm(basis[i].lead_exponent(), lk) == m) && !(monomial::lcm(lk, basis[j].lead_exponent()) == m))
        return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      auto li = basis[i].lead_exponent(), lj = basis[j].lead_exponent();
      if (monomial::coprime(li, lj)) continue;
      if (chain(i, j, monomial::lcm(li, lj))) continue;
      if (!normal_form(basis, s_polynomial(basis[i], basis[j])).is_zero()) return false;
    }
  return true;
}

/// Every generator reduces to zero against `basis`.
template <CoefficientField F>
bool generates_ideal_of(const std::vector<Polynomial<F>>& basis, const std::vector<Polynomial<F>>& gens) {
  return std::all_of(gens.begin(), gens.end(), [&](const auto& g) { return normal_form(basis, g).is_zero(); });
}

}  // namespace distgb
