#pragma once

// Standard benchmark families.

#include "distgb/poly.hpp"

#include <string>
#include <vector>

namespace distgb {

enum class SystemFamily { Katsura, Cyclic };

/// Katsura-n: n+1 unknowns u0..un. The sum constraint
/// u0 + 2 (u1 + ... + un) - 1 comes first, followed for m = 0..n-1 by
/// sum_{l=-n..n} u_|l| u_|m-l| - u_m (indices above n are zero).
template <CoefficientField F>
std::vector<Polynomial<F>> katsura(std::size_t n, F field, TermOrder order = {}) {
  if (n < 2) throw ConfigurationError("katsura needs n >= 2");
  std::vector<std::string> names;
  for (std::size_t i = 0; i <= n; ++i) names.push_back("u" + std::to_string(i));
  auto ring = make_ring(std::move(names), std::move(field), order);
  const F& f = ring->field();
  using Poly = Polynomial<F>;
  auto u = [&](long k) -> Poly {
    std::size_t a = static_cast<std::size_t>(k < 0 ? -k : k);
    if (a > n) return Poly(ring);
    return Poly::variable(ring, a);
  };
  std::vector<Poly> out;
  Poly lin = Poly::constant(ring, -f.one());
  for (long l = -long(n); l <= long(n); ++l) lin = lin + u(l);
  out.push_back(lin);
  for (long m = 0; m < long(n); ++m) {
    Poly eq = -u(m);
    for (long l = -long(n); l <= long(n); ++l) eq = eq + u(l) * u(m - l);
    out.push_back(eq);
  }
  return out;
}

/// Cyclic-n: sum_i prod_{k<d} x_{(i+k) mod n} for d = 1..n-1, and
/// x0 x1 ... x_{n-1} - 1.
template <CoefficientField F>
std::vector<Polynomial<F>> cyclic(std::size_t n, F field, TermOrder order = {}) {
  if (n < 2) throw ConfigurationError("cyclic needs n >= 2");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("x" + std::to_string(i));
  auto ring = make_ring(std::move(names), std::move(field), order);
  using Poly = Polynomial<F>;
  std::vector<Poly> out;
  for (std::size_t d = 1; d < n; ++d) {
    Poly eq(ring);
    for (std::size_t i = 0; i < n; ++i) {
      Poly t = Poly::constant(ring, ring->field().one());
      for (std::size_t k = 0; k < d; ++k) t = t * Poly::variable(ring, (i + k) % n);
      eq = eq + t;
    }
    out.push_back(eq);
  }
  Poly prod = Poly::constant(ring, ring->field().one());
  for (std::size_t i = 0; i < n; ++i) prod = prod * Poly::variable(ring, i);
  out.push_back(prod - Poly::constant(ring, ring->field().one()));
  return out;
}

template <CoefficientField F>
std::vector<Polynomial<F>> generate_system(SystemFamily family, std::size_t n, F field, TermOrder order = {}) {
  return family == SystemFamily::Katsura ? katsura(n, std::move(field), order) : cyclic(n, std::move(field), order);
}

/// "katsura:N" or "cyclic:N".
inline std::pair<SystemFamily, std::size_t> parse_system_name(std::string_view spec) {
  auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw ParseError("system must be NAME:N");
  std::string_view name = spec.substr(0, colon);
  std::size_t n = 0;
  try {
    n = std::stoul(std::string(spec.substr(colon + 1)));
  } catch (const std::exception&) {
    throw ParseError("system size must be an integer");
  }
  if (name == "katsura") return {SystemFamily::Katsura, n};
  if (name == "cyclic") return {SystemFamily::Cyclic, n};
  throw ParseError("unknown system family '" + std::string(name) + "'");
}

}  // namespace distgb
