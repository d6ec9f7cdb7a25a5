#pragma once

#include "distgb/gb_seq.hpp"
#include "distgb/poly_io.hpp"
#include "distgb/systems.hpp"

#include <random>
#include <string>
#include <vector>

namespace distgb::testing {

inline const BigInt& mersenne127() {
  static const BigInt m = parse_modulus("2^127-1");
  return m;
}

inline ModularField zp127() { return ModularField(mersenne127()); }

template <CoefficientField F>
RingPtr<F> ring(const std::string& vars, F field, TermOrder order = {}) {
  std::vector<std::string> names;
  std::size_t start = 0;
  for (;;) {
    auto comma = vars.find(',', start);
    names.push_back(vars.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return make_ring(std::move(names), std::move(field), order);
}

template <CoefficientField F>
Polynomial<F> P(const RingPtr<F>& r, std::string_view text) {
  return parse_polynomial(r, text);
}

template <CoefficientField F>
std::vector<Polynomial<F>> Ps(const RingPtr<F>& r, std::initializer_list<std::string_view> texts) {
  std::vector<Polynomial<F>> out;
  for (auto t : texts) out.push_back(parse_polynomial(r, t));
  return out;
}

/// Random coefficient: small rationals, or small values mod p. Zero is
/// possible so that cancellation paths are exercised.
inline Rational random_coeff(const RationalField&, std::mt19937_64& rng) {
  std::uniform_int_distribution<long> num(-9, 9), den(1, 5);
  return Rational(BigInt(num(rng)), BigInt(den(rng)));
}

inline ModInt random_coeff(const ModularField& f, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3);
  if (kind(rng) == 0) {
    // A full-width residue.
    BigInt v = 0;
    for (int i = 0; i < 2; ++i) v = (v << 64) + BigInt(std::to_string(rng()));
    return f.from_integer(v);
  }
  std::uniform_int_distribution<long> small(-9, 9);
  return f.from_integer(BigInt(small(rng)));
}

template <CoefficientField F>
Polynomial<F> random_poly(const RingPtr<F>& r, std::mt19937_64& rng, std::size_t max_terms, unsigned max_deg) {
  std::uniform_int_distribution<std::size_t> nterms(0, max_terms);
  std::uniform_int_distribution<unsigned> deg(0, max_deg);
  std::vector<std::pair<ExpVec, typename F::Element>> terms;
  std::size_t count = nterms(rng);
  for (std::size_t t = 0; t < count; ++t) {
    ExpVec e(r->nvars());
    unsigned budget = deg(rng);
    for (unsigned k = 0; k < budget; ++k) e[rng() % r->nvars()] += 1;
    terms.emplace_back(std::move(e), random_coeff(r->field(), rng));
  }
  return Polynomial<F>::from_terms(r, std::move(terms));
}

/// Random system of up to `ngens` nonzero generators.
template <CoefficientField F>
std::vector<Polynomial<F>> random_system(const RingPtr<F>& r, std::mt19937_64& rng, std::size_t ngens,
                                         std::size_t max_terms, unsigned max_deg) {
  std::vector<Polynomial<F>> out;
  while (out.size() < ngens) {
    auto p = random_poly(r, rng, max_terms, max_deg);
    if (!p.is_zero()) out.push_back(std::move(p));
  }
  return out;
}

template <CoefficientField F>
std::string dump(const std::vector<Polynomial<F>>& polys) {
  std::string s;
  for (const auto& p : polys) s += p.to_string() + "\n";
  return s;
}

inline std::string golden_path(const std::string& name) { return std::string(DISTGB_GOLDEN_DIR) + "/" + name; }

}  // namespace distgb::testing
