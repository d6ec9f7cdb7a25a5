#pragma once

// Sparse multivariate polynomials over an exact field. Terms are stored flat
// (one exponent block per term) in strictly descending term order.

#include "distgb/arith.hpp"

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace distgb {

using Exponent = std::uint16_t;

struct ExponentOverflow : ArithmeticError {
  ExponentOverflow() : ArithmeticError("exponent overflow") {}
};

struct RingMismatch : ConfigurationError {
  RingMismatch() : ConfigurationError("polynomials belong to different rings") {}
};

/// Owning exponent vector, used wherever a monomial outlives a polynomial
/// (pair lcms, leading-term queries).
class ExpVec {
 public:
  ExpVec() = default;
  explicit ExpVec(std::size_t n) : e_(n, 0) {}
  explicit ExpVec(std::span<const Exponent> e) : e_(e.begin(), e.end()) {}
  ExpVec(std::initializer_list<Exponent> e) : e_(e) {}

  std::size_t size() const { return e_.size(); }
  Exponent operator[](std::size_t i) const { return e_[i]; }
  Exponent& operator[](std::size_t i) { return e_[i]; }
  const Exponent* data() const { return e_.data(); }
  std::span<const Exponent> span() const { return e_; }

  std::uint32_t degree() const { return std::accumulate(e_.begin(), e_.end(), std::uint32_t{0}); }
  bool is_zero() const {
    return std::all_of(e_.begin(), e_.end(), [](Exponent x) { return x == 0; });
  }

  friend bool operator==(const ExpVec&, const ExpVec&) = default;

 private:
  std::vector<Exponent> e_;
};

namespace monomial {

inline bool divides(const Exponent* a, const Exponent* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] > b[i]) return false;
  return true;
}

inline bool divides(std::span<const Exponent> a, std::span<const Exponent> b) {
  return divides(a.data(), b.data(), a.size());
}

inline ExpVec lcm(std::span<const Exponent> a, std::span<const Exponent> b) {
  ExpVec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = std::max(a[i], b[i]);
  return r;
}

/// True when the two monomials share no variable.
inline bool coprime(std::span<const Exponent> a, std::span<const Exponent> b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0 && b[i] != 0) return false;
  return true;
}

/// a - b, precondition b | a.
inline ExpVec quotient(std::span<const Exponent> a, std::span<const Exponent> b) {
  ExpVec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    assert(a[i] >= b[i]);
    r[i] = static_cast<Exponent>(a[i] - b[i]);
  }
  return r;
}

inline void add_into(Exponent* out, const Exponent* a, const Exponent* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    unsigned s = unsigned(a[i]) + unsigned(b[i]);
    if (s > std::numeric_limits<Exponent>::max()) throw ExponentOverflow();
    out[i] = static_cast<Exponent>(s);
  }
}

/// Bit i set iff variable (i mod 64) occurs; a cheap divisibility pre-filter.
inline std::uint64_t support_mask(const Exponent* a, std::size_t n) {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (a[i]) m |= std::uint64_t{1} << (i & 63);
  return m;
}

}  // namespace monomial

enum class TermOrderKind : std::uint8_t { Lex, GradedLex, GradedRevLex };

/// Admissible total order on exponent vectors; variable 0 is the largest.
class TermOrder {
 public:
  constexpr TermOrder(TermOrderKind kind = TermOrderKind::GradedRevLex) : kind_(kind) {}  // NOLINT

  TermOrderKind kind() const { return kind_; }

  int compare(const Exponent* a, const Exponent* b, std::size_t n) const {
    switch (kind_) {
      case TermOrderKind::Lex:
        return lex(a, b, n);
      case TermOrderKind::GradedLex: {
        int d = degree_cmp(a, b, n);
        return d != 0 ? d : lex(a, b, n);
      }
      case TermOrderKind::GradedRevLex: {
        int d = degree_cmp(a, b, n);
        if (d != 0) return d;
        for (std::size_t i = n; i-- > 0;) {
          if (a[i] != b[i]) return a[i] > b[i] ? -1 : 1;
        }
        return 0;
      }
    }
    return 0;
  }

  int compare(std::span<const Exponent> a, std::span<const Exponent> b) const {
    return compare(a.data(), b.data(), a.size());
  }

  static TermOrder parse(std::string_view name) {
    name = detail::trim(name);
    if (name == "lex") return TermOrderKind::Lex;
    if (name == "grlex") return TermOrderKind::GradedLex;
    if (name == "grevlex") return TermOrderKind::GradedRevLex;
    throw ParseError("unknown term order '" + std::string(name) + "'");
  }

  std::string to_string() const {
    switch (kind_) {
      case TermOrderKind::Lex: return "lex";
      case TermOrderKind::GradedLex: return "grlex";
      case TermOrderKind::GradedRevLex: return "grevlex";
    }
    return "?";
  }

  friend bool operator==(const TermOrder&, const TermOrder&) = default;

 private:
  static int lex(const Exponent* a, const Exponent* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      if (a[i] != b[i]) return a[i] < b[i] ? -1 : 1;
    return 0;
  }
  static int degree_cmp(const Exponent* a, const Exponent* b, std::size_t n) {
    unsigned da = 0, db = 0;
    for (std::size_t i = 0; i < n; ++i) {
      da += a[i];
      db += b[i];
    }
    return da == db ? 0 : (da < db ? -1 : 1);
  }

  TermOrderKind kind_;
};

/// Polynomial ring context: variables, coefficient field and term order.
template <CoefficientField F>
class PolyRing {
 public:
  using Field = F;
  using Coeff = typename F::Element;

  PolyRing(std::vector<std::string> names, F field, TermOrder order = {})
      : names_(std::move(names)), field_(std::move(field)), order_(order) {
    if (names_.empty()) throw ConfigurationError("a polynomial ring needs at least one variable");
  }

  std::size_t nvars() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const F& field() const { return field_; }
  const TermOrder& order() const { return order_; }

  /// Header lines of the text format (`vars:`, `field:`, `order:`).
  std::string descriptor() const {
    std::string s = "vars: ";
    for (std::size_t i = 0; i < names_.size(); ++i) s += (i ? "," : "") + names_[i];
    s += "\nfield: " + field_.descriptor().to_string() + "\norder: " + order_.to_string() + "\n";
    return s;
  }

  friend bool operator==(const PolyRing& a, const PolyRing& b) {
    return a.names_ == b.names_ && a.field_ == b.field_ && a.order_ == b.order_;
  }

 private:
  std::vector<std::string> names_;
  F field_;
  TermOrder order_;
};

template <CoefficientField F>
using RingPtr = std::shared_ptr<const PolyRing<F>>;

template <CoefficientField F>
RingPtr<F> make_ring(std::vector<std::string> names, F field, TermOrder order = {}) {
  return std::make_shared<const PolyRing<F>>(std::move(names), std::move(field), order);
}

namespace detail {
inline bool is_negative(const Rational& c) { return sgn(c.value()) < 0; }
inline bool is_negative(const ModInt&) { return false; }
}  // namespace detail

template <CoefficientField F>
class Polynomial {
 public:
  using Coeff = typename F::Element;

  explicit Polynomial(RingPtr<F> ring) : ring_(std::move(ring)) {}

  static Polynomial constant(RingPtr<F> ring, const Coeff& c) {
    Polynomial p(std::move(ring));
    if (!c.is_zero()) {
      p.exps_.assign(p.nvars(), 0);
      p.coeffs_.push_back(c);
    }
    return p;
  }

  static Polynomial variable(RingPtr<F> ring, std::size_t index, Exponent power = 1) {
    Polynomial p(std::move(ring));
    if (index >= p.nvars()) throw std::out_of_range("variable index out of range");
    p.exps_.assign(p.nvars(), 0);
    p.exps_[index] = power;
    p.coeffs_.push_back(p.ring_->field().one());
    return p;
  }

  /// Terms in any order; like terms are combined and zeros dropped.
  static Polynomial from_terms(RingPtr<F> ring, std::vector<std::pair<ExpVec, Coeff>> terms) {
    const std::size_t n = ring->nvars();
    const TermOrder ord = ring->order();
    for (const auto& t : terms)
      if (t.first.size() != n) throw ConfigurationError("exponent vector length does not match ring");
    std::sort(terms.begin(), terms.end(),
              [&](const auto& a, const auto& b) { return ord.compare(a.first.data(), b.first.data(), n) > 0; });
    Polynomial p(std::move(ring));
    for (std::size_t i = 0; i < terms.size();) {
      Coeff c = terms[i].second;
      std::size_t j = i + 1;
      for (; j < terms.size() && terms[j].first == terms[i].first; ++j) c = c + terms[j].second;
      if (!c.is_zero()) p.push_term(terms[i].first.data(), std::move(c));
      i = j;
    }
    return p;
  }

  const RingPtr<F>& ring() const { return ring_; }
  std::size_t nvars() const { return ring_->nvars(); }
  std::size_t size() const { return coeffs_.size(); }
  bool is_zero() const { return coeffs_.empty(); }
  bool is_constant() const {
    return size() == 1 && std::all_of(exps_.begin(), exps_.end(), [](Exponent e) { return e == 0; });
  }
  bool is_one() const { return is_constant() && coeffs_[0].is_one(); }

  std::span<const Exponent> exponent(std::size_t i) const { return {exps_.data() + i * nvars(), nvars()}; }
  const Exponent* exponent_ptr(std::size_t i) const { return exps_.data() + i * nvars(); }
  const Coeff& coefficient(std::size_t i) const { return coeffs_[i]; }

  /// Precondition: nonzero.
  std::span<const Exponent> lead_exponent() const {
    assert(!is_zero());
    return exponent(0);
  }
  const Coeff& lead_coefficient() const {
    assert(!is_zero());
    return coeffs_[0];
  }
  /// The order-maximal term, or nothing for the zero polynomial.
  std::optional<std::pair<ExpVec, Coeff>> leading() const {
    if (is_zero()) return std::nullopt;
    return std::pair{ExpVec(lead_exponent()), coeffs_[0]};
  }

  /// Appends a term; the caller keeps terms strictly descending and nonzero.
  void push_term(const Exponent* e, Coeff c) {
    assert(!c.is_zero());
    assert(is_zero() || ring_->order().compare(exponent_ptr(size() - 1), e, nvars()) > 0);
    exps_.insert(exps_.end(), e, e + nvars());
    coeffs_.push_back(std::move(c));
  }
  void reserve(std::size_t terms) {
    exps_.reserve(terms * nvars());
    coeffs_.reserve(terms);
  }

  Polynomial operator+(const Polynomial& q) const { return combine(q, false); }
  Polynomial operator-(const Polynomial& q) const { return combine(q, true); }
  Polynomial operator-() const {
    Polynomial r(*this);
    for (auto& c : r.coeffs_) c = -c;
    return r;
  }

  Polynomial operator*(const Polynomial& q) const {
    check_ring(q);
    Polynomial acc(ring_);
    for (std::size_t i = 0; i < size(); ++i) acc = acc + q.multiply_term(coeffs_[i], exponent(i));
    return acc;
  }

  Polynomial scale(const Coeff& c) const {
    if (c.is_zero()) return Polynomial(ring_);
    Polynomial r(*this);
    for (auto& x : r.coeffs_) x = x * c;
    return r;
  }

  /// c * x^m * this. Multiplying by a monomial preserves term order.
  Polynomial multiply_term(const Coeff& c, std::span<const Exponent> m) const {
    Polynomial r(ring_);
    if (c.is_zero() || is_zero()) return r;
    const std::size_t n = nvars();
    r.exps_.resize(exps_.size());
    for (std::size_t i = 0; i < size(); ++i)
      monomial::add_into(r.exps_.data() + i * n, exponent_ptr(i), m.data(), n);
    r.coeffs_.reserve(size());
    for (const auto& x : coeffs_) r.coeffs_.push_back(x * c);
    return r;
  }

  /// Leading coefficient 1; zero stays zero.
  Polynomial monic() const {
    if (is_zero() || coeffs_[0].is_one()) return *this;
    return scale(coeffs_[0].inverse());
  }

  bool same_ring(const Polynomial& q) const { return ring_ == q.ring_ || *ring_ == *q.ring_; }
  void check_ring(const Polynomial& q) const {
    if (!same_ring(q)) throw RingMismatch();
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.same_ring(b) && a.exps_ == b.exps_ && a.coeffs_ == b.coeffs_;
  }

  std::string to_string() const {
    if (is_zero()) return "0";
    std::string out;
    const auto& names = ring_->names();
    for (std::size_t i = 0; i < size(); ++i) {
      Coeff c = coeffs_[i];
      bool neg = detail::is_negative(c);
      if (neg) c = -c;
      if (i == 0) {
        if (neg) out += "-";
      } else {
        out += neg ? " - " : " + ";
      }
      auto e = exponent(i);
      bool has_vars = std::any_of(e.begin(), e.end(), [](Exponent x) { return x != 0; });
      bool first = true;
      if (!c.is_one() || !has_vars) {
        out += c.to_string();
        first = false;
      }
      for (std::size_t v = 0; v < e.size(); ++v) {
        if (!e[v]) continue;
        if (!first) out += "*";
        out += names[v];
        if (e[v] > 1) out += "^" + std::to_string(e[v]);
        first = false;
      }
    }
    return out;
  }

 private:
  Polynomial combine(const Polynomial& q, bool subtract) const {
    check_ring(q);
    const std::size_t n = nvars();
    const TermOrder& ord = ring_->order();
    Polynomial r(ring_);
    r.reserve(size() + q.size());
    std::size_t i = 0, j = 0;
    while (i < size() && j < q.size()) {
      int c = ord.compare(exponent_ptr(i), q.exponent_ptr(j), n);
      if (c > 0) {
        r.push_term(exponent_ptr(i), coeffs_[i]);
        ++i;
      } else if (c < 0) {
        r.push_term(q.exponent_ptr(j), subtract ? -q.coeffs_[j] : q.coeffs_[j]);
        ++j;
      } else {
        Coeff s = subtract ? coeffs_[i] - q.coeffs_[j] : coeffs_[i] + q.coeffs_[j];
        if (!s.is_zero()) r.push_term(exponent_ptr(i), std::move(s));
        ++i;
        ++j;
      }
    }
    for (; i < size(); ++i) r.push_term(exponent_ptr(i), coeffs_[i]);
    for (; j < q.size(); ++j) r.push_term(q.exponent_ptr(j), subtract ? -q.coeffs_[j] : q.coeffs_[j]);
    return r;
  }

  RingPtr<F> ring_;
  std::vector<Exponent> exps_;
  std::vector<Coeff> coeffs_;
};

template <CoefficientField F>
using PolyPtr = std::shared_ptr<const Polynomial<F>>;

template <CoefficientField F>
Polynomial<F> make_monic(const Polynomial<F>& p) {
  return p.monic();
}

struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// S-polynomial with monic cofactors:
///   (L/lt(p)) * p / lc(p) - (L/lt(q)) * q / lc(q),  L = lcm(lt(p), lt(q)).
template <CoefficientField F>
Polynomial<F> s_polynomial(const Polynomial<F>& p, const Polynomial<F>& q) {
  if (p.is_zero() || q.is_zero()) throw PreconditionError("S-polynomial of a zero polynomial");
  p.check_ring(q);
  ExpVec l = monomial::lcm(p.lead_exponent(), q.lead_exponent());
  ExpVec up = monomial::quotient(l.span(), p.lead_exponent());
  ExpVec uq = monomial::quotient(l.span(), q.lead_exponent());
  return p.multiply_term(p.lead_coefficient().inverse(), up.span()) -
         q.multiply_term(q.lead_coefficient().inverse(), uq.span());
}

}  // namespace distgb
