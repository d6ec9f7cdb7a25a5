#pragma once

// Normal forms: full reduction of every term against the head terms of a
// basis, choosing the first divisor in basis-list order. The restartable
// variant tolerates a basis that grows concurrently.

#include "distgb/poly.hpp"

#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace distgb {

/// An atomic (version, contents) pair of an append-only basis.
template <CoefficientField F>
struct BasisSnapshot {
  std::uint64_t version = 0;
  std::shared_ptr<const std::vector<PolyPtr<F>>> polys;

  std::size_t size() const { return polys ? polys->size() : 0; }
};

/// A concurrently growing basis. `version()` must be cheap; it is polled
/// after every reduction step.
template <class V, class F>
concept VersionedBasisView = CoefficientField<F> && requires(const V& v) {
  { v.version() } -> std::convertible_to<std::uint64_t>;
  { v.snapshot() } -> std::same_as<BasisSnapshot<F>>;
};

/// A view that never changes.
template <CoefficientField F>
class FixedBasisView {
 public:
  explicit FixedBasisView(std::vector<PolyPtr<F>> polys)
      : snap_{0, std::make_shared<const std::vector<PolyPtr<F>>>(std::move(polys))} {}
  std::uint64_t version() const { return 0; }
  BasisSnapshot<F> snapshot() const { return snap_; }

 private:
  BasisSnapshot<F> snap_;
};

/// One elimination: remainder -= coeff * x^shift * basis[basis_index].
template <CoefficientField F>
struct RecordedStep {
  std::size_t basis_index;
  typename F::Element coeff;
  ExpVec shift;
};

struct ReductionStats {
  std::uint64_t steps = 0;
  std::uint64_t restarts = 0;
};

namespace detail {

/// Working remainder: terms [pos, size) are still to be examined. Two
/// buffers are swapped so coefficient storage is reused across steps.
template <CoefficientField F>
class Remainder {
 public:
  using Coeff = typename F::Element;

  /// Per-divisor data computed once per basis.
  struct Prepared {
    Coeff lead_inverse;
    explicit Prepared(const Polynomial<F>& g) : lead_inverse(g.lead_coefficient().inverse()) {}
  };

  explicit Remainder(const Polynomial<F>& p) : n_(p.nvars()), ord_(p.ring()->order()), shifted_(n_) {
    cur_.n = next_.n = n_;
    cur_.assign(p);
  }

  bool done() const { return pos_ >= cur_.size; }
  const Exponent* head_exp() const { return cur_.exp(pos_); }

  /// Removes the irreducible head and returns its coefficient.
  Coeff take_head() { return std::move(cur_.coeffs[pos_++]); }

  /// remainder -= c * x^shift * g with c chosen to cancel the head. If
  /// `multiplier` is given, c is stored there.
  void eliminate(const Polynomial<F>& g, const Prepared& prep, const Exponent* shift, Coeff* multiplier) {
    Coeff c = cur_.coeffs[pos_] * prep.lead_inverse;
    next_.size = 0;
    Exponent* tmp = shifted_.data();
    std::size_t i = pos_ + 1, j = 1;
    const std::size_t qn = g.size();
    if (j < qn) monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
    while (i < cur_.size && j < qn) {
      int cmp = ord_.compare(cur_.exp(i), tmp, n_);
      if (cmp > 0) {
        next_.push(cur_.exp(i), std::move(cur_.coeffs[i]));
        ++i;
        continue;
      }
      if (cmp < 0) {
        next_.push(tmp, -(c * g.coefficient(j)));
      } else {
        Coeff& s = cur_.coeffs[i];
        s -= c * g.coefficient(j);
        if (!s.is_zero()) next_.push(tmp, std::move(s));
        ++i;
      }
      if (++j < qn) monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
    }
    for (; i < cur_.size; ++i) next_.push(cur_.exp(i), std::move(cur_.coeffs[i]));
    for (; j < qn; ++j) {
      monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
      next_.push(tmp, -(c * g.coefficient(j)));
    }
    std::swap(cur_, next_);
    pos_ = 0;
    if (multiplier) *multiplier = std::move(c);
  }

 private:
  template <class C>
  struct Buffer {
    std::size_t n = 0;
    std::vector<Exponent> exps;
    std::vector<C> coeffs;
    std::size_t size = 0;

    const Exponent* exp(std::size_t i) const { return exps.data() + i * n; }

    void assign(const Polynomial<F>& p) {
      exps.resize(p.size() * n);
      coeffs.clear();
      for (std::size_t i = 0; i < p.size(); ++i) {
        std::copy_n(p.exponent_ptr(i), n, exps.data() + i * n);
        coeffs.push_back(p.coefficient(i));
      }
      size = p.size();
    }

    template <class V>
    void push(const Exponent* e, V&& c) {
      if (size < coeffs.size()) {
        coeffs[size] = std::forward<V>(c);
      } else {
        coeffs.push_back(std::forward<V>(c));
        exps.resize(coeffs.size() * n);
      }
      std::copy_n(e, n, exps.data() + size * n);
      ++size;
    }
  };

  std::size_t n_;
  TermOrder ord_;
  std::vector<Exponent> shifted_;
  Buffer<Coeff> cur_, next_;
  std::size_t pos_ = 0;
};

/// Over Q the remainder is kept as scale * R with R an integer polynomial,
/// and each divisor as gamma * G with G primitive. Elimination is then
/// fraction-free: R <- a R - b x^s G. The value tracked is exactly the one
/// the rational computation would produce.
template <>
class Remainder<RationalField> {
 public:
  using Coeff = Rational;

  struct Prepared {
    mpq_class gamma;
    std::vector<mpz_class> ints;
    explicit Prepared(const Polynomial<RationalField>& g) {
      mpz_class den = 1;
      for (std::size_t i = 0; i < g.size(); ++i) mpz_lcm(den.get_mpz_t(), den.get_mpz_t(),
                                                         g.coefficient(i).value().get_den_mpz_t());
      ints.reserve(g.size());
      mpz_class content = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const mpq_class& q = g.coefficient(i).value();
        mpz_class v = den / q.get_den() * q.get_num();
        mpz_gcd(content.get_mpz_t(), content.get_mpz_t(), v.get_mpz_t());
        ints.push_back(std::move(v));
      }
      for (auto& v : ints) mpz_divexact(v.get_mpz_t(), v.get_mpz_t(), content.get_mpz_t());
      gamma = mpq_class(content, den);
      gamma.canonicalize();
    }
  };

  explicit Remainder(const Polynomial<RationalField>& p) : n_(p.nvars()), ord_(p.ring()->order()), shifted_(n_) {
    Prepared prep(p);
    cur_.n = next_.n = n_;
    cur_.exps.assign(p.exponent_ptr(0), p.exponent_ptr(0) + p.size() * n_);
    cur_.coeffs = std::move(prep.ints);
    cur_.size = p.size();
    scale_ = prep.gamma;
  }

  bool done() const { return pos_ >= cur_.size; }
  const Exponent* head_exp() const { return cur_.exp(pos_); }

  Coeff take_head() {
    mpq_class v(cur_.coeffs[pos_++]);
    v *= scale_;
    return Rational(std::move(v));
  }

  void eliminate(const Polynomial<RationalField>& g, const Prepared& prep, const Exponent* shift, Coeff* multiplier) {
    const auto& G = prep.ints;
    mpz_class d, a, b;
    mpz_gcd(d.get_mpz_t(), G[0].get_mpz_t(), cur_.coeffs[pos_].get_mpz_t());
    mpz_divexact(a.get_mpz_t(), G[0].get_mpz_t(), d.get_mpz_t());
    mpz_divexact(b.get_mpz_t(), cur_.coeffs[pos_].get_mpz_t(), d.get_mpz_t());
    if (sgn(a) < 0) {
      a = -a;
      b = -b;
    }
    if (multiplier) {
      // c = scale * b / (a * gamma)
      mpq_class c(b, a);
      c.canonicalize();
      c *= scale_;
      c /= prep.gamma;
      *multiplier = Rational(std::move(c));
    }
    const bool unit = a == 1;
    next_.size = 0;
    Exponent* tmp = shifted_.data();
    std::size_t i = pos_ + 1, j = 1;
    const std::size_t qn = G.size();
    if (j < qn) monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
    mpz_class& t = scratch_;
    while (i < cur_.size && j < qn) {
      int cmp = ord_.compare(cur_.exp(i), tmp, n_);
      if (cmp > 0) {
        if (!unit) cur_.coeffs[i] *= a;
        next_.push(cur_.exp(i), cur_.coeffs[i]);
        ++i;
        continue;
      }
      if (cmp < 0) {
        t = b * G[j];
        mpz_neg(t.get_mpz_t(), t.get_mpz_t());
        next_.push(tmp, t);
      } else {
        mpz_class& s = cur_.coeffs[i];
        if (!unit) s *= a;
        mpz_submul(s.get_mpz_t(), b.get_mpz_t(), G[j].get_mpz_t());
        if (sgn(s) != 0) next_.push(tmp, s);
        ++i;
      }
      if (++j < qn) monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
    }
    for (; i < cur_.size; ++i) {
      if (!unit) cur_.coeffs[i] *= a;
      next_.push(cur_.exp(i), cur_.coeffs[i]);
    }
    for (; j < qn; ++j) {
      monomial::add_into(tmp, g.exponent_ptr(j), shift, n_);
      t = b * G[j];
      mpz_neg(t.get_mpz_t(), t.get_mpz_t());
      next_.push(tmp, t);
    }
    std::swap(cur_, next_);
    pos_ = 0;
    if (!unit) scale_ /= a;
    if (++steps_ % 4 == 0) remove_content();
  }

 private:
  void remove_content() {
    mpz_class& g = scratch_;
    g = 0;
    for (std::size_t i = pos_; i < cur_.size; ++i) {
      mpz_gcd(g.get_mpz_t(), g.get_mpz_t(), cur_.coeffs[i].get_mpz_t());
      if (g == 1) return;
    }
    if (g == 0) return;
    for (std::size_t i = pos_; i < cur_.size; ++i)
      mpz_divexact(cur_.coeffs[i].get_mpz_t(), cur_.coeffs[i].get_mpz_t(), g.get_mpz_t());
    scale_ *= g;
  }

  struct Buffer {
    std::size_t n = 0;
    std::vector<Exponent> exps;
    std::vector<mpz_class> coeffs;
    std::size_t size = 0;

    const Exponent* exp(std::size_t i) const { return exps.data() + i * n; }

    // Swaps the value in, so the source keeps a recycled allocation.
    void push(const Exponent* e, mpz_class& c) {
      if (size < coeffs.size()) {
        mpz_swap(coeffs[size].get_mpz_t(), c.get_mpz_t());
      } else {
        coeffs.emplace_back();
        mpz_swap(coeffs.back().get_mpz_t(), c.get_mpz_t());
        exps.resize(coeffs.size() * n);
      }
      std::copy_n(e, n, exps.data() + size * n);
      ++size;
    }
  };

  std::size_t n_;
  TermOrder ord_;
  std::vector<Exponent> shifted_;
  Buffer cur_, next_;
  mpq_class scale_;
  mpz_class scratch_;
  std::size_t pos_ = 0;
  std::uint64_t steps_ = 0;
};

/// Head-term lookup over a basis, in list order.
template <CoefficientField F>
class DivisorTable {
 public:
  struct Entry {
    const Polynomial<F>* poly;
    const Exponent* lead;
    std::uint64_t mask;
    std::size_t index;
    mutable std::optional<typename Remainder<F>::Prepared> prepared;  // on first use

    const typename Remainder<F>::Prepared& prep() const {
      if (!prepared) prepared.emplace(*poly);
      return *prepared;
    }
  };

  template <class It>
  DivisorTable(It first, It last, std::size_t nvars) : n_(nvars) {
    std::size_t idx = 0;
    for (; first != last; ++first, ++idx) {
      const Polynomial<F>& p = deref(*first);
      if (p.is_zero()) throw PreconditionError("zero polynomial in reduction basis");
      entries_.push_back({&p, p.exponent_ptr(0), monomial::support_mask(p.exponent_ptr(0), n_), idx, {}});
    }
  }

  const Entry* find(const Exponent* e) const {
    std::uint64_t m = monomial::support_mask(e, n_);
    for (const auto& d : entries_) {
      if ((d.mask & ~m) == 0 && monomial::divides(d.lead, e, n_)) return &d;
    }
    return nullptr;
  }

  bool empty() const { return entries_.empty(); }

 private:
  static const Polynomial<F>& deref(const Polynomial<F>& p) { return p; }
  static const Polynomial<F>& deref(const PolyPtr<F>& p) { return *p; }

  std::size_t n_;
  std::vector<Entry> entries_;
};

}  // namespace detail

/// Full normal form of p against `basis` (head terms of the result and of all
/// its tail terms are irreducible). If `trace` is given, every elimination is
/// recorded so that p - result = sum coeff * x^shift * basis[index].
template <CoefficientField F, class Range>
Polynomial<F> normal_form(const Range& basis, const Polynomial<F>& p,
                          std::vector<RecordedStep<F>>* trace = nullptr, ReductionStats* stats = nullptr) {
  for (const auto& b : basis) {
    if constexpr (std::is_same_v<std::decay_t<decltype(b)>, PolyPtr<F>>) p.check_ring(*b);
    else p.check_ring(b);
  }
  const std::size_t n = p.nvars();
  Polynomial<F> result(p.ring());
  if (p.is_zero()) return result;
  detail::DivisorTable<F> table(std::begin(basis), std::end(basis), n);
  if (table.empty()) return p;
  detail::Remainder<F> rem(p);
  ExpVec shift(n);
  while (!rem.done()) {
    const Exponent* e = rem.head_exp();
    const auto* d = table.find(e);
    if (!d) {
      result.push_term(e, rem.take_head());
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) shift[k] = static_cast<Exponent>(e[k] - d->lead[k]);
    if (trace) {
      typename F::Element c;
      rem.eliminate(*d->poly, d->prep(), shift.data(), &c);
      trace->push_back({d->index, std::move(c), shift});
    } else {
      rem.eliminate(*d->poly, d->prep(), shift.data(), nullptr);
    }
    if (stats) ++stats->steps;
  }
  return result;
}

/// Normal form against a concurrently growing basis. After every elimination
/// step the view's version is re-read; if it moved, reduction restarts from
/// the original p against a fresh snapshot. The result is a normal form with
/// respect to the snapshot whose version was current at completion.
template <CoefficientField F, class View>
  requires VersionedBasisView<View, F>
Polynomial<F> normal_form_restartable(const View& view, const Polynomial<F>& p, ReductionStats* stats = nullptr) {
  const std::size_t n = p.nvars();
  ExpVec shift(n);
  for (;;) {
    BasisSnapshot<F> snap = view.snapshot();
    Polynomial<F> result(p.ring());
    if (p.is_zero()) return result;
    if (!snap.polys || snap.polys->empty()) {
      if (view.version() == snap.version) return p;
      if (stats) ++stats->restarts;
      continue;
    }
    for (const auto& b : *snap.polys) p.check_ring(*b);
    detail::DivisorTable<F> table(snap.polys->begin(), snap.polys->end(), n);
    detail::Remainder<F> rem(p);
    bool stale = false;
    while (!rem.done()) {
      const Exponent* e = rem.head_exp();
      const auto* d = table.find(e);
      if (!d) {
        result.push_term(e, rem.take_head());
        continue;
      }
      for (std::size_t k = 0; k < n; ++k) shift[k] = static_cast<Exponent>(e[k] - d->lead[k]);
      rem.eliminate(*d->poly, d->prep(), shift.data(), nullptr);
      if (stats) ++stats->steps;
      if (view.version() != snap.version) {
        stale = true;
        break;
      }
    }
    if (!stale && view.version() == snap.version) return result;
    if (stats) ++stats->restarts;
  }
}

}  // namespace distgb
