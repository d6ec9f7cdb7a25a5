#pragma once

// Exact coefficient fields: arbitrary-precision rationals and integers modulo
// a (large) prime. Elements are immutable values and safe to share between
// threads.

#include <gmpxx.h>

#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace distgb {

using BigInt = mpz_class;

struct ArithmeticError : std::domain_error {
  using std::domain_error::domain_error;
};

struct DivisionByZero : ArithmeticError {
  DivisionByZero() : ArithmeticError("division by zero") {}
};

struct ConfigurationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParseError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline BigInt parse_integer(std::string_view text) {
  text = trim(text);
  std::string s(text);
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  if (s.empty() || s == "-") throw ParseError("expected an integer, got '" + std::string(text) + "'");
  for (std::size_t i = (s.front() == '-') ? 1 : 0; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])))
      throw ParseError("expected an integer, got '" + std::string(text) + "'");
  }
  return BigInt(s, 10);
}

}  // namespace detail

/// Parses a modulus given in decimal or as a power-of-two shorthand
/// (`2^k`, `2^k-c`, `2^k+c`).
inline BigInt parse_modulus(std::string_view text) {
  text = detail::trim(text);
  auto caret = text.find('^');
  if (caret == std::string_view::npos) return detail::parse_integer(text);
  if (detail::trim(text.substr(0, caret)) != "2") throw ParseError("modulus shorthand must start with 2^");
  std::string_view rest = text.substr(caret + 1);
  std::size_t sign = rest.find_first_of("+-");
  std::string_view exp_text = rest.substr(0, sign);
  BigInt k = detail::parse_integer(exp_text);
  if (k < 1 || k > 1'000'000) throw ParseError("modulus exponent out of range");
  BigInt m;
  mpz_ui_pow_ui(m.get_mpz_t(), 2, k.get_ui());
  if (sign != std::string_view::npos) {
    BigInt c = detail::parse_integer(rest.substr(sign + 1));
    if (rest[sign] == '-') m -= c; else m += c;
  }
  return m;
}

/// Short printable form of a modulus: `2^k-1` for Mersenne numbers,
/// decimal otherwise.
inline std::string format_modulus(const BigInt& m) {
  BigInt p1 = m + 1;
  if (m > 65536 && mpz_popcount(p1.get_mpz_t()) == 1) {
    return "2^" + std::to_string(mpz_sizeinbase(p1.get_mpz_t(), 2) - 1) + "-1";
  }
  return m.get_str();
}

// ---------------------------------------------------------------------------
// Rational

/// Canonical rational number: denominator positive, gcd(|num|, den) = 1,
/// zero stored as 0/1. Every constructor normalizes.
class Rational {
 public:
  Rational() = default;
  Rational(long n) : q_(n) {}  // NOLINT(google-explicit-constructor)
  explicit Rational(const BigInt& n) : q_(n) {}
  Rational(const BigInt& num, const BigInt& den) {
    if (den == 0) throw DivisionByZero();
    q_ = mpq_class(num, den);
    q_.canonicalize();
  }
  explicit Rational(mpq_class q) : q_(std::move(q)) { q_.canonicalize(); }

  BigInt numerator() const { return q_.get_num(); }
  BigInt denominator() const { return q_.get_den(); }
  const mpq_class& value() const { return q_; }

  bool is_zero() const { return sgn(q_) == 0; }
  bool is_one() const { return q_ == 1; }

  Rational inverse() const {
    if (is_zero()) throw DivisionByZero();
    Rational r;
    mpq_inv(r.q_.get_mpq_t(), q_.get_mpq_t());
    return r;
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    Rational r;
    mpq_add(r.q_.get_mpq_t(), a.q_.get_mpq_t(), b.q_.get_mpq_t());
    return r;
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    Rational r;
    mpq_sub(r.q_.get_mpq_t(), a.q_.get_mpq_t(), b.q_.get_mpq_t());
    return r;
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    Rational r;
    mpq_mul(r.q_.get_mpq_t(), a.q_.get_mpq_t(), b.q_.get_mpq_t());
    return r;
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.is_zero()) throw DivisionByZero();
    Rational r;
    mpq_div(r.q_.get_mpq_t(), a.q_.get_mpq_t(), b.q_.get_mpq_t());
    return r;
  }
  Rational& operator-=(const Rational& b) {
    mpq_sub(q_.get_mpq_t(), q_.get_mpq_t(), b.q_.get_mpq_t());
    return *this;
  }
  Rational operator-() const {
    Rational r;
    mpq_neg(r.q_.get_mpq_t(), q_.get_mpq_t());
    return r;
  }
  friend bool operator==(const Rational& a, const Rational& b) { return a.q_ == b.q_; }

  std::string to_string() const { return q_.get_str(10); }

  /// Accepts "n" or "n/d" with optional sign.
  static Rational parse(std::string_view text) {
    text = detail::trim(text);
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return Rational(detail::parse_integer(text));
    return Rational(detail::parse_integer(text.substr(0, slash)),
                    detail::parse_integer(text.substr(slash + 1)));
  }

 private:
  mpq_class q_;
};

// ---------------------------------------------------------------------------
// Modular integers

/// A modulus shared by all elements of one ring. Instances are interned for
/// the lifetime of the process, so equal moduli compare equal by address.
class Modulus {
 public:
  static const Modulus* intern(const BigInt& m) {
    if (m < 2) throw ConfigurationError("modulus must be at least 2");
    static std::mutex mu;
    static std::map<std::string, std::unique_ptr<Modulus>> table;
    std::lock_guard lock(mu);
    auto& slot = table[m.get_str(16)];
    if (!slot) slot.reset(new Modulus(m));
    return slot.get();
  }

  const BigInt& value() const { return m_; }

  /// Miller-Rabin with the given number of rounds. Not run implicitly.
  bool probably_prime(int rounds = 25) const { return mpz_probab_prime_p(m_.get_mpz_t(), rounds) > 0; }

 private:
  explicit Modulus(BigInt m) : m_(std::move(m)) {}
  BigInt m_;
};

/// Residue in [0, modulus). The modulus is assumed prime for inverse().
class ModInt {
 public:
  ModInt() = default;
  ModInt(const Modulus* mod, const BigInt& v) : mod_(mod), v_(v) {
    mpz_mod(v_.get_mpz_t(), v_.get_mpz_t(), mod_->value().get_mpz_t());
  }
  ModInt(const Modulus* mod, long v) : ModInt(mod, BigInt(v)) {}

  const BigInt& value() const { return v_; }
  const Modulus* modulus() const { return mod_; }

  bool is_zero() const { return sgn(v_) == 0; }
  bool is_one() const { return v_ == 1; }

  /// Extended Euclid; throws DivisionByZero for 0 and ArithmeticError if the
  /// value is not invertible (non-prime modulus).
  ModInt inverse() const {
    if (is_zero()) throw DivisionByZero();
    BigInt g, s;
    mpz_gcdext(g.get_mpz_t(), s.get_mpz_t(), nullptr, v_.get_mpz_t(), mod_->value().get_mpz_t());
    if (g != 1) throw ArithmeticError("element not invertible modulo " + mod_->value().get_str());
    return ModInt(mod_, s);
  }

  friend ModInt operator+(const ModInt& a, const ModInt& b) {
    check(a, b);
    ModInt r(a.mod_);
    mpz_add(r.v_.get_mpz_t(), a.v_.get_mpz_t(), b.v_.get_mpz_t());
    if (r.v_ >= a.mod_->value()) r.v_ -= a.mod_->value();
    return r;
  }
  friend ModInt operator-(const ModInt& a, const ModInt& b) {
    check(a, b);
    ModInt r(a.mod_);
    mpz_sub(r.v_.get_mpz_t(), a.v_.get_mpz_t(), b.v_.get_mpz_t());
    if (sgn(r.v_) < 0) r.v_ += a.mod_->value();
    return r;
  }
  friend ModInt operator*(const ModInt& a, const ModInt& b) {
    check(a, b);
    ModInt r(a.mod_);
    mpz_mul(r.v_.get_mpz_t(), a.v_.get_mpz_t(), b.v_.get_mpz_t());
    mpz_mod(r.v_.get_mpz_t(), r.v_.get_mpz_t(), a.mod_->value().get_mpz_t());
    return r;
  }
  friend ModInt operator/(const ModInt& a, const ModInt& b) { return a * b.inverse(); }
  ModInt& operator-=(const ModInt& b) { return *this = *this - b; }
  ModInt operator-() const {
    ModInt r(mod_);
    if (!is_zero()) r.v_ = mod_->value() - v_;
    return r;
  }
  friend bool operator==(const ModInt& a, const ModInt& b) { return a.mod_ == b.mod_ && a.v_ == b.v_; }

  std::string to_string() const { return v_.get_str(10); }

 private:
  explicit ModInt(const Modulus* mod) : mod_(mod) {}

  static void check(const ModInt& a, const ModInt& b) {
    if (a.mod_ != b.mod_ || a.mod_ == nullptr) throw ConfigurationError("modulus mismatch");
  }

  const Modulus* mod_ = nullptr;
  BigInt v_;
};

// ---------------------------------------------------------------------------
// Field descriptors and the two coefficient domains

enum class FieldKind : std::uint8_t { Rational = 0, Modular = 1 };

struct FieldDescriptor {
  FieldKind kind = FieldKind::Rational;
  std::optional<BigInt> modulus;

  static FieldDescriptor rationals() { return {}; }
  static FieldDescriptor modular(BigInt m) {
    if (m < 2) throw ConfigurationError("modulus must be at least 2");
    return {FieldKind::Modular, std::move(m)};
  }

  /// "Q" or "Zp <modulus>".
  static FieldDescriptor parse(std::string_view text) {
    text = detail::trim(text);
    if (text == "Q") return rationals();
    if (text.substr(0, 2) == "Zp") return modular(parse_modulus(text.substr(2)));
    throw ParseError("unknown field '" + std::string(text) + "'");
  }

  std::string to_string() const {
    return kind == FieldKind::Rational ? "Q" : "Zp " + format_modulus(*modulus);
  }

  friend bool operator==(const FieldDescriptor& a, const FieldDescriptor& b) {
    return a.kind == b.kind && a.modulus == b.modulus;
  }
};

/// The field of rational numbers.
class RationalField {
 public:
  using Element = Rational;

  Element zero() const { return {}; }
  Element one() const { return Rational(1); }
  Element from_integer(const BigInt& n) const { return Rational(n); }
  Element parse(std::string_view text) const { return Rational::parse(text); }
  FieldDescriptor descriptor() const { return FieldDescriptor::rationals(); }

  friend bool operator==(const RationalField&, const RationalField&) { return true; }
};

/// Integers modulo a prime. Primality is the caller's responsibility; pass
/// `verify_prime` to run a probabilistic check at construction.
class ModularField {
 public:
  using Element = ModInt;

  explicit ModularField(const BigInt& modulus, bool verify_prime = false) : mod_(Modulus::intern(modulus)) {
    if (verify_prime && !mod_->probably_prime()) throw ConfigurationError("modulus is not prime");
  }

  Element zero() const { return ModInt(mod_, 0L); }
  Element one() const { return ModInt(mod_, 1L); }
  Element from_integer(const BigInt& n) const { return ModInt(mod_, n); }
  /// Accepts integers and "n/d" fractions (interpreted as n * d^-1).
  Element parse(std::string_view text) const {
    text = detail::trim(text);
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return ModInt(mod_, detail::parse_integer(text));
    return ModInt(mod_, detail::parse_integer(text.substr(0, slash))) /
           ModInt(mod_, detail::parse_integer(text.substr(slash + 1)));
  }
  FieldDescriptor descriptor() const { return FieldDescriptor::modular(mod_->value()); }
  const Modulus* modulus() const { return mod_; }

  friend bool operator==(const ModularField& a, const ModularField& b) { return a.mod_ == b.mod_; }

 private:
  const Modulus* mod_;
};

/// Requirements on a coefficient domain used by the polynomial templates.
template <class F>
concept CoefficientField = requires(const F& f, const typename F::Element& a, typename F::Element& m,
                                   std::string_view s) {
  { f.zero() } -> std::same_as<typename F::Element>;
  { f.one() } -> std::same_as<typename F::Element>;
  { f.parse(s) } -> std::same_as<typename F::Element>;
  { f.descriptor() } -> std::same_as<FieldDescriptor>;
  { a + a } -> std::same_as<typename F::Element>;
  { a - a } -> std::same_as<typename F::Element>;
  { a * a } -> std::same_as<typename F::Element>;
  { -a } -> std::same_as<typename F::Element>;
  { m -= a } -> std::same_as<typename F::Element&>;
  { a.inverse() } -> std::same_as<typename F::Element>;
  { a.is_zero() } -> std::same_as<bool>;
  { a.to_string() } -> std::same_as<std::string>;
};

static_assert(CoefficientField<RationalField>);
static_assert(CoefficientField<ModularField>);

// ---------------------------------------------------------------------------
// Binary coefficient encoding: magnitudes are length-prefixed (u32 LE)
// big-endian byte strings; rationals carry a leading sign byte.

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32_le(const std::uint8_t*& p, const std::uint8_t* end) {
  if (end - p < 4) throw ParseError("truncated encoding");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  p += 4;
  return v;
}

inline void put_magnitude(std::vector<std::uint8_t>& out, const BigInt& v) {
  std::size_t count = 0;
  std::size_t bytes = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  if (sgn(v) == 0) bytes = 0;
  put_u32_le(out, static_cast<std::uint32_t>(bytes));
  std::size_t at = out.size();
  out.resize(at + bytes);
  if (bytes) mpz_export(out.data() + at, &count, 1, 1, 1, 0, v.get_mpz_t());
}

inline BigInt get_magnitude(const std::uint8_t*& p, const std::uint8_t* end) {
  std::uint32_t n = get_u32_le(p, end);
  if (static_cast<std::size_t>(end - p) < n) throw ParseError("truncated encoding");
  BigInt v;
  if (n) mpz_import(v.get_mpz_t(), n, 1, 1, 1, 0, p);
  p += n;
  return v;
}

}  // namespace detail

inline void encode_coefficient(std::vector<std::uint8_t>& out, const Rational& c) {
  const auto& q = c.value();
  out.push_back(sgn(q) < 0 ? 1 : 0);
  BigInt num = abs(q.get_num());
  detail::put_magnitude(out, num);
  detail::put_magnitude(out, q.get_den());
}

inline void encode_coefficient(std::vector<std::uint8_t>& out, const ModInt& c) {
  detail::put_magnitude(out, c.value());
}

inline Rational decode_coefficient(const RationalField&, const std::uint8_t*& p, const std::uint8_t* end) {
  if (p == end) throw ParseError("truncated encoding");
  std::uint8_t sign = *p++;
  if (sign > 1) throw ParseError("bad sign byte");
  BigInt num = detail::get_magnitude(p, end);
  BigInt den = detail::get_magnitude(p, end);
  if (den == 0) throw ParseError("zero denominator in encoding");
  if (sign) num = -num;
  return Rational(num, den);
}

inline ModInt decode_coefficient(const ModularField& f, const std::uint8_t*& p, const std::uint8_t* end) {
  BigInt v = detail::get_magnitude(p, end);
  if (v >= f.modulus()->value()) throw ParseError("modular value out of range");
  return f.from_integer(v);
}

}  // namespace distgb
