#pragma once

// Text and binary formats for polynomials and polynomial systems.
//
// Text system format:
//   vars: x,y,z
//   field: Q | Zp <modulus>
//   order: lex|grlex|grevlex
//   x^2 - 3/4*x*y + 1
//   ...
// Blank lines and lines starting with '#' are ignored.
//
// Binary polynomial format (deterministic, used on the wire and in the
// distributed table):
//   u32 LE term count, u16 LE variable count,
//   per term: nvars x u16 LE exponents, then the coefficient encoding.

#include "distgb/poly.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace distgb {

using Bytes = std::vector<std::uint8_t>;

namespace detail {

class PolyLexer {
 public:
  enum class Kind { Number, Ident, Plus, Minus, Star, Caret, End };
  struct Token {
    Kind kind;
    std::string_view text;
  };

  explicit PolyLexer(std::string_view s) : s_(s) { advance(); }

  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ >= s_.size()) {
      tok_ = {Kind::End, {}};
      return;
    }
    std::size_t start = pos_;
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ + 1 < s_.size() && s_[pos_] == '/' && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1]))) {
        ++pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      }
      tok_ = {Kind::Number, s_.substr(start, pos_ - start)};
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      tok_ = {Kind::Ident, s_.substr(start, pos_ - start)};
    } else {
      ++pos_;
      switch (c) {
        case '+': tok_ = {Kind::Plus, s_.substr(start, 1)}; break;
        case '-': tok_ = {Kind::Minus, s_.substr(start, 1)}; break;
        case '*': tok_ = {Kind::Star, s_.substr(start, 1)}; break;
        case '^': tok_ = {Kind::Caret, s_.substr(start, 1)}; break;
        default: throw ParseError(std::string("unexpected character '") + c + "' in polynomial");
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  Token tok_{Kind::End, {}};
};

}  // namespace detail

/// Parses `+`/`-` separated terms; `*` between factors is optional.
template <CoefficientField F>
Polynomial<F> parse_polynomial(const RingPtr<F>& ring, std::string_view text) {
  using Lexer = detail::PolyLexer;
  using K = Lexer::Kind;
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < ring->nvars(); ++i) index.emplace(ring->names()[i], i);

  Lexer lex(text);
  std::vector<std::pair<ExpVec, typename F::Element>> terms;
  bool first = true;
  while (lex.peek().kind != K::End) {
    bool negative = false;
    if (lex.peek().kind == K::Plus || lex.peek().kind == K::Minus) {
      negative = lex.next().kind == K::Minus;
    } else if (!first) {
      throw ParseError("expected '+' or '-' in '" + std::string(text) + "'");
    }
    first = false;
    auto coeff = ring->field().one();
    ExpVec e(ring->nvars());
    bool any = false;
    for (;;) {
      auto t = lex.peek();
      if (t.kind == K::Star) {
        if (!any) throw ParseError("dangling '*' in '" + std::string(text) + "'");
        lex.next();
        t = lex.peek();
        if (t.kind != K::Number && t.kind != K::Ident) throw ParseError("expected factor after '*'");
      }
      if (t.kind == K::Number) {
        lex.next();
        coeff = coeff * ring->field().parse(t.text);
      } else if (t.kind == K::Ident) {
        lex.next();
        auto it = index.find(t.text);
        if (it == index.end()) throw ParseError("unknown variable '" + std::string(t.text) + "'");
        unsigned power = 1;
        if (lex.peek().kind == K::Caret) {
          lex.next();
          auto p = lex.next();
          if (p.kind != K::Number || p.text.find('/') != std::string_view::npos)
            throw ParseError("expected integer exponent");
          power = static_cast<unsigned>(std::stoul(std::string(p.text)));
        }
        unsigned s = e[it->second] + power;
        if (s > std::numeric_limits<Exponent>::max()) throw ExponentOverflow();
        e[it->second] = static_cast<Exponent>(s);
      } else {
        break;
      }
      any = true;
    }
    if (!any) throw ParseError("empty term in '" + std::string(text) + "'");
    if (negative) coeff = -coeff;
    terms.emplace_back(std::move(e), std::move(coeff));
  }
  if (first) throw ParseError("empty polynomial");
  return Polynomial<F>::from_terms(ring, std::move(terms));
}

/// The untyped content of a system file: ring header plus polynomial lines.
struct SystemText {
  std::vector<std::string> vars;
  std::optional<FieldDescriptor> field;
  std::optional<TermOrder> order;
  std::vector<std::string> polynomials;

  static SystemText parse(std::string_view text) {
    SystemText st;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      std::string_view l = detail::trim(line);
      if (l.empty() || l.front() == '#') continue;
      auto colon = l.find(':');
      if (colon != std::string_view::npos) {
        std::string_view key = detail::trim(l.substr(0, colon));
        std::string_view value = detail::trim(l.substr(colon + 1));
        if (key == "vars") {
          st.vars.clear();
          std::size_t start = 0;
          while (start <= value.size()) {
            std::size_t comma = value.find(',', start);
            std::string_view name = detail::trim(value.substr(start, comma - start));
            if (name.empty()) throw ParseError("empty variable name");
            st.vars.emplace_back(name);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
          }
          continue;
        }
        if (key == "field") {
          st.field = FieldDescriptor::parse(value);
          continue;
        }
        if (key == "order") {
          st.order = TermOrder::parse(value);
          continue;
        }
        throw ParseError("unknown header '" + std::string(key) + "'");
      }
      st.polynomials.emplace_back(l);
    }
    if (st.vars.empty()) throw ParseError("missing 'vars:' header");
    return st;
  }

  static SystemText read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigurationError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }
};

template <CoefficientField F>
std::vector<Polynomial<F>> parse_polynomials(const RingPtr<F>& ring, const std::vector<std::string>& lines) {
  std::vector<Polynomial<F>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(parse_polynomial(ring, l));
  return out;
}

/// Ring header followed by one polynomial per line.
template <CoefficientField F>
std::string format_system(const RingPtr<F>& ring, const std::vector<Polynomial<F>>& polys) {
  std::string out = ring->descriptor();
  for (const auto& p : polys) out += p.to_string() + "\n";
  return out;
}

/// Calls `fn` with the coefficient field named by `d`.
template <class Fn>
decltype(auto) visit_field(const FieldDescriptor& d, Fn&& fn) {
  if (d.kind == FieldKind::Rational) return fn(RationalField{});
  return fn(ModularField(*d.modulus));
}

/// Ring from the header fields of a system text; grevlex if no order given.
template <CoefficientField F>
RingPtr<F> ring_from(const SystemText& st, F field) {
  return make_ring(st.vars, std::move(field), st.order.value_or(TermOrder{}));
}

// ---------------------------------------------------------------------------
// Binary encoding

template <CoefficientField F>
Bytes encode(const Polynomial<F>& p) {
  Bytes out;
  const std::size_t n = p.nvars();
  out.reserve(6 + p.size() * (2 * n + 16));
  detail::put_u32_le(out, static_cast<std::uint32_t>(p.size()));
  out.push_back(static_cast<std::uint8_t>(n & 0xff));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (Exponent e : p.exponent(i)) {
      out.push_back(static_cast<std::uint8_t>(e & 0xff));
      out.push_back(static_cast<std::uint8_t>(e >> 8));
    }
    encode_coefficient(out, p.coefficient(i));
  }
  return out;
}

/// Decodes and validates (variable count, ordering, nonzero coefficients).
template <CoefficientField F>
Polynomial<F> decode(const RingPtr<F>& ring, std::span<const std::uint8_t> bytes) {
  const std::uint8_t* p = bytes.data();
  const std::uint8_t* end = p + bytes.size();
  std::uint32_t count = detail::get_u32_le(p, end);
  if (end - p < 2) throw ParseError("truncated encoding");
  std::size_t n = std::size_t(p[0]) | (std::size_t(p[1]) << 8);
  p += 2;
  if (n != ring->nvars()) throw ParseError("encoded variable count does not match ring");
  Polynomial<F> poly(ring);
  poly.reserve(count);
  std::vector<Exponent> e(n);
  for (std::uint32_t t = 0; t < count; ++t) {
    if (static_cast<std::size_t>(end - p) < 2 * n) throw ParseError("truncated encoding");
    for (std::size_t i = 0; i < n; ++i, p += 2) e[i] = static_cast<Exponent>(p[0] | (p[1] << 8));
    auto c = decode_coefficient(ring->field(), p, end);
    if (c.is_zero()) throw ParseError("zero coefficient in encoding");
    if (!poly.is_zero() && ring->order().compare(poly.exponent_ptr(poly.size() - 1), e.data(), n) <= 0)
      throw ParseError("terms not strictly descending");
    poly.push_term(e.data(), std::move(c));
  }
  if (p != end) throw ParseError("trailing bytes after polynomial");
  return poly;
}

}  // namespace distgb
