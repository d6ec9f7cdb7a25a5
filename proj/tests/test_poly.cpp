#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace distgb;
using namespace distgb::testing;

namespace {

TEST(Monomial, Basics) {
  ExpVec a{2, 1, 0}, b{1, 3, 0}, c{0, 0, 4};
  EXPECT_EQ(monomial::lcm(a.span(), b.span()), (ExpVec{2, 3, 0}));
  EXPECT_TRUE(monomial::divides(ExpVec{1, 1, 0}.span(), a.span()));
  EXPECT_FALSE(monomial::divides(b.span(), a.span()));
  EXPECT_TRUE(monomial::coprime(a.span(), c.span()));
  EXPECT_FALSE(monomial::coprime(a.span(), b.span()));
  EXPECT_EQ(monomial::quotient(a.span(), ExpVec{1, 0, 0}.span()), (ExpVec{1, 1, 0}));
}

TEST(Monomial, OverflowChecked) {
  Exponent out[1];
  Exponent a[1] = {60000}, b[1] = {6000};
  EXPECT_THROW(monomial::add_into(out, a, b, 1), ExponentOverflow);
}

TEST(TermOrder, Orders) {
  // x > y > z
  ExpVec x2{2, 0, 0}, xy{1, 1, 0}, y3{0, 3, 0}, xz{1, 0, 1}, y2{0, 2, 0};
  TermOrder lex(TermOrderKind::Lex), grlex(TermOrderKind::GradedLex), grevlex;
  EXPECT_GT(lex.compare(xy.span(), y3.span()), 0);
  EXPECT_LT(grlex.compare(xy.span(), y3.span()), 0);
  EXPECT_GT(grevlex.compare(x2.span(), xy.span()), 0);
  // The classic grlex / grevlex disagreement: x*z vs y^2.
  EXPECT_GT(grlex.compare(xz.span(), y2.span()), 0);
  EXPECT_LT(grevlex.compare(xz.span(), y2.span()), 0);
  EXPECT_EQ(grevlex.compare(xz.span(), xz.span()), 0);
  EXPECT_THROW(TermOrder::parse("weird"), ParseError);
}

TEST(TermOrder, Admissible) {
  std::mt19937_64 rng(11);
  for (auto kind : {TermOrderKind::Lex, TermOrderKind::GradedLex, TermOrderKind::GradedRevLex}) {
    TermOrder ord(kind);
    for (int i = 0; i < 2000; ++i) {
      ExpVec u(4), v(4), w(4), uw(4), vw(4);
      for (int k = 0; k < 4; ++k) {
        u[k] = rng() % 4;
        v[k] = rng() % 4;
        w[k] = rng() % 4;
        uw[k] = u[k] + w[k];
        vw[k] = v[k] + w[k];
      }
      ASSERT_EQ(ord.compare(u.span(), v.span()), -ord.compare(v.span(), u.span()));
      ASSERT_EQ(ord.compare(u.span(), v.span()), ord.compare(uw.span(), vw.span()));
      ASSERT_GE(ord.compare(u.span(), ExpVec(4).span()), 0);
    }
  }
}

TEST(Polynomial, AddExamples) {
  auto r = ring("x,y", RationalField{});
  EXPECT_EQ(P(r, "x + y") + P(r, "x - y"), P(r, "2x"));
  EXPECT_EQ(P(r, "3x^2 - y") + Polynomial<RationalField>(r), P(r, "3x^2 - y"));
  auto s = P(r, "x^2 + 1") + P(r, "-x^2");
  EXPECT_EQ(s, P(r, "1"));
  EXPECT_EQ(s.size(), 1u);
}

TEST(Polynomial, Leading) {
  auto r = ring("x,y", RationalField{});
  auto lt = P(r, "x*y + x^2").leading();
  ASSERT_TRUE(lt);
  EXPECT_EQ(lt->first, (ExpVec{2, 0}));
  auto c = P(r, "7").leading();
  EXPECT_EQ(c->first, (ExpVec{0, 0}));
  EXPECT_EQ(c->second, Rational(7));
  EXPECT_FALSE(Polynomial<RationalField>(r).leading());
  auto rl = ring("x,y", RationalField{}, TermOrderKind::Lex);
  EXPECT_EQ(P(rl, "y^5 + x").leading()->first, (ExpVec{1, 0}));
}

TEST(Polynomial, SPolynomial) {
  auto r = ring("x,y", RationalField{});
  auto p = P(r, "x^2 - y");
  EXPECT_TRUE(s_polynomial(p, p).is_zero());
  // Values frozen from tests/oracle/oracle.py.
  EXPECT_EQ(s_polynomial(p, P(r, "x*y - 1")), P(r, "x - y^2"));
  EXPECT_EQ(s_polynomial(P(r, "x^2"), P(r, "x*y + y^2")), P(r, "-x*y^2"));
  EXPECT_THROW(s_polynomial(p, Polynomial<RationalField>(r)), PreconditionError);
}

TEST(Polynomial, SPolynomialCancelsHead) {
  auto r = ring("x,y,z", zp127());
  std::mt19937_64 rng(21);
  for (int i = 0; i < 500; ++i) {
    auto p = random_poly(r, rng, 5, 4), q = random_poly(r, rng, 5, 4);
    if (p.is_zero() || q.is_zero()) continue;
    auto s = s_polynomial(p, q);
    if (s.is_zero()) continue;
    auto l = monomial::lcm(p.lead_exponent(), q.lead_exponent());
    ASSERT_LT(r->order().compare(s.lead_exponent(), l.span()), 0);
  }
}

TEST(Polynomial, Monic) {
  auto r = ring("x", RationalField{});
  EXPECT_TRUE(make_monic(Polynomial<RationalField>(r)).is_zero());
  EXPECT_EQ(make_monic(P(r, "2x + 4")), P(r, "x + 2"));
  auto r7 = ring("x", ModularField(BigInt(7)));
  EXPECT_EQ(make_monic(P(r7, "3x")), P(r7, "x"));
}

TEST(Polynomial, RingMismatch) {
  auto a = ring("x,y", RationalField{});
  auto b = ring("x,z", RationalField{});
  EXPECT_THROW(P(a, "x") + P(b, "x"), RingMismatch);
  // Structurally equal rings are compatible.
  auto c = ring("x,y", RationalField{});
  EXPECT_EQ(P(a, "x") + P(c, "y"), P(a, "x + y"));
}

template <class F>
void check_ring_axioms(const RingPtr<F>& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Polynomial<F> zero(r);
  auto one = Polynomial<F>::constant(r, r->field().one());
  for (int i = 0; i < 1000; ++i) {
    auto a = random_poly(r, rng, 4, 3), b = random_poly(r, rng, 4, 3), c = random_poly(r, rng, 4, 3);
    ASSERT_EQ(a + b, b + a);
    ASSERT_EQ((a + b) + c, a + (b + c));
    ASSERT_EQ(a * b, b * a);
    ASSERT_EQ((a * b) * c, a * (b * c));
    ASSERT_EQ(a * (b + c), a * b + a * c);
    ASSERT_EQ(a + zero, a);
    ASSERT_EQ(a * one, a);
    ASSERT_TRUE((a - a).is_zero());
    ASSERT_TRUE((a * zero).is_zero());
    for (std::size_t k = 1; k < a.size(); ++k)
      ASSERT_GT(r->order().compare(a.exponent(k - 1), a.exponent(k)), 0);
  }
}

TEST(RingAxioms, RationalGrevlex) { check_ring_axioms(ring("x,y,z", RationalField{}), 31); }
TEST(RingAxioms, ModularLex) { check_ring_axioms(ring("x,y,z", zp127(), TermOrderKind::Lex), 32); }

TEST(PolyText, ParseAndPrint) {
  auto r = ring("x,y", RationalField{});
  auto p = P(r, "x^2*y - 3/4 y + 1");
  EXPECT_EQ(p.to_string(), "x^2*y - 3/4*y + 1");
  EXPECT_EQ(P(r, p.to_string()), p);
  EXPECT_EQ(P(r, "-x + x"), Polynomial<RationalField>(r));
  EXPECT_THROW(P(r, "x + w"), ParseError);
  EXPECT_THROW(P(r, "x +"), ParseError);
  EXPECT_THROW(P(r, "x ^ y"), ParseError);
  EXPECT_THROW(P(r, "x ? y"), ParseError);
}

TEST(PolyText, SystemFile) {
  auto st = SystemText::parse("# comment\nvars: a, b\nfield: Zp 7\norder: lex\n\na^2 - b\nb - 1\n");
  EXPECT_EQ(st.vars, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(st.field->to_string(), "Zp 7");
  EXPECT_EQ(st.order->kind(), TermOrderKind::Lex);
  EXPECT_EQ(st.polynomials.size(), 2u);
  EXPECT_THROW(SystemText::parse("x + 1\n"), ParseError);
  EXPECT_THROW(SystemText::parse("vars: x\ncolor: red\n"), ParseError);
}

template <class F>
void check_encoding_roundtrip(const RingPtr<F>& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_poly(r, rng, 8, 6);
    auto bytes = encode(p);
    ASSERT_EQ(decode(r, bytes), p);
    ASSERT_EQ(encode(decode(r, bytes)), bytes);
  }
}

TEST(PolyEncoding, RoundTrip) {
  check_encoding_roundtrip(ring("x,y,z,w", RationalField{}), 41);
  check_encoding_roundtrip(ring("x,y,z,w", zp127()), 42);
}

TEST(PolyEncoding, RejectsMalformed) {
  auto r = ring("x,y", RationalField{});
  auto bytes = encode(P(r, "x^2 + y"));
  EXPECT_THROW(decode(ring("x,y,z", RationalField{}), bytes), ParseError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode(r, truncated), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode(r, trailing), ParseError);
  // Terms in ascending order are rejected.
  auto ty = encode(P(r, "y")), tx = encode(P(r, "x^2"));
  Bytes swapped{2, 0, 0, 0, 2, 0};
  swapped.insert(swapped.end(), ty.begin() + 6, ty.end());
  swapped.insert(swapped.end(), tx.begin() + 6, tx.end());
  EXPECT_THROW(decode(r, swapped), ParseError);
  swapped[0] = 1;
  swapped.resize(6 + (ty.size() - 6));
  EXPECT_EQ(decode(r, swapped), P(r, "y"));
}

TEST(Systems, Cyclic) {
  auto c2 = cyclic(2, RationalField{});
  auto r2 = c2[0].ring();
  EXPECT_EQ(c2.size(), 2u);
  EXPECT_EQ(c2[0], P(r2, "x0 + x1"));
  EXPECT_EQ(c2[1], P(r2, "x0*x1 - 1"));
  auto c3 = cyclic(3, RationalField{});
  auto r3 = c3[0].ring();
  EXPECT_EQ(c3[0], P(r3, "x0 + x1 + x2"));
  EXPECT_EQ(c3[1], P(r3, "x0*x1 + x1*x2 + x2*x0"));
  EXPECT_EQ(c3[2], P(r3, "x0*x1*x2 - 1"));
  EXPECT_THROW(cyclic(1, RationalField{}), ConfigurationError);
}

TEST(Systems, Katsura) {
  auto k2 = katsura(2, RationalField{});
  auto r = k2[0].ring();
  ASSERT_EQ(k2.size(), 3u);
  EXPECT_EQ(k2[0], P(r, "u0 + 2u1 + 2u2 - 1"));
  EXPECT_EQ(k2[1], P(r, "u0^2 + 2u1^2 + 2u2^2 - u0"));
  EXPECT_EQ(k2[2], P(r, "2u0*u1 + 2u1*u2 - u1"));
  EXPECT_EQ(katsura(8, RationalField{}).size(), 9u);
  EXPECT_THROW(parse_system_name("katsura"), ParseError);
  EXPECT_THROW(parse_system_name("foo:3"), ParseError);
  EXPECT_EQ(parse_system_name("cyclic:6").second, 6u);
}

}  // namespace
