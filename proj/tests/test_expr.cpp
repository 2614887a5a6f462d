#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "melnikov/expr.hpp"
#include "support/random_expr.hpp"

using melnikov::DomainError;
using melnikov::Expression;
using melnikov::ParseError;
using melnikov::UndeclaredIdentifierError;

TEST_CASE("parse and evaluate basic Hamiltonian text") {
    auto h = Expression::parse("p^2/2 + cos(q)", {"q", "p"});
    CHECK(h.evaluate(std::map<std::string, double>{{"q", 0.0}, {"p", 0.0}}) == 1.0);
    CHECK(h.evaluate(std::map<std::string, double>{{"q", 0.0}, {"p", 2.0}}) == 3.0);
}

TEST_CASE("sech primitive") {
    auto e = Expression::parse("sech(x)", {"x"});
    CHECK(e.evaluate(std::map<std::string, double>{{"x", 0.0}}) == 1.0);
    CHECK(e.evaluate(std::map<std::string, double>{{"x", 2.0}}) ==
          Catch::Approx(1.0 / std::cosh(2.0)).epsilon(1e-15));
}

TEST_CASE("syntax error carries 0-based byte offset") {
    // "p^2/2 + cos(q" is 13 bytes; the missing ')' is detected at
    // end-of-input, offset 13.
    try {
        Expression::parse("p^2/2 + cos(q", {"q", "p"});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 13);
    }
}

TEST_CASE("undeclared identifiers are named") {
    try {
        Expression::parse("eta*(1+G) + F", {"eta"});
        FAIL("expected UndeclaredIdentifierError");
    } catch (const UndeclaredIdentifierError& e) {
        CHECK(e.name == "G");
    }
    CHECK_THROWS_AS(Expression::parse("", {"x"}), ParseError);
    CHECK_THROWS_AS(Expression::parse("x + ", {"x"}), ParseError);
    CHECK_THROWS_AS(Expression::parse("x)", {"x"}), ParseError);
}

TEST_CASE("exponent must be constant") {
    CHECK_THROWS_AS(Expression::parse("x^y", {"x", "y"}), ParseError);
    CHECK_NOTHROW(Expression::parse("x^-2", {"x"}));
    CHECK_NOTHROW(Expression::parse("x^(3/2)", {"x"}));
    // ^ is right-associative: 2^3^2 = 2^9.
    auto e = Expression::parse("2^3^2", {});
    CHECK(e.evaluate(std::span<const double>{}) == 512.0);
    // Unary minus binds below ^: -2^2 = -(2^2).
    auto f = Expression::parse("0 + -2^2", {});
    CHECK(f.evaluate(std::span<const double>{}) == -4.0);
}

TEST_CASE("domain errors are reported, not NaN") {
    auto div = Expression::parse("x/y", {"x", "y"});
    CHECK_THROWS_AS(div.evaluate(std::map<std::string, double>{{"x", 1.0}, {"y", 0.0}}), DomainError);
    auto ln = Expression::parse("ln(x)", {"x"});
    CHECK_THROWS_AS(ln.evaluate(std::map<std::string, double>{{"x", -1.0}}), DomainError);
    CHECK_THROWS_AS(ln.evaluate(std::map<std::string, double>{{"x", 0.0}}), DomainError);
    auto missing = Expression::parse("x + y", {"x", "y"});
    CHECK_THROWS_AS(missing.evaluate(std::map<std::string, double>{{"x", 1.0}}), DomainError);
}

TEST_CASE("pendulum partial derivatives") {
    auto h = Expression::parse("p^2/2 + cos(q)", {"q", "p"});
    auto dq = h.differentiate("q");
    auto dp = h.differentiate("p");
    double vals0[] = {0.0, 0.0};
    CHECK(dq.evaluate(std::span<const double>(vals0, 2)) == Catch::Approx(0.0).margin(1e-15));
    double vals1[] = {1.3, 0.7};
    CHECK(dq.evaluate(std::span<const double>(vals1, 2)) == Catch::Approx(-std::sin(1.3)).epsilon(1e-15));
    CHECK(dp.evaluate(std::span<const double>(vals1, 2)) == Catch::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("derivative in an absent variable folds to zero") {
    auto e = Expression::parse("xi^2 + cos(x)", {"x", "xi"});
    auto d = e.differentiate("x");
    double at0[] = {0.0, 5.0};
    CHECK(d.evaluate(std::span<const double>(at0, 2)) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("derivatives match central finite differences on random expressions") {
    melnikov::testing_support::RandomExprGen gen({"x", "y", "z"}, 20260809);
    int checked = 0;
    while (checked < 100) {
        std::string src = gen.source();
        Expression e = Expression::parse(src, {"x", "y", "z"});
        for (int v = 0; v < 3 && checked < 100; ++v) {
            Expression d = e.differentiate(v);
            auto p = gen.point();
            const double h = 1e-6;
            double lo, hi, exact;
            try {
                auto pl = p; pl[std::size_t(v)] -= h;
                auto ph = p; ph[std::size_t(v)] += h;
                lo = e.evaluate(std::span<const double>(pl));
                hi = e.evaluate(std::span<const double>(ph));
                exact = d.evaluate(std::span<const double>(p));
            } catch (const DomainError&) {
                continue; // rare: generated point hit a pole
            }
            double fd = (hi - lo) / (2.0 * h);
            if (!std::isfinite(fd) || !std::isfinite(exact) || std::abs(exact) > 1e6) continue;
            INFO(src << "  d/d" << "xyz"[v]);
            CHECK(std::abs(exact - fd) / (1.0 + std::abs(exact)) < 1e-6);
            ++checked;
        }
    }
}

TEST_CASE("print/parse round trip is bit-exact") {
    melnikov::testing_support::RandomExprGen gen({"x", "y", "z"}, 42);
    for (int i = 0; i < 40; ++i) {
        std::string src = gen.source();
        Expression e = Expression::parse(src, {"x", "y", "z"});
        Expression r = Expression::parse(e.to_string(), {"x", "y", "z"});
        Expression rr = Expression::parse(r.to_string(), {"x", "y", "z"});
        for (int k = 0; k < 20; ++k) {
            auto p = gen.point();
            double a, b, c;
            try {
                a = e.evaluate(std::span<const double>(p));
                b = r.evaluate(std::span<const double>(p));
                c = rr.evaluate(std::span<const double>(p));
            } catch (const DomainError&) {
                continue;
            }
            INFO(src << "  ->  " << e.to_string());
            CHECK(a == b);
            CHECK(b == c);
        }
    }
}

TEST_CASE("derivative trees of printed derivatives still evaluate identically") {
    auto e = Expression::parse("sech(2*x)*tanh(x) + arctan(x^3)", {"x"});
    auto d = e.differentiate("x");
    auto d2 = Expression::parse(d.to_string(), {"x"});
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        double vals[] = {x};
        CHECK(d.evaluate(std::span<const double>(vals, 1)) ==
              d2.evaluate(std::span<const double>(vals, 1)));
    }
}

TEST_CASE("rebind maps variables by name onto a superset") {
    auto e = Expression::parse("p*cos(t)", {"q", "p", "t"});
    auto r = e.rebind({"q", "p", "t", "eta"});
    double vals[] = {0.0, 2.0, 0.0, 9.0};
    CHECK(r.evaluate(std::span<const double>(vals, 4)) == 2.0);
    CHECK_THROWS_AS(e.rebind({"q"}), melnikov::ConfigError);
}

TEST_CASE("expression combination operators") {
    auto a = Expression::parse("x^2", {"x", "y"});
    auto b = Expression::parse("y", {"x", "y"});
    auto s = a + 3.0 * b;
    double vals[] = {2.0, 5.0};
    CHECK(s.evaluate(std::span<const double>(vals, 2)) == 19.0);
}
