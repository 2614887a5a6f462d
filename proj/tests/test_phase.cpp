#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "melnikov/phase.hpp"

using namespace melnikov;

namespace {
constexpr double kPi = 3.14159265358979323846;

PhasePoint pt(const SystemDef& sys, std::initializer_list<double> v) {
    return sys.point(std::vector<double>(v));
}
} // namespace

TEST_CASE("pendulum vector field") {
    auto sys = catalog("pendulum");
    auto f0 = sys.vector_field(WhichH::H0, pt(sys, {0.0, 0.0}));
    CHECK(f0[0] == 0.0);
    CHECK(f0[1] == 0.0);
    auto f1 = sys.vector_field(WhichH::H0, pt(sys, {kPi, 2.0}));
    CHECK(f1[0] == 2.0);
    CHECK(f1[1] == Catch::Approx(std::sin(kPi)).margin(1e-15));
}

TEST_CASE("paper-example vector field in the (x, xi) factor") {
    auto sys = catalog("paper-example");
    // At eta = 0 the (x, xi) dynamics is that of F = xi^2 + cos x.
    auto f = sys.vector_field(WhichH::H0, pt(sys, {0.0, 0.0, 0.0, 0.1}));
    CHECK(f[2] == Catch::Approx(0.2).epsilon(1e-14)); // xdot = 2 xi
    CHECK(f[3] == Catch::Approx(0.0).margin(1e-14));  // xidot = sin 0
    // tdot = 1 + G: equals 1 + c at the bump centre.
    CHECK(f[0] == Catch::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("catalog paper-example values and guards") {
    auto sys = catalog("paper-example");
    CHECK(sys.eval(sys.h0(), pt(sys, {0.0, 0.0, 0.0, 0.0}).x) == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(sys.eval(sys.h0(), pt(sys, {0.0, 0.2, 0.0, 0.0}).x) == Catch::Approx(1.3).epsilon(1e-14));
    CHECK_THROWS_AS(catalog("paper-example", {{"delta", -1.0}}), ConfigError);
    CHECK_THROWS_AS(catalog("paper-example", {{"c", 0.0}}), ConfigError);
    CHECK_THROWS_AS(catalog("nope"), ConfigError);
}

TEST_CASE("bump profile is exactly c inside and 0 outside, smooth between") {
    auto sys = catalog("paper-example");
    const double delta = 0.3, c = 0.5;
    // G recovered from H: G(x, xi) = H(0,1,x,xi) - H(0,0,x,xi) - 1.
    auto G = [&](double x, double xi) {
        double with_eta = sys.eval(sys.h0(), std::vector<double>{0.0, 1.0, x, xi});
        double without = sys.eval(sys.h0(), std::vector<double>{0.0, 0.0, x, xi});
        return with_eta - without - 1.0;
    };
    // Exactly c on r^2 <= delta/2, exactly 0 on r^2 >= delta.
    CHECK(G(0.0, 0.0) == c);
    CHECK(G(std::sqrt(delta / 2) * 0.99, 0.0) == c);
    CHECK(G(std::sqrt(delta) * 1.01, 0.0) == 0.0);
    CHECK(G(2 * kPi, 0.0) == 0.0);
    // Smooth transition: consecutive fine samples never jump by a finite
    // fraction of c (a discontinuity would show up as ~c at one step).
    double prev = G(std::sqrt(delta / 2), 0.0);
    bool monotone = true;
    for (double r = std::sqrt(delta / 2); r <= std::sqrt(delta) + 1e-9; r += 1e-4) {
        double g = G(r, 0.0);
        CHECK(std::abs(g - prev) < 0.1 * c);
        if (g > prev + 1e-15) monotone = false;
        prev = g;
    }
    CHECK(monotone);
}

TEST_CASE("poisson bracket identities") {
    auto sys = catalog("pendulum");
    auto h0 = sys.h0();
    CHECK(sys.poisson_bracket(h0, h0, pt(sys, {1.1, 0.7})) == Catch::Approx(0.0).margin(1e-15));

    auto forced = with_perturbation(sys, "p*cos(t)", 2.0 * kPi);
    auto f = forced.parse_observable("p*cos(t)");
    auto g = forced.h0();
    // {p cos t, H0} = cos t sin q.
    CHECK(forced.poisson_bracket(f, g, pt(forced, {kPi, 2.0}), 0.0) ==
          Catch::Approx(std::sin(kPi)).margin(1e-15));
    CHECK(forced.poisson_bracket(f, g, pt(forced, {kPi / 2, 0.4}), 0.0) ==
          Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("bracket antisymmetry and Leibniz at random points") {
    auto sys = catalog("paper-example");
    auto f = sys.parse_observable("eta*cos(x) + xi");
    auto g = sys.parse_observable("sin(t)*xi^2 + eta^2");
    auto h = sys.parse_observable("cos(t) + x*xi");
    auto gh = g * h;

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 24; ++i) {
        auto m = sys.point({d(rng), d(rng), d(rng), d(rng)});
        double fg = sys.poisson_bracket(f, g, m);
        double gf = sys.poisson_bracket(g, f, m);
        CHECK(std::abs(fg + gf) < 1e-12);
        double lhs = sys.poisson_bracket(f, gh, m);
        double rhs = sys.eval(g, m.x) * sys.poisson_bracket(f, h, m) +
                     sys.eval(h, m.x) * sys.poisson_bracket(f, g, m);
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("conservation seeds for the catalog momentum maps") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> d(-1.0, 1.0);

    auto paper = catalog("paper-example");
    auto eta = paper.parse_observable("eta");
    for (int i = 0; i < 16; ++i) {
        auto m = paper.point({d(rng), d(rng), d(rng), d(rng)});
        CHECK(std::abs(paper.poisson_bracket(paper.h0(), eta, m)) < 1e-12);
        CHECK(std::abs(paper.poisson_bracket(paper.h0(), paper.h0(), m)) < 1e-12);
    }

    auto ext = extend_periodic(with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi));
    auto h0pi = ext.parse_observable("p^2/2 + cos(q)");
    auto eta2 = ext.parse_observable("eta");
    for (int i = 0; i < 16; ++i) {
        auto m = ext.point({d(rng), d(rng), d(rng), d(rng)});
        CHECK(std::abs(ext.poisson_bracket(ext.h0(), h0pi, m)) < 1e-12);
        CHECK(std::abs(ext.poisson_bracket(ext.h0(), eta2, m)) < 1e-12);
    }
}

TEST_CASE("extended system: eta Poisson-commutes with the extended H0") {
    auto ext = extend_periodic(with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi));
    auto eta = ext.parse_observable("eta");
    CHECK(std::abs(ext.poisson_bracket(ext.h0(), eta, pt(ext, {1.0, -0.3, 2.0, 0.7}))) < 1e-15);
    CHECK(ext.dim() == 4);
    CHECK(ext.time_coordinate() == 2);
    CHECK(!ext.time_dependent());
    // Extending twice is an error.
    CHECK_THROWS_AS(extend_periodic(ext), ConfigError);
}

TEST_CASE("H1 periodicity is checked at construction") {
    auto sys = catalog("pendulum");
    CHECK_THROWS_AS(with_perturbation(sys, "p*cos(t)", 1.0), ConfigError);
    CHECK_NOTHROW(with_perturbation(sys, "p*cos(t)", 2.0 * kPi));
    CHECK_THROWS_AS(with_perturbation(sys, "p*t", 2.0 * kPi), ConfigError);
}

TEST_CASE("H0 must not reference t") {
    CHECK_THROWS_AS(SystemDef::create({{"q", "p", Topology::Line, 0.0, false}},
                                      "p^2/2 + cos(t)", "", {}, true, 1.0),
                    ConfigError);
}

TEST_CASE("circle coordinates reduce on construction") {
    auto sys = catalog("pendulum");
    auto m = pt(sys, {2.0 * kPi + 0.5, 1.0});
    CHECK(m[0] == Catch::Approx(0.5).epsilon(1e-14));
    auto m2 = pt(sys, {-0.5, 1.0});
    CHECK(m2[0] == Catch::Approx(2.0 * kPi - 0.5).epsilon(1e-14));
    // Shortest angular difference.
    CHECK(sys.coordinate_difference(0, 0.1, 2.0 * kPi - 0.1) == Catch::Approx(0.2).epsilon(1e-12));
    CHECK(sys.distance(m.x, m.x) == 0.0);
}

TEST_CASE("system definition file round trip") {
    const char* path = "test_system_def.ini";
    {
        std::FILE* f = std::fopen(path, "w");
        std::fputs("# forced pendulum\n"
                   "[pairs]\n"
                   "pair = q p circle 6.283185307179586\n"
                   "[params]\n"
                   "omega = 1.0\n"
                   "[hamiltonian]\n"
                   "h0 = \"p^2/2 + cos(q)\"\n"
                   "h1 = \"p*cos(omega*t)\"\n"
                   "time_dependent = true\n"
                   "forcing_period = 6.283185307179586\n",
                   f);
        std::fclose(f);
    }
    auto sys = load_system(path);
    CHECK(sys.time_dependent());
    CHECK(sys.dim() == 2);
    CHECK(sys.eval(sys.h0(), pt(sys, {0.0, 2.0}).x) == 3.0);
    CHECK(sys.eval(sys.h1(), pt(sys, {0.0, 2.0}).x, 0.0) == 2.0);
    std::remove(path);
    CHECK_THROWS_AS(load_system("does_not_exist.ini"), ConfigError);
}

TEST_CASE("bracket sign-flip test hook breaks antisymmetry") {
    auto sys = catalog("pendulum");
    auto f = sys.parse_observable("p*q");
    testing::bracket_sign_flip = true;
    double v = sys.poisson_bracket(f, f, pt(sys, {1.0, 2.0}));
    testing::bracket_sign_flip = false;
    CHECK(std::abs(v) > 0.1);
    CHECK(std::abs(sys.poisson_bracket(f, f, pt(sys, {1.0, 2.0}))) < 1e-15);
}
