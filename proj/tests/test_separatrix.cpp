#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "melnikov/separatrix.hpp"

using namespace melnikov;

namespace {
constexpr double kPi = 3.14159265358979323846;

PhasePoint pt(const SystemDef& sys, std::initializer_list<double> v) {
    return sys.point(std::vector<double>(v));
}

// Oracle: residual of Hamilton's equations along the closed form,
// dm/ds - X_H0(m(s)), via central differences of the parameterization.
double hamilton_residual(const SystemDef& sys, const ConnectingOrbit& orbit, double s) {
    const double h = 1e-6;
    auto lo = orbit.state(s - h);
    auto hi = orbit.state(s + h);
    auto field = sys.vector_field(WhichH::H0, PhasePoint{orbit.state(s)});
    double worst = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        double fd = (hi[i] - lo[i]) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - field[i]));
    }
    return worst;
}
} // namespace

TEST_CASE("pendulum analytic separatrix") {
    auto sys = catalog("pendulum");
    auto orbit = analytic_separatrix(sys, "pendulum");

    auto m0 = orbit.state(0.0);
    CHECK(m0[0] == Catch::Approx(kPi).epsilon(1e-14));
    CHECK(m0[1] == Catch::Approx(2.0).epsilon(1e-14));

    // Energy 1 and Hamilton's equations along an s-grid.
    for (double s = -8.0; s <= 8.0; s += 0.5) {
        auto m = orbit.state(s);
        CHECK(std::abs(sys.eval(sys.h0(), m) - 1.0) < 1e-9);
        CHECK(hamilton_residual(sys, orbit, s) < 1e-9);
    }

    // sech decay toward the saddle on the circle.
    auto far = orbit.point(30.0);
    CHECK(sys.distance(far.x, std::vector<double>{0.0, 0.0}) < 1e-8);
    CHECK(orbit.kind == ConnectingOrbit::Kind::Homoclinic);

    // Truncation invariants: close at S, exponential decay past S.
    double dS = orbit.distance_to_target(orbit.S);
    double dS1 = orbit.distance_to_target(orbit.S + 1.0);
    CHECK(dS < orbit.asym_tol);
    CHECK(dS1 < dS * std::exp(-orbit.rate_plus / 2.0));
}

TEST_CASE("duffing analytic separatrix") {
    auto sys = catalog("duffing");
    auto orbit = analytic_separatrix(sys, "duffing");
    auto m0 = orbit.state(0.0);
    CHECK(m0[0] == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(std::abs(m0[1]) < 1e-15);
    CHECK(std::abs(sys.eval(sys.h0(), m0)) < 1e-14);
    for (double s = -6.0; s <= 6.0; s += 0.37)
        CHECK(hamilton_residual(sys, orbit, s) < 1e-9);
    CHECK_THROWS_AS(analytic_separatrix(sys, "kepler"), ConfigError);
}

TEST_CASE("numeric separatrix matches the analytic pendulum loop") {
    auto sys = catalog("pendulum");
    auto saddle = equilibrium_record(sys, WhichH::H0, pt(sys, {0.0, 0.0}));
    auto numeric = numeric_separatrix(sys, saddle, saddle, +1);
    auto analytic = analytic_separatrix(sys, "pendulum");

    CHECK(numeric.kind == ConnectingOrbit::Kind::Homoclinic);

    // Phase alignment: golden-section fit of the numeric parameter offset.
    auto apex = analytic.state(0.0);
    auto f = [&](double sigma) { return sys.distance(numeric.state(sigma), apex); };
    double a = -0.5, b = 0.5;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a), fc = f(c), fd = f(d);
    for (int i = 0; i < 60; ++i) {
        if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
        else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
    }
    double sigma = 0.5 * (a + b);

    double worst = 0.0;
    for (double s = -10.0; s <= 10.0; s += 0.25)
        worst = std::max(worst, sys.distance(numeric.state(s + sigma), analytic.state(s)));
    CHECK(worst < 1e-6);
}

TEST_CASE("flow compatibility: m(s + sigma) = phi^sigma(m(s))") {
    auto sys = catalog("paper-example");
    auto src = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto orbit = numeric_separatrix(sys, src, tgt, +1);
    CHECK(orbit.kind == ConnectingOrbit::Kind::Heteroclinic);

    for (double s : {-6.0, -2.0, 0.0, 1.5, 5.0}) {
        for (double sigma : {-1.0, 0.4, 1.0}) {
            auto direct = orbit.state(s + sigma);
            auto flowed = flow(sys, WhichH::H0, PhasePoint{orbit.state(s)}, 0.0, sigma).state(sigma);
            CHECK(sys.distance(direct, flowed) < 1e-8);
        }
    }

    // Forward limit: lands at x = 2 pi on the target orbit.
    auto far = orbit.state(orbit.sample_hi);
    CHECK(std::abs(far[2] - 2.0 * kPi) < 1e-5);
    CHECK(std::abs(far[3]) < 1e-5);
    CHECK(orbit.distance_to_target(orbit.S) < orbit.asym_tol);
}

TEST_CASE("wrong branch is surfaced as no-connection") {
    auto sys = catalog("paper-example");
    auto src = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    SeparatrixOptions opt;
    opt.s_range = 40.0;
    CHECK_THROWS_AS(numeric_separatrix(sys, src, tgt, -1, opt), SolverError);
}

TEST_CASE("seed offset range is validated") {
    auto sys = catalog("pendulum");
    auto saddle = equilibrium_record(sys, WhichH::H0, pt(sys, {0.0, 0.0}));
    SeparatrixOptions opt;
    opt.delta0 = 1e-3;
    CHECK_THROWS_AS(numeric_separatrix(sys, saddle, saddle, +1, opt), ConfigError);
}

TEST_CASE("conserved frames: validity, rank deficiency, paper-example") {
    auto pen = catalog("pendulum");
    auto ext = extend_periodic(with_perturbation(pen, "p*cos(t)", 2.0 * kPi));
    auto lifted = lift_to_extended(ext, analytic_separatrix(pen, "pendulum"), 0.0, 0.0);

    auto h0pi = ext.parse_observable("p^2/2 + cos(q)");
    auto eta = ext.parse_observable("eta");
    auto frame = conserved_frame(ext, {h0pi, eta}, {"H0_pi", "eta"}, lifted);
    CHECK(frame.certificate > 0.1);

    // Dependent differentials: rank deficiency.
    auto h0sq = h0pi * h0pi;
    CHECK_THROWS_AS(conserved_frame(ext, {h0pi, h0sq}, {"H0_pi", "H0_pi^2"}, lifted), GuardError);

    // Non-commuting pair: commutation failure is reported.
    auto qvar = ext.parse_observable("q");
    CHECK_THROWS_AS(conserved_frame(ext, {h0pi, qvar}, {"H0_pi", "q"}, lifted), GuardError);

    // paper-example frame (H, eta).
    auto paper = catalog("paper-example");
    auto src = find_periodic_orbit(paper, WhichH::H0, paper.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(paper, WhichH::H0, paper.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto het = numeric_separatrix(paper, src, tgt, +1);
    auto frame2 = conserved_frame(paper, {paper.h0(), paper.parse_observable("eta")},
                                  {"H", "eta"}, het);
    CHECK(frame2.certificate > 1e-3);
}

TEST_CASE("frame fields are tangent to the connecting manifold") {
    auto pen = catalog("pendulum");
    auto ext = extend_periodic(with_perturbation(pen, "p*cos(t)", 2.0 * kPi));
    auto lifted = lift_to_extended(ext, analytic_separatrix(pen, "pendulum"), 0.0, 0.0);

    auto h0pi = ext.parse_observable("p^2/2 + cos(q)");
    auto eta = ext.parse_observable("eta");

    // Tangent plane of N0 at m(s): span{X_H0(m), d/dt shift} (the manifold is
    // the time-circle sweep of the loop).
    for (double s : {-4.0, -1.0, 0.0, 2.0, 5.0}) {
        auto m = PhasePoint{lifted.state(s)};
        auto xh = ext.vector_field(WhichH::H0, m);
        Eigen::Vector4d b1(xh[0], xh[1], xh[2], xh[3]);
        Eigen::Vector4d b2(0, 0, 1, 0); // time-shift direction
        b1.normalize();
        b2 = (b2 - b2.dot(b1) * b1).normalized();
        for (const auto& a : {h0pi, eta}) {
            // Hamiltonian field of the observable a.
            std::vector<double> xa(4, 0.0);
            std::vector<Expression> grad;
            for (int k = 0; k < ext.dim(); ++k)
                grad.push_back(a.differentiate(ext.binding_layout()[std::size_t(k)]));
            for (int i = 0; i < ext.pair_count(); ++i) {
                xa[std::size_t(2 * i)] = ext.eval(grad[std::size_t(2 * i + 1)], m.x);
                xa[std::size_t(2 * i + 1)] = -ext.eval(grad[std::size_t(2 * i)], m.x);
            }
            Eigen::Vector4d v(xa[0], xa[1], xa[2], xa[3]);
            Eigen::Vector4d res = v - v.dot(b1) * b1 - v.dot(b2) * b2;
            CHECK(res.norm() < 1e-6);
        }
    }
}
