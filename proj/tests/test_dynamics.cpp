#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "melnikov/dynamics.hpp"

using namespace melnikov;

namespace {
constexpr double kPi = 3.14159265358979323846;

PhasePoint pt(const SystemDef& sys, std::initializer_list<double> v) {
    return sys.point(std::vector<double>(v));
}
} // namespace

TEST_CASE("pendulum flow conserves energy on the separatrix level") {
    auto sys = catalog("pendulum");
    auto m = pt(sys, {kPi, 2.0});
    for (double tend : {10.0, -10.0}) {
        auto traj = flow(sys, WhichH::H0, m, 0.0, tend);
        CHECK(traj.max_energy_drift() < 1e-9);
    }
}

TEST_CASE("energy conservation within 1e-9 over |t| <= 30 at tol 1e-12") {
    auto sys = catalog("duffing");
    auto m = pt(sys, {0.9, 0.3});
    auto traj = flow(sys, WhichH::H0, m, 0.0, 30.0);
    CHECK(traj.max_energy_drift() < 1e-9);
}

TEST_CASE("fixed point stays fixed") {
    auto sys = catalog("pendulum");
    auto traj = flow(sys, WhichH::H0, pt(sys, {0.0, 0.0}), 0.0, 7.0);
    auto end = traj.point(7.0);
    CHECK(std::abs(end[0]) < 1e-12);
    CHECK(std::abs(end[1]) < 1e-12);
}

TEST_CASE("blow-up is reported, not looped on") {
    // qdot = q^2 blows up at t = 1.
    auto sys = SystemDef::create({{"q", "p", Topology::Line, 0.0, false}}, "q^2*p");
    FlowOptions opt;
    opt.max_steps = 200000;
    CHECK_THROWS_AS(flow(sys, WhichH::H0, pt(sys, {1.0, 1.0}), 0.0, 10.0, opt), SolverError);
}

TEST_CASE("variational flow at the pendulum saddle matches the matrix exponential") {
    auto sys = catalog("pendulum");
    auto [yend, phi] = variational_flow(sys, WhichH::H0, pt(sys, {0.0, 0.0}), 0.0, 1.0);
    // Linearization [[0,1],[1,0]]: exp = [[cosh 1, sinh 1], [sinh 1, cosh 1]].
    CHECK(phi(0, 0) == Catch::Approx(std::cosh(1.0)).epsilon(1e-10));
    CHECK(phi(0, 1) == Catch::Approx(std::sinh(1.0)).epsilon(1e-10));
    CHECK(phi(1, 0) == Catch::Approx(std::sinh(1.0)).epsilon(1e-10));
    CHECK(phi(1, 1) == Catch::Approx(std::cosh(1.0)).epsilon(1e-10));

    auto [y0, phi0] = variational_flow(sys, WhichH::H0, pt(sys, {0.0, 0.0}), 0.0, 0.0);
    CHECK((phi0 - Eigen::Matrix2d::Identity()).norm() == 0.0);
}

TEST_CASE("variational matrices are symplectic") {
    auto sys = catalog("pendulum");
    auto [yend, phi] = variational_flow(sys, WhichH::H0, pt(sys, {1.1, 0.4}), 0.0, 6.0);
    CHECK(std::abs(phi.determinant() - 1.0) < 1e-8);
    Eigen::Matrix2d omega;
    omega << 0, 1, -1, 0;
    CHECK((phi.transpose() * omega * phi - omega).norm() < 1e-7);

    auto paper = catalog("paper-example");
    auto [ye, phi4] = variational_flow(paper, WhichH::H0, pt(paper, {0.0, 0.05, 0.4, 0.2}), 0.0, 2.0);
    Eigen::Matrix4d omega4 = Eigen::Matrix4d::Zero();
    omega4(0, 1) = 1; omega4(1, 0) = -1;
    omega4(2, 3) = 1; omega4(3, 2) = -1;
    CHECK((phi4.transpose() * omega4 * phi4 - omega4).norm() < 1e-7);
}

TEST_CASE("paper-example periodic orbits: periods 1/(1+c) and 1") {
    auto sys = catalog("paper-example"); // c = 0.5, delta = 0.3
    OrbitSolveOptions opt;

    auto rec0 = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.01, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}}, opt);
    CHECK(rec0.period == Catch::Approx(2.0 / 3.0).margin(1e-10));
    CHECK(rec0.residual < 1e-10);
    CHECK(rec0.classification == PeriodicOrbitRecord::Classification::NondegenerateHyperbolic);

    auto rec1 = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.01, 6.2832, 0.0}),
                                    SectionMode{{0, 0.0}}, opt);
    CHECK(rec1.period == Catch::Approx(1.0).margin(1e-10));
    CHECK(std::abs(rec1.m0[2] - 2.0 * kPi) < 1e-9);
    CHECK(std::abs(rec1.m0[3]) < 1e-9);
}

TEST_CASE("multipliers pair up as (lambda, 1/lambda)") {
    auto sys = catalog("paper-example");
    auto rec = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.01, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    REQUIRE(rec.multipliers.size() == 4);
    for (auto lam : rec.multipliers) {
        bool paired = false;
        for (auto mu : rec.multipliers)
            if (std::abs(lam * mu - 1.0) < 1e-6 * std::abs(lam * mu) + 1e-6) paired = true;
        CHECK(paired);
    }
    // (x, xi) block multipliers are exp(+-sqrt(2) tau).
    double expect = std::exp(std::sqrt(2.0) * rec.period);
    CHECK(std::abs(rec.multipliers[0]) == Catch::Approx(expect).epsilon(1e-8));
}

TEST_CASE("extended pendulum saddle circle: Floquet multipliers") {
    auto forced = with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi);
    auto ext = extend_periodic(forced);
    auto rec = find_periodic_orbit(ext, WhichH::H0, pt(ext, {0.0, 0.0, 1.3, 0.2}),
                                   FixedPeriodMode{2.0 * kPi});
    REQUIRE(rec.multipliers.size() == 4);
    CHECK(std::abs(rec.multipliers[0]) == Catch::Approx(std::exp(2.0 * kPi)).epsilon(1e-6));
    CHECK(std::abs(rec.multipliers[3]) == Catch::Approx(std::exp(-2.0 * kPi)).epsilon(1e-6));
    // Eigenvalue 1 with multiplicity exactly 2.
    int ones = 0;
    for (auto lam : rec.multipliers)
        if (std::abs(lam - 1.0) <= 1e-6) ++ones;
    CHECK(ones == 2);
    CHECK(rec.classification == PeriodicOrbitRecord::Classification::NondegenerateHyperbolic);
    CHECK(rec.rate_unstable == Catch::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("find_periodic_orbit is idempotent") {
    auto sys = catalog("paper-example");
    auto rec = find_periodic_orbit(sys, WhichH::H0, pt(sys, {0.0, 0.01, 6.2832, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto rec2 = find_periodic_orbit(sys, WhichH::H0, rec.m0, SectionMode{{0, 0.0}});
    CHECK(sys.distance(rec.m0.x, rec2.m0.x) < 1e-12);
}

TEST_CASE("newton divergence is reported") {
    auto sys = catalog("duffing");
    OrbitSolveOptions opt;
    opt.max_iterations = 8;
    opt.t_max = 20.0;
    // Far outside any basin: field pushes the guess away.
    CHECK_THROWS_AS(find_periodic_orbit(sys, WhichH::H0, pt(sys, {40.0, 30.0}),
                                        FixedPeriodMode{1.0}, opt),
                    SolverError);
}

TEST_CASE("return_time reproduces both paper-example periods") {
    auto sys = catalog("paper-example");
    SectionSpec sec{0, 0.0};
    CHECK(return_time(sys, WhichH::H0, pt(sys, {0.0, 0.01, 0.0, 0.0}), sec) ==
          Catch::Approx(2.0 / 3.0).margin(1e-10));
    CHECK(return_time(sys, WhichH::H0, pt(sys, {0.0, 0.01, 2.0 * kPi, 0.0}), sec) ==
          Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("pendulum saddle has no section return") {
    auto sys = catalog("pendulum");
    CHECK_THROWS_AS(return_time(sys, WhichH::H0, pt(sys, {0.0, 0.0}), SectionSpec{0, 0.0}, 10.0),
                    SolverError);
}

TEST_CASE("stroboscopic map at eps = 0") {
    auto forced = with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi);
    auto fixed = stroboscopic_map(forced, pt(forced, {0.0, 0.0}), 0.0, 0.0);
    CHECK(std::abs(fixed[0]) < 1e-11);
    CHECK(std::abs(fixed[1]) < 1e-11);

    auto m = pt(forced, {1.0, 0.5});
    auto out = stroboscopic_map(forced, m, 0.3, 0.0);
    double h_in = forced.eval(forced.h0(), m.x);
    double h_out = forced.eval(forced.h0(), out.x);
    CHECK(std::abs(h_in - h_out) < 1e-9);

    CHECK_THROWS_AS(stroboscopic_map(catalog("pendulum"), m, 0.0, 0.0), ConfigError);
}

TEST_CASE("dense output is consistent with re-integration") {
    auto sys = catalog("duffing");
    auto m = pt(sys, {0.9, 0.3});
    auto traj = flow(sys, WhichH::H0, m, 0.0, 8.0);
    for (double s : {0.7, 2.31, 5.999}) {
        auto direct = flow(sys, WhichH::H0, m, 0.0, s).state(s);
        auto interp = traj.state(s);
        CHECK(std::abs(direct[0] - interp[0]) < 1e-8);
        CHECK(std::abs(direct[1] - interp[1]) < 1e-8);
    }
}

TEST_CASE("paper-example separatrix flow approaches the far saddle") {
    auto sys = catalog("paper-example");
    // Apex of the F-separatrix: (x, xi) = (pi, sqrt 2).
    auto m = sys.point({0.0, 0.0, kPi, std::sqrt(2.0)});
    auto traj = flow(sys, WhichH::H0, m, 0.0, 25.0);
    // The true orbit tends to (2 pi, 0); in double arithmetic the initial
    // off-separatrix defect (~1e-16) escapes after s ~ 12, so the honest
    // statement is about the closest approach.
    double best = 1e30;
    for (double s = 5.0; s <= 25.0; s += 0.25) {
        auto st = traj.state(s);
        best = std::min(best, std::hypot(st[2] - 2.0 * kPi, st[3]));
    }
    CHECK(best < 1e-5);
}

TEST_CASE("extended flow projects onto the planar flow") {
    auto pen = catalog("pendulum");
    auto ext = extend_periodic(with_perturbation(pen, "p*cos(t)", 2.0 * kPi));
    auto planar_end = flow(pen, WhichH::H0, pen.point({1.2, 0.4}), 0.0, 7.0).state(7.0);
    auto ext_end = flow(ext, WhichH::H0, ext.point({1.2, 0.4, 0.3, 0.9}), 0.0, 7.0).state(7.0);
    CHECK(std::abs(planar_end[0] - ext_end[0]) < 1e-9);
    CHECK(std::abs(planar_end[1] - ext_end[1]) < 1e-9);
    // eta and t behave as the cotangent-circle pair: tdot = 1, etadot = 0.
    CHECK(ext_end[2] == Catch::Approx(0.3 + 7.0).epsilon(1e-12));
    CHECK(ext_end[3] == Catch::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("stoermer-verlet cross-check stays on the energy level") {
    auto sys = catalog("pendulum");
    auto m = pt(sys, {1.0, 0.2});
    auto end_rk = flow(sys, WhichH::H0, m, 0.0, 5.0).point(5.0);
    auto end_sv = verlet_flow(sys, WhichH::H0, m, 0.0, 5.0, 1e-4);
    CHECK(sys.distance(end_rk.x, end_sv.x) < 1e-6);
    double h0 = sys.eval(sys.h0(), m.x);
    CHECK(std::abs(sys.eval(sys.h0(), end_sv.x) - h0) < 1e-7);
}
