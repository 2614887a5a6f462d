#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "melnikov/separatrix.hpp"
#include "melnikov/splitting.hpp"
#include "support/oracles.hpp"

using namespace melnikov;
namespace oracles = melnikov::testing_support;

namespace {
constexpr double kPi = 3.14159265358979323846;

SystemDef forced_pendulum() {
    return with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi);
}
} // namespace

TEST_CASE("perturbed fixed point of the strobe map") {
    auto sys = forced_pendulum();
    auto fp0 = perturbed_fixed_point(sys, 0.0, 0.0, sys.point({0.0, 0.0}));
    CHECK(std::abs(fp0[0]) < 1e-11);
    CHECK(std::abs(fp0[1]) < 1e-11);

    double eps = 1e-3;
    auto fp = perturbed_fixed_point(sys, eps, 0.0, sys.point({0.0, 0.0}));
    CHECK(std::hypot(fp[0], fp[1]) < 10.0 * eps);
    // Defining property: the strobe map fixes it.
    auto image = stroboscopic_map(sys, fp, 0.0, eps);
    CHECK(sys.distance(image.x, fp.x) < 1e-10);

    CHECK_THROWS_AS(perturbed_fixed_point(sys, 0.5, 0.0, sys.point({0.0, 0.0})), ConfigError);
}

TEST_CASE("unperturbed polyline traces the analytic separatrix") {
    auto sys = forced_pendulum();
    auto planar = catalog("pendulum");
    auto analytic = analytic_separatrix(planar, "pendulum");

    ManifoldOptions opt;
    opt.refine_max = 2e-3;
    auto poly = manifold_polyline(sys, 0.0, 0.0, {0.0, 0.0}, ManifoldPolyline::Side::Unstable, +1,
                                  4.5, opt);
    REQUIRE(poly.points.size() > 100);
    CHECK(!poly.truncated);

    // Vertex-to-curve distance (one-sided Hausdorff) via golden-section on
    // the analytic parameterization.
    auto dist_to_curve = [&](const std::array<double, 2>& p) {
        double best = 1e30, best_s = 0.0;
        for (double s = -25.0; s <= 5.0; s += 0.05) {
            auto c = analytic.state(s);
            double d = std::hypot(p[0] - c[0], p[1] - c[1]);
            if (d < best) { best = d; best_s = s; }
        }
        double a = best_s - 0.05, b = best_s + 0.05;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double c1 = b - gr * (b - a), d1 = a + gr * (b - a);
        auto f = [&](double s) {
            auto c = analytic.state(s);
            return std::hypot(p[0] - c[0], p[1] - c[1]);
        };
        double fc = f(c1), fd = f(d1);
        for (int it = 0; it < 50; ++it) {
            if (fc < fd) { b = d1; d1 = c1; fd = fc; c1 = b - gr * (b - a); fc = f(c1); }
            else { a = c1; c1 = d1; fc = fd; d1 = a + gr * (b - a); fd = f(d1); }
        }
        return std::min(fc, fd);
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < poly.points.size(); i += 7)
        worst = std::max(worst, dist_to_curve(poly.points[i]));
    CHECK(worst < 1e-6);

    // Spacing and angle invariants hold at every vertex.
    for (std::size_t i = 1; i < poly.points.size(); ++i) {
        double dx = poly.points[i][0] - poly.points[i - 1][0];
        double dy = poly.points[i][1] - poly.points[i - 1][1];
        CHECK(std::hypot(dx, dy) <= opt.refine_max * (1.0 + 1e-9));
    }
}

TEST_CASE("stable and unstable polylines coincide at eps = 0") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    double gap = measured_gap(sys, setup, 0.0, 0.0);
    CHECK(std::abs(gap) < 1e-9);
}

TEST_CASE("gap/eps matches the Melnikov value at the maximal phase") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    const double eps = 1e-3, t0 = kPi / 2;
    double gap = measured_gap(sys, setup, eps, t0);
    double m = oracles::forced_pendulum_melnikov_closed(t0);
    INFO("gap/eps = " << gap / eps << " M = " << m);
    CHECK(std::abs(gap / eps - m) < 0.05 * std::abs(m));
}

TEST_CASE("gap sign flips across a zero of M") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    const double eps = 1e-2;
    double gm = measured_gap(sys, setup, eps, -0.4);
    double gp = measured_gap(sys, setup, eps, +0.4);
    CHECK(gm * gp < 0.0);
}

TEST_CASE("manifold crossing sits within C*eps of the predicted zero") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    const double eps = 1e-3;
    // Bisection on the gap sign around the predicted zero t0* = 0.
    double a = -0.3, b = 0.3;
    double fa = measured_gap(sys, setup, eps, a);
    REQUIRE(fa * measured_gap(sys, setup, eps, b) < 0.0);
    for (int it = 0; it < 12; ++it) {
        double mid = 0.5 * (a + b);
        double fm = measured_gap(sys, setup, eps, mid);
        if (fa * fm <= 0.0) b = mid;
        else { a = mid; fa = fm; }
    }
    double crossing_phase = 0.5 * (a + b);
    INFO("crossing at t0 = " << crossing_phase);
    CHECK(std::abs(crossing_phase) < 0.05);
}

TEST_CASE("polyline vertices hold H0 to O(eps)") {
    auto sys = forced_pendulum();
    const double eps = 1e-3;
    auto fp = perturbed_fixed_point(sys, eps, 0.0, sys.point({0.0, 0.0}));
    auto poly = manifold_polyline(sys, eps, 0.0, fp.x, ManifoldPolyline::Side::Unstable, +1, 6.0);
    double h_ref = sys.eval(sys.h0(), std::vector<double>{0.0, 0.0});
    double worst = 0.0;
    for (const auto& p : poly.points)
        worst = std::max(worst,
                         std::abs(sys.eval(sys.h0(), std::vector<double>{p[0], p[1]}) - h_ref));
    CHECK(worst < 30.0 * eps);
}

TEST_CASE("refinement budget exhaustion is flagged, partial polyline returned") {
    auto sys = forced_pendulum();
    ManifoldOptions opt;
    opt.budget = 40;
    auto poly = manifold_polyline(sys, 0.0, 0.0, {0.0, 0.0}, ManifoldPolyline::Side::Unstable, +1,
                                  6.0, opt);
    CHECK(poly.truncated);
    CHECK(!poly.points.empty());
}

TEST_CASE("no crossing in window is reported") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    setup.transversal.base = {kPi, 3.5}; // far above the separatrix
    setup.transversal.window = 0.05;
    CHECK_THROWS_AS(measured_gap(sys, setup, 0.0, 0.0), SolverError);
}

TEST_CASE("first-order check over the (t0, eps) grid") {
    auto sys = forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    std::vector<double> phases{0.5, 1.2, kPi / 2, 2.2, 2.9};
    std::vector<double> eps_list{1e-2, 1e-3};
    auto reference = [](double t0) { return oracles::forced_pendulum_melnikov_closed(t0); };

    auto report = first_order_check(sys, setup, phases, eps_list, reference);
    REQUIRE(report.cells.size() == phases.size() * eps_list.size());
    CHECK(report.amplitude == Catch::Approx(2.504088).epsilon(1e-4));

    double dev_small = 0.0, mean_dev_small = 0.0, mean_dev_big = 0.0;
    for (const auto& cell : report.cells) {
        if (cell.eps == 1e-3) {
            dev_small = std::max(dev_small, cell.deviation_rel);
            mean_dev_small += cell.deviation_rel;
        } else {
            mean_dev_big += cell.deviation_rel;
        }
    }
    mean_dev_small /= double(phases.size());
    mean_dev_big /= double(phases.size());
    CHECK(dev_small < 0.05);

    double ratio = mean_dev_big / mean_dev_small;
    INFO("residual ratio " << ratio);
    CHECK(ratio > 5.0);
    CHECK(ratio < 20.0);

    CHECK(report.gap_order > 0.8);
    CHECK(report.gap_order < 1.2);

    // Sign agreement away from zeros.
    int agree = 0;
    for (const auto& cell : report.cells)
        if (cell.gap * cell.reference > 0.0) ++agree;
    CHECK(agree >= int(0.9 * double(report.cells.size())));
}
