#ifndef MELNIKOV_SPLITTING_HPP
#define MELNIKOV_SPLITTING_HPP

// Brute-force splitting oracle for planar time-periodic systems: grow the
// stable/unstable manifolds of the stroboscopic map as adaptive polylines
// and measure the energy gap DH0 across a transversal. At first order,
// DH0 = eps * beta(X_{H0 o pi}) + O(eps^2) with the (stable - unstable)
// orientation.
//
// Sign calibration: the orientation constant below was fixed once on the
// forced pendulum at the maximal-M phase (t0 = pi/2, gap/eps = +M) and is
// asserted by the verification suite.

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dynamics.hpp"
#include "errors.hpp"
#include "phase.hpp"

namespace melnikov {

inline constexpr double kSplitStableMinusUnstableSign = 1.0;

struct StrobeOptions {
    FlowOptions flow;
    double fp_tol = 1e-11;
    int max_iterations = 40;
};

// Fixed point of the stroboscopic map at phase t0 (Newton on strobe - id).
inline PhasePoint perturbed_fixed_point(const SystemDef& sys, double eps, double t0,
                                        const PhasePoint& guess, const StrobeOptions& opt = {}) {
    if (!sys.time_dependent())
        throw ConfigError("perturbed_fixed_point: system is not time-dependent");
    if (std::abs(eps) > 0.1)
        throw ConfigError("perturbed_fixed_point: |eps| must be <= 0.1");
    const int n = sys.dim();
    FlowOptions fo = opt.flow;
    fo.eps = eps;
    std::vector<double> y = guess.x;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        auto [yend, phi] =
            variational_flow(sys, WhichH::Perturbed, PhasePoint{y}, t0, t0 + sys.forcing_period(), fo);
        Eigen::VectorXd r(n);
        for (int k = 0; k < n; ++k)
            r(k) = sys.coordinate_difference(k, yend[std::size_t(k)], y[std::size_t(k)]);
        if (r.norm() < opt.fp_tol) return PhasePoint{std::move(y)};
        if (it == opt.max_iterations) break;
        Eigen::MatrixXd J = phi - Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd step = J.partialPivLu().solve(r);
        for (int k = 0; k < n; ++k) y[std::size_t(k)] -= step(k);
    }
    throw SolverError("perturbed_fixed_point: Newton did not converge");
}

struct ManifoldOptions {
    double delta0 = 1e-7;    // fundamental-domain seed offset
    double refine_max = 0.02; // max vertex spacing
    double angle_max = 0.2;   // max turning angle per vertex (rad)
    long budget = 200000;     // vertex evaluations
    FlowOptions flow;
};

struct ManifoldPolyline {
    enum class Side { Stable, Unstable };
    Side side = Side::Unstable;
    double eps = 0.0, t0 = 0.0;
    std::vector<double> fixed_point; // raw (unwrapped) planar seed point
    int branch_sign = +1;
    Eigen::Vector2d direction;       // oriented eigenvector of the strobe map
    double expansion = 0.0;          // per-map stretch factor (> 1)
    double delta0 = 0.0;
    bool truncated = false;

    std::vector<std::array<double, 2>> points;
    std::vector<double> sigma;   // global manifold parameter per vertex
    std::vector<double> arclen;
};

namespace detail {

// Strobe map / inverse strobe in the unwrapped planar chart.
inline std::array<double, 2> strobe_raw(const SystemDef& sys, double eps, double t0, int dir,
                                        std::array<double, 2> p, const FlowOptions& flow_opt) {
    FlowOptions fo = flow_opt;
    fo.eps = eps;
    double t1 = t0 + dir * sys.forcing_period();
    auto traj = flow(sys, WhichH::Perturbed, PhasePoint{{p[0], p[1]}}, t0, t1, fo);
    auto y = traj.state(t1);
    return {y[0], y[1]};
}

// Manifold point at global parameter sigma: the seed at offset
// delta0 * expansion^{sigma-k} mapped k = floor(sigma) times.
inline std::array<double, 2> manifold_point(const SystemDef& sys, const ManifoldPolyline& poly,
                                            double sg, const FlowOptions& flow_opt) {
    int k = int(std::floor(sg));
    double u = poly.delta0 * std::pow(poly.expansion, sg - double(k));
    std::array<double, 2> p{
        poly.fixed_point[0] + poly.branch_sign * u * poly.direction(0),
        poly.fixed_point[1] + poly.branch_sign * u * poly.direction(1)};
    int dir = poly.side == ManifoldPolyline::Side::Unstable ? +1 : -1;
    for (int i = 0; i < k; ++i) p = strobe_raw(sys, poly.eps, poly.t0, dir, p, flow_opt);
    return p;
}

} // namespace detail

// Grows one branch of the (un)stable manifold of the strobe fixed point as
// a polyline with adaptive insertion in the preimage parameter.
inline ManifoldPolyline manifold_polyline(const SystemDef& sys, double eps, double t0,
                                          const std::vector<double>& fixed_point_raw,
                                          ManifoldPolyline::Side side, int branch_sign,
                                          double target_arclen,
                                          const ManifoldOptions& opt = {}) {
    if (sys.dim() != 2)
        throw ConfigError("manifold_polyline: planar (one-pair) systems only");

    // Linearization of the strobe map at the fixed point.
    FlowOptions fo = opt.flow;
    fo.eps = eps;
    auto [yend, phi] = variational_flow(sys, WhichH::Perturbed, PhasePoint{fixed_point_raw}, t0,
                                        t0 + sys.forcing_period(), fo);
    Eigen::EigenSolver<Eigen::MatrixXd> es(phi);
    double lam_u = 0.0, lam_s = 0.0;
    Eigen::Vector2d v_u, v_s;
    for (int i = 0; i < 2; ++i) {
        auto lam = es.eigenvalues()(i);
        if (std::abs(lam.imag()) > 1e-9)
            throw SolverError("manifold_polyline: fixed point is not a saddle of the strobe map");
        if (lam.real() > 1.0) { lam_u = lam.real(); v_u = es.eigenvectors().col(i).real(); }
        if (lam.real() > 0.0 && lam.real() < 1.0) { lam_s = lam.real(); v_s = es.eigenvectors().col(i).real(); }
    }
    if (lam_u <= 1.0 || lam_s <= 0.0 || lam_s >= 1.0)
        throw SolverError("manifold_polyline: strobe multipliers are not hyperbolic");

    ManifoldPolyline poly;
    poly.side = side;
    poly.eps = eps;
    poly.t0 = t0;
    poly.fixed_point = fixed_point_raw;
    poly.branch_sign = branch_sign;
    poly.delta0 = opt.delta0;
    if (side == ManifoldPolyline::Side::Unstable) {
        poly.direction = v_u;
        poly.expansion = lam_u;
    } else {
        poly.direction = v_s;
        poly.expansion = 1.0 / lam_s;
    }
    // Deterministic eigenvector orientation: dominant component positive.
    if (std::abs(poly.direction(0)) >= std::abs(poly.direction(1))) {
        if (poly.direction(0) < 0) poly.direction = -poly.direction;
    } else if (poly.direction(1) < 0) {
        poly.direction = -poly.direction;
    }
    poly.direction.normalize();

    long evals = 0;
    auto point_at = [&](double sg) {
        ++evals;
        return detail::manifold_point(sys, poly, sg, opt.flow);
    };

    double sg = 0.0, dsg = 0.25;
    poly.points.push_back(point_at(0.0));
    poly.sigma.push_back(0.0);
    poly.arclen.push_back(0.0);

    while (poly.arclen.back() < target_arclen) {
        if (evals > opt.budget) { poly.truncated = true; break; }
        double sg_next = sg + dsg;
        auto p = point_at(sg_next);
        const auto& last = poly.points.back();
        double dx = p[0] - last[0], dy = p[1] - last[1];
        double spacing = std::hypot(dx, dy);
        double angle = 0.0;
        if (poly.points.size() >= 2) {
            const auto& prev = poly.points[poly.points.size() - 2];
            double ex = last[0] - prev[0], ey = last[1] - prev[1];
            double dot = ex * dx + ey * dy;
            double cross = ex * dy - ey * dx;
            angle = std::abs(std::atan2(cross, dot));
        }
        if ((spacing > opt.refine_max || angle > opt.angle_max) && dsg > 1e-9) {
            dsg *= 0.5;
            continue;
        }
        poly.points.push_back(p);
        poly.sigma.push_back(sg_next);
        poly.arclen.push_back(poly.arclen.back() + spacing);
        sg = sg_next;
        // Advance at most one fundamental domain per accepted vertex; this
        // bounds the map depth of every point evaluation.
        if (spacing < 0.4 * opt.refine_max && angle < 0.4 * opt.angle_max)
            dsg = std::min(dsg * 1.5, 1.0);
    }
    return poly;
}

// Transversal segment through `base` in direction `dir` (usually grad H0),
// half-width `window`.
struct Transversal {
    std::array<double, 2> base{};
    std::array<double, 2> dir{};
    double window = 0.1;
};

struct Crossing {
    std::array<double, 2> point{};
    double offset = 0.0; // coordinate along the transversal direction
    double sigma = 0.0;
};

namespace detail {

// First polyline crossing of the transversal line, nearest the base point,
// refined by sigma-bisection until the bracketing segment is short.
inline std::optional<Crossing> find_crossing(const SystemDef& sys, const ManifoldPolyline& poly,
                                             const Transversal& tr, const ManifoldOptions& opt,
                                             double seg_tol = 1e-4) {
    double nx = tr.dir[0], ny = tr.dir[1];
    double nn = std::hypot(nx, ny);
    nx /= nn;
    ny /= nn;
    // Perpendicular offset (sign of which side of the line) and tangential
    // coordinate along the transversal.
    auto perp = [&](const std::array<double, 2>& p) {
        return -(p[0] - tr.base[0]) * ny + (p[1] - tr.base[1]) * nx;
    };
    auto along = [&](const std::array<double, 2>& p) {
        return (p[0] - tr.base[0]) * nx + (p[1] - tr.base[1]) * ny;
    };

    std::optional<Crossing> best;
    for (std::size_t i = 0; i + 1 < poly.points.size(); ++i) {
        double da = perp(poly.points[i]), db = perp(poly.points[i + 1]);
        if (da == 0.0) da = 1e-300;
        if (da * db > 0.0) continue;
        // Candidate: refine the bracketing segment in sigma.
        double sa = poly.sigma[i], sb = poly.sigma[i + 1];
        std::array<double, 2> pa = poly.points[i], pb = poly.points[i + 1];
        double fa = da;
        while (std::hypot(pb[0] - pa[0], pb[1] - pa[1]) > seg_tol) {
            double sm = 0.5 * (sa + sb);
            auto pm = detail::manifold_point(sys, poly, sm, opt.flow);
            double fm = perp(pm);
            if (fa * fm <= 0.0) { sb = sm; pb = pm; }
            else { sa = sm; pa = pm; fa = fm; }
        }
        double t = perp(pa) / (perp(pa) - perp(pb) + 1e-300);
        Crossing c;
        c.point = {pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])};
        c.offset = along(c.point);
        c.sigma = 0.5 * (sa + sb);
        if (std::abs(c.offset) > tr.window) continue;
        if (!best || std::abs(c.offset) < std::abs(best->offset)) best = c;
    }
    return best;
}

} // namespace detail

// DH0 = H0(stable crossing) - H0(unstable crossing) along the transversal.
inline double energy_gap(const SystemDef& sys, const ManifoldPolyline& stable,
                         const ManifoldPolyline& unstable, const Transversal& tr,
                         const ManifoldOptions& opt = {}) {
    auto cs = detail::find_crossing(sys, stable, tr, opt);
    auto cu = detail::find_crossing(sys, unstable, tr, opt);
    if (!cs) throw SolverError("energy_gap: stable polyline has no crossing in the window");
    if (!cu) throw SolverError("energy_gap: unstable polyline has no crossing in the window");
    double hs = sys.eval(sys.h0(), std::vector<double>{cs->point[0], cs->point[1]});
    double hu = sys.eval(sys.h0(), std::vector<double>{cu->point[0], cu->point[1]});
    return kSplitStableMinusUnstableSign * (hs - hu);
}

// Geometry of one homoclinic splitting measurement: where to seed the two
// manifolds and where to measure.
struct SplitSetup {
    PhasePoint saddle_guess;                 // unperturbed planar saddle
    std::vector<double> stable_translate;    // added to the fixed point for the stable seed
    int unstable_branch = +1;
    int stable_branch = -1;
    Transversal transversal;
    double target_arclen = 6.0;
};

// Measurement setup for the catalog pendulum: unstable branch from the
// saddle, stable branch from its +2 pi translate, transversal through the
// separatrix apex (pi, 2) along grad H0.
inline SplitSetup pendulum_split_setup(const SystemDef& sys) {
    SplitSetup setup;
    setup.saddle_guess = sys.point({0.0, 0.0});
    setup.stable_translate = {2.0 * 3.14159265358979323846, 0.0};
    setup.transversal.base = {3.14159265358979323846, 2.0};
    setup.transversal.dir = {0.0, 1.0}; // grad H0 at the apex, normalized
    setup.transversal.window = 0.1;
    setup.target_arclen = 6.0;
    return setup;
}

inline double measured_gap(const SystemDef& sys, const SplitSetup& setup, double eps, double t0,
                           const ManifoldOptions& opt = {}) {
    auto fp = perturbed_fixed_point(sys, eps, t0, setup.saddle_guess);
    auto unstable = manifold_polyline(sys, eps, t0, fp.x, ManifoldPolyline::Side::Unstable,
                                      setup.unstable_branch, setup.target_arclen, opt);
    std::vector<double> fp_shift = fp.x;
    for (std::size_t k = 0; k < fp_shift.size(); ++k) fp_shift[k] += setup.stable_translate[k];
    auto stable = manifold_polyline(sys, eps, t0, fp_shift, ManifoldPolyline::Side::Stable,
                                    setup.stable_branch, setup.target_arclen, opt);
    return energy_gap(sys, stable, unstable, setup.transversal, opt);
}

struct SplittingCell {
    double t0 = 0.0, eps = 0.0;
    double gap = 0.0;
    double ratio = 0.0;         // gap / eps
    double reference = 0.0;     // M(t0)
    double deviation_rel = 0.0; // |ratio - M| / amplitude
};

struct SplittingReport {
    std::vector<SplittingCell> cells;
    double amplitude = 0.0;
    double gap_order = 0.0;      // log-log slope of |gap| in eps (expect ~1)
    double residual_order = 0.0; // log-log slope of |ratio - M| in eps (expect ~1)
};

// Deviations |DH0/eps - M(t0)| over a (t0, eps) grid plus fitted orders.
inline SplittingReport first_order_check(const SystemDef& sys, const SplitSetup& setup,
                                         const std::vector<double>& t0_list,
                                         const std::vector<double>& eps_list,
                                         const std::function<double(double)>& reference,
                                         const ManifoldOptions& opt = {}) {
    if (eps_list.size() < 2)
        throw ConfigError("first_order_check: need at least two eps values");
    SplittingReport report;
    for (double t0 : t0_list)
        report.amplitude = std::max(report.amplitude, std::abs(reference(t0)));

    report.cells.resize(t0_list.size() * eps_list.size());
    auto run_cell = [&](std::size_t idx) {
        double t0 = t0_list[idx / eps_list.size()];
        double eps = eps_list[idx % eps_list.size()];
        SplittingCell cell;
        cell.t0 = t0;
        cell.eps = eps;
        cell.gap = measured_gap(sys, setup, eps, t0, opt);
        cell.ratio = cell.gap / eps;
        cell.reference = reference(t0);
        cell.deviation_rel = std::abs(cell.ratio - cell.reference) / report.amplitude;
        report.cells[idx] = cell;
    };

    std::vector<std::future<void>> futs;
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::size_t total = report.cells.size();
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < std::min<std::size_t>(workers, total); ++w)
        futs.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) run_cell(i);
        }));
    for (auto& f : futs) f.get();

    // Log-log order fits across the eps grid, averaged over phases.
    auto fit_order = [&](auto value_of) {
        double acc = 0.0;
        int count = 0;
        for (std::size_t p = 0; p < t0_list.size(); ++p) {
            std::vector<double> xs, ys;
            for (std::size_t e = 0; e < eps_list.size(); ++e) {
                double v = std::abs(value_of(report.cells[p * eps_list.size() + e]));
                if (v <= 0.0) continue;
                xs.push_back(std::log(eps_list[e]));
                ys.push_back(std::log(v));
            }
            if (xs.size() < 2) continue;
            double mx = 0, my = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
            mx /= double(xs.size());
            my /= double(xs.size());
            double num = 0, den = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                num += (xs[i] - mx) * (ys[i] - my);
                den += (xs[i] - mx) * (xs[i] - mx);
            }
            if (den > 0) { acc += num / den; ++count; }
        }
        return count ? acc / count : 0.0;
    };
    report.gap_order = fit_order([](const SplittingCell& c) { return c.gap; });
    report.residual_order = fit_order([](const SplittingCell& c) { return c.ratio - c.reference; });
    return report;
}

} // namespace melnikov

#endif
