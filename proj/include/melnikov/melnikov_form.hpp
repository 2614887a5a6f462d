#ifndef MELNIKOV_MELNIKOV_FORM_HPP
#define MELNIKOV_MELNIKOV_FORM_HPP

// Evaluation of the Mel'nikov 1-form beta on a connecting manifold through
// its integral expressions:
//
//   convergent:  beta(X_A) = int_{-inf}^{+inf} {H1, A} o phi^u (m) du,
//                valid when A (or H1) is critical on both end orbits;
//   prescribed:  windows [-n tau-, +n tau+] tied to the end-orbit periods,
//                plus boundary terms d/deps A(m_eps^+/-) from orbit
//                continuation.
//
// Plus the derived machinery: Mel'nikov functions M(t0) for extended
// time-periodic products, zero finding, potentials, and the count of
// independent conserved quantities critical on both orbits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dynamics.hpp"
#include "errors.hpp"
#include "phase.hpp"
#include "quadrature.hpp"
#include "separatrix.hpp"

namespace melnikov {

enum class MelnikovMode { ConvergentCriticalA, ConvergentCriticalH1, Prescribed };

inline const char* mode_name(MelnikovMode m) {
    switch (m) {
    case MelnikovMode::ConvergentCriticalA: return "convergent-criticalA";
    case MelnikovMode::ConvergentCriticalH1: return "convergent-criticalH1";
    case MelnikovMode::Prescribed: return "prescribed";
    }
    return "?";
}

struct MelnikovSample {
    PhasePoint base;
    double s_base = 0.0;
    std::optional<double> t0; // absolute time override (extended products)
    std::string label;
    double value = 0.0;
    double error = 0.0;      // quadrature + tail bound, or window spread
    double tail_bound = 0.0;
    int windows = 0;
    std::vector<double> window_values;
    MelnikovMode mode = MelnikovMode::ConvergentCriticalA;
};

struct MelnikovOptions {
    double quad_tol = 1e-10;
    double hypothesis_tol = 1e-8;
    int orbit_samples = 32;
    int n_max = 12; // prescribed windows
};

namespace detail {

// Is the extension rigid, i.e. does the time coordinate advance at unit
// rate (dH0/deta == 1)? Time offsets are only meaningful then.
inline bool rigid_time(const SystemDef& sys) {
    int tc = sys.time_coordinate();
    if (tc < 0) return false;
    auto d = sys.h0().differentiate(sys.binding_layout()[std::size_t(tc) + 1]);
    return d.is_constant() && d.constant_value() == 1.0;
}

// Integrand {H1, A} along the orbit, with an optional absolute-time
// override of the t coordinate (t(u) = t0 + (u - u_ref) along the flow).
class OrbitIntegrand {
public:
    OrbitIntegrand(const SystemDef& sys, const Expression& a, const ConnectingOrbit& orbit)
        : sys_(&sys), orbit_(&orbit), bracket_(sys, sys.h1(), a), tc_(sys.time_coordinate()) {}

    void set_time_override(double s_base, double t0) {
        if (tc_ < 0 || !rigid_time(*sys_))
            throw ConfigError("time override requires a rigid extended product");
        override_ = true;
        s_ref_ = s_base;
        t0_ = t0;
    }

    // Value at flow parameter s along the orbit.
    double operator()(double s) const {
        thread_local std::vector<double> state;
        orbit_->state(s, state);
        if (override_) state[std::size_t(tc_)] = t0_ + (s - s_ref_);
        return bracket_(state);
    }

    // Bracket at an arbitrary end-orbit state.
    double at_state(std::span<const double> state) const { return bracket_(state); }

private:
    const SystemDef* sys_;
    const ConnectingOrbit* orbit_;
    SystemDef::Bracket bracket_;
    int tc_ = -1;
    bool override_ = false;
    double s_ref_ = 0.0, t0_ = 0.0;
};

struct EndOrbitScan {
    double grad_a = 0.0;      // max |dA| over end-orbit samples
    double grad_h1 = 0.0;     // max |dH1|
    double bracket = 0.0;     // max |{H1, A}|
    double h1_mean = 0.0;
    double h1_spread = 0.0;   // max |H1 - mean|
};

inline EndOrbitScan scan_end_orbit(const SystemDef& sys, const Expression& a,
                                   const OrbitSampler& sampler, int samples) {
    const auto layout = sys.binding_layout();
    std::vector<Expression> da, dh1;
    for (int k = 0; k < sys.dim(); ++k) {
        da.push_back(a.differentiate(layout[std::size_t(k)]));
        dh1.push_back(sys.h1().differentiate(layout[std::size_t(k)]));
    }
    SystemDef::Bracket br(sys, sys.h1(), a);

    EndOrbitScan out;
    std::vector<double> state;
    std::vector<double> h1v;
    double period = sampler.equilibrium() ? 0.0 : sampler.period();
    int count = sampler.equilibrium() ? 1 : samples;
    for (int i = 0; i < count; ++i) {
        double u = count == 1 ? 0.0 : period * double(i) / double(count);
        sampler.state(u, state);
        double ga = 0.0, gh = 0.0;
        for (int k = 0; k < sys.dim(); ++k) {
            double va = sys.eval(da[std::size_t(k)], state);
            double vh = sys.eval(dh1[std::size_t(k)], state);
            ga += va * va;
            gh += vh * vh;
        }
        out.grad_a = std::max(out.grad_a, std::sqrt(ga));
        out.grad_h1 = std::max(out.grad_h1, std::sqrt(gh));
        out.bracket = std::max(out.bracket, std::abs(br(state)));
        h1v.push_back(sys.eval(sys.h1(), state));
    }
    for (double v : h1v) out.h1_mean += v;
    out.h1_mean /= double(h1v.size());
    for (double v : h1v) out.h1_spread = std::max(out.h1_spread, std::abs(v - out.h1_mean));
    return out;
}

// Convergence hypothesis for the improper integral: A critical on both end
// orbits, or H1 critical on both (with equal values across a heteroclinic
// pair). A vanishing bracket on both orbits is accepted as the criticalA
// route: it is the property those hypotheses exist to deliver, and covers
// conserved quantities whose field is tangent to the orbits (e.g. the
// extended Hamiltonian itself).
inline MelnikovMode check_convergent_hypothesis(const SystemDef& sys, const Expression& a,
                                                const ConnectingOrbit& orbit,
                                                const MelnikovOptions& opt) {
    auto src = scan_end_orbit(sys, a, orbit.source_sampler, opt.orbit_samples);
    auto tgt = scan_end_orbit(sys, a, orbit.target_sampler, opt.orbit_samples);
    if (src.grad_a < opt.hypothesis_tol && tgt.grad_a < opt.hypothesis_tol)
        return MelnikovMode::ConvergentCriticalA;
    if (src.grad_h1 < opt.hypothesis_tol && tgt.grad_h1 < opt.hypothesis_tol) {
        if (orbit.kind == ConnectingOrbit::Kind::Heteroclinic &&
            std::abs(src.h1_mean - tgt.h1_mean) >= opt.hypothesis_tol)
            throw GuardError("convergent mode: H1 critical but takes different values on the "
                             "two end orbits");
        return MelnikovMode::ConvergentCriticalH1;
    }
    if (src.bracket < opt.hypothesis_tol && tgt.bracket < opt.hypothesis_tol)
        return MelnikovMode::ConvergentCriticalA;
    double worst = std::max({src.grad_a, tgt.grad_a});
    throw GuardError(
        "convergent mode: neither A nor H1 is critical on the end orbits and the bracket does "
        "not vanish there (max |dA| = " +
        std::to_string(worst) + " on " +
        (src.grad_a > tgt.grad_a ? std::string("gamma-") : std::string("gamma+")) + ")");
}

// Exponential tail bound: fit |f| <= C e^{-lambda |s|} on the outer quarter
// of the window and integrate it past S.
template <typename F>
inline double tail_bound(F&& f, double S, double rate, int side) {
    double c_fit = 0.0;
    for (int i = 0; i < 8; ++i) {
        double s = side * (0.75 * S + 0.25 * S * double(i) / 7.0);
        c_fit = std::max(c_fit, std::abs(f(s)) * std::exp(rate * std::abs(s)));
    }
    double lam = std::max(rate, 1e-6);
    return c_fit * std::exp(-lam * S) / lam;
}

} // namespace detail

// {H1, A} at m(s), with the time argument of H1 shifted by t_offset. For
// time-dependent planar systems the binding is t = t_offset + s; for
// autonomous extended products a nonzero offset shifts the t coordinate.
inline double bracket_along_orbit(const SystemDef& sys, const Expression& a,
                                  const ConnectingOrbit& orbit, double s, double t_offset = 0.0) {
    SystemDef::Bracket br(sys, sys.h1(), a);
    std::vector<double> state = orbit.state(s);
    if (sys.time_dependent()) return br(state, t_offset + s);
    if (t_offset != 0.0) {
        if (!detail::rigid_time(sys))
            throw ConfigError("bracket_along_orbit: time offset requires a rigid extended product");
        state[std::size_t(sys.time_coordinate())] += t_offset;
    }
    return br(state);
}

inline MelnikovSample melnikov_convergent(const SystemDef& sys, const Expression& a,
                                          const std::string& label, const ConnectingOrbit& orbit,
                                          double s0, const MelnikovOptions& opt = {},
                                          std::optional<double> t0 = std::nullopt) {
    MelnikovSample sample;
    sample.label = label;
    sample.s_base = s0;
    sample.t0 = t0;
    sample.base = orbit.point(s0);
    sample.mode = detail::check_convergent_hypothesis(sys, a, orbit, opt);

    detail::OrbitIntegrand f(sys, a, orbit);
    if (t0) {
        f.set_time_override(s0, *t0);
        std::vector<double> b = sample.base.x;
        b[std::size_t(sys.time_coordinate())] = *t0;
        sample.base = sys.reduced(std::move(b));
    }

    auto quad = adaptive_quadrature(f, -orbit.S, orbit.S, opt.quad_tol);
    double tail = detail::tail_bound(f, orbit.S, orbit.rate_plus, +1) +
                  detail::tail_bound(f, orbit.S, orbit.rate_minus, -1);
    sample.value = quad.value;
    sample.tail_bound = tail;
    sample.error = quad.error + tail;
    return sample;
}

// Plain window integral of the bracket (diagnostics; symmetric windows at
// arbitrary T are built from this).
inline double window_integral(const SystemDef& sys, const Expression& a,
                              const ConnectingOrbit& orbit, double lo, double hi,
                              double quad_tol = 1e-10) {
    detail::OrbitIntegrand f(sys, a, orbit);
    return adaptive_quadrature(f, lo, hi, quad_tol).value;
}

// Window sequence I_n = int over [-n tau-, +n tau+], n = 1..n_max. The
// reported value is the average of the last three windows, the error their
// spread. Boundary terms are NOT included here; add boundary_terms() when
// the end orbits move under the perturbation.
inline MelnikovSample melnikov_prescribed(const SystemDef& sys, const Expression& a,
                                          const std::string& label, const ConnectingOrbit& orbit,
                                          double s0, const MelnikovOptions& opt = {}) {
    if (orbit.source.equilibrium || orbit.target.equilibrium)
        throw GuardError("prescribed mode needs periodic end orbits (period windows)");
    if (opt.n_max < 4) throw ConfigError("prescribed mode needs n_max >= 4");
    const double tau_minus = orbit.source.period;
    const double tau_plus = orbit.target.period;

    MelnikovSample sample;
    sample.label = label;
    sample.s_base = s0;
    sample.base = orbit.point(s0);
    sample.mode = MelnikovMode::Prescribed;

    detail::OrbitIntegrand f0(sys, a, orbit);
    auto f = [&](double u) { return f0(s0 + u); };

    const double inc_tol = opt.quad_tol / double(2 * opt.n_max);
    double acc = adaptive_quadrature(f, -tau_minus, tau_plus, inc_tol).value;
    sample.window_values.push_back(acc);
    for (int n = 2; n <= opt.n_max; ++n) {
        acc += adaptive_quadrature(f, -double(n) * tau_minus, -double(n - 1) * tau_minus, inc_tol)
                   .value;
        acc += adaptive_quadrature(f, double(n - 1) * tau_plus, double(n) * tau_plus, inc_tol)
                   .value;
        sample.window_values.push_back(acc);
    }
    sample.windows = opt.n_max;

    auto spread3 = [&](int last_index) {
        double lo = sample.window_values[std::size_t(last_index - 2)];
        double hi = lo, sum = 0.0;
        for (int k = last_index - 2; k <= last_index; ++k) {
            double v = sample.window_values[std::size_t(k)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        return std::pair{sum / 3.0, hi - lo};
    };
    auto [mean_last, spread_last] = spread3(opt.n_max - 1);
    sample.value = mean_last;
    sample.error = spread_last + opt.quad_tol;
    if (spread_last > std::max(1e-6, 100.0 * opt.quad_tol))
        throw GuardError("prescribed windows do not stabilize (spread of last three = " +
                         std::to_string(spread_last) + ")");
    return sample;
}

// d/deps A(m_eps^+/-) by central differences over continued end orbits,
// with the asymptotic phase fixed by iterating the period map from the
// transported base point and averaging the last few values.
struct BoundaryTerms {
    double d_plus = 0.0, d_minus = 0.0;
    double err_plus = 0.0, err_minus = 0.0;
};

struct BoundaryOptions {
    double h = 1e-4; // eps step of the central difference
    FlowOptions flow;
    OrbitSolveOptions solve;
};

// The phase projection flows the base point toward the end orbit for a
// whole number of eps-periods. The settle time balances two residuals: the
// incoming transverse component decays like e^{-lambda T} while the
// off-manifold defect of the base point (O(eps)) escapes like e^{+lambda T};
// T ~ ln(dist/eps)/(2 lambda) equalizes them. Both leftovers are even in
// eps, so they cancel in the central difference.
inline BoundaryTerms boundary_terms(const SystemDef& sys, const Expression& a,
                                    const ConnectingOrbit& orbit, double s0,
                                    const BoundaryOptions& opt = {}) {
    if (!sys.has_h1()) throw ConfigError("boundary_terms: system has no H1");
    BoundaryTerms out;

    auto m = orbit.state(s0);
    auto side_value = [&](int side, double eps) -> double {
        const PeriodicOrbitRecord& rec0 = side > 0 ? orbit.target : orbit.source;

        if (rec0.equilibrium) {
            // Fixed-point continuation: Newton on the perturbed field.
            std::vector<double> y = rec0.m0.x;
            const int n = sys.dim();
            for (int it = 0; it < 50; ++it) {
                std::vector<double> fv(std::size_t(n), 0.0);
                sys.vector_field(WhichH::Perturbed, eps, y, 0.0, fv);
                Eigen::VectorXd r(n);
                for (int k = 0; k < n; ++k) r(k) = fv[std::size_t(k)];
                if (r.norm() < 1e-12) break;
                std::vector<double> jac(std::size_t(n) * std::size_t(n));
                sys.field_jacobian(WhichH::Perturbed, eps, y, 0.0, jac);
                Eigen::MatrixXd J(n, n);
                for (int rr = 0; rr < n; ++rr)
                    for (int cc = 0; cc < n; ++cc)
                        J(rr, cc) = jac[std::size_t(rr) * std::size_t(n) + std::size_t(cc)];
                Eigen::VectorXd step = J.partialPivLu().solve(r);
                for (int k = 0; k < n; ++k) y[std::size_t(k)] -= step(k);
            }
            return sys.eval(a, y);
        }

        // Continued orbit and period: Newton from the unperturbed record
        // point (eps-close to the continued orbit).
        auto vel = sys.vector_field(WhichH::Perturbed, rec0.m0, 0.0, eps);
        int sc = 0;
        for (int k = 1; k < sys.dim(); ++k)
            if (std::abs(vel[std::size_t(k)]) > std::abs(vel[std::size_t(sc)])) sc = k;
        OrbitSolveOptions so = opt.solve;
        so.flow.eps = eps;
        auto rec_eps = find_periodic_orbit(sys, WhichH::Perturbed, rec0.m0,
                                           SectionMode{{sc, rec0.m0[std::size_t(sc)]}}, so, eps);
        const double tau_eps = rec_eps.period;

        // Settle time: whole periods, balanced against the escape rate of
        // the base point's O(eps) off-manifold defect.
        double lam = std::max(side > 0 ? rec0.rate_stable : rec0.rate_unstable, 1e-3);
        double dist = side > 0 ? orbit.target_sampler.distance(m) : orbit.source_sampler.distance(m);
        double t_opt = std::log(std::max(dist, 1e-3) / std::max(opt.h, 1e-9)) / (2.0 * lam);
        int n_periods = std::max(1, int(std::lround(t_opt / tau_eps)));

        FlowOptions fo = opt.flow;
        fo.eps = eps;
        double T = side * double(n_periods) * tau_eps;
        auto w = flow(sys, WhichH::Perturbed, PhasePoint{m}, 0.0, T, fo).state(T);

        // Project onto the continued orbit: conserved quantities are
        // transversally critical there, so the residual transverse offset
        // only enters A quadratically (and cancels in the eps difference).
        OrbitSampler sampler_eps(sys, rec_eps, WhichH::Perturbed, eps);
        std::vector<double> proj;
        sampler_eps.state(sampler_eps.nearest_phase(w), proj);
        return sys.eval(a, proj);
    };

    for (int side : {+1, -1}) {
        double ap = side_value(side, +opt.h);
        double a0 = side_value(side, 0.0);
        double am = side_value(side, -opt.h);
        double central = (ap - am) / (2.0 * opt.h);
        double fwd = (ap - a0) / opt.h, bwd = (a0 - am) / opt.h;
        if (side > 0) { out.d_plus = central; out.err_plus = std::abs(fwd - bwd) / 2.0; }
        else { out.d_minus = central; out.err_minus = std::abs(fwd - bwd) / 2.0; }
    }
    return out;
}

// M(t0) on a grid, via the convergent integral with absolute time override.
// Requires a rigid extended product (tdot = 1).
inline std::vector<MelnikovSample> melnikov_function(const SystemDef& sys,
                                                     const ConnectingOrbit& orbit,
                                                     const Expression& a, const std::string& label,
                                                     const std::vector<double>& t0_grid,
                                                     const MelnikovOptions& opt = {},
                                                     double s0 = 0.0) {
    auto mode = detail::check_convergent_hypothesis(sys, a, orbit, opt);
    std::vector<MelnikovSample> out(t0_grid.size());

    auto worker = [&](std::size_t begin, std::size_t end) {
        detail::OrbitIntegrand f(sys, a, orbit);
        for (std::size_t i = begin; i < end; ++i) {
            f.set_time_override(s0, t0_grid[i]);
            auto quad = adaptive_quadrature([&](double s) { return f(s); }, -orbit.S, orbit.S,
                                            opt.quad_tol);
            double tail = detail::tail_bound(f, orbit.S, orbit.rate_plus, +1) +
                          detail::tail_bound(f, orbit.S, orbit.rate_minus, -1);
            MelnikovSample& sm = out[i];
            sm.label = label;
            sm.s_base = s0;
            sm.t0 = t0_grid[i];
            sm.base = orbit.point(s0);
            sm.mode = mode;
            sm.value = quad.value;
            sm.tail_bound = tail;
            sm.error = quad.error + tail;
        }
    };

    unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(),
                                          unsigned(t0_grid.size()));
    if (workers <= 1) {
        worker(0, t0_grid.size());
    } else {
        std::vector<std::future<void>> futs;
        std::size_t chunk = (t0_grid.size() + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            std::size_t b = w * chunk, e = std::min(t0_grid.size(), b + chunk);
            if (b >= e) break;
            futs.push_back(std::async(std::launch::async, worker, b, e));
        }
        for (auto& fu : futs) fu.get();
    }
    return out;
}

// Per-quantity grids for a whole momentum-map list.
inline std::vector<std::vector<MelnikovSample>> melnikov_function(
    const SystemDef& sys, const ConnectingOrbit& orbit, const std::vector<Expression>& a_list,
    const std::vector<std::string>& labels, const std::vector<double>& t0_grid,
    const MelnikovOptions& opt = {}, double s0 = 0.0) {
    if (a_list.size() != labels.size())
        throw ConfigError("melnikov_function: labels/quantities size mismatch");
    std::vector<std::vector<MelnikovSample>> out;
    for (std::size_t j = 0; j < a_list.size(); ++j)
        out.push_back(melnikov_function(sys, orbit, a_list[j], labels[j], t0_grid, opt, s0));
    return out;
}

// --- zeros --------------------------------------------------------------------

struct ZeroRecord {
    double t0 = 0.0;
    double residual = 0.0; // |M(t0)|
    double slope = 0.0;    // M'(t0) by central difference
    bool nondegenerate = false;
};

struct ZeroOptions {
    double zero_res_tol = 1e-9;
    double slope_rel_tol = 1e-4; // nondegeneracy threshold, relative to amplitude
    double fd_step = 1e-5;
};

// Sign-change bracketing on the samples (cyclically over one period) plus
// bisection refinement on the continuous evaluator.
inline std::vector<ZeroRecord> find_zeros(const std::vector<MelnikovSample>& samples,
                                          const std::function<double(double)>& evaluate,
                                          double period, const ZeroOptions& opt = {}) {
    if (samples.size() < 16) throw ConfigError("find_zeros: need at least 16 samples per period");
    double amplitude = 0.0;
    for (const auto& s : samples) amplitude = std::max(amplitude, std::abs(s.value));
    std::vector<ZeroRecord> zeros;
    if (amplitude < 1e-13) return zeros; // no sign information: report none

    auto finish = [&](double t0, double residual) {
        ZeroRecord z;
        z.t0 = t0;
        z.residual = residual;
        z.slope = (evaluate(t0 + opt.fd_step) - evaluate(t0 - opt.fd_step)) / (2 * opt.fd_step);
        z.nondegenerate = std::abs(z.slope) > opt.slope_rel_tol * amplitude;
        return z;
    };
    auto refine = [&](double ta, double va, double tb) {
        double fa = va, a = ta, b = tb;
        double mid = 0.5 * (a + b), fm = fa;
        for (int it = 0; it < 80; ++it) {
            mid = 0.5 * (a + b);
            fm = evaluate(mid);
            if (std::abs(fm) < opt.zero_res_tol || (b - a) < 1e-13) break;
            if (fa * fm <= 0.0) b = mid;
            else { a = mid; fa = fm; }
        }
        return finish(mid, std::abs(fm));
    };

    // Node values at noise level are zeros sitting on a grid point; only
    // genuine sign changes are bracketed.
    const double tiny = 1e-11 * std::max(1.0, amplitude);
    const double t_first = samples.front().t0.value_or(samples.front().s_base);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& sa = samples[i];
        const auto& sb = samples[(i + 1) % samples.size()];
        double ta = sa.t0.value_or(sa.s_base);
        double tb = sb.t0.value_or(sb.s_base);
        if (i + 1 == samples.size()) tb += period;
        if (std::abs(sa.value) <= tiny) {
            zeros.push_back(finish(ta, std::abs(evaluate(ta))));
            continue;
        }
        if (std::abs(sb.value) <= tiny) continue; // handled at its own node
        if (sa.value * sb.value < 0.0) zeros.push_back(refine(ta, sa.value, tb));
    }

    // Reduce into one period and merge duplicates (cyclically).
    for (auto& z : zeros) {
        double u = std::fmod(z.t0 - t_first, period);
        if (u < 0) u += period;
        z.t0 = t_first + u;
    }
    std::sort(zeros.begin(), zeros.end(), [](const auto& a, const auto& b) { return a.t0 < b.t0; });
    std::vector<ZeroRecord> unique;
    const double merge_tol = 1e-7 * period;
    for (const auto& z : zeros)
        if (unique.empty() || std::abs(z.t0 - unique.back().t0) > merge_tol)
            unique.push_back(z);
    while (unique.size() > 1 &&
           unique.front().t0 + period - unique.back().t0 < merge_tol)
        unique.pop_back();
    return unique;
}

// --- potential ------------------------------------------------------------------

struct PotentialOptions {
    double quad_tol = 1e-10;
    double guard_tol = 1e-8;    // H1 spread over each end orbit
    double membership_tol = 1e-6;
};

// L(m) = int [H1(phi^u(m0)) - H1(phi^u(m))] du with L(m0) = 0. Defined only
// when H1 is constant on both end orbits; otherwise the integral diverges
// and the guard trips.
inline double melnikov_potential(const SystemDef& sys, const ConservedFrame& frame,
                                 const ConnectingOrbit& orbit, double s0_ref, const PhasePoint& m,
                                 const PotentialOptions& opt = {}) {
    auto src = detail::scan_end_orbit(sys, sys.h0(), orbit.source_sampler, 32);
    auto tgt = detail::scan_end_orbit(sys, sys.h0(), orbit.target_sampler, 32);
    if (src.h1_spread >= opt.guard_tol || tgt.h1_spread >= opt.guard_tol)
        throw GuardError("potential: H1 is not constant on the end orbits (spread " +
                         std::to_string(std::max(src.h1_spread, tgt.h1_spread)) +
                         "); the defining integral does not converge");

    auto m0 = orbit.point(s0_ref);

    // Membership: m must sit on the connecting manifold. Level-set check
    // along the frame plus geometric distance to the time-swept orbit.
    for (std::size_t j = 0; j < frame.quantities.size(); ++j) {
        double v0 = sys.eval(frame.quantities[j], m0.x);
        double vm = sys.eval(frame.quantities[j], m.x);
        if (std::abs(vm - v0) > opt.membership_tol * (1.0 + std::abs(v0)))
            throw ConfigError("potential: point is off the " + frame.labels[j] +
                              " level of the connecting manifold");
    }
    // Locate m on the manifold: orbit parameter sigma_m plus (for extended
    // products) a rigid time shift dt_m. The flow of m is then the orbit's
    // own parameterization, sidestepping the exponential error growth of a
    // fresh integration along the separatrix.
    double sigma_m = 0.0, dist_m = std::numeric_limits<double>::infinity();
    {
        for (double s = -orbit.S; s <= orbit.S; s += 0.05) {
            double d = sys.distance_mod_time(m.x, orbit.state(s));
            if (d < dist_m) { dist_m = d; sigma_m = s; }
        }
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = sigma_m - 0.05, b = sigma_m + 0.05;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        auto f = [&](double s) { return sys.distance_mod_time(m.x, orbit.state(s)); };
        double fc = f(c), fd = f(d);
        for (int it = 0; it < 60; ++it) {
            if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
            else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
        }
        sigma_m = 0.5 * (a + b);
        dist_m = f(sigma_m);
        if (dist_m > opt.membership_tol)
            throw ConfigError("potential: point is not on the connecting manifold (distance " +
                              std::to_string(dist_m) + ")");
    }
    const int tc = sys.time_coordinate();
    double dt_m = 0.0;
    if (tc >= 0) {
        dt_m = sys.coordinate_difference(tc, m[std::size_t(tc)],
                                         orbit.state(sigma_m)[std::size_t(tc)]);
        if (dt_m != 0.0 && !detail::rigid_time(sys))
            throw ConfigError("potential: off-orbit time shifts need a rigid extended product");
    }

    std::vector<double> buf;
    auto h1_m = [&](double u) {
        orbit.state(sigma_m + u, buf);
        if (tc >= 0) buf[std::size_t(tc)] += dt_m;
        return sys.eval(sys.h1(), buf);
    };
    auto h1_m0 = [&](double u) {
        orbit.state(s0_ref + u, buf);
        return sys.eval(sys.h1(), buf);
    };
    // Sign fixed so that dL(X_A) = beta(X_A) under this library's bracket
    // convention ({f,g} = sum df/dq dg/dp - df/dp dg/dq).
    auto integrand = [&](double u) { return h1_m(u) - h1_m0(u); };

    auto quad = adaptive_quadrature(integrand, -orbit.S, orbit.S, opt.quad_tol);
    return quad.value;
}

// Overload with the reference point given directly; it must lie on the
// connecting orbit's parameterization (its parameter is located by the same
// golden-section search used for m).
inline double melnikov_potential(const SystemDef& sys, const ConservedFrame& frame,
                                 const ConnectingOrbit& orbit, const PhasePoint& m0,
                                 const PhasePoint& m, const PotentialOptions& opt = {}) {
    double best = std::numeric_limits<double>::infinity(), best_s = 0.0;
    for (double s = -orbit.S; s <= orbit.S; s += 0.05) {
        double d = sys.distance(m0.x, orbit.state(s));
        if (d < best) { best = d; best_s = s; }
    }
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = best_s - 0.05, b = best_s + 0.05;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    auto f = [&](double s) { return sys.distance(m0.x, orbit.state(s)); };
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 60; ++it) {
        if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
        else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
    }
    double s0 = 0.5 * (a + b);
    if (f(s0) > opt.membership_tol)
        throw ConfigError("potential: reference point is not on the connecting orbit");
    return melnikov_potential(sys, frame, orbit, s0, m, opt);
}

// --- counting critical integrals -------------------------------------------------

struct CriticalIntegralReport {
    std::vector<std::string> labels;
    std::vector<double> c_plus, c_minus;       // c+-(A_j)
    std::vector<double> residual_plus, residual_minus;
    Eigen::MatrixXd basis_coefficients;        // d x p, columns span the null space
    std::vector<Expression> basis;             // B_k as expressions over the frame
    int p = 0;
    bool homoclinic = false;
};

namespace detail {

// Least-squares fit X_A = c X_H0 over orbit samples. Returns (c, relative
// residual).
inline std::pair<double, double> fit_orbit_multiple(const SystemDef& sys, const Expression& a,
                                                    const OrbitSampler& sampler, int samples) {
    const auto layout = sys.binding_layout();
    std::vector<Expression> grad;
    for (int k = 0; k < sys.dim(); ++k) grad.push_back(a.differentiate(layout[std::size_t(k)]));

    double num = 0.0, den = 0.0, res = 0.0;
    std::vector<double> state, xa(std::size_t(sys.dim())), xh(std::size_t(sys.dim()));
    double period = sampler.equilibrium() ? 0.0 : sampler.period();
    for (int i = 0; i < samples; ++i) {
        double u = sampler.equilibrium() ? 0.0 : period * double(i) / double(samples);
        sampler.state(u, state);
        sys.vector_field(WhichH::H0, 0.0, state, 0.0, xh);
        for (int j = 0; j < sys.pair_count(); ++j) {
            xa[std::size_t(2 * j)] = sys.eval(grad[std::size_t(2 * j + 1)], state);
            xa[std::size_t(2 * j + 1)] = -sys.eval(grad[std::size_t(2 * j)], state);
        }
        for (int k = 0; k < sys.dim(); ++k) {
            num += xa[std::size_t(k)] * xh[std::size_t(k)];
            den += xh[std::size_t(k)] * xh[std::size_t(k)];
        }
    }
    if (den < 1e-20)
        throw SolverError("critical_integral_basis: X_H0 vanishes on the orbit samples");
    double c = num / den;
    for (int i = 0; i < samples; ++i) {
        double u = sampler.equilibrium() ? 0.0 : period * double(i) / double(samples);
        sampler.state(u, state);
        sys.vector_field(WhichH::H0, 0.0, state, 0.0, xh);
        for (int j = 0; j < sys.pair_count(); ++j) {
            xa[std::size_t(2 * j)] = sys.eval(grad[std::size_t(2 * j + 1)], state);
            xa[std::size_t(2 * j + 1)] = -sys.eval(grad[std::size_t(2 * j)], state);
        }
        for (int k = 0; k < sys.dim(); ++k) {
            double r = xa[std::size_t(k)] - c * xh[std::size_t(k)];
            res += r * r;
        }
    }
    return {c, std::sqrt(res / den)};
}

} // namespace detail

// c+-(A_j) by least-squares fit of X_A = c X_H0 on each orbit, then the
// null space of the (c+, c-) map by SVD. The basis spans the conserved
// quantities critical on both orbits; p = d-1 homoclinic, generically d-2
// heteroclinic, d-1 again when the periods coincide.
inline CriticalIntegralReport critical_integral_basis(const SystemDef& sys,
                                                      const ConservedFrame& frame,
                                                      const PeriodicOrbitRecord& plus,
                                                      const PeriodicOrbitRecord& minus,
                                                      bool homoclinic = false,
                                                      int samples = 32,
                                                      double fit_tol = 1e-6,
                                                      double null_tol = 1e-8) {
    const int d = int(frame.quantities.size());
    CriticalIntegralReport report;
    report.labels = frame.labels;
    report.homoclinic = homoclinic;

    OrbitSampler sp(sys, plus), sm(sys, minus);
    for (int j = 0; j < d; ++j) {
        auto [cp, rp] = detail::fit_orbit_multiple(sys, frame.quantities[std::size_t(j)], sp, samples);
        report.c_plus.push_back(cp);
        report.residual_plus.push_back(rp);
        if (rp > fit_tol)
            throw GuardError("critical_integral_basis: fit residual " + std::to_string(rp) +
                             " for " + frame.labels[std::size_t(j)] +
                             " on gamma+ (not conserved, or wrong orbit)");
        if (!homoclinic) {
            auto [cm, rm] =
                detail::fit_orbit_multiple(sys, frame.quantities[std::size_t(j)], sm, samples);
            report.c_minus.push_back(cm);
            report.residual_minus.push_back(rm);
            if (rm > fit_tol)
                throw GuardError("critical_integral_basis: fit residual " + std::to_string(rm) +
                                 " for " + frame.labels[std::size_t(j)] + " on gamma-");
        }
    }
    if (homoclinic) {
        report.c_minus = report.c_plus;
        report.residual_minus = report.residual_plus;
    }

    const int rows = homoclinic ? 1 : 2;
    Eigen::MatrixXd C(rows, d);
    for (int j = 0; j < d; ++j) {
        C(0, j) = report.c_plus[std::size_t(j)];
        if (rows == 2) C(1, j) = report.c_minus[std::size_t(j)];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
    double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > null_tol * std::max(smax, 1.0)) ++rank;
    report.p = d - rank;
    report.basis_coefficients = svd.matrixV().rightCols(report.p);
    // Deterministic orientation: largest-magnitude coefficient positive.
    for (int k = 0; k < report.p; ++k) {
        int imax = 0;
        for (int r = 1; r < d; ++r)
            if (std::abs(report.basis_coefficients(r, k)) >
                std::abs(report.basis_coefficients(imax, k)))
                imax = r;
        if (report.basis_coefficients(imax, k) < 0)
            report.basis_coefficients.col(k) = -report.basis_coefficients.col(k);
    }

    for (int k = 0; k < report.p; ++k) {
        Expression b = report.basis_coefficients(0, k) * frame.quantities[0];
        for (int j = 1; j < d; ++j)
            b = b + report.basis_coefficients(j, k) * frame.quantities[std::size_t(j)];
        report.basis.push_back(std::move(b));
        // Invariant: the basis members really are critical on both orbits.
        double cb_p = 0.0, cb_m = 0.0;
        for (int j = 0; j < d; ++j) {
            cb_p += report.basis_coefficients(j, k) * report.c_plus[std::size_t(j)];
            cb_m += report.basis_coefficients(j, k) * report.c_minus[std::size_t(j)];
        }
        if (std::abs(cb_p) > 1e-8 || std::abs(cb_m) > 1e-8)
            throw SolverError("critical_integral_basis: basis member fails the c+- = 0 check");
    }
    return report;
}

} // namespace melnikov

#endif
