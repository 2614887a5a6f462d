#ifndef MELNIKOV_DYNAMICS_HPP
#define MELNIKOV_DYNAMICS_HPP

// Numerical flows and periodic-orbit machinery: adaptive Dormand-Prince 5(4)
// integration with cubic-Hermite dense output, joint variational (monodromy)
// integration, section return times by bisection on the dense output, Newton
// solving of periodic orbits with an SVD pseudo-inverse (the periodicity map
// is rank-deficient along the orbit cylinder), and Floquet classification.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "errors.hpp"
#include "phase.hpp"

namespace melnikov {

struct FlowOptions {
    double tol = 1e-12;     // local error per step (mixed abs/rel)
    double eps = 0.0;       // for WhichH::Perturbed
    double max_step = 1e30;
    long max_steps = 20'000'000;
};

inline void check_tol(double tol) {
    if (!(tol >= 1e-14 && tol <= 1e-6))
        throw ConfigError("integrator tolerance must lie in [1e-14, 1e-6]");
}

// One accepted integrator step; f is the derivative at s (enables cubic
// Hermite interpolation between accepted steps).
struct TrajectoryStep {
    double s;
    std::vector<double> y;
    std::vector<double> f;
};

class Trajectory {
public:
    Trajectory(const SystemDef& sys, std::vector<TrajectoryStep> steps, bool reversed)
        : sys_(&sys), steps_(std::move(steps)), reversed_(reversed) {
        if (steps_.size() < 1) throw SolverError("empty trajectory");
    }

    double s_begin() const { return steps_.front().s; }
    double s_end() const { return steps_.back().s; }
    const std::vector<TrajectoryStep>& steps() const { return steps_; }
    const SystemDef& system() const { return *sys_; }
    bool reversed() const { return reversed_; }

    // Cubic Hermite interpolation on the accepted step containing s.
    void state(double s, std::vector<double>& out) const {
        const auto& st = steps_;
        if (s <= st.front().s) { hermite(st.front(), st.front(), s, out); return; }
        if (s >= st.back().s) { hermite(st.back(), st.back(), s, out); return; }
        std::size_t lo = 0, hi = st.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            (st[mid].s <= s ? lo : hi) = mid;
        }
        hermite(st[lo], st[lo + 1], s, out);
    }

    std::vector<double> state(double s) const {
        std::vector<double> out;
        state(s, out);
        return out;
    }

    PhasePoint point(double s) const { return sys_->reduced(state(s)); }

    // |H0(m(s)) - H0(m(s0))| over stored samples (autonomous flows only).
    double max_energy_drift() const {
        double h00 = sys_->eval(sys_->h0(), steps_.front().y);
        double drift = 0.0;
        for (const auto& st : steps_)
            drift = std::max(drift, std::abs(sys_->eval(sys_->h0(), st.y) - h00));
        return drift;
    }

    long accepted_steps = 0;
    double tolerance = 0.0; // local-error tolerance the flow was run at

private:
    const SystemDef* sys_;
    std::vector<TrajectoryStep> steps_;
    bool reversed_;

    static void hermite(const TrajectoryStep& a, const TrajectoryStep& b, double s,
                        std::vector<double>& out) {
        out.resize(a.y.size());
        double h = b.s - a.s;
        if (h == 0.0) { out = a.y; return; }
        double u = (s - a.s) / h;
        double u2 = u * u, u3 = u2 * u;
        double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
        double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
        for (std::size_t i = 0; i < a.y.size(); ++i)
            out[i] = h00 * a.y[i] + h * h10 * a.f[i] + h01 * b.y[i] + h * h11 * b.f[i];
    }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                            e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

// Generic adaptive integration of dy/ds = rhs(s, y). Calls `accept` after
// every accepted step with (s, y, f(s,y)).
template <typename Rhs, typename Accept>
inline void integrate_adaptive(Rhs&& rhs, std::span<const double> y0, double s0, double s1,
                               const FlowOptions& opt, Accept&& accept) {
    using D = Dopri5;
    const std::size_t n = y0.size();
    const double dir = (s1 >= s0) ? 1.0 : -1.0;
    const double span = std::abs(s1 - s0);
    if (span == 0.0) {
        std::vector<double> y(y0.begin(), y0.end()), f(n);
        rhs(s0, y, f);
        accept(s0, y, f);
        return;
    }

    std::vector<double> y(y0.begin(), y0.end());
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);

    double s = s0;
    rhs(s, y, k1);
    accept(s, y, k1);

    double h = std::min({span / 10.0, 1.0, opt.max_step});
    long steps = 0;
    while (dir * (s1 - s) > 0.0) {
        if (++steps > opt.max_steps) throw SolverError("integrator exceeded step budget");
        h = std::min(h, std::abs(s1 - s));
        const double hs = dir * h;

        const std::vector<double>* ks[6] = {&k1, &k2, &k3, &k4, &k5, &k6};
        auto stage = [&](const std::vector<double>& coefs, std::vector<double>& out) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = y[i];
                for (std::size_t j = 0; j < coefs.size(); ++j) acc += hs * coefs[j] * (*ks[j])[i];
                out[i] = acc;
            }
        };
        static const std::vector<double> s2{D::a21};
        static const std::vector<double> s3{D::a31, D::a32};
        static const std::vector<double> s4{D::a41, D::a42, D::a43};
        static const std::vector<double> s5{D::a51, D::a52, D::a53, D::a54};
        static const std::vector<double> s6{D::a61, D::a62, D::a63, D::a64, D::a65};

        stage(s2, ytmp); rhs(s + D::c2 * hs, ytmp, k2);
        stage(s3, ytmp); rhs(s + D::c3 * hs, ytmp, k3);
        stage(s4, ytmp); rhs(s + D::c4 * hs, ytmp, k4);
        stage(s5, ytmp); rhs(s + D::c5 * hs, ytmp, k5);
        stage(s6, ytmp); rhs(s + hs, ytmp, k6);
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + hs * (D::b1 * k1[i] + D::b3 * k3[i] + D::b4 * k4[i] + D::b5 * k5[i] +
                                   D::b6 * k6[i]);
        rhs(s + hs, ynew, k7);

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = hs * (D::e1 * k1[i] + D::e3 * k3[i] + D::e4 * k4[i] + D::e5 * k5[i] +
                             D::e6 * k6[i] + D::e7 * k7[i]);
            double sc = opt.tol + opt.tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err += (e / sc) * (e / sc);
        }
        err = std::sqrt(err / double(n));

        if (err <= 1.0) {
            s += hs;
            y.swap(ynew);
            k1.swap(k7); // FSAL
            accept(s, y, k1);
        }
        double factor = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
        h *= std::clamp(factor, 0.2, 5.0);
        h = std::min(h, opt.max_step);
        if (h < span * 1e-15 || s + dir * h == s)
            throw SolverError("step size underflow at s = " + std::to_string(s));
    }
}

} // namespace detail

// Flow of X_H from state m over [t0, t1]. For time-dependent systems the
// trajectory parameter is absolute time (H1 is evaluated at it).
inline Trajectory flow(const SystemDef& sys, WhichH which, const PhasePoint& m, double t0,
                       double t1, const FlowOptions& opt = {}) {
    check_tol(opt.tol);
    std::vector<TrajectoryStep> steps;
    long accepted = 0;
    auto rhs = [&](double s, const std::vector<double>& y, std::vector<double>& f) {
        sys.vector_field(which, opt.eps, y, s, f);
    };
    detail::integrate_adaptive(rhs, m.x, t0, t1, opt, [&](double s, const std::vector<double>& y,
                                                          const std::vector<double>& f) {
        steps.push_back({s, y, f});
        ++accepted;
    });
    bool reversed = t1 < t0;
    if (reversed) std::reverse(steps.begin(), steps.end());
    Trajectory traj(sys, std::move(steps), reversed);
    traj.accepted_steps = accepted;
    traj.tolerance = opt.tol;
    return traj;
}

// Joint flow of the state and its linearization. Returns the endpoint state
// and the fundamental matrix of the variational equations over [t0, t1].
inline std::pair<std::vector<double>, Eigen::MatrixXd> variational_flow(
    const SystemDef& sys, WhichH which, const PhasePoint& m, double t0, double t1,
    const FlowOptions& opt = {}) {
    check_tol(opt.tol);
    const int n = sys.dim();
    const std::size_t nn = std::size_t(n);
    std::vector<double> y0(nn + nn * nn, 0.0);
    for (std::size_t i = 0; i < nn; ++i) y0[i] = m.x[i];
    for (std::size_t i = 0; i < nn; ++i) y0[nn + i * nn + i] = 1.0;

    std::vector<double> jac(nn * nn);
    auto rhs = [&](double s, const std::vector<double>& y, std::vector<double>& f) {
        std::span<const double> state(y.data(), nn);
        sys.vector_field(which, opt.eps, state, s, std::span<double>(f.data(), nn));
        sys.field_jacobian(which, opt.eps, state, s, jac);
        // dPhi/ds = A(s) Phi, Phi stored row-major after the state.
        for (std::size_t r = 0; r < nn; ++r)
            for (std::size_t c = 0; c < nn; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < nn; ++k)
                    acc += jac[r * nn + k] * y[nn + k * nn + c];
                f[nn + r * nn + c] = acc;
            }
    };

    std::vector<double> last;
    detail::integrate_adaptive(rhs, y0, t0, t1, opt,
                               [&](double, const std::vector<double>& y,
                                   const std::vector<double>&) { last = y; });
    std::vector<double> yend(last.begin(), last.begin() + long(nn));
    Eigen::MatrixXd phi(n, n);
    for (std::size_t r = 0; r < nn; ++r)
        for (std::size_t c = 0; c < nn; ++c) phi(long(r), long(c)) = last[nn + r * nn + c];
    return {std::move(yend), std::move(phi)};
}

// Fixed-step Stoermer-Verlet for separable Hamiltonians (dH/dq independent
// of p and vice versa). Cross-check integrator only; not used by the main
// pipeline.
inline PhasePoint verlet_flow(const SystemDef& sys, WhichH which, const PhasePoint& m, double t0,
                              double t1, double dt, double eps = 0.0) {
    const int n2 = sys.dim();
    std::vector<double> y = m.x;
    std::vector<double> grad(std::size_t(n2), 0.0);
    long nsteps = std::lround(std::abs(t1 - t0) / dt);
    double h = (t1 - t0) / double(std::max<long>(nsteps, 1));
    double t = t0;
    for (long k = 0; k < std::max<long>(nsteps, 1); ++k) {
        sys.gradient(which, eps, y, t, grad);
        for (int i = 0; i < n2 / 2; ++i) y[std::size_t(2 * i + 1)] -= 0.5 * h * grad[std::size_t(2 * i)];
        sys.gradient(which, eps, y, t + 0.5 * h, grad);
        for (int i = 0; i < n2 / 2; ++i) y[std::size_t(2 * i)] += h * grad[std::size_t(2 * i + 1)];
        sys.gradient(which, eps, y, t + h, grad);
        for (int i = 0; i < n2 / 2; ++i) y[std::size_t(2 * i + 1)] -= 0.5 * h * grad[std::size_t(2 * i)];
        t += h;
    }
    return sys.reduced(std::move(y));
}

// --- sections and return times ---------------------------------------------

struct SectionSpec {
    int coordinate = 0; // index into the (q1,p1,...) layout
    double value = 0.0;
};

namespace detail {

// First s > s_min at which `coord` crosses one of the target levels
// value + k*circumference, moving in the same direction as at departure.
// Bisection on the dense output, refined to time resolution `time_tol`.
inline std::optional<double> first_crossing(const Trajectory& traj, const SystemDef& sys,
                                            const SectionSpec& section, double s_min,
                                            double time_tol, int direction = 0) {
    const auto& steps = traj.steps();
    const std::size_t ci = std::size_t(section.coordinate);
    double circ = 0.0;
    const auto& pr = sys.pairs()[std::size_t(section.coordinate / 2)];
    if (section.coordinate % 2 == 0 && pr.topology == Topology::Circle) circ = pr.circumference;

    auto levels_between = [&](double a, double b, std::vector<double>& out) {
        out.clear();
        if (circ == 0.0) {
            double lo = std::min(a, b), hi = std::max(a, b);
            if (section.value > lo && section.value <= hi) out.push_back(section.value);
            return;
        }
        double lo = std::min(a, b), hi = std::max(a, b);
        long k0 = long(std::ceil((lo - section.value) / circ));
        for (long k = k0; section.value + double(k) * circ <= hi; ++k) {
            double lv = section.value + double(k) * circ;
            if (lv > lo && lv <= hi) out.push_back(lv);
        }
    };

    std::vector<double> buf;
    std::vector<double> levels;
    for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
        double sa = steps[i].s, sb = steps[i + 1].s;
        if (sb <= s_min) continue;
        double a = steps[i].y[ci], b = steps[i + 1].y[ci];
        levels_between(a, b, levels);
        if (levels.empty()) continue;
        // Earliest level in time within this step.
        double best = std::numeric_limits<double>::infinity();
        for (double lv : levels) {
            double lo = std::max(sa, s_min), hi = sb;
            auto g = [&](double s) {
                traj.state(s, buf);
                return buf[ci] - lv;
            };
            double glo = g(lo), ghi = g(hi);
            if (glo == 0.0) { best = std::min(best, lo); continue; }
            if (glo * ghi > 0.0) continue;
            if (direction > 0 && glo > 0.0) continue; // want upward crossing
            if (direction < 0 && glo < 0.0) continue;
            while (hi - lo > time_tol) {
                double mid = 0.5 * (lo + hi);
                double gm = g(mid);
                if (gm == 0.0) { lo = hi = mid; break; }
                (glo * gm <= 0.0 ? hi : lo) = mid;
                if (glo * gm > 0.0) glo = gm;
            }
            best = std::min(best, 0.5 * (lo + hi));
        }
        if (std::isfinite(best)) return best;
    }
    return std::nullopt;
}

} // namespace detail

// First return time of a point to the section it sits on (event detection:
// sign change + bisection to ~1e-12 in time).
inline double return_time(const SystemDef& sys, WhichH which, const PhasePoint& m,
                          const SectionSpec& section, double t_max = 50.0,
                          const FlowOptions& opt = {}) {
    auto traj = flow(sys, which, m, 0.0, t_max, opt);
    // Skip the departure: require the crossing to happen after the section
    // coordinate has moved.
    auto v = sys.vector_field(which, m, 0.0, opt.eps);
    double vc = v[std::size_t(section.coordinate)];
    double s_min = std::abs(vc) > 1e-8 ? 1e-6 : 1e-3;
    int direction = std::abs(vc) > 1e-8 ? (vc > 0 ? 1 : -1) : 0;
    auto s = detail::first_crossing(traj, sys, section, s_min, 1e-12, direction);
    if (!s) throw SolverError("no section return within t_max");
    return *s;
}

// --- periodic orbits ---------------------------------------------------------

struct PeriodicOrbitRecord {
    PhasePoint m0;
    double period = 0.0;
    bool equilibrium = false; // fixed point; monodromy holds the field Jacobian
    Eigen::MatrixXd monodromy;
    std::vector<std::complex<double>> multipliers;
    enum class Classification { NondegenerateHyperbolic, NondegenerateNonhyperbolic, Degenerate };
    Classification classification = Classification::Degenerate;
    double residual = 0.0;
    // Leading real expansion/contraction data for manifold seeding:
    double rate_unstable = 0.0; // lambda+ > 0 (per unit time)
    double rate_stable = 0.0;   // lambda- > 0
    Eigen::VectorXd dir_unstable, dir_stable;

    const char* classification_name() const {
        switch (classification) {
        case Classification::NondegenerateHyperbolic: return "nondegenerate-hyperbolic";
        case Classification::NondegenerateNonhyperbolic: return "nondegenerate-nonhyperbolic";
        case Classification::Degenerate: return "degenerate";
        }
        return "?";
    }
};

struct OrbitSolveOptions {
    double orbit_tol = 1e-10;
    int max_iterations = 50;
    double fd_step = 1e-7; // only used by helpers that need numeric Jacobians
    FlowOptions flow;
    double cluster_tol = 1e-6; // multiplier-at-1 cluster tolerance
    double t_max = 50.0;       // section-return search horizon
};

namespace detail {

// Fixes the sign convention of a real eigenvector: the component of largest
// magnitude is positive. branch_sign arguments then mean the same thing on
// every run.
inline void orient(Eigen::VectorXd& v) {
    if (v.size() == 0) return;
    int imax = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    if (v(imax) < 0) v = -v;
    v.normalize();
}

inline void classify(PeriodicOrbitRecord& rec, double cluster_tol) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(rec.monodromy);
    rec.multipliers.clear();
    for (long i = 0; i < es.eigenvalues().size(); ++i)
        rec.multipliers.push_back(es.eigenvalues()[i]);
    std::sort(rec.multipliers.begin(), rec.multipliers.end(),
              [](auto a, auto b) { return std::abs(a) > std::abs(b); });

    int mult_one = 0, off_circle = 0;
    for (auto lam : rec.multipliers) {
        if (std::abs(lam - 1.0) <= cluster_tol) ++mult_one;
        else if (std::abs(std::abs(lam) - 1.0) > cluster_tol) ++off_circle;
    }
    using C = PeriodicOrbitRecord::Classification;
    if (mult_one != 2) rec.classification = C::Degenerate;
    else if (mult_one + off_circle == int(rec.multipliers.size()))
        rec.classification = C::NondegenerateHyperbolic;
    else rec.classification = C::NondegenerateNonhyperbolic;

    // Leading real eigenvectors for manifold seeding.
    double best_u = 0.0, best_s = 0.0;
    for (long i = 0; i < es.eigenvalues().size(); ++i) {
        std::complex<double> lam = es.eigenvalues()[i];
        if (std::abs(lam.imag()) > 1e-9 * (1.0 + std::abs(lam.real()))) continue;
        double a = lam.real();
        if (a > 1.0 + cluster_tol && a > best_u) {
            best_u = a;
            rec.dir_unstable = es.eigenvectors().col(i).real();
        }
        if (a > 0.0 && a < 1.0 - cluster_tol && (best_s == 0.0 || a < best_s)) {
            best_s = a;
            rec.dir_stable = es.eigenvectors().col(i).real();
        }
    }
    if (rec.period > 0.0) {
        if (best_u > 0.0) rec.rate_unstable = std::log(best_u) / rec.period;
        if (best_s > 0.0) rec.rate_stable = -std::log(best_s) / rec.period;
    }
    orient(rec.dir_unstable);
    orient(rec.dir_stable);
}

inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& J, const Eigen::VectorXd& r,
                                  double threshold = 1e-10) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(threshold);
    return svd.solve(r);
}

} // namespace detail

// Record for a hyperbolic fixed point treated as a degenerate-period orbit
// end. `monodromy` holds the Jacobian of the vector field; multipliers hold
// its eigenvalues (continuous-time exponents).
inline PeriodicOrbitRecord equilibrium_record(const SystemDef& sys, WhichH which,
                                              const PhasePoint& m, double eps = 0.0) {
    auto v = sys.vector_field(which, m, 0.0, eps);
    double vn = 0.0;
    for (double c : v) vn += c * c;
    if (std::sqrt(vn) > 1e-9) throw SolverError("equilibrium_record: point is not a fixed point");

    const std::size_t nn = std::size_t(sys.dim());
    std::vector<double> jac(nn * nn);
    sys.field_jacobian(which, eps, m.x, 0.0, jac);
    PeriodicOrbitRecord rec;
    rec.m0 = m;
    rec.equilibrium = true;
    rec.period = 0.0;
    rec.residual = std::sqrt(vn);
    rec.monodromy = Eigen::MatrixXd(sys.dim(), sys.dim());
    for (std::size_t r = 0; r < nn; ++r)
        for (std::size_t c = 0; c < nn; ++c) rec.monodromy(long(r), long(c)) = jac[r * nn + c];

    Eigen::EigenSolver<Eigen::MatrixXd> es(rec.monodromy);
    double best_u = 0.0, best_s = 0.0;
    for (long i = 0; i < es.eigenvalues().size(); ++i) {
        auto lam = es.eigenvalues()[i];
        rec.multipliers.push_back(lam);
        if (std::abs(lam.imag()) > 1e-10) continue;
        if (lam.real() > best_u) {
            best_u = lam.real();
            rec.dir_unstable = es.eigenvectors().col(i).real();
        }
        if (-lam.real() > best_s) {
            best_s = -lam.real();
            rec.dir_stable = es.eigenvectors().col(i).real();
        }
    }
    rec.rate_unstable = best_u;
    rec.rate_stable = best_s;
    detail::orient(rec.dir_unstable);
    detail::orient(rec.dir_stable);
    rec.classification = (best_u > 1e-8 && best_s > 1e-8)
                             ? PeriodicOrbitRecord::Classification::NondegenerateHyperbolic
                             : PeriodicOrbitRecord::Classification::Degenerate;
    return rec;
}

struct FixedPeriodMode { double period; };
struct SectionMode { SectionSpec section; };

// Newton on the periodicity condition. Fixed-period mode solves
// phi^tau(y) - y = 0 in all coordinates; section mode constrains the point
// to the section and solves the first-return displacement. Both use a
// minimal-norm Newton step (SVD pseudo-inverse): the periodicity map is
// singular along the orbit-cylinder directions.
inline PeriodicOrbitRecord find_periodic_orbit(const SystemDef& sys, WhichH which,
                                               const PhasePoint& guess, FixedPeriodMode mode,
                                               const OrbitSolveOptions& opt = {},
                                               double eps = 0.0) {
    const int n = sys.dim();
    FlowOptions fo = opt.flow;
    fo.eps = eps;
    std::vector<double> y = guess.x;

    double residual = 0.0;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        auto [yend, phi] = variational_flow(sys, which, PhasePoint{y}, 0.0, mode.period, fo);
        Eigen::VectorXd r(n);
        for (int k = 0; k < n; ++k)
            r(k) = sys.coordinate_difference(k, yend[std::size_t(k)], y[std::size_t(k)]);
        residual = r.norm();
        if (residual < opt.orbit_tol) {
            PeriodicOrbitRecord rec;
            rec.m0 = sys.reduced(std::move(y));
            rec.period = mode.period;
            rec.monodromy = phi;
            rec.residual = residual;
            detail::classify(rec, opt.cluster_tol);
            return rec;
        }
        if (it == opt.max_iterations) break;
        Eigen::MatrixXd J = phi - Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd step = detail::pinv_solve(J, r);
        for (int k = 0; k < n; ++k) y[std::size_t(k)] -= step(k);
        sys.reduce_inplace(y);
    }
    throw SolverError("find_periodic_orbit: Newton did not converge (residual " +
                      std::to_string(residual) + ")");
}

inline PeriodicOrbitRecord find_periodic_orbit(const SystemDef& sys, WhichH which,
                                               const PhasePoint& guess, SectionMode mode,
                                               const OrbitSolveOptions& opt = {},
                                               double eps = 0.0) {
    const int n = sys.dim();
    const int ci = mode.section.coordinate;
    FlowOptions fo = opt.flow;
    fo.eps = eps;

    std::vector<double> y = guess.x;
    y[std::size_t(ci)] = mode.section.value;

    double residual = 0.0, tau = 0.0;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        tau = return_time(sys, which, PhasePoint{y}, mode.section, opt.t_max, fo);
        auto [yend, phi] = variational_flow(sys, which, PhasePoint{y}, 0.0, tau, fo);

        Eigen::VectorXd r_full(n);
        for (int k = 0; k < n; ++k)
            r_full(k) = sys.coordinate_difference(k, yend[std::size_t(k)], y[std::size_t(k)]);
        residual = r_full.norm();
        if (residual < opt.orbit_tol) {
            PeriodicOrbitRecord rec;
            rec.m0 = sys.reduced(std::move(y));
            rec.period = tau;
            rec.monodromy = phi;
            rec.residual = residual;
            detail::classify(rec, opt.cluster_tol);
            return rec;
        }
        if (it == opt.max_iterations) break;

        // Differential of the return map: correct the monodromy for the
        // section-crossing time adjustment, then restrict to the section.
        auto f_end = sys.vector_field(which, PhasePoint{yend}, tau, eps);
        double fc = f_end[std::size_t(ci)];
        if (std::abs(fc) < 1e-12) throw SolverError("find_periodic_orbit: tangential section crossing");
        Eigen::MatrixXd R(n, n);
        for (int rr = 0; rr < n; ++rr)
            for (int cc = 0; cc < n; ++cc)
                R(rr, cc) = phi(rr, cc) - f_end[std::size_t(rr)] * phi(ci, cc) / fc;

        // Free coordinates: all but the section coordinate.
        Eigen::MatrixXd J(n - 1, n - 1);
        Eigen::VectorXd r(n - 1);
        int ri = 0;
        for (int rr = 0; rr < n; ++rr) {
            if (rr == ci) continue;
            int cj = 0;
            for (int cc = 0; cc < n; ++cc) {
                if (cc == ci) continue;
                J(ri, cj) = R(rr, cc) - (rr == cc ? 1.0 : 0.0);
                ++cj;
            }
            r(ri) = r_full(rr);
            ++ri;
        }
        Eigen::VectorXd step = detail::pinv_solve(J, r);
        ri = 0;
        for (int k = 0; k < n; ++k) {
            if (k == ci) continue;
            y[std::size_t(k)] -= step(ri++);
        }
        sys.reduce_inplace(y);
        y[std::size_t(ci)] = mode.section.value;
    }
    throw SolverError("find_periodic_orbit: Newton did not converge (residual " +
                      std::to_string(residual) + ")");
}

// --- stroboscopic map --------------------------------------------------------

// Time-T_f flow of H_eps = H0 + eps H1 started at phase t0.
inline PhasePoint stroboscopic_map(const SystemDef& sys, const PhasePoint& m, double t0,
                                   double eps, const FlowOptions& opt = {}) {
    if (!sys.time_dependent())
        throw ConfigError("stroboscopic_map: system is not time-dependent");
    FlowOptions fo = opt;
    fo.eps = eps;
    auto traj = flow(sys, WhichH::Perturbed, m, t0, t0 + sys.forcing_period(), fo);
    return traj.point(t0 + sys.forcing_period());
}

} // namespace melnikov

#endif
