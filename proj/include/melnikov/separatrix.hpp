#ifndef MELNIKOV_SEPARATRIX_HPP
#define MELNIKOV_SEPARATRIX_HPP

// Parameterized unperturbed connecting orbits m(s) between hyperbolic
// orbits/saddles, and frames of commuting conserved quantities on the
// connecting manifold.
//
// Parameter convention: s = 0 sits at the point of maximal distance from
// both end orbits. Beyond the truncation window the state is continued by
// the linearized asymptotics (phase-matched end orbit plus an exponentially
// decaying offset).

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dynamics.hpp"
#include "errors.hpp"
#include "phase.hpp"

namespace melnikov {

// Dense one-period sampling of a periodic orbit (or the fixed point itself)
// used for distance queries and asymptotic continuation.
class OrbitSampler {
public:
    OrbitSampler() = default;

    // Snapshots the system so the sampler (and anything holding it) owns its
    // dependencies outright.
    OrbitSampler(std::shared_ptr<const SystemDef> sys, const PeriodicOrbitRecord& rec,
                 WhichH which = WhichH::H0, double eps = 0.0)
        : sys_(std::move(sys)), equilibrium_(rec.equilibrium), anchor_(rec.m0) {
        if (!equilibrium_) {
            period_ = rec.period;
            loop_ = std::make_shared<Trajectory>(flow(*sys_, which, rec.m0, 0.0, rec.period,
                                                      FlowOptions{1e-12, eps, 1e30, 20'000'000}));
        }
    }

    OrbitSampler(const SystemDef& sys, const PeriodicOrbitRecord& rec, WhichH which = WhichH::H0,
                 double eps = 0.0)
        : OrbitSampler(std::make_shared<const SystemDef>(sys), rec, which, eps) {}

    bool valid() const { return sys_ != nullptr; }
    bool equilibrium() const { return equilibrium_; }
    double period() const { return period_; }

    // Orbit state at flow time u from the record's base point.
    void state(double u, std::vector<double>& out) const {
        if (equilibrium_) { out = anchor_.x; return; }
        double w = std::fmod(u, period_);
        if (w < 0) w += period_;
        loop_->state(w, out);
    }

    // Distance from z to the orbit: coarse scan plus golden-section polish.
    double distance(std::span<const double> z) const {
        if (equilibrium_) return sys_->distance(z, anchor_.x);
        const int coarse = 96;
        double best_u = 0.0, best = std::numeric_limits<double>::infinity();
        std::vector<double> buf;
        for (int i = 0; i < coarse; ++i) {
            double u = period_ * double(i) / double(coarse);
            state(u, buf);
            double d = sys_->distance(z, buf);
            if (d < best) { best = d; best_u = u; }
        }
        double a = best_u - period_ / coarse, b = best_u + period_ / coarse;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - gr * (b - a), d = a + gr * (b - a);
        auto f = [&](double u) {
            state(u, buf);
            return sys_->distance(z, buf);
        };
        double fc = f(c), fd = f(d);
        for (int it = 0; it < 48; ++it) {
            if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
            else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
        }
        return std::min(fc, fd);
    }

    // Flow time (mod period) of the orbit point nearest to z.
    double nearest_phase(std::span<const double> z) const {
        if (equilibrium_) return 0.0;
        const int coarse = 192;
        double best_u = 0.0, best = std::numeric_limits<double>::infinity();
        std::vector<double> buf;
        for (int i = 0; i < coarse; ++i) {
            double u = period_ * double(i) / double(coarse);
            state(u, buf);
            double d = sys_->distance(z, buf);
            if (d < best) { best = d; best_u = u; }
        }
        double a = best_u - period_ / coarse, b = best_u + period_ / coarse;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - gr * (b - a), d = a + gr * (b - a);
        auto f = [&](double u) {
            state(u, buf);
            return sys_->distance(z, buf);
        };
        double fc = f(c), fd = f(d);
        for (int it = 0; it < 60; ++it) {
            if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = f(c); }
            else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = f(d); }
        }
        return 0.5 * (a + b);
    }

private:
    std::shared_ptr<const SystemDef> sys_;
    bool equilibrium_ = true;
    PhasePoint anchor_;
    double period_ = 0.0;
    std::shared_ptr<Trajectory> loop_;
};

struct ConnectingOrbit {
    enum class Kind { Homoclinic, Heteroclinic };

    std::shared_ptr<const SystemDef> sys;
    PeriodicOrbitRecord source; // gamma-  (backward limit)
    PeriodicOrbitRecord target; // gamma+  (forward limit)
    OrbitSampler source_sampler, target_sampler;
    Kind kind = Kind::Homoclinic;

    double S = 0.0;           // |s| beyond which distance to the end orbit < asym_tol
    double asym_tol = 1e-8;
    double rate_minus = 0.0;  // lambda- (source, per unit time)
    double rate_plus = 0.0;   // lambda+ (target)

    // Sampled core (absent for closed forms).
    std::shared_ptr<Trajectory> samples;
    double sample_shift = 0.0; // trajectory parameter of s = 0
    double sample_lo = 0.0, sample_hi = 0.0; // valid s range of the samples

    // Closed form (absent for numeric orbits).
    std::function<void(double, std::vector<double>&)> closed_form;

    // Tail anchors (numeric orbits): offsets and phases at the sample ends.
    std::vector<double> tail_offset_plus, tail_offset_minus;
    double tail_phase_plus = 0.0, tail_phase_minus = 0.0;

    void state(double s, std::vector<double>& out) const {
        if (closed_form) { closed_form(s, out); return; }
        if (s >= sample_lo && s <= sample_hi) {
            samples->state(s + sample_shift, out);
            return;
        }
        // Linearized asymptotics: phase-matched end orbit plus decaying offset.
        thread_local std::vector<double> base;
        if (s > sample_hi) {
            target_sampler.state(tail_phase_plus + (s - sample_hi), base);
            double decay = std::exp(-rate_plus * (s - sample_hi));
            out.resize(base.size());
            for (std::size_t i = 0; i < base.size(); ++i)
                out[i] = base[i] + tail_offset_plus[i] * decay;
        } else {
            source_sampler.state(tail_phase_minus + (s - sample_lo), base);
            double decay = std::exp(rate_minus * (s - sample_lo));
            out.resize(base.size());
            for (std::size_t i = 0; i < base.size(); ++i)
                out[i] = base[i] + tail_offset_minus[i] * decay;
        }
    }

    std::vector<double> state(double s) const {
        std::vector<double> out;
        state(s, out);
        return out;
    }

    PhasePoint point(double s) const { return sys->reduced(state(s)); }

    double distance_to_source(double s) const { return source_sampler.distance(state(s)); }
    double distance_to_target(double s) const { return target_sampler.distance(state(s)); }

    const char* kind_name() const {
        return kind == Kind::Homoclinic ? "homoclinic" : "heteroclinic";
    }
};

// --- analytic catalog separatrices -------------------------------------------

// pendulum: q(s) = 4 arctan(e^s), p(s) = 2 sech(s); homoclinic loop of the
// saddle (0,0) on the q-circle, energy 1.
// duffing: q(s) = sqrt(2) sech(s), p(s) = -sqrt(2) sech(s) tanh(s);
// homoclinic at (0,0), energy 0.
inline ConnectingOrbit analytic_separatrix(const SystemDef& sys, const std::string& name,
                                           double asym_tol = 1e-8) {
    auto snap = std::make_shared<const SystemDef>(sys);
    ConnectingOrbit orbit;
    orbit.sys = snap;
    orbit.kind = ConnectingOrbit::Kind::Homoclinic;
    orbit.asym_tol = asym_tol;

    if (name == "pendulum") {
        orbit.closed_form = [](double s, std::vector<double>& out) {
            out.resize(2);
            // 4 arctan(e^s) written overflow-free on both sides.
            constexpr double two_pi = 2.0 * 3.14159265358979323846;
            out[0] = s <= 0.0 ? 4.0 * std::atan(std::exp(s))
                              : two_pi - 4.0 * std::atan(std::exp(-s));
            out[1] = 2.0 / std::cosh(s);
        };
    } else if (name == "duffing") {
        orbit.closed_form = [](double s, std::vector<double>& out) {
            out.resize(2);
            const double r2 = std::sqrt(2.0);
            double sech = 1.0 / std::cosh(s);
            out[0] = r2 * sech;
            out[1] = -r2 * sech * std::tanh(s);
        };
    } else {
        throw ConfigError("analytic_separatrix: unknown catalog name '" + name + "'");
    }

    auto saddle = equilibrium_record(*snap, WhichH::H0, snap->point({0.0, 0.0}));
    orbit.source = saddle;
    orbit.target = saddle;
    orbit.source_sampler = OrbitSampler(snap, saddle);
    orbit.target_sampler = OrbitSampler(snap, saddle);
    orbit.rate_minus = saddle.rate_unstable;
    orbit.rate_plus = saddle.rate_stable;

    double s = 1.0;
    while (orbit.distance_to_target(s) >= asym_tol && s < 60.0) s += 0.5;
    orbit.S = s + 2.0;
    return orbit;
}

// Lifts a planar connecting orbit into the extended phase space of
// extend_periodic: m(s) -> (m(s), t0 + s, eta0). Valid because tdot = 1 for
// the extended Hamiltonian.
inline ConnectingOrbit lift_to_extended(const SystemDef& ext, const ConnectingOrbit& planar,
                                        double t0 = 0.0, double eta0 = 0.0) {
    int tc = ext.time_coordinate();
    if (tc < 0 || tc != ext.dim() - 2)
        throw ConfigError("lift_to_extended: system is not an extended product");

    auto snap = std::make_shared<const SystemDef>(ext);
    ConnectingOrbit orbit;
    orbit.sys = snap;
    orbit.kind = planar.kind;
    orbit.asym_tol = planar.asym_tol;
    orbit.S = planar.S;
    orbit.rate_minus = planar.rate_minus;
    orbit.rate_plus = planar.rate_plus;

    auto planar_form = planar; // copy keeps the planar orbit alive in the lambda
    orbit.closed_form = [planar_form, t0, eta0](double s, std::vector<double>& out) {
        thread_local std::vector<double> base;
        planar_form.state(s, base);
        out.resize(base.size() + 2);
        std::copy(base.begin(), base.end(), out.begin());
        out[base.size()] = t0 + s;
        out[base.size() + 1] = eta0;
    };

    std::vector<double> src0 = planar.source.m0.x;
    src0.push_back(t0);
    src0.push_back(eta0);
    auto rec = find_periodic_orbit(*snap, WhichH::H0, snap->point(src0),
                                   FixedPeriodMode{snap->pairs().back().circumference});
    orbit.source = rec;
    orbit.source_sampler = OrbitSampler(snap, rec);
    if (planar.kind == ConnectingOrbit::Kind::Homoclinic) {
        orbit.target = rec;
        orbit.target_sampler = orbit.source_sampler;
    } else {
        std::vector<double> tgt0 = planar.target.m0.x;
        tgt0.push_back(t0);
        tgt0.push_back(eta0);
        auto rec2 = find_periodic_orbit(*snap, WhichH::H0, snap->point(tgt0),
                                        FixedPeriodMode{snap->pairs().back().circumference});
        orbit.target = rec2;
        orbit.target_sampler = OrbitSampler(snap, rec2);
    }
    return orbit;
}

// --- numeric separatrix -------------------------------------------------------

struct SeparatrixOptions {
    double delta0 = 1e-9;   // seed offset along the unstable eigenvector
    double asym_tol = 1e-8;
    double s_range = 120.0; // forward integration budget
    FlowOptions flow;
};

// Grows the unstable branch of `source` and declares a connection when the
// trajectory lands near `target`. branch_sign picks the branch of the
// unstable eigenvector.
inline ConnectingOrbit numeric_separatrix(const SystemDef& sys,
                                          const PeriodicOrbitRecord& source,
                                          const PeriodicOrbitRecord& target, int branch_sign,
                                          const SeparatrixOptions& opt = {}) {
    if (!(opt.delta0 >= 1e-9 && opt.delta0 <= 1e-5))
        throw ConfigError("numeric_separatrix: delta0 must lie in [1e-9, 1e-5]");
    if (source.dir_unstable.size() == 0)
        throw SolverError("numeric_separatrix: source has no real unstable direction");

    auto snap = std::make_shared<const SystemDef>(sys);
    OrbitSampler src_sampler(snap, source), tgt_sampler(snap, target);

    Eigen::VectorXd v = source.dir_unstable.normalized();
    std::vector<double> z0 = source.m0.x;
    for (int k = 0; k < sys.dim(); ++k) z0[std::size_t(k)] += branch_sign * opt.delta0 * v(k);

    const double sep_scale = src_sampler.distance(target.m0.x);
    const double escape_radius = 10.0 * (sep_scale + 1.0);

    // Integrate in chunks, watching the distances to both end orbits. The
    // landing watch only arms once the trajectory has left the source
    // neighbourhood (for homoclinic loops the departure is also target-near).
    std::vector<TrajectoryStep> steps;
    double s_accum = 0.0;
    std::vector<double> z = z0;
    bool landed = false, armed = false;
    const double arm_distance = 0.2 * (sep_scale + 1.0);
    double best_target_dist = std::numeric_limits<double>::infinity();
    double best_target_s = 0.0;

    const double chunk = 2.0;
    while (s_accum < opt.s_range && !landed) {
        auto traj = flow(*snap, WhichH::H0, PhasePoint{z}, 0.0, chunk, opt.flow);
        const auto& ts = traj.steps();
        for (std::size_t i = (steps.empty() ? 0 : 1); i < ts.size(); ++i)
            steps.push_back({ts[i].s + s_accum, ts[i].y, ts[i].f});
        z = ts.back().y;
        s_accum += chunk;

        double d_tgt = tgt_sampler.distance(z);
        double d_src = src_sampler.distance(z);
        if (!armed && std::min(d_src, d_tgt) > arm_distance) armed = true;
        if (armed && d_tgt < best_target_dist) {
            best_target_dist = d_tgt;
            best_target_s = s_accum;
        }
        // Passed the closest approach and started to leave again.
        if (armed && best_target_dist < 1e-3 && d_tgt > 4.0 * best_target_dist &&
            s_accum > best_target_s)
            landed = true;
        if (std::min(d_src, d_tgt) > escape_radius)
            throw SolverError("no connection found at this tolerance (trajectory escaped)");
    }
    if (!landed && best_target_dist > 1e-3)
        throw SolverError("no connection found at this tolerance (target not approached)");

    // Cut at the closest approach (argmin over the stored steps past arming).
    {
        double best = std::numeric_limits<double>::infinity(), cut_s = steps.back().s;
        bool scan_armed = false;
        for (const auto& st : steps) {
            double d_src = src_sampler.distance(st.y);
            double d_tgt = tgt_sampler.distance(st.y);
            if (!scan_armed && std::min(d_src, d_tgt) > arm_distance) scan_armed = true;
            if (scan_armed && d_tgt < best) { best = d_tgt; cut_s = st.s; }
        }
        best_target_s = cut_s;
        best_target_dist = best;
    }

    ConnectingOrbit orbit;
    orbit.sys = snap;
    orbit.source = source;
    orbit.target = target;
    orbit.source_sampler = src_sampler;
    orbit.target_sampler = tgt_sampler;
    orbit.asym_tol = opt.asym_tol;
    orbit.rate_minus = source.rate_unstable;
    orbit.rate_plus = target.rate_stable;
    orbit.kind = (sys.distance(source.m0.x, target.m0.x) < 1e-6)
                     ? ConnectingOrbit::Kind::Homoclinic
                     : ConnectingOrbit::Kind::Heteroclinic;

    // Cut the samples at the closest approach to the target.
    while (!steps.empty() && steps.back().s > best_target_s) steps.pop_back();
    if (steps.size() < 8) throw SolverError("numeric_separatrix: trajectory too short");
    orbit.samples = std::make_shared<Trajectory>(*snap, std::move(steps), false);

    // s = 0 convention: maximal distance from both end orbits.
    {
        const auto& ss = orbit.samples->steps();
        double best = -1.0, s_star = 0.0;
        for (const auto& st : ss) {
            double d = std::min(src_sampler.distance(st.y), tgt_sampler.distance(st.y));
            if (d > best) { best = d; s_star = st.s; }
        }
        orbit.sample_shift = s_star;
        orbit.sample_lo = ss.front().s - s_star;
        orbit.sample_hi = ss.back().s - s_star;
    }

    // Tail anchors: offset from the phase-matched end-orbit point.
    {
        std::vector<double> zhi = orbit.samples->state(orbit.sample_hi + orbit.sample_shift);
        orbit.tail_phase_plus = tgt_sampler.nearest_phase(zhi);
        std::vector<double> base;
        tgt_sampler.state(orbit.tail_phase_plus, base);
        orbit.tail_offset_plus.resize(base.size());
        for (std::size_t i = 0; i < base.size(); ++i)
            orbit.tail_offset_plus[i] = sys.coordinate_difference(int(i), zhi[i], base[i]);

        std::vector<double> zlo = orbit.samples->state(orbit.sample_lo + orbit.sample_shift);
        orbit.tail_phase_minus = src_sampler.nearest_phase(zlo);
        src_sampler.state(orbit.tail_phase_minus, base);
        orbit.tail_offset_minus.resize(base.size());
        for (std::size_t i = 0; i < base.size(); ++i)
            orbit.tail_offset_minus[i] = sys.coordinate_difference(int(i), zlo[i], base[i]);
    }

    // Truncation: extend past the sampled window until the linearized tails
    // sit below asym_tol, plus margin.
    double tail_plus_len =
        std::log(std::max(orbit.distance_to_target(orbit.sample_hi) / opt.asym_tol, 1.0)) /
        std::max(orbit.rate_plus, 1e-6);
    double tail_minus_len =
        std::log(std::max(orbit.distance_to_source(orbit.sample_lo) / opt.asym_tol, 1.0)) /
        std::max(orbit.rate_minus, 1e-6);
    orbit.S = std::max(orbit.sample_hi + tail_plus_len, -orbit.sample_lo + tail_minus_len) + 2.0;
    return orbit;
}

// --- conserved frames ---------------------------------------------------------

struct ConservedFrame {
    std::vector<Expression> quantities;
    std::vector<std::string> labels;
    double certificate = 0.0; // min over samples of sigma_min of the gradient matrix
    double worst_commutator = 0.0;
};

struct FrameOptions {
    int samples = 64;
    double comm_tol = 1e-10;
    double frame_tol = 1e-6;
};

// Validates pairwise commutation and {A_j, H0} = 0 along the connecting
// orbit, and certifies regularity of the differentials away from the end
// orbits.
inline ConservedFrame conserved_frame(const SystemDef& sys, std::vector<Expression> quantities,
                                      std::vector<std::string> labels,
                                      const ConnectingOrbit& orbit, const FrameOptions& opt = {}) {
    const int d = sys.pair_count();
    if (int(quantities.size()) != d)
        throw ConfigError("conserved_frame: need exactly d quantities for a d-degree system");
    if (labels.size() != quantities.size())
        throw ConfigError("conserved_frame: labels/quantities size mismatch");

    // Gradients for the regularity certificate.
    std::vector<std::vector<Expression>> grads;
    const auto layout = sys.binding_layout();
    for (const auto& a : quantities) {
        std::vector<Expression> g;
        for (int k = 0; k < sys.dim(); ++k) g.push_back(a.differentiate(layout[std::size_t(k)]));
        grads.push_back(std::move(g));
    }

    std::vector<SystemDef::Bracket> pair_brackets;
    std::vector<std::pair<int, int>> pair_index;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            pair_brackets.emplace_back(sys, quantities[std::size_t(i)], quantities[std::size_t(j)]);
            pair_index.emplace_back(i, j);
        }
    std::vector<SystemDef::Bracket> h0_brackets;
    for (int i = 0; i < d; ++i) h0_brackets.emplace_back(sys, quantities[std::size_t(i)], sys.h0());

    ConservedFrame frame;
    frame.labels = labels;
    frame.certificate = std::numeric_limits<double>::infinity();

    // Sampling window: keep away from the end orbits, where the momentum map
    // degenerates. Scan outward from the apex until the distance to the
    // nearer end orbit has dropped to 5% of its apex value.
    double apex = std::min(orbit.distance_to_source(0.0), orbit.distance_to_target(0.0));
    double win_lo = -orbit.S, win_hi = orbit.S;
    for (double s = 0.0; s <= orbit.S; s += 0.25) {
        double d = std::min(orbit.distance_to_source(s), orbit.distance_to_target(s));
        if (d < 0.05 * apex) { win_hi = s; break; }
    }
    for (double s = 0.0; s >= -orbit.S; s -= 0.25) {
        double d = std::min(orbit.distance_to_source(s), orbit.distance_to_target(s));
        if (d < 0.05 * apex) { win_lo = s; break; }
    }

    std::vector<double> state;
    for (int k = 0; k < opt.samples; ++k) {
        double s = win_lo + (win_hi - win_lo) * double(k) / double(opt.samples - 1);
        orbit.state(s, state);

        for (std::size_t b = 0; b < pair_brackets.size(); ++b) {
            double v = pair_brackets[b](state);
            frame.worst_commutator = std::max(frame.worst_commutator, std::abs(v));
            if (std::abs(v) >= opt.comm_tol)
                throw GuardError("conserved_frame: {" + labels[std::size_t(pair_index[b].first)] +
                                 ", " + labels[std::size_t(pair_index[b].second)] + "} = " +
                                 std::to_string(v) + " at s = " + std::to_string(s));
        }
        for (int i = 0; i < d; ++i) {
            double v = h0_brackets[std::size_t(i)](state);
            if (std::abs(v) >= opt.comm_tol)
                throw GuardError("conserved_frame: {" + labels[std::size_t(i)] + ", H0} = " +
                                 std::to_string(v) + " at s = " + std::to_string(s));
        }

        Eigen::MatrixXd dA(d, sys.dim());
        for (int i = 0; i < d; ++i)
            for (int c = 0; c < sys.dim(); ++c)
                dA(i, c) = sys.eval(grads[std::size_t(i)][std::size_t(c)], state);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(dA);
        frame.certificate = std::min(frame.certificate, svd.singularValues().minCoeff());
    }
    if (frame.certificate <= opt.frame_tol)
        throw GuardError("conserved_frame: rank deficiency (certificate " +
                         std::to_string(frame.certificate) + ")");
    frame.quantities = std::move(quantities);
    return frame;
}

} // namespace melnikov

#endif
