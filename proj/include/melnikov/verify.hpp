#ifndef MELNIKOV_VERIFY_HPP
#define MELNIKOV_VERIFY_HPP

// End-to-end verification suite. Each check is self-contained, pins its
// tolerances in code, and reports one pass/fail line. The CLI `verify`
// subcommand and the acceptance test binary both run this list.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "melnikov_form.hpp"
#include "separatrix.hpp"
#include "splitting.hpp"

namespace melnikov::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::string only;                    // substring filter on check names
    bool inject_bracket_sign_flip = false; // mutation-sanity test hook
};

namespace detail {

constexpr double kPi = 3.14159265358979323846;

struct ForcedPendulum {
    SystemDef ext;
    ConnectingOrbit orbit;
    Expression h0pi, eta;
};

inline ForcedPendulum make_forced_pendulum(const std::string& h1 = "p*cos(t)") {
    auto pen = catalog("pendulum");
    auto ext = extend_periodic(with_perturbation(pen, h1, 2.0 * kPi));
    auto orbit = lift_to_extended(ext, analytic_separatrix(pen, "pendulum"), 0.0, 0.0);
    auto h0pi = ext.parse_observable("p^2/2 + cos(q)");
    auto eta = ext.parse_observable("eta");
    return {std::move(ext), std::move(orbit), std::move(h0pi), std::move(eta)};
}

inline double closed_form_amplitude() { return 2.0 * kPi / std::cosh(kPi / 2.0); }

// Independent oracle: dense trapezoid over the closed-form separatrix,
// bypassing the library quadrature and orbit machinery.
inline double trapezoid_oracle(double t0) {
    const double lo = -45.0, hi = 45.0, h = 0.01;
    auto f = [&](double s) {
        return std::cos(t0 + s) * (-2.0 * std::tanh(s) / std::cosh(s));
    };
    double acc = 0.5 * (f(lo) + f(hi));
    long n = std::lround((hi - lo) / h);
    for (long i = 1; i < n; ++i) acc += f(lo + h * double(i));
    return acc * h;
}

struct Failure {
    std::string message;
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw Failure{message};
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(8);
    os << v;
    return os.str();
}

// --- criterion 1 -------------------------------------------------------------

inline std::string check_paper_example_periods() {
    auto sys = catalog("paper-example", {{"c", 0.5}, {"delta", 0.3}});
    auto rec0 = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.01, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto rec1 = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.01, 2.0 * kPi, 0.0}),
                                    SectionMode{{0, 0.0}});
    require(std::abs(rec1.period - 1.0) < 1e-8,
            "x=2pi orbit period " + fmt(rec1.period) + " != 1");
    require(std::abs(rec0.period - 2.0 / 3.0) < 1e-8,
            "x=0 orbit period " + fmt(rec0.period) + " != 2/3");
    return "periods " + fmt(rec1.period) + " and " + fmt(rec0.period);
}

// --- criterion 2 -------------------------------------------------------------

inline std::string check_paper_example_counting() {
    auto sys = catalog("paper-example");
    auto plus = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.01, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto minus = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.01, 2.0 * kPi, 0.0}),
                                     SectionMode{{0, 0.0}});
    auto src = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto het = numeric_separatrix(sys, src, tgt, +1);
    auto frame =
        conserved_frame(sys, {sys.h0(), sys.parse_observable("eta")}, {"H", "eta"}, het);
    auto rep = critical_integral_basis(sys, frame, plus, minus);
    require(std::abs(rep.c_plus[1] - 2.0 / 3.0) < 1e-6,
            "c+(eta) = " + fmt(rep.c_plus[1]) + " != 2/3");
    require(std::abs(rep.c_minus[1] - 1.0) < 1e-6, "c-(eta) = " + fmt(rep.c_minus[1]) + " != 1");
    require(rep.p == 0, "p = " + std::to_string(rep.p) + " != 0");

    auto flat = paper_example_equal_period();
    auto fplus = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.01, 0.0, 0.0}),
                                     SectionMode{{0, 0.0}});
    auto fminus = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.01, 2.0 * kPi, 0.0}),
                                      SectionMode{{0, 0.0}});
    auto fsrc = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.0, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto ftgt = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto fhet = numeric_separatrix(flat, fsrc, ftgt, +1);
    auto fframe =
        conserved_frame(flat, {flat.h0(), flat.parse_observable("eta")}, {"H", "eta"}, fhet);
    auto frep = critical_integral_basis(flat, fframe, fplus, fminus);
    require(frep.p == 1, "equal-period variant p = " + std::to_string(frep.p) + " != 1");
    return "c+-(eta) = (" + fmt(rep.c_plus[1]) + ", " + fmt(rep.c_minus[1]) +
           "), p = 0; equal-period variant p = 1";
}

// --- criterion 3 -------------------------------------------------------------

inline std::string check_forced_pendulum_melnikov() {
    auto fp = make_forced_pendulum();
    std::vector<double> grid;
    for (int k = 0; k < 128; ++k) grid.push_back(2.0 * kPi * double(k) / 128.0);
    auto samples = melnikov_function(fp.ext, fp.orbit, fp.h0pi, "H0", grid);
    double amp = 0.0;
    for (const auto& s : samples) amp = std::max(amp, std::abs(s.value));
    double expect = closed_form_amplitude();
    require(std::abs(amp - expect) < 1e-6 * expect,
            "amplitude " + fmt(amp) + " vs closed form " + fmt(expect));
    // Cross-check four phases against the independent trapezoid oracle.
    for (double t0 : {0.7, 1.9, 3.4, 5.2}) {
        double lib = melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, 0.0, {}, t0).value;
        require(std::abs(lib - trapezoid_oracle(t0)) < 1e-8,
                "trapezoid oracle mismatch at t0 = " + fmt(t0));
    }
    auto eval = [&](double t0) {
        return melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, 0.0, {}, t0).value;
    };
    auto zeros = find_zeros(samples, eval, 2.0 * kPi);
    require(zeros.size() == 2, "expected 2 zeros per period, found " +
                                   std::to_string(zeros.size()));
    require(std::abs(zeros[0].t0 - 0.0) < 1e-6 && std::abs(zeros[1].t0 - kPi) < 1e-6,
            "zeros at " + fmt(zeros[0].t0) + ", " + fmt(zeros[1].t0) + " not at k pi");
    for (const auto& z : zeros)
        require(z.nondegenerate, "zero at " + fmt(z.t0) + " flagged degenerate");
    return "amplitude " + fmt(amp) + ", zeros at 0 and pi, all nondegenerate";
}

// --- criterion 4 -------------------------------------------------------------

inline std::string check_exactness_mean() {
    auto fp = make_forced_pendulum();
    std::vector<double> grid;
    for (int k = 0; k < 128; ++k) grid.push_back(2.0 * kPi * double(k) / 128.0);
    auto samples = melnikov_function(fp.ext, fp.orbit, fp.h0pi, "H0", grid);
    double mean = 0.0, amp = 0.0;
    for (const auto& s : samples) {
        mean += s.value;
        amp = std::max(amp, std::abs(s.value));
    }
    mean /= double(samples.size());
    require(std::abs(mean) < 1e-8 * amp,
            "|mean| = " + fmt(std::abs(mean)) + " >= 1e-8 * amplitude");
    return "|mean|/amplitude = " + fmt(std::abs(mean) / amp);
}

// --- criterion 5 -------------------------------------------------------------

inline std::string check_flow_shift() {
    auto fp = make_forced_pendulum();
    double worst = 0.0;
    for (double sigma : {0.3, 1.7}) {
        for (double t0 : {0.9, 2.6, 4.8}) {
            double shifted =
                melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, sigma, {}, t0).value;
            double base =
                melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, 0.0, {}, t0 - sigma).value;
            worst = std::max(worst, std::abs(shifted - base));
        }
    }
    require(worst < 1e-8, "max |M_shifted - M| = " + fmt(worst));
    return "max deviation " + fmt(worst);
}

// --- criterion 6 -------------------------------------------------------------

inline std::string check_beta_on_extended_hamiltonian() {
    auto fp = make_forced_pendulum();
    double worst_ratio = 0.0;
    // 16 base points spread both along the loop (s0) and across the time
    // circle (t0): beta evaluated on the extended Hamiltonian's own field
    // vanishes at every one of them.
    for (int k = 0; k < 16; ++k) {
        double s0 = -4.0 + 8.0 * double(k) / 15.0;
        double t0 = 0.39 * double(k);
        auto s = melnikov_convergent(fp.ext, fp.ext.h0(), "H0ext", fp.orbit, s0, {}, t0);
        require(std::abs(s.value) <= 2.0 * s.error,
                "|beta(X_H0ext)| = " + fmt(std::abs(s.value)) + " > 2 * error " + fmt(s.error) +
                    " at s0 = " + fmt(s0) + ", t0 = " + fmt(t0));
        if (s.error > 0) worst_ratio = std::max(worst_ratio, std::abs(s.value) / s.error);
    }
    return "max |value|/error = " + fmt(worst_ratio) + " over 16 base points";
}

// --- criterion 7 -------------------------------------------------------------

inline std::string check_mode_consistency() {
    struct Case {
        const char* planar;
        const char* h1;
    };
    for (const Case& cs : {Case{"pendulum", "p*cos(t)"}, Case{"pendulum", "cos(q)*cos(t)"},
                           Case{"duffing", "q*cos(t)"}}) {
        auto planar = catalog(cs.planar);
        auto ext = extend_periodic(with_perturbation(planar, cs.h1, 2.0 * kPi));
        auto orbit = lift_to_extended(ext, analytic_separatrix(planar, cs.planar), 0.0, 0.0);
        auto a = ext.parse_observable(planar.h0().to_string());
        auto conv = melnikov_convergent(ext, a, "H0", orbit, 0.4);
        auto pres = melnikov_prescribed(ext, a, "H0", orbit, 0.4);
        require(std::abs(conv.value - pres.value) <= conv.error + pres.error + 1e-12,
                std::string(cs.planar) + " H1=" + cs.h1 + ": |conv - pres| = " +
                    fmt(std::abs(conv.value - pres.value)) + " > combined error " +
                    fmt(conv.error + pres.error));
    }

    // Non-critical heteroclinic case: period windows stabilize while
    // symmetric off-lattice windows oscillate.
    auto sys = with_perturbation(catalog("paper-example"), "cos(2*pi*t)*cos(x)");
    auto src = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto het = numeric_separatrix(sys, src, tgt, +1);
    auto eta = sys.parse_observable("eta");
    auto pres = melnikov_prescribed(sys, eta, "eta", het, 0.0);
    double spread = 0.0;
    for (std::size_t i = pres.window_values.size() - 3; i < pres.window_values.size(); ++i)
        for (std::size_t j = pres.window_values.size() - 3; j < pres.window_values.size(); ++j)
            spread = std::max(spread, std::abs(pres.window_values[i] - pres.window_values[j]));
    require(spread < 1e-6, "period-window spread " + fmt(spread) + " >= 1e-6");
    double lo = 1e300, hi = -1e300;
    for (double T : {3.3, 3.55, 3.8, 4.05, 4.3}) {
        double v = window_integral(sys, eta, het, -T, T);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    require(hi - lo > 1e-2, "symmetric windows oscillate only " + fmt(hi - lo));
    return "3 critical-A cases agree; window spread " + fmt(spread) +
           ", symmetric oscillation " + fmt(hi - lo);
}

// --- criterion 8 -------------------------------------------------------------

inline std::string check_splitting_oracle() {
    auto sys = with_perturbation(catalog("pendulum"), "p*cos(t)", 2.0 * kPi);
    auto fp = make_forced_pendulum();
    auto setup = pendulum_split_setup(sys);
    std::vector<double> phases{0.5, 1.2, kPi / 2, 2.2, 2.9};
    std::vector<double> eps_list{1e-2, 1e-3};
    auto reference = [&](double t0) {
        return melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, 0.0, {}, t0).value;
    };
    auto report = first_order_check(sys, setup, phases, eps_list, reference);

    double dev_small = 0.0, mean_small = 0.0, mean_big = 0.0;
    for (const auto& cell : report.cells) {
        if (cell.eps == 1e-3) {
            dev_small = std::max(dev_small, cell.deviation_rel);
            mean_small += cell.deviation_rel;
        } else {
            mean_big += cell.deviation_rel;
        }
    }
    mean_small /= double(phases.size());
    mean_big /= double(phases.size());
    require(dev_small < 0.05, "max relative deviation at eps=1e-3 is " + fmt(dev_small));
    double ratio = mean_big / mean_small;
    require(ratio >= 5.0 && ratio <= 20.0, "residual ratio " + fmt(ratio) + " outside [5, 20]");
    return "max deviation " + fmt(dev_small) + " at eps=1e-3, residual ratio " + fmt(ratio);
}

// --- criterion 9 -------------------------------------------------------------

inline std::string check_numerics_hygiene() {
    // Expression derivatives against central finite differences.
    std::mt19937 rng(0x90210);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::uniform_int_distribution<int> pick(0, 5);
    auto random_source = [&](int depth, auto&& self) -> std::string {
        const char* vars[3] = {"x", "y", "z"};
        if (depth <= 0) return vars[pick(rng) % 3];
        switch (pick(rng)) {
        case 0: return "(" + self(depth - 1, self) + " + " + self(depth - 1, self) + ")";
        case 1: return "(" + self(depth - 1, self) + "*" + self(depth - 1, self) + ")";
        case 2: return "sin(" + self(depth - 1, self) + ")";
        case 3: return "tanh(" + self(depth - 1, self) + ")";
        case 4: return "sech(" + self(depth - 1, self) + ")";
        default: return "(" + std::string(vars[pick(rng) % 3]) + "^2)";
        }
    };
    int checked = 0;
    double worst_fd = 0.0;
    while (checked < 100) {
        auto e = Expression::parse(random_source(3, random_source), {"x", "y", "z"});
        for (int v = 0; v < 3 && checked < 100; ++v, ++checked) {
            auto d = e.differentiate(v);
            std::vector<double> p{coef(rng), coef(rng), coef(rng)};
            auto pl = p, ph = p;
            const double h = 1e-6;
            pl[std::size_t(v)] -= h;
            ph[std::size_t(v)] += h;
            double fd = (e.evaluate(std::span<const double>(ph)) -
                         e.evaluate(std::span<const double>(pl))) /
                        (2 * h);
            double exact = d.evaluate(std::span<const double>(p));
            double rel = std::abs(exact - fd) / (1.0 + std::abs(exact));
            worst_fd = std::max(worst_fd, rel);
            require(rel < 1e-6, "derivative/FD mismatch " + fmt(rel));
        }
    }

    // Monodromy symplecticity.
    auto paper = catalog("paper-example");
    auto [ye, phi] = variational_flow(paper, WhichH::H0, paper.point({0.0, 0.05, 0.4, 0.2}),
                                      0.0, 3.0);
    Eigen::Matrix4d omega = Eigen::Matrix4d::Zero();
    omega(0, 1) = 1; omega(1, 0) = -1;
    omega(2, 3) = 1; omega(3, 2) = -1;
    double sympl = (phi.transpose() * omega * phi - omega).norm();
    require(sympl < 1e-7, "symplecticity defect " + fmt(sympl));

    // Extended pendulum saddle circle multipliers.
    auto fp = make_forced_pendulum();
    auto rec = find_periodic_orbit(fp.ext, WhichH::H0, fp.ext.point({0.0, 0.0, 1.0, 0.3}),
                                   FixedPeriodMode{2.0 * kPi});
    double e2pi = std::exp(2.0 * kPi);
    require(std::abs(std::abs(rec.multipliers[0]) - e2pi) < 1e-6 * e2pi,
            "leading multiplier " + fmt(std::abs(rec.multipliers[0])) + " vs e^{2pi}");
    require(std::abs(std::abs(rec.multipliers[3]) - 1.0 / e2pi) < 1e-6 / e2pi,
            "trailing multiplier vs e^{-2pi}");
    int ones = 0;
    for (auto lam : rec.multipliers)
        if (std::abs(lam - 1.0) <= 1e-6) ++ones;
    require(ones == 2, "eigenvalue-1 multiplicity " + std::to_string(ones) + " != 2");
    return "FD worst " + fmt(worst_fd) + ", symplecticity " + fmt(sympl) +
           ", multipliers {e^{2pi}, e^{-2pi}, 1, 1}";
}

// --- criterion 10 ------------------------------------------------------------

inline std::string check_potential_guard() {
    auto fp = make_forced_pendulum();
    auto frame = conserved_frame(fp.ext, {fp.h0pi, fp.eta}, {"H0_pi", "eta"}, fp.orbit);

    // Success branch: H1 = p cos t vanishes on the saddle circle; dL(X_A)
    // matches beta(X_A) at a point with nonzero beta.
    auto planar = catalog("pendulum");
    auto mk = [&](double ds) {
        auto moved = flow(planar, WhichH::H0, planar.point({kPi, 2.0}), 0.0, ds).state(ds);
        return fp.ext.point({moved[0], moved[1], 1.0, 0.0});
    };
    const double h = 1e-3;
    double lp = melnikov_potential(fp.ext, frame, fp.orbit, 0.0, mk(+h));
    double lm = melnikov_potential(fp.ext, frame, fp.orbit, 0.0, mk(-h));
    double dl = (lp - lm) / (2.0 * h);
    double beta = melnikov_convergent(fp.ext, fp.h0pi, "H0", fp.orbit, 0.0, {}, 1.0).value;
    require(std::abs(dl - beta) < 1e-5,
            "dL(X_A) = " + fmt(dl) + " vs beta(X_A) = " + fmt(beta));

    // Guard branch: heteroclinic paper-example with H1 varying on the orbits.
    auto sys = with_perturbation(catalog("paper-example"), "cos(2*pi*t)*cos(x)");
    auto src = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto het = numeric_separatrix(sys, src, tgt, +1);
    auto frame2 =
        conserved_frame(sys, {sys.h0(), sys.parse_observable("eta")}, {"H", "eta"}, het);
    bool tripped = false;
    try {
        melnikov_potential(sys, frame2, het, 0.0, het.point(0.0));
    } catch (const GuardError&) {
        tripped = true;
    }
    require(tripped, "guard did not trip on the heteroclinic paper-example");
    return "dL vs beta deviation " + fmt(std::abs(dl - beta)) + "; heteroclinic guard trips";
}

} // namespace detail

inline std::vector<CheckResult> run(const VerifyOptions& opt = {}) {
    struct Entry {
        const char* name;
        std::function<std::string()> fn;
        double time_limit = 0.0; // seconds; 0 = no stated limit
    };
    const std::vector<Entry> entries = {
        {"paper-example-periods", detail::check_paper_example_periods, 5.0},
        {"paper-example-counting", detail::check_paper_example_counting, 10.0},
        {"forced-pendulum-melnikov", detail::check_forced_pendulum_melnikov, 5.0},
        {"exactness-mean", detail::check_exactness_mean, 0.0},
        {"flow-shift", detail::check_flow_shift, 0.0},
        {"beta-extended-hamiltonian", detail::check_beta_on_extended_hamiltonian, 0.0},
        {"mode-consistency", detail::check_mode_consistency, 0.0},
        {"splitting-oracle", detail::check_splitting_oracle, 60.0},
        {"numerics-hygiene", detail::check_numerics_hygiene, 0.0},
        {"potential-guard", detail::check_potential_guard, 0.0},
    };

    bool prev = testing::bracket_sign_flip.load();
    testing::bracket_sign_flip = opt.inject_bracket_sign_flip;

    std::vector<CheckResult> results;
    for (const auto& entry : entries) {
        if (!opt.only.empty() && std::string(entry.name).find(opt.only) == std::string::npos)
            continue;
        CheckResult r;
        r.name = entry.name;
        auto start = std::chrono::steady_clock::now();
        try {
            r.detail = entry.fn();
            r.pass = true;
        } catch (const detail::Failure& f) {
            r.pass = false;
            r.detail = f.message;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (r.pass && entry.time_limit > 0.0 && r.seconds >= entry.time_limit) {
            r.pass = false;
            r.detail += " [exceeded " + std::to_string(entry.time_limit) + "s runtime limit]";
        }
        results.push_back(std::move(r));
    }
    testing::bracket_sign_flip = prev;
    return results;
}

} // namespace melnikov::verify

#endif
