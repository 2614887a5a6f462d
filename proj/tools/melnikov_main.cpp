// Command-line front end: system loading, the library computations as
// subcommands, and a one-shot verification suite. Emits CSV/JSON data for
// offline plotting; all numeric output uses 17 significant digits and '\n'
// line endings so identical runs produce byte-identical files.
//
// Exit codes: 0 ok, 1 configuration error, 2 solver failure, 3 convergence
// guard tripped, 4 verification failure.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "melnikov/io.hpp"
#include "melnikov/melnikov_form.hpp"
#include "melnikov/separatrix.hpp"
#include "melnikov/splitting.hpp"
#include "melnikov/verify.hpp"

namespace {

using namespace melnikov;
using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

struct CommonConfig {
    std::string system = "pendulum";
    std::vector<std::string> params; // name=value
    std::string h1;
    double forcing_period = 0.0;
    std::string out_dir = ".";
    std::string format = "csv";
    double tol = 1e-12;
};

void add_common(CLI::App* cmd, CommonConfig& cfg) {
    cmd->add_option("--system", cfg.system,
                    "catalog name (pendulum, duffing, paper-example) or @path to a definition file");
    cmd->add_option("--param", cfg.params, "catalog parameter, name=value (repeatable)");
    cmd->add_option("--h1", cfg.h1, "perturbation expression");
    cmd->add_option("--forcing-period", cfg.forcing_period,
                    "forcing period (makes the system time-dependent; h1 may reference t)");
    cmd->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--format", cfg.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    cmd->add_option("--tol", cfg.tol, "integrator tolerance")->capture_default_str();
}

std::map<std::string, double> parse_params(const std::vector<std::string>& kvs) {
    std::map<std::string, double> out;
    for (const auto& kv : kvs) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--param expects name=value, got " + kv);
        out[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return out;
}

SystemDef build_system(const CommonConfig& cfg) {
    SystemDef base = cfg.system.starts_with("@")
                         ? load_system(cfg.system.substr(1))
                         : catalog(cfg.system, parse_params(cfg.params));
    if (cfg.h1.empty()) return base;
    if (cfg.forcing_period > 0.0) return with_perturbation(base, cfg.h1, cfg.forcing_period);
    return with_perturbation(base, cfg.h1);
}

std::string out_path(const CommonConfig& cfg, const std::string& name) {
    return cfg.out_dir + "/" + name;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        out.push_back(std::stod(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

// Extended system + lifted separatrix for a time-periodic planar system.
struct ForcedPipeline {
    SystemDef ext;
    ConnectingOrbit orbit;
    Expression a;
    std::string label;
};

ForcedPipeline build_forced(const CommonConfig& cfg, const std::string& a_src) {
    if (cfg.system != "pendulum" && cfg.system != "duffing")
        throw ConfigError("this command needs a forced catalog system (pendulum or duffing)");
    if (cfg.h1.empty() || !(cfg.forcing_period > 0.0))
        throw ConfigError("this command needs --h1 and --forcing-period");
    auto planar = catalog(cfg.system, parse_params(cfg.params));
    auto ext = extend_periodic(with_perturbation(planar, cfg.h1, cfg.forcing_period));
    auto orbit = lift_to_extended(ext, analytic_separatrix(planar, cfg.system), 0.0, 0.0);
    std::string src = a_src.empty() ? planar.h0().to_string() : a_src;
    auto a = ext.parse_observable(src);
    return {std::move(ext), std::move(orbit), std::move(a), a_src.empty() ? "H0" : a_src};
}

// Heteroclinic pipeline for the paper-example between the standard pair of
// orbits (x = 0 and x = 2 pi) at eta = 0.
struct HetPipeline {
    SystemDef sys;
    ConnectingOrbit orbit;
};

HetPipeline build_het(const CommonConfig& cfg) {
    auto sys = build_system(cfg);
    auto src = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto orbit = numeric_separatrix(sys, src, tgt, +1);
    return {std::move(sys), std::move(orbit)};
}

json samples_summary(const std::vector<MelnikovSample>& samples) {
    double amp = 0.0, mean = 0.0;
    for (const auto& s : samples) {
        amp = std::max(amp, std::abs(s.value));
        mean += s.value;
    }
    mean /= double(std::max<std::size_t>(samples.size(), 1));
    return json{{"samples", samples.size()}, {"amplitude", amp}, {"mean", mean}};
}

void emit_samples(const CommonConfig& cfg, const std::vector<MelnikovSample>& samples) {
    if (cfg.format == "json") {
        json arr = json::array();
        for (const auto& s : samples)
            arr.push_back({{"t0", s.t0.value_or(s.s_base)},
                           {"value", s.value},
                           {"err", s.error},
                           {"mode", mode_name(s.mode)},
                           {"n", s.windows}});
        write_text(out_path(cfg, "melnikov.json"), arr.dump(2) + "\n");
        return;
    }
    std::vector<std::vector<double>> rows;
    std::ofstream out(out_path(cfg, "melnikov.csv"), std::ios::binary);
    if (!out) throw ConfigError("cannot open output file");
    out << "t0,value,err,mode,n\n";
    for (const auto& s : samples)
        out << g17(s.t0.value_or(s.s_base)) << "," << g17(s.value) << "," << g17(s.error) << ","
            << mode_name(s.mode) << "," << s.windows << "\n";
}

// --- subcommands -------------------------------------------------------------

int cmd_orbit(const CommonConfig& cfg, const std::string& guess_text, double period,
              const std::string& section_text) {
    auto sys = build_system(cfg);
    auto guess_coords = parse_list(guess_text);
    if (int(guess_coords.size()) != sys.dim())
        throw ConfigError("--guess needs " + std::to_string(sys.dim()) + " coordinates");
    auto guess = sys.point(std::move(guess_coords));

    OrbitSolveOptions opt;
    opt.flow.tol = cfg.tol;
    PeriodicOrbitRecord rec;
    if (period > 0.0) {
        rec = find_periodic_orbit(sys, WhichH::H0, guess, FixedPeriodMode{period}, opt);
    } else {
        SectionSpec section;
        if (!section_text.empty()) {
            auto eq = section_text.find('=');
            if (eq == std::string::npos) throw ConfigError("--section expects coord=value");
            int ci = sys.coordinate_index(section_text.substr(0, eq));
            if (ci < 0) throw ConfigError("unknown section coordinate");
            section = {ci, std::stod(section_text.substr(eq + 1))};
        } else if (sys.time_coordinate() >= 0) {
            section = {sys.time_coordinate(), guess[std::size_t(sys.time_coordinate())]};
        } else {
            throw ConfigError("need --period or --section for this system");
        }
        rec = find_periodic_orbit(sys, WhichH::H0, guess, SectionMode{section}, opt);
    }
    auto j = to_json(rec);
    write_text(out_path(cfg, "orbit.json"), j.dump(2) + "\n");
    std::cout << json{{"period", rec.period},
                      {"classification", rec.classification_name()},
                      {"residual", rec.residual}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_separatrix(const CommonConfig& cfg, double ds, double s_span) {
    auto sys = build_system(cfg);
    std::optional<ConnectingOrbit> orbit;
    if (cfg.system == "pendulum" || cfg.system == "duffing") {
        orbit = analytic_separatrix(sys, cfg.system);
    } else if (cfg.system == "paper-example") {
        auto het = build_het(cfg);
        orbit = het.orbit;
    } else {
        throw ConfigError("separatrix: catalog systems only");
    }
    double span = s_span > 0.0 ? s_span : orbit->S;
    std::vector<std::string> header{"s"};
    for (int k = 0; k < orbit->sys->dim(); ++k) header.push_back(orbit->sys->coordinate_name(k));
    std::vector<std::vector<double>> rows;
    for (double s = -span; s <= span + 1e-12; s += ds) {
        auto st = orbit->state(s);
        std::vector<double> row{s};
        row.insert(row.end(), st.begin(), st.end());
        rows.push_back(std::move(row));
    }
    write_csv(out_path(cfg, "separatrix.csv"), header, rows);
    std::cout << json{{"kind", orbit->kind_name()},
                      {"S", orbit->S},
                      {"rate_minus", orbit->rate_minus},
                      {"rate_plus", orbit->rate_plus},
                      {"rows", rows.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_melnikov(const CommonConfig& cfg, const std::string& a_src, int grid_n,
                 const std::string& mode) {
    if (mode == "prescribed") {
        auto het = build_het(cfg);
        auto a = het.sys.parse_observable(a_src.empty() ? "eta" : a_src);
        auto sample =
            melnikov_prescribed(het.sys, a, a_src.empty() ? "eta" : a_src, het.orbit, 0.0);
        emit_samples(cfg, {sample});
        json j{{"value", sample.value},
               {"error", sample.error},
               {"mode", mode_name(sample.mode)},
               {"windows", sample.windows},
               {"window_values", sample.window_values}};
        std::cout << j.dump() << "\n";
        return 0;
    }

    auto fp = build_forced(cfg, a_src);
    std::vector<double> grid;
    for (int k = 0; k < grid_n; ++k)
        grid.push_back(cfg.forcing_period * double(k) / double(grid_n));
    MelnikovOptions mopt;
    auto samples = melnikov_function(fp.ext, fp.orbit, fp.a, fp.label, grid, mopt);
    emit_samples(cfg, samples);

    auto evaluate = [&](double t0) {
        return melnikov_convergent(fp.ext, fp.a, fp.label, fp.orbit, 0.0, mopt, t0).value;
    };
    auto zeros = find_zeros(samples, evaluate, cfg.forcing_period);
    json j = samples_summary(samples);
    json zl = json::array();
    for (const auto& z : zeros) zl.push_back(to_json(z));
    j["zeros"] = zl;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_zeros(const CommonConfig& cfg, const std::string& a_src, int grid_n) {
    auto fp = build_forced(cfg, a_src);
    std::vector<double> grid;
    for (int k = 0; k < grid_n; ++k)
        grid.push_back(cfg.forcing_period * double(k) / double(grid_n));
    MelnikovOptions mopt;
    auto samples = melnikov_function(fp.ext, fp.orbit, fp.a, fp.label, grid, mopt);
    auto evaluate = [&](double t0) {
        return melnikov_convergent(fp.ext, fp.a, fp.label, fp.orbit, 0.0, mopt, t0).value;
    };
    auto zeros = find_zeros(samples, evaluate, cfg.forcing_period);
    json arr = json::array();
    for (const auto& z : zeros) arr.push_back(to_json(z));
    write_text(out_path(cfg, "zeros.json"), arr.dump(2) + "\n");
    std::cout << json{{"count", zeros.size()}}.dump() << "\n";
    return 0;
}

int cmd_split(const CommonConfig& cfg, const std::string& phases_text,
              const std::string& eps_text) {
    if (cfg.system != "pendulum")
        throw ConfigError("split: the manifold oracle is validated for the forced pendulum only");
    auto sys = build_system(cfg);
    if (!sys.time_dependent()) throw ConfigError("split needs --h1 and --forcing-period");
    auto fp = build_forced(cfg, "");
    SplitSetup setup = pendulum_split_setup(sys);

    auto phases = parse_list(phases_text);
    auto eps_list = parse_list(eps_text);
    MelnikovOptions mopt;
    auto reference = [&](double t0) {
        return melnikov_convergent(fp.ext, fp.a, fp.label, fp.orbit, 0.0, mopt, t0).value;
    };
    auto report = first_order_check(sys, setup, phases, eps_list, reference);
    write_text(out_path(cfg, "split.json"), to_json(report).dump(2) + "\n");

    // Polyline export for the first (t0, eps) cell.
    {
        double t0 = phases.front(), eps = eps_list.front();
        auto fixed = perturbed_fixed_point(sys, eps, t0, setup.saddle_guess);
        auto unstable = manifold_polyline(sys, eps, t0, fixed.x,
                                          ManifoldPolyline::Side::Unstable,
                                          setup.unstable_branch, setup.target_arclen);
        std::vector<double> shifted = fixed.x;
        for (std::size_t k = 0; k < shifted.size(); ++k) shifted[k] += setup.stable_translate[k];
        auto stable = manifold_polyline(sys, eps, t0, shifted, ManifoldPolyline::Side::Stable,
                                        setup.stable_branch, setup.target_arclen);
        for (const auto* poly : {&unstable, &stable}) {
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < poly->points.size(); ++i)
                rows.push_back({poly->arclen[i], poly->points[i][0], poly->points[i][1]});
            std::string name = poly->side == ManifoldPolyline::Side::Unstable
                                   ? "polyline_unstable.csv"
                                   : "polyline_stable.csv";
            write_csv(out_path(cfg, name), {"arclen", "q", "p"}, rows);
        }
    }
    double worst = 0.0;
    for (const auto& c : report.cells) worst = std::max(worst, c.deviation_rel);
    std::cout << json{{"amplitude", report.amplitude},
                      {"max_deviation_rel", worst},
                      {"gap_order", report.gap_order},
                      {"residual_order", report.residual_order}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_potential(const CommonConfig& cfg, int grid_n) {
    if (cfg.system == "paper-example") {
        auto het = build_het(cfg);
        auto frame = conserved_frame(het.sys,
                                     {het.sys.h0(), het.sys.parse_observable("eta")},
                                     {"H", "eta"}, het.orbit);
        // Guard: H1 varies along the end orbits here, so this reports the
        // non-convergence error (exit 3).
        melnikov_potential(het.sys, frame, het.orbit, 0.0, het.orbit.point(0.0));
        return 0;
    }
    auto fp = build_forced(cfg, "");
    auto planar = catalog(cfg.system, parse_params(cfg.params));
    auto h0pi = fp.ext.parse_observable(planar.h0().to_string());
    auto eta = fp.ext.parse_observable("eta");
    auto frame = conserved_frame(fp.ext, {h0pi, eta},
                                 {"H0_pi", "eta"}, fp.orbit);

    // L along the time-shifted family of the apex point: critical points of
    // this potential are the zeros of M(t0).
    auto apex = fp.orbit.state(0.0);
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= grid_n; ++k) {
        double t0 = cfg.forcing_period * double(k) / double(grid_n);
        std::vector<double> pt = apex;
        pt[std::size_t(fp.ext.time_coordinate())] = t0;
        double L = melnikov_potential(fp.ext, frame, fp.orbit, 0.0, fp.ext.point(pt));
        rows.push_back({t0, L});
    }
    write_csv(out_path(cfg, "potential.csv"), {"t0", "L"}, rows);
    std::cout << json{{"rows", rows.size()}}.dump() << "\n";
    return 0;
}

json frame_json(const ConservedFrame& frame) {
    return json{{"labels", frame.labels},
                {"certificate", frame.certificate},
                {"worst_commutator", frame.worst_commutator}};
}

int cmd_integrals(const CommonConfig& cfg) {
    json j;
    json fj;
    if (cfg.system == "paper-example") {
        auto het = build_het(cfg);
        auto& sys = het.sys;
        auto plus = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.01, 0.0, 0.0}),
                                        SectionMode{{0, 0.0}});
        auto minus = find_periodic_orbit(sys, WhichH::H0,
                                         sys.point({0.0, 0.01, 2.0 * kPi, 0.0}),
                                         SectionMode{{0, 0.0}});
        auto frame = conserved_frame(sys, {sys.h0(), sys.parse_observable("eta")},
                                     {"H", "eta"}, het.orbit);
        fj = frame_json(frame);
        j = to_json(critical_integral_basis(sys, frame, plus, minus));
    } else {
        auto fp = build_forced(cfg, "");
        auto planar = catalog(cfg.system, parse_params(cfg.params));
        auto h0pi = fp.ext.parse_observable(planar.h0().to_string());
        auto eta = fp.ext.parse_observable("eta");
        auto frame = conserved_frame(fp.ext, {h0pi, eta}, {"H0_pi", "eta"}, fp.orbit);
        fj = frame_json(frame);
        j = to_json(critical_integral_basis(fp.ext, frame, fp.orbit.target, fp.orbit.target,
                                            /*homoclinic=*/true));
    }
    write_text(out_path(cfg, "integrals.json"), j.dump(2) + "\n");
    write_text(out_path(cfg, "frame.json"), fj.dump(2) + "\n");
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_example_paper(double c, double delta, double eta) {
    auto sys = catalog("paper-example", {{"c", c}, {"delta", delta}});
    auto plus = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, eta, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto minus = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, eta, 2.0 * kPi, 0.0}),
                                     SectionMode{{0, 0.0}});
    auto src = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 0.0, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto tgt = find_periodic_orbit(sys, WhichH::H0, sys.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                   SectionMode{{0, 0.0}});
    auto het = numeric_separatrix(sys, src, tgt, +1);
    auto frame = conserved_frame(sys, {sys.h0(), sys.parse_observable("eta")}, {"H", "eta"}, het);
    auto rep = critical_integral_basis(sys, frame, plus, minus);

    auto flat = paper_example_equal_period();
    auto fplus = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, eta, 0.0, 0.0}),
                                     SectionMode{{0, 0.0}});
    auto fminus = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, eta, 2.0 * kPi, 0.0}),
                                      SectionMode{{0, 0.0}});
    auto fsrc = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.0, 0.0, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto ftgt = find_periodic_orbit(flat, WhichH::H0, flat.point({0.0, 0.0, 2.0 * kPi, 0.0}),
                                    SectionMode{{0, 0.0}});
    auto fhet = numeric_separatrix(flat, fsrc, ftgt, +1);
    auto fframe =
        conserved_frame(flat, {flat.h0(), flat.parse_observable("eta")}, {"H", "eta"}, fhet);
    auto frep = critical_integral_basis(flat, fframe, fplus, fminus);

    json j{{"period_gamma_x0", plus.period},
           {"period_gamma_x2pi", minus.period},
           {"c_plus_eta", rep.c_plus[1]},
           {"c_minus_eta", rep.c_minus[1]},
           {"c_H", rep.c_plus[0]},
           {"p", rep.p},
           {"equal_period_variant_p", frep.p}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_verify(const std::string& only, bool inject) {
    melnikov::verify::VerifyOptions opt;
    opt.only = only;
    opt.inject_bracket_sign_flip = inject;
    auto results = melnikov::verify::run(opt);
    std::string first_fail;
    for (const auto& r : results) {
        std::printf("[%s] %-28s (%6.2fs) %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.detail.c_str());
        if (!r.pass && first_fail.empty()) first_fail = r.name;
    }
    if (!first_fail.empty()) {
        std::fprintf(stderr, "verify failed: %s\n", first_fail.c_str());
        return 4;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mel'nikov 1-form toolkit: heteroclinic splitting for perturbed "
                 "Hamiltonian systems"};
    app.require_subcommand(1);

    CommonConfig cfg;

    // orbit
    auto* orbit = app.add_subcommand("orbit", "solve and classify a periodic orbit");
    add_common(orbit, cfg);
    std::string guess_text, section_text;
    double fixed_period = 0.0;
    orbit->add_option("--guess", guess_text, "initial point, comma-separated")->required();
    orbit->add_option("--period", fixed_period, "fixed-period mode");
    orbit->add_option("--section", section_text, "section mode, coord=value");

    // separatrix
    auto* separatrix = app.add_subcommand("separatrix", "export a connecting orbit");
    add_common(separatrix, cfg);
    double sep_ds = 0.05, sep_span = 0.0;
    separatrix->add_option("--ds", sep_ds, "export grid step")->capture_default_str();
    separatrix->add_option("--s-span", sep_span, "export half-width (default: truncation S)");

    // melnikov
    auto* mel = app.add_subcommand("melnikov", "evaluate the Mel'nikov function / 1-form");
    add_common(mel, cfg);
    std::string a_src, mel_mode = "convergent";
    int grid_n = 128;
    mel->add_option("--A", a_src, "conserved quantity (default: planar H0, or eta in "
                                  "prescribed mode)");
    mel->add_option("--grid", grid_n, "t0 samples per period")->capture_default_str();
    mel->add_option("--mode", mel_mode, "convergent or prescribed")
        ->check(CLI::IsMember({"convergent", "prescribed"}))
        ->capture_default_str();

    // zeros
    auto* zeros = app.add_subcommand("zeros", "locate nondegenerate zeros of M(t0)");
    add_common(zeros, cfg);
    std::string zeros_a;
    int zeros_grid = 128;
    zeros->add_option("--A", zeros_a, "conserved quantity (default: planar H0)");
    zeros->add_option("--grid", zeros_grid, "t0 samples per period")->capture_default_str();

    // split
    auto* split = app.add_subcommand("split", "manifold-splitting oracle vs first-order theory");
    add_common(split, cfg);
    std::string phases_text = "0.5,1.2,1.5707963267948966,2.2,2.9";
    std::string eps_text = "1e-2,1e-3";
    split->add_option("--phases", phases_text, "t0 phases")->capture_default_str();
    split->add_option("--eps", eps_text, "eps values")->capture_default_str();

    // potential
    auto* potential = app.add_subcommand("potential", "Mel'nikov potential along the manifold");
    add_common(potential, cfg);
    int pot_grid = 64;
    potential->add_option("--grid", pot_grid, "t0 samples")->capture_default_str();

    // integrals
    auto* integrals = app.add_subcommand("integrals", "count conserved quantities critical on "
                                                      "both end orbits");
    add_common(integrals, cfg);

    // example-paper
    auto* example = app.add_subcommand("example-paper",
                                       "one-shot reproduction: both periods and the counting "
                                       "report");
    double ex_c = 0.5, ex_delta = 0.3, ex_eta = 0.01;
    example->add_option("--c", ex_c, "bump height")->capture_default_str();
    example->add_option("--delta", ex_delta, "bump support")->capture_default_str();
    example->add_option("--eta", ex_eta, "orbit family parameter")->capture_default_str();

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the acceptance checks");
    std::string verify_only;
    bool verify_inject = false;
    verify_cmd->add_option("--only", verify_only, "run only checks whose name contains this");
    verify_cmd->add_flag("--inject-bracket-sign-flip", verify_inject,
                         "test hook: flip the bracket sign (mutation sanity)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (orbit->parsed()) return cmd_orbit(cfg, guess_text, fixed_period, section_text);
        if (separatrix->parsed()) return cmd_separatrix(cfg, sep_ds, sep_span);
        if (mel->parsed()) return cmd_melnikov(cfg, a_src, grid_n, mel_mode);
        if (zeros->parsed()) return cmd_zeros(cfg, zeros_a, zeros_grid);
        if (split->parsed()) return cmd_split(cfg, phases_text, eps_text);
        if (potential->parsed()) return cmd_potential(cfg, pot_grid);
        if (integrals->parsed()) return cmd_integrals(cfg);
        if (example->parsed()) return cmd_example_paper(ex_c, ex_delta, ex_eta);
        if (verify_cmd->parsed()) return cmd_verify(verify_only, verify_inject);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 2;
    } catch (const GuardError& e) {
        std::fprintf(stderr, "guard error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
