#ifndef MELNIKOV_PHASE_HPP
#define MELNIKOV_PHASE_HPP

// Phase-space model: products of canonical planes and cylinders with the
// standard symplectic structure. Sign conventions, fixed once:
//
//   qdot_i = dH/dp_i,   pdot_i = -dH/dq_i
//   {f,g}  = sum_i  df/dq_i dg/dp_i - df/dp_i dg/dq_i
//
// For a pair (t, eta) this gives tdot = dH/deta.

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "expr.hpp"

namespace melnikov {

namespace testing {
// Test hook: flips the sign of the second bracket term, breaking
// antisymmetry. Used by the verification suite's mutation sanity check.
inline std::atomic<bool> bracket_sign_flip{false};
} // namespace testing

enum class Topology { Line, Circle };

struct CoordinatePair {
    std::string q;
    std::string p;
    Topology topology = Topology::Line;
    double circumference = 0.0; // Circle only, > 0
    bool time_like = false;     // pair produced by extend_periodic (or catalog time circle)
};

struct PhasePoint {
    std::vector<double> x; // (q1, p1, ..., qn, pn), circle coordinates reduced

    double operator[](std::size_t i) const { return x[i]; }
    std::size_t size() const { return x.size(); }
};

enum class WhichH { H0, H1, Perturbed }; // Perturbed = H0 + eps*H1

class SystemDef {
public:
    // `h1_source` may be empty (no perturbation defined). For time-dependent
    // systems H1 may reference `t` and must be `forcing_period`-periodic.
    static SystemDef create(std::vector<CoordinatePair> pairs,
                            const std::string& h0_source,
                            const std::string& h1_source = "",
                            std::map<std::string, double> params = {},
                            bool time_dependent = false,
                            double forcing_period = 0.0) {
        SystemDef sys;
        sys.pairs_ = std::move(pairs);
        sys.params_ = std::move(params);
        for (const auto& [pname, pvalue] : sys.params_) sys.param_values_.push_back(pvalue);
        sys.time_dependent_ = time_dependent;
        sys.forcing_period_ = forcing_period;
        sys.validate_layout();

        sys.h0_ = sys.parse_hamiltonian(h0_source, /*allow_t=*/false);
        if (sys.h0_.depends_on("t") && time_dependent)
            throw ConfigError("H0 must not reference t");
        if (!h1_source.empty()) sys.h1_ = sys.parse_hamiltonian(h1_source, /*allow_t=*/true);

        sys.build_tables();
        if (time_dependent) sys.check_h1_periodicity();
        return sys;
    }

    // --- layout ---------------------------------------------------------

    int dim() const { return int(pairs_.size()) * 2; }
    int pair_count() const { return int(pairs_.size()); }
    const std::vector<CoordinatePair>& pairs() const { return pairs_; }
    bool time_dependent() const { return time_dependent_; }
    double forcing_period() const { return forcing_period_; }
    const std::map<std::string, double>& params() const { return params_; }

    const Expression& h0() const { return h0_; }
    const Expression& h1() const {
        if (h1_.empty()) throw ConfigError("system has no H1 perturbation defined");
        return h1_;
    }
    bool has_h1() const { return !h1_.empty(); }

    std::string coordinate_name(int k) const {
        const auto& pr = pairs_[std::size_t(k / 2)];
        return (k % 2 == 0) ? pr.q : pr.p;
    }

    int coordinate_index(std::string_view name) const {
        for (int k = 0; k < dim(); ++k)
            if (coordinate_name(k) == name) return k;
        return -1;
    }

    // Index of the time-like circular coordinate (extended systems), or -1.
    int time_coordinate() const {
        for (std::size_t i = 0; i < pairs_.size(); ++i)
            if (pairs_[i].time_like) return int(2 * i);
        return -1;
    }

    // Binding layout for expressions over this system:
    // [coords (2n)] [t slot] [params...]. The t slot is a declared variable
    // only for time-dependent systems.
    std::vector<std::string> observable_variables(bool allow_t) const {
        std::vector<std::string> vars;
        for (int k = 0; k < dim(); ++k) vars.push_back(coordinate_name(k));
        if (allow_t && time_dependent_) vars.push_back("t");
        for (const auto& [name, value] : params_) vars.push_back(name);
        return vars;
    }

    // Parses an observable over coordinates (+ t where allowed) + parameters,
    // rebound onto the full binding layout.
    Expression parse_observable(const std::string& source, bool allow_t = true) const {
        Expression e = Expression::parse(source, observable_variables(allow_t));
        return e.rebind(binding_layout());
    }

    std::vector<std::string> binding_layout() const {
        std::vector<std::string> vars;
        for (int k = 0; k < dim(); ++k) vars.push_back(coordinate_name(k));
        vars.push_back(time_dependent_ ? "t" : "__time__");
        for (const auto& [name, value] : params_) vars.push_back(name);
        return vars;
    }

    std::size_t binding_size() const { return std::size_t(dim()) + 1 + params_.size(); }

    // Fills the full binding buffer: coordinates, time slot, parameter tail.
    void fill_binding(std::span<const double> state, double t, std::vector<double>& binding) const {
        binding.resize(binding_size());
        for (int k = 0; k < dim(); ++k) binding[std::size_t(k)] = state[std::size_t(k)];
        binding[std::size_t(dim())] = t;
        std::size_t i = std::size_t(dim()) + 1;
        for (double v : param_values_) binding[i++] = v;
    }

    double eval(const Expression& e, std::span<const double> state, double t = 0.0) const {
        thread_local std::vector<double> binding;
        fill_binding(state, t, binding);
        return e.evaluate(binding);
    }

    // --- points, reduction, distances ------------------------------------

    PhasePoint point(std::vector<double> coords) const {
        if (int(coords.size()) != dim())
            throw ConfigError("phase point has wrong dimension");
        for (double v : coords)
            if (!std::isfinite(v)) throw ConfigError("phase point has non-finite entry");
        reduce_inplace(coords);
        return PhasePoint{std::move(coords)};
    }

    void reduce_inplace(std::span<double> state) const {
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
            if (pairs_[i].topology != Topology::Circle) continue;
            double c = pairs_[i].circumference;
            double& q = state[2 * i];
            q = q - c * std::floor(q / c);
            if (q == c) q = 0.0; // floor rounding edge
        }
    }

    // Shortest difference a-b in coordinate k (circle-aware).
    double coordinate_difference(int k, double a, double b) const {
        double d = a - b;
        const auto& pr = pairs_[std::size_t(k / 2)];
        if (k % 2 == 0 && pr.topology == Topology::Circle) {
            double c = pr.circumference;
            d = d - c * std::round(d / c);
        }
        return d;
    }

    double distance(std::span<const double> a, std::span<const double> b) const {
        double s = 0.0;
        for (int k = 0; k < dim(); ++k) {
            double d = coordinate_difference(k, a[std::size_t(k)], b[std::size_t(k)]);
            s += d * d;
        }
        return std::sqrt(s);
    }

    // Distance ignoring time-like coordinates (the connecting manifold of an
    // extended system carries a free time circle).
    double distance_mod_time(std::span<const double> a, std::span<const double> b) const {
        int tc = time_coordinate();
        double s = 0.0;
        for (int k = 0; k < dim(); ++k) {
            if (k == tc) continue;
            double d = coordinate_difference(k, a[std::size_t(k)], b[std::size_t(k)]);
            s += d * d;
        }
        return std::sqrt(s);
    }

    // --- vector fields and brackets --------------------------------------

    // Gradient of H (all 2n coordinate partials) evaluated at (state, t).
    void gradient(WhichH which, double eps, std::span<const double> state, double t,
                  std::span<double> out) const {
        thread_local std::vector<double> binding;
        fill_binding(state, t, binding);
        for (int k = 0; k < dim(); ++k) {
            double g = 0.0;
            if (which != WhichH::H1) g += grad_h0_[std::size_t(k)].evaluate(binding);
            if (which == WhichH::H1) g += grad_h1_at(k).evaluate(binding);
            else if (which == WhichH::Perturbed && eps != 0.0) g += eps * grad_h1_at(k).evaluate(binding);
            out[std::size_t(k)] = g;
        }
    }

    // X_H components: out[2i] = dH/dp_i, out[2i+1] = -dH/dq_i.
    void vector_field(WhichH which, double eps, std::span<const double> state, double t,
                      std::span<double> out) const {
        thread_local std::vector<double> grad;
        grad.assign(std::size_t(dim()), 0.0);
        gradient(which, eps, state, t, grad);
        for (int i = 0; i < pair_count(); ++i) {
            out[std::size_t(2 * i)] = grad[std::size_t(2 * i + 1)];
            out[std::size_t(2 * i + 1)] = -grad[std::size_t(2 * i)];
        }
    }

    std::vector<double> vector_field(WhichH which, const PhasePoint& m, double t = 0.0,
                                     double eps = 0.0) const {
        std::vector<double> out(std::size_t(dim()), 0.0);
        vector_field(which, eps, m.x, t, out);
        return out;
    }

    // Jacobian of the Hamiltonian vector field (rows: field components,
    // columns: coordinates), for the variational equations.
    void field_jacobian(WhichH which, double eps, std::span<const double> state, double t,
                        std::span<double> out_rowmajor) const {
        thread_local std::vector<double> binding;
        fill_binding(state, t, binding);
        const int n2 = dim();
        auto hess = [&](int r, int c) {
            double v = 0.0;
            const std::size_t idx = std::size_t(r) * std::size_t(n2) + std::size_t(c);
            if (which != WhichH::H1) v += hess_h0_[idx].evaluate(binding);
            if (which == WhichH::H1) v += hess_h1_[idx].evaluate(binding);
            else if (which == WhichH::Perturbed && eps != 0.0) v += eps * hess_h1_[idx].evaluate(binding);
            return v;
        };
        for (int i = 0; i < pair_count(); ++i) {
            for (int c = 0; c < n2; ++c) {
                out_rowmajor[std::size_t(2 * i) * std::size_t(n2) + std::size_t(c)] = hess(2 * i + 1, c);
                out_rowmajor[std::size_t(2 * i + 1) * std::size_t(n2) + std::size_t(c)] = -hess(2 * i, c);
            }
        }
    }

    PhasePoint reduced(std::vector<double> state) const {
        reduce_inplace(state);
        return PhasePoint{std::move(state)};
    }

    bool needs_hessian_h1(WhichH which, double eps) const {
        return which == WhichH::H1 || (which == WhichH::Perturbed && eps != 0.0);
    }

private:
    Expression grad_h1_at(int k) const {
        if (grad_h1_.empty()) throw ConfigError("system has no H1 perturbation defined");
        return grad_h1_[std::size_t(k)];
    }

public:
    // --- Poisson bracket --------------------------------------------------

    // Precomputes the partial-derivative trees of f and g once; evaluation
    // is then cheap enough for quadrature inner loops.
    class Bracket {
    public:
        Bracket(const SystemDef& sys, const Expression& f, const Expression& g)
            : sys_(&sys) {
            for (int k = 0; k < sys.dim(); ++k) {
                df_.push_back(f.differentiate(sys.binding_layout()[std::size_t(k)]));
                dg_.push_back(g.differentiate(sys.binding_layout()[std::size_t(k)]));
            }
        }

        double operator()(std::span<const double> state, double t = 0.0) const {
            thread_local std::vector<double> binding;
            sys_->fill_binding(state, t, binding);
            const double sign = testing::bracket_sign_flip.load(std::memory_order_relaxed) ? 1.0 : -1.0;
            double sum = 0.0;
            for (int i = 0; i < sys_->pair_count(); ++i) {
                const std::size_t q = std::size_t(2 * i), p = q + 1;
                sum += df_[q].evaluate(binding) * dg_[p].evaluate(binding) +
                       sign * df_[p].evaluate(binding) * dg_[q].evaluate(binding);
            }
            return sum;
        }

    private:
        const SystemDef* sys_;
        std::vector<Expression> df_, dg_;
    };

    double poisson_bracket(const Expression& f, const Expression& g, const PhasePoint& m,
                           double t = 0.0) const {
        return Bracket(*this, f, g)(m.x, t);
    }

private:
    std::vector<CoordinatePair> pairs_;
    std::map<std::string, double> params_;
    std::vector<double> param_values_; // params_ values in map (layout) order
    bool time_dependent_ = false;
    double forcing_period_ = 0.0;
    Expression h0_, h1_;
    std::vector<Expression> grad_h0_, grad_h1_;
    std::vector<Expression> hess_h0_, hess_h1_; // row-major 2n x 2n

    void validate_layout() const {
        if (pairs_.empty()) throw ConfigError("system needs at least one coordinate pair");
        std::vector<std::string> names;
        for (const auto& pr : pairs_) {
            names.push_back(pr.q);
            names.push_back(pr.p);
            if (pr.topology == Topology::Circle && !(pr.circumference > 0.0))
                throw ConfigError("circle circumference must be positive");
        }
        for (std::size_t i = 0; i < names.size(); ++i)
            for (std::size_t j = i + 1; j < names.size(); ++j)
                if (names[i] == names[j])
                    throw ConfigError("coordinate name '" + names[i] + "' is not unique");
        for (const auto& n : names) {
            if (params_.count(n))
                throw ConfigError("name '" + n + "' is both a coordinate and a parameter");
            if (time_dependent_ && n == "t")
                throw ConfigError("coordinate named 't' clashes with the time variable");
        }
        if (time_dependent_ && !(forcing_period_ > 0.0))
            throw ConfigError("time-dependent system needs forcing_period > 0");
    }

    Expression parse_hamiltonian(const std::string& source, bool allow_t) const {
        Expression e = Expression::parse(source, observable_variables(allow_t && time_dependent_));
        return e.rebind(binding_layout());
    }

    void build_tables() {
        const auto layout = binding_layout();
        const int n2 = dim();
        for (int k = 0; k < n2; ++k) grad_h0_.push_back(h0_.differentiate(layout[std::size_t(k)]));
        for (int r = 0; r < n2; ++r)
            for (int c = 0; c < n2; ++c)
                hess_h0_.push_back(grad_h0_[std::size_t(r)].differentiate(layout[std::size_t(c)]));
        if (!h1_.empty()) {
            for (int k = 0; k < n2; ++k) grad_h1_.push_back(h1_.differentiate(layout[std::size_t(k)]));
            for (int r = 0; r < n2; ++r)
                for (int c = 0; c < n2; ++c)
                    hess_h1_.push_back(grad_h1_[std::size_t(r)].differentiate(layout[std::size_t(c)]));
        }
    }

    void check_h1_periodicity() {
        if (h1_.empty() || !h1_.depends_on("t")) return;
        std::mt19937 rng(0x5eed);
        std::uniform_real_distribution<double> box(-2.0, 2.0);
        std::uniform_real_distribution<double> tdist(0.0, forcing_period_);
        std::vector<double> state(std::size_t(dim()), 0.0);
        for (int trial = 0; trial < 32; ++trial) {
            for (auto& v : state) v = box(rng);
            reduce_inplace(state);
            double t = tdist(rng);
            double a = eval(h1_, state, t);
            double b = eval(h1_, state, t + forcing_period_);
            if (std::abs(a - b) >= 1e-12)
                throw ConfigError("H1 is not periodic with the declared forcing period");
        }
    }
};

// --- extended phase space -------------------------------------------------

// Autonomizes a time-periodic system: appends a (t, eta) pair with t on a
// circle of the forcing period, H0 -> H0 + eta, H1 unchanged but now a plain
// function of the t coordinate.
inline SystemDef extend_periodic(const SystemDef& sys) {
    if (!sys.time_dependent())
        throw ConfigError("extend_periodic: system is not time-dependent");
    std::vector<CoordinatePair> pairs = sys.pairs();
    for (const auto& pr : pairs)
        if (pr.q == "t" || pr.p == "t" || pr.q == "eta" || pr.p == "eta")
            throw ConfigError("extend_periodic: coordinate names t/eta already in use");
    if (sys.params().count("eta"))
        throw ConfigError("extend_periodic: parameter named eta already in use");
    pairs.push_back(CoordinatePair{"t", "eta", Topology::Circle, sys.forcing_period(), true});

    std::string h0 = "(" + sys.h0().to_string() + ") + eta";
    std::string h1 = sys.has_h1() ? sys.h1().to_string() : "";
    return SystemDef::create(std::move(pairs), h0, h1, sys.params(), false, 0.0);
}

// Rebuilds a system with a perturbation attached (and, optionally, made
// time-dependent with the given forcing period).
inline SystemDef with_perturbation(const SystemDef& sys, const std::string& h1_source,
                                   std::optional<double> forcing_period = std::nullopt) {
    return SystemDef::create(sys.pairs(), sys.h0().to_string(), h1_source, sys.params(),
                             forcing_period.has_value(), forcing_period.value_or(0.0));
}

// --- catalog ----------------------------------------------------------------

// pendulum:       H0 = p^2/2 + cos q, q on a 2*pi circle
// duffing:        H0 = p^2/2 - q^2/2 + q^4/4 on the plane
// paper-example:  pairs (t, eta) [t on a unit circle] and (x, xi) [plane];
//                 H = eta*(1 + G(x,xi)) + F(x,xi) with F = xi^2 + cos x and
//                 G a smooth bump of height c supported in x^2+xi^2 <= delta.
//
// The bump is realized as a tanh step in r^2 = x^2+xi^2 with slope steep
// enough that G == c on r^2 <= delta/2 and G == 0 on r^2 >= delta to full
// double precision, while staying C-infinity as a function.
inline SystemDef catalog(const std::string& name, std::map<std::string, double> params = {}) {
    if (name == "pendulum") {
        if (!params.empty()) throw ConfigError("catalog pendulum takes no parameters");
        return SystemDef::create({{"q", "p", Topology::Circle, 2.0 * 3.14159265358979323846, false}},
                                 "p^2/2 + cos(q)");
    }
    if (name == "duffing") {
        if (!params.empty()) throw ConfigError("catalog duffing takes no parameters");
        return SystemDef::create({{"q", "p", Topology::Line, 0.0, false}},
                                 "p^2/2 - q^2/2 + q^4/4");
    }
    if (name == "paper-example") {
        double c = params.count("c") ? params.at("c") : 0.5;
        double delta = params.count("delta") ? params.at("delta") : 0.3;
        for (const auto& [k, v] : params)
            if (k != "c" && k != "delta")
                throw ConfigError("catalog paper-example: unknown parameter '" + k + "'");
        if (!(delta > 0.0)) throw ConfigError("catalog paper-example: delta must be > 0");
        if (!(c > 0.0)) throw ConfigError("catalog paper-example: c must be > 0");
        std::string h0 =
            "eta*(1 + 0.5*c*(1 - tanh((240/delta)*(x^2 + xi^2 - 0.75*delta)))) + xi^2 + cos(x)";
        return SystemDef::create({{"t", "eta", Topology::Circle, 1.0, true},
                                  {"x", "xi", Topology::Line, 0.0, false}},
                                 h0, "", {{"c", c}, {"delta", delta}});
    }
    throw ConfigError("unknown catalog system '" + name + "'");
}

// Equal-period variant of the paper example (the c -> 0 limit, where the
// bump disappears and both end orbits have period 1). The catalog proper
// rejects c <= 0, so this is a separate constructor.
inline SystemDef paper_example_equal_period() {
    return SystemDef::create({{"t", "eta", Topology::Circle, 1.0, true},
                              {"x", "xi", Topology::Line, 0.0, false}},
                             "eta + xi^2 + cos(x)");
}

// --- system definition files ------------------------------------------------

// Line-oriented `key = value` format with [pairs], [params], [hamiltonian]
// sections; expressions quoted. Schema in docs/formats.md.
inline SystemDef load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open system file '" + path + "'");

    std::vector<CoordinatePair> pairs;
    std::map<std::string, double> params;
    std::string h0, h1;
    bool time_dependent = false;
    double forcing_period = 0.0;
    std::string section;

    auto strip = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        return s.substr(a, b - a + 1);
    };
    auto unquote = [&](const std::string& s, int lineno) {
        if (s.size() < 2 || s.front() != '"' || s.back() != '"')
            throw ConfigError("line " + std::to_string(lineno) + ": expression must be quoted");
        return s.substr(1, s.size() - 2);
    };

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = s.substr(1, s.size() - 2);
            if (section != "pairs" && section != "params" && section != "hamiltonian")
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = strip(s.substr(0, eq));
        std::string value = strip(s.substr(eq + 1));

        if (section == "pairs") {
            if (key != "pair")
                throw ConfigError("line " + std::to_string(lineno) + ": [pairs] entries use key 'pair'");
            std::istringstream ps(value);
            CoordinatePair pr;
            std::string topo;
            ps >> pr.q >> pr.p >> topo;
            if (topo == "circle") {
                pr.topology = Topology::Circle;
                if (!(ps >> pr.circumference))
                    throw ConfigError("line " + std::to_string(lineno) + ": circle needs a circumference");
            } else if (topo == "line") {
                pr.topology = Topology::Line;
            } else {
                throw ConfigError("line " + std::to_string(lineno) + ": topology must be line or circle");
            }
            pairs.push_back(pr);
        } else if (section == "params") {
            try {
                params[key] = std::stod(value);
            } catch (...) {
                throw ConfigError("line " + std::to_string(lineno) + ": bad numeric value");
            }
        } else if (section == "hamiltonian") {
            if (key == "h0") h0 = unquote(value, lineno);
            else if (key == "h1") h1 = unquote(value, lineno);
            else if (key == "time_dependent") time_dependent = (value == "true" || value == "1");
            else if (key == "forcing_period") forcing_period = std::stod(value);
            else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } else {
            throw ConfigError("line " + std::to_string(lineno) + ": entry outside any section");
        }
    }
    if (h0.empty()) throw ConfigError("system file defines no h0");
    return SystemDef::create(std::move(pairs), h0, h1, std::move(params), time_dependent,
                             forcing_period);
}

} // namespace melnikov

#endif
