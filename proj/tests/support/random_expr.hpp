#ifndef MELNIKOV_TESTS_RANDOM_EXPR_HPP
#define MELNIKOV_TESTS_RANDOM_EXPR_HPP

// Random expression source generator for derivative/round-trip property
// tests. Generates text (not trees) so the parser is always in the loop.

#include <random>
#include <string>
#include <vector>

namespace melnikov::testing_support {

class RandomExprGen {
public:
    RandomExprGen(std::vector<std::string> vars, unsigned seed)
        : vars_(std::move(vars)), rng_(seed) {}

    std::string source(int depth = 3) { return gen(depth); }

    // Point with coordinates in [-1.5, 1.5]; keeps ln/sqrt/div arguments in
    // safe ranges given how gen() wraps them.
    std::vector<double> point() {
        std::uniform_real_distribution<double> d(-1.5, 1.5);
        std::vector<double> p(vars_.size());
        for (auto& v : p) v = d(rng_);
        return p;
    }

private:
    std::vector<std::string> vars_;
    std::mt19937 rng_;

    std::string pick_var() {
        std::uniform_int_distribution<std::size_t> d(0, vars_.size() - 1);
        return vars_[d(rng_)];
    }

    std::string gen(int depth) {
        std::uniform_int_distribution<int> leaf(0, 2);
        if (depth <= 0) {
            switch (leaf(rng_)) {
            case 0: return pick_var();
            case 1: return num();
            default: return pick_var();
            }
        }
        std::uniform_int_distribution<int> kind(0, 9);
        switch (kind(rng_)) {
        case 0: return "(" + gen(depth - 1) + " + " + gen(depth - 1) + ")";
        case 1: return "(" + gen(depth - 1) + " - " + gen(depth - 1) + ")";
        case 2: return "(" + gen(depth - 1) + "*" + gen(depth - 1) + ")";
        // Denominator kept away from zero.
        case 3: return "(" + gen(depth - 1) + "/(2 + cos(" + gen(depth - 1) + ")))";
        case 4: return "sin(" + gen(depth - 1) + ")";
        case 5: return "cos(" + gen(depth - 1) + ")";
        case 6: return "tanh(" + gen(depth - 1) + ")";
        case 7: return "sech(" + gen(depth - 1) + ")";
        case 8: return "(" + pick_var() + "^" + std::to_string(2 + int(kind(rng_)) % 3) + ")";
        default: return "exp(sin(" + gen(depth - 1) + "))";
        }
    }

    std::string num() {
        std::uniform_real_distribution<double> d(-3.0, 3.0);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", d(rng_));
        std::string s(buf);
        if (!s.empty() && s[0] == '-') s = "(0 - " + s.substr(1) + ")";
        return s;
    }
};

} // namespace melnikov::testing_support

#endif
