#ifndef MELNIKOV_ERRORS_HPP
#define MELNIKOV_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace melnikov {

// Bad user input: malformed expressions, inconsistent system definitions,
// out-of-range options. CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Expression text could not be parsed. `offset` is the 0-based byte offset
// of the first offending character (one past the end for truncated input).
struct ParseError : ConfigError {
    ParseError(const std::string& what, std::size_t offset_)
        : ConfigError(what + " (offset " + std::to_string(offset_) + ")"), offset(offset_) {}
    std::size_t offset;
};

struct UndeclaredIdentifierError : ParseError {
    UndeclaredIdentifierError(const std::string& name_, std::size_t offset_)
        : ParseError("undeclared identifier '" + name_ + "'", offset_), name(name_) {}
    std::string name;
};

// Evaluation left the domain of a primitive (log of a nonpositive value,
// division by zero, fractional power of a negative base) or a binding was
// missing. Never reported as a silent NaN.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical procedure failed: Newton divergence, step-size underflow,
// missing section return, manifold escape. CLI exit code 2.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A convergence hypothesis or validity guard was violated (non-critical
// conserved quantity, non-constant perturbation on the end orbits, frame
// commutation/rank failure). CLI exit code 3.
struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace melnikov

#endif
