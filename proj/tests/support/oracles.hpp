#ifndef MELNIKOV_TESTS_ORACLES_HPP
#define MELNIKOV_TESTS_ORACLES_HPP

// Independent oracles for the Mel'nikov pipeline. These deliberately avoid
// the library's quadrature and orbit-integrand code paths: plain dense
// trapezoid sums over the closed-form pendulum separatrix.

#include <cmath>

namespace melnikov::testing_support {

// Forced pendulum, H1 = p cos(omega t), A = pendulum energy:
// integrand cos(omega (t0+s)) sin q(s) with sin q(s) = -2 sech s tanh s.
// Dense trapezoid over [-45, 45]; the integrand decays like e^{-|s|}, so
// step 0.01 is far below 1e-10 absolute error.
inline double forced_pendulum_melnikov_trapezoid(double t0, double omega = 1.0) {
    const double lo = -45.0, hi = 45.0, h = 0.01;
    auto f = [&](double s) {
        double sinq = -2.0 * std::tanh(s) / std::cosh(s);
        return std::cos(omega * (t0 + s)) * sinq;
    };
    double acc = 0.5 * (f(lo) + f(hi));
    long n = std::lround((hi - lo) / h);
    for (long i = 1; i < n; ++i) acc += f(lo + h * double(i));
    return acc * h;
}

// Closed form of the same function: 2 pi omega sech(pi omega / 2) sin(omega t0).
inline double forced_pendulum_melnikov_closed(double t0, double omega = 1.0) {
    constexpr double pi = 3.14159265358979323846;
    return 2.0 * pi * omega / std::cosh(pi * omega / 2.0) * std::sin(omega * t0);
}

} // namespace melnikov::testing_support

#endif
