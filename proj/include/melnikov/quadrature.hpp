#ifndef MELNIKOV_QUADRATURE_HPP
#define MELNIKOV_QUADRATURE_HPP

// Adaptive Gauss-Kronrod (7-15) panels with a worst-panel-first refinement
// queue. Nodes and weights are the standard QUADPACK dqk15 constants.

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "errors.hpp"

namespace melnikov {

struct QuadResult {
    double value = 0.0;
    double error = 0.0; // estimated absolute error
    int panels = 0;
};

namespace detail {

// 15-point Kronrod abscissae (positive half) and weights; embedded 7-point
// Gauss weights sit at the odd Kronrod nodes.
inline constexpr double kKronrodX[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
inline constexpr double kKronrodW[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kGaussW[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

template <typename F>
inline void gk15(F&& f, double a, double b, double& value, double& error) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fv[15];
    for (int i = 0; i < 7; ++i) {
        fv[i] = f(c - h * kKronrodX[i]);
        fv[14 - i] = f(c + h * kKronrodX[i]);
    }
    fv[7] = f(c);
    double kron = 0.0, gauss = 0.0;
    for (int i = 0; i < 7; ++i) kron += kKronrodW[i] * (fv[i] + fv[14 - i]);
    kron += kKronrodW[7] * fv[7];
    for (int i = 0; i < 3; ++i) gauss += kGaussW[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
    gauss += kGaussW[3] * fv[7];
    value = kron * h;
    // Conservative estimate: the Kronrod-Gauss difference (no sharpening, so
    // reported error bars stay on the safe side).
    error = std::abs(kron - gauss) * std::abs(h);
}

} // namespace detail

template <typename F>
inline QuadResult adaptive_quadrature(F&& f, double a, double b, double abs_tol,
                                      int max_panels = 4000) {
    struct Panel {
        double a, b, value, error;
        bool operator<(const Panel& o) const { return error < o.error; }
    };
    if (a == b) return {0.0, 0.0, 0};
    std::priority_queue<Panel> heap;
    double value, error;
    detail::gk15(f, a, b, value, error);
    heap.push({a, b, value, error});
    double total_v = value, total_e = error;
    int panels = 1;
    while (total_e > abs_tol && panels < max_panels) {
        Panel worst = heap.top();
        heap.pop();
        double mid = 0.5 * (worst.a + worst.b);
        if (mid == worst.a || mid == worst.b) break; // interval exhausted
        Panel left{worst.a, mid, 0, 0}, right{mid, worst.b, 0, 0};
        detail::gk15(f, left.a, left.b, left.value, left.error);
        detail::gk15(f, right.a, right.b, right.value, right.error);
        total_v += left.value + right.value - worst.value;
        total_e += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++panels;
    }
    if (!std::isfinite(total_v)) throw SolverError("quadrature: non-finite integrand");
    return {total_v, std::max(total_e, 0.0), panels};
}

} // namespace melnikov

#endif
