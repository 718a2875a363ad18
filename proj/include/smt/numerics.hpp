#pragma once

// Small 1-D numerical kernels shared by the analytic modules.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

namespace smt::numerics {

struct Extremum {
    double x = std::numeric_limits<double>::quiet_NaN();
    double value = -std::numeric_limits<double>::infinity();
};

/// Golden-section search for the maximum of f on [lo, hi]; f may be -inf on parts of the interval.
template <class F>
Extremum golden_max(F&& f, double lo, double hi, double tol = 1e-11, int max_iter = 200) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Extremum best{c, fc};
    if (fd > best.value) best = {d, fd};
    return best;
}

/// Dense scan on `points` equally spaced nodes, then golden-section refinement on the
/// bracket around the best node. Robust to kinks and flat -inf regions.
template <class F>
Extremum scan_golden_max(F&& f, double lo, double hi, int points = 512, double tol = 1e-11) {
    if (!(hi > lo)) {
        return {lo, f(lo)};
    }
    const double h = (hi - lo) / (points - 1);
    int best_i = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double v = f(lo + i * h);
        if (v > best_v) {
            best_v = v;
            best_i = i;
        }
    }
    if (!std::isfinite(best_v)) {
        return {lo + best_i * h, best_v};
    }
    const double a = lo + std::max(0, best_i - 1) * h;
    const double b = lo + std::min(points - 1, best_i + 1) * h;
    Extremum refined = golden_max(f, a, b, tol);
    if (refined.value >= best_v) return refined;
    return {lo + best_i * h, best_v};
}

/// Bisection for a sign change of f on [lo, hi]. Returns nullopt when f(lo), f(hi) share a sign.
template <class F>
std::optional<double> bisect(F&& f, double lo, double hi, double tol = 1e-12, int max_iter = 400) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) return std::nullopt;
    for (int it = 0; it < max_iter && (hi - lo) > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Ordinary least-squares slope and intercept of y against x.
inline std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("linear_fit needs two equally sized samples with >= 2 points");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

}  // namespace smt::numerics
