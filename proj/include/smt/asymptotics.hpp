#pragma once

// Long-time constants of the aging solution at overlap zero: the plateau q(T), the limit of
// the spherical multiplier, the integrated fast response, the violation ratio, the energy
// reached by the dynamics, and the stability residual whose root is the GF threshold.
// T = 0 values are closed forms; finite-T formulas are provided for validation.

#include "errors.hpp"
#include "model.hpp"
#include "numerics.hpp"

#include <cmath>
#include <optional>

namespace smt {

/// Largest q in (0, 1) with T^2 = (1 - q)^2 Q''(q); 1 at T = 0, empty when no root exists.
inline std::optional<double> plateau_q(const ModelParams& params, double T) {
    if (!(T >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
    if (T == 0.0) return 1.0;
    const CovFn Q(params);
    auto f = [&](double q) { return (1.0 - q) * (1.0 - q) * Q.d2(q) - T * T; };
    constexpr int steps = 4000;
    double hi = 1.0;
    for (int k = 1; k <= steps; ++k) {
        const double lo = 1.0 - static_cast<double>(k) / steps;
        if (f(lo) >= 0.0) return numerics::bisect(f, lo, hi, 1e-13);
        hi = lo;
    }
    return std::nullopt;
}

namespace detail {

inline double require_q(const ModelParams& params, double T) {
    const auto q = plateau_q(params, T);
    if (!q) throw PhaseError("no plateau solution at this temperature (high-temperature phase)");
    return *q;
}

}  // namespace detail

inline double mu_infinity(const ModelParams& params, double T) {
    const CovFn Q(params);
    if (T == 0.0) return 2.0 * Q.hessian_scale();
    const double q = detail::require_q(params, T);
    return T / (1.0 - q) + (Q.d1(1.0) - Q.d1(q)) / T;
}

inline double r_bar(const ModelParams& params) { return 1.0 / CovFn(params).hessian_scale(); }

/// x / T of the aging regime.
inline double violation_ratio(const ModelParams& params, double T) {
    const CovFn Q(params);
    const double q = detail::require_q(params, T);
    const double s = std::sqrt(Q.d2(q));
    return (s - Q.d1(1.0) / s) / (q * Q.d1(q));
}

inline double threshold_energy_dyn(const ModelParams& params) {
    const CovFn Q(params);
    const double s = Q.hessian_scale();
    return -Q.d1(1.0) / s - Q.value(1.0) * (Q.d2(1.0) - Q.d1(1.0)) / (s * Q.d1(1.0));
}

/// Tensor or matrix share of the dynamical threshold energy (T = 0).
inline double threshold_energy_dyn(const ModelParams& params, Channel c) {
    const CovFn Q(params);
    const double s = Q.hessian_scale();
    const double deg = Q.degree(c);
    return -(Q.channel(c, 1.0, 1) + Q.channel(c, 1.0, 2)) / (deg * s) - violation_ratio(params, 0.0) * Q.channel(c, 1.0, 0);
}

/// -mu_inf + Q''(0) + Q''(1) R_bar at T = 0; positive where the aging solution is unstable.
inline double stability_residual(const ModelParams& params) {
    const CovFn Q(params);
    return Q.d2(0.0) - Q.hessian_scale();
}

struct AgingConstants {
    double q = 1.0;
    double mu_inf = 0.0;
    double x_over_T = 0.0;
    double r_bar = 0.0;
    double eps_th = 0.0;
};

inline AgingConstants aging_constants(const ModelParams& params) {
    return {1.0, mu_infinity(params, 0.0), violation_ratio(params, 0.0), r_bar(params), threshold_energy_dyn(params)};
}

}  // namespace smt
