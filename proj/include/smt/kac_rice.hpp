#pragma once

// Annealed complexity of critical points at fixed overlap m and loss eps, thresholds that
// follow from it, and the classification of the dominant critical points.
//
// For a split eps = eps_p + eps_2 the log-density of stationary points is
//
//   S = 1/2 log(Q''(1)/Q'(1)) + 1/2 log(1 - m^2) - Q'(m)^2 (1 - m^2) / (2 Q'(1))
//       - (p Delta_p / 2) (eps_p + Q_p(m))^2 - Delta_2 (eps_2 + Q_2(m))^2 + Phi(t),
//
// with t = -(p eps_p + 2 eps_2) / sqrt(Q''(1)); Sigma_sta is its maximum over the split.
// Minima subtract the large-deviation cost L(theta, t) of pushing the lowest Hessian
// eigenvalue above zero.

#include "errors.hpp"
#include "hessian.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// 1/2 + int rho_sc(l) ln|t - l| dl for the unit semicircle on [-2, 2].
inline double phi(double t) {
    const double a = std::abs(t);
    if (a <= 2.0) return 0.25 * t * t;
    const double r = std::sqrt(t * t - 4.0);
    return 0.25 * t * t + std::log(0.5 * r + 0.5 * a) - 0.25 * a * r;
}

inline double phi_slope(double t) {
    const double a = std::abs(t);
    if (a <= 2.0) return 0.5 * t;
    return 0.5 * t - std::copysign(0.5 * std::sqrt(t * t - 4.0), t);
}

namespace detail {

inline double ld_antiderivative(double y) {
    const double r = std::sqrt(std::max(0.0, y * y - 4.0));
    return 0.5 * y * r - 2.0 * std::log(0.5 * (y + r));
}

}  // namespace detail

/// Cost per dimension of finding the smallest Hessian eigenvalue at or above zero.
/// +inf when the bulk itself reaches below zero (t < 2).
inline double large_deviation_penalty(double theta, double t) {
    if (!(theta > 0.0)) throw std::invalid_argument("theta must be positive");
    if (t < 2.0) return kInf;
    if (theta <= 1.0) return 0.0;
    const double b = theta + 1.0 / theta;
    if (t >= b) return 0.0;
    return 0.25 * (detail::ld_antiderivative(t) - detail::ld_antiderivative(b)) - 0.5 * theta * (t - b) +
           (t * t - b * b) / 8.0;
}

namespace detail {

/// Penalty with theta <= 0 folded into the no-outlier branch.
inline double penalty(double theta, double t) {
    if (t < 2.0) return kInf;
    if (theta <= 1.0) return 0.0;
    return large_deviation_penalty(theta, t);
}

/// dL/dt on [2, theta + 1/theta), zero elsewhere.
inline double penalty_slope(double theta, double t) {
    if (theta <= 1.0 || t < 2.0 || t >= theta + 1.0 / theta) return 0.0;
    return 0.25 * std::sqrt(t * t - 4.0) - 0.5 * theta + 0.25 * t;
}

}  // namespace detail

enum class Classification { extensive_saddle, single_unstable, minimum };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::extensive_saddle: return "extensive_saddle";
        case Classification::single_unstable: return "single_unstable";
        case Classification::minimum: return "minimum";
    }
    return "?";
}

inline Classification classify(double t, double theta) {
    if (t < 2.0) return Classification::extensive_saddle;
    if (theta > 1.0 && t < theta + 1.0 / theta) return Classification::single_unstable;
    return Classification::minimum;
}

/// A complexity value; an empty optional means "impossible" (log of zero, -inf).
using Complexity = std::optional<double>;

inline double value_or_neg_inf(const Complexity& c) { return c ? *c : -kInf; }

struct ComplexityPoint {
    double m = 0.0;
    double epsilon = 0.0;
    double epsilon_p = 0.0;
    double epsilon_2 = 0.0;
    Complexity sigma_stationary;
    Complexity sigma_minima;
    double t = 0.0;
    double theta = 0.0;
    Classification classification = Classification::extensive_saddle;
};

/// Split-dependent pieces of the complexity at fixed (m, eps).
class ComplexityObjective {
public:
    ComplexityObjective(const ModelParams& params, double m, double epsilon)
        : params_(params), Q_(params), m_(m), eps_(epsilon) {
        params.validate();
        if (!(std::abs(m) < 1.0)) throw std::domain_error("complexity needs |m| < 1");
        scale_ = Q_.hessian_scale();
        const double one_m2 = 1.0 - m * m;
        const double qm = Q_.d1(m);
        base_ = 0.5 * std::log(Q_.d2(1.0) / Q_.d1(1.0)) + 0.5 * std::log(one_m2) - 0.5 * qm * qm * one_m2 / Q_.d1(1.0);
        shift_p_ = Q_.tensor(m, 0);
        shift_2_ = Q_.matrix(m, 0);
        theta_ = Q_.d2(m) * one_m2 / scale_;
    }

    double t_of(double eps_p) const { return -(params_.p * eps_p + 2.0 * (eps_ - eps_p)) / scale_; }
    double theta() const { return theta_; }

    double stationary(double eps_p) const {
        const double eps_2 = eps_ - eps_p;
        const double a = eps_p + shift_p_;
        const double b = eps_2 + shift_2_;
        return base_ - 0.5 * params_.p * params_.delta_p * a * a - params_.delta_2 * b * b + phi(t_of(eps_p));
    }

    double minima(double eps_p) const {
        const double t = t_of(eps_p);
        if (t < 2.0) return -kInf;
        return stationary(eps_p) - detail::penalty(theta_, t);
    }

    double stationary_slope(double eps_p) const {
        const double a = eps_p + shift_p_;
        const double b = eps_ - eps_p + shift_2_;
        const double u = -(params_.p - 2.0) / scale_;
        return -params_.p * params_.delta_p * a + 2.0 * params_.delta_2 * b + phi_slope(t_of(eps_p)) * u;
    }

    double minima_slope(double eps_p) const {
        const double u = -(params_.p - 2.0) / scale_;
        return stationary_slope(eps_p) - detail::penalty_slope(theta_, t_of(eps_p)) * u;
    }

    /// Upper bound (Phi(t) <= t^2/4) as a concave quadratic A x^2 + B x + C in eps_p.
    void envelope(double& A, double& B, double& C) const {
        const double p = params_.p;
        const double kp = 0.5 * p * params_.delta_p, k2 = params_.delta_2;
        const double u = -(p - 2.0) / scale_, v = -2.0 * eps_ / scale_;  // t = u x + v
        const double c2 = eps_ + shift_2_;                                // eps_2 + shift = c2 - x
        A = -kp - k2 + 0.25 * u * u;
        B = -2.0 * kp * shift_p_ + 2.0 * k2 * c2 + 0.5 * u * v;
        C = base_ - kp * shift_p_ * shift_p_ - k2 * c2 * c2 + 0.25 * v * v;
    }

    /// eps_p above which t < 2 (p > 2 so t decreases in eps_p).
    double marginal_split() const { return (-2.0 * scale_ - 2.0 * eps_) / (params_.p - 2.0); }

private:
    ModelParams params_;
    CovFn Q_;
    double m_, eps_;
    double scale_ = 1.0, base_ = 0.0, shift_p_ = 0.0, shift_2_ = 0.0, theta_ = 0.0;
};

namespace detail {

/// Maximizes `f` over eps_p (optionally restricted to eps_p <= cap) inside the region where
/// the quadratic envelope can still exceed the value at a reference point.
/// Sharpens an interior maximum by bisecting the analytic slope.
template <class F, class G>
numerics::Extremum polish(F&& f, G&& slope, numerics::Extremum best, std::optional<double> cap) {
    const double h = 1e-6 * (1.0 + std::abs(best.x));
    double lo = best.x - h, hi = best.x + h;
    if (cap && hi > *cap) return best;
    if (!(slope(lo) > 0.0 && slope(hi) < 0.0)) return best;
    const auto root = numerics::bisect(slope, lo, hi, 1e-14);
    if (!root) return best;
    const double v = f(*root);
    return v >= best.value ? numerics::Extremum{*root, v} : best;
}

template <class F, class G>
numerics::Extremum maximize_split(const ComplexityObjective& obj, F&& f, G&& slope, std::optional<double> cap) {
    double A, B, C;
    obj.envelope(A, B, C);
    double x0 = -B / (2.0 * A);
    if (cap) x0 = std::min(x0, *cap);
    const double ref = f(x0);
    if (!std::isfinite(ref)) return {x0, ref};
    // A x^2 + B x + C >= ref
    const double disc = B * B - 4.0 * A * (C - ref);
    const double half = disc > 0.0 ? std::sqrt(disc) / (2.0 * std::abs(A)) : 0.0;
    const double centre = -B / (2.0 * A);
    const double pad = 1e-9 + 1e-6 * half;
    double lo = centre - half - pad, hi = centre + half + pad;
    if (cap) hi = std::min(hi, *cap);
    lo = std::min(lo, x0);
    hi = std::max(hi, x0);
    auto best = numerics::scan_golden_max(f, lo, hi, 512, 1e-12);
    if (ref > best.value) best = {x0, ref};
    return polish(f, slope, best, cap);
}

}  // namespace detail

/// Sigma_sta(m, eps) with its optimal split.
inline ComplexityPoint complexity_stationary(const ModelParams& params, double m, double epsilon) {
    const ComplexityObjective obj(params, m, epsilon);
    const auto best = detail::maximize_split(
        obj, [&](double x) { return obj.stationary(x); }, [&](double x) { return obj.stationary_slope(x); },
        std::nullopt);
    ComplexityPoint pt;
    pt.m = m;
    pt.epsilon = epsilon;
    pt.epsilon_p = best.x;
    pt.epsilon_2 = epsilon - best.x;
    pt.sigma_stationary = best.value;
    pt.t = obj.t_of(best.x);
    pt.theta = obj.theta();
    pt.classification = classify(pt.t, pt.theta);
    const double pen = detail::penalty(pt.theta, pt.t);
    if (std::isfinite(pen)) pt.sigma_minima = best.value - pen;
    return pt;
}

/// Sigma_min(m, eps): the split is re-optimized with the penalty included. The reported
/// split, t and classification are those of the minima optimum when it exists.
inline ComplexityPoint complexity_minima(const ModelParams& params, double m, double epsilon) {
    ComplexityPoint pt = complexity_stationary(params, m, epsilon);
    const ComplexityObjective obj(params, m, epsilon);
    const auto best =
        detail::maximize_split(obj, [&](double x) { return obj.minima(x); },
                               [&](double x) { return obj.minima_slope(x); }, obj.marginal_split());
    if (!std::isfinite(best.value)) {
        pt.sigma_minima.reset();
        return pt;
    }
    pt.sigma_minima = std::min(best.value, value_or_neg_inf(pt.sigma_stationary));
    pt.epsilon_p = best.x;
    pt.epsilon_2 = epsilon - best.x;
    pt.t = obj.t_of(best.x);
    pt.classification = classify(pt.t, pt.theta);
    return pt;
}

/// Both complexities at one point: stationary split for Sigma_sta, penalized split for
/// Sigma_min; t and classification follow the stationary optimum (the dominant points).
inline ComplexityPoint complexity_point(const ModelParams& params, double m, double epsilon) {
    ComplexityPoint pt = complexity_stationary(params, m, epsilon);
    const ComplexityPoint mins = complexity_minima(params, m, epsilon);
    pt.sigma_minima = mins.sigma_minima;
    return pt;
}

struct ComplexityCurve {
    std::vector<ComplexityPoint> points;
    /// Set for p > 3, where the replica-symmetric evaluation may not be exact.
    bool rs_caveat = false;
};

inline ComplexityCurve complexity_curve(const ModelParams& params, double m, std::span<const double> epsilon_grid,
                                        unsigned threads = 1) {
    ComplexityCurve curve;
    curve.rs_caveat = params.p > 3;
    curve.points.resize(epsilon_grid.size());
    parallel_for(epsilon_grid.size(), threads,
                 [&](std::size_t i) { curve.points[i] = complexity_point(params, m, epsilon_grid[i]); });
    return curve;
}

/// Closed-form threshold energy (the loss at which the dominant stationary points have t = 2).
inline double threshold_energy_kr(const ModelParams& params) {
    const CovFn Q(params);
    const double p = params.p;
    return ((p - 2.0) * (p - 2.0) / (2.0 * p * params.delta_2 * params.delta_p) - 2.0 * Q.d2(1.0) * Q.value(1.0)) /
           (Q.hessian_scale() * Q.d1(1.0));
}

/// Delta_2 below which gradient flow reaches the signal.
inline double gf_threshold(int p, double delta_p) {
    if (p < 3) throw std::invalid_argument("p must be >= 3");
    if (!(delta_p > 0.0)) throw std::invalid_argument("delta_p must be positive");
    const double q = p - 1.0;
    return (-delta_p + std::sqrt(delta_p * delta_p + 4.0 * q * delta_p)) / (2.0 * q);
}

struct TrivializationResult {
    std::optional<double> delta2_inv;  // 1/Delta_2^triv, when bracketed
    double scanned_lo = 0.0;           // 1/Delta_2 interval searched
    double scanned_hi = 0.0;
    std::string construction = "numeric, this work's construction";
};

namespace detail {

/// sup over eps of Sigma_min(m, eps), -inf when impossible everywhere.
inline double sup_minima_over_energy(const ModelParams& params, double m) {
    const CovFn Q(params);
    const double span = Q.value(1.0) + 2.0 * Q.hessian_scale() + 1.0;
    auto f = [&](double eps) { return value_or_neg_inf(complexity_minima(params, m, eps).sigma_minima); };
    return numerics::scan_golden_max(f, -span, 0.5, 96, 1e-9).value;
}

}  // namespace detail

/// Height of the spurious branch: starting at m = m_grid[0], climb sup_eps Sigma_min while it
/// increases along the grid and report the first local maximum.
inline double spurious_branch_height(const ModelParams& params, std::span<const double> m_grid) {
    if (m_grid.empty()) throw std::invalid_argument("empty overlap grid");
    double best = detail::sup_minima_over_energy(params, m_grid[0]);
    for (std::size_t i = 1; i < m_grid.size(); ++i) {
        const double next = detail::sup_minima_over_energy(params, m_grid[i]);
        if (!(next > best)) break;
        best = next;
    }
    return best;
}

inline std::vector<double> default_m_grid(std::size_t points = 96) {
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) g[i] = 0.95 * static_cast<double>(i) / (points - 1);
    return g;
}

/// Smallest 1/Delta_2 (at fixed p, Delta_p) beyond which no spurious minimum has positive
/// complexity, by bisection to 1e-4 on [1/Delta_2^GF, upper].
inline TrivializationResult trivialization_threshold(const ModelParams& params, std::span<const double> m_grid,
                                                     double upper = 10.0) {
    TrivializationResult out;
    out.scanned_lo = 1.0 / gf_threshold(params.p, params.delta_p);
    out.scanned_hi = upper;
    auto height = [&](double snr) {
        ModelParams q = params;
        q.delta_2 = 1.0 / snr;
        return spurious_branch_height(q, m_grid);
    };
    // positive -> spurious minima present
    auto sign = [&](double snr) { return height(snr) > 0.0 ? 1.0 : -1.0; };
    if (sign(out.scanned_lo) < 0.0 || sign(out.scanned_hi) > 0.0) return out;
    out.delta2_inv = numerics::bisect(sign, out.scanned_lo, out.scanned_hi, 1e-4);
    return out;
}

struct ThresholdSet {
    double delta2_gf = 0.0;
    std::optional<double> delta2_triv;
    double epsilon_th = 0.0;
    double delta2_amp = 1.0;
};

inline ThresholdSet thresholds(const ModelParams& params, bool with_trivialization = true) {
    ThresholdSet s;
    s.delta2_gf = gf_threshold(params.p, params.delta_p);
    s.epsilon_th = threshold_energy_kr(params);
    if (with_trivialization) {
        const auto grid = default_m_grid();
        const auto triv = trivialization_threshold(params, grid);
        if (triv.delta2_inv) s.delta2_triv = 1.0 / *triv.delta2_inv;
    }
    return s;
}

}  // namespace smt
