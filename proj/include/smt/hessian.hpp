#pragma once

// Spectra of the Riemannian Hessian at a critical point: a semicircle of radius
// 2 sqrt(Q''(1)) centred at sqrt(Q''(1)) t, plus a rank-one part along the signal of
// strength theta that detaches an eigenvalue below the bulk once theta > 1.

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace smt {

/// theta(m) = Q''(m) (1 - m^2) / sqrt(Q''(1)); the isolated eigenvalue exists iff theta > 1.
inline double bbp_condition(const ModelParams& params, double m) {
    const CovFn Q(params);
    return Q.d2(m) * (1.0 - m * m) / Q.hessian_scale();
}

/// t = -(p eps_p + 2 eps_2) / sqrt(Q''(1)).
inline double shift_parameter(const ModelParams& params, double eps_p, double eps_2) {
    return -(params.p * eps_p + 2.0 * eps_2) / CovFn(params).hessian_scale();
}

struct SpectrumSpec {
    double scale = 1.0;
    double t = 0.0;
    double theta = 0.0;
    double support_lo = -2.0;
    double support_hi = 2.0;
    std::optional<double> isolated;
};

inline SpectrumSpec make_spectrum(double scale, double t, double theta) {
    if (!(scale > 0.0)) throw std::invalid_argument("spectrum scale must be positive");
    SpectrumSpec s{scale, t, theta, scale * (-2.0 + t), scale * (2.0 + t), std::nullopt};
    if (theta > 1.0) s.isolated = scale * (t - theta - 1.0 / theta);
    return s;
}

inline SpectrumSpec make_spectrum(const ModelParams& params, double t, double theta) {
    return make_spectrum(CovFn(params).hessian_scale(), t, theta);
}

/// Spectrum predicted at a point with overlap m and channel energies (eps_p, eps_2).
inline SpectrumSpec spectrum_at(const ModelParams& params, double m, double eps_p, double eps_2) {
    return make_spectrum(params, shift_parameter(params, eps_p, eps_2), bbp_condition(params, m));
}

inline std::optional<double> isolated_eigenvalue(const SpectrumSpec& spec) { return spec.isolated; }

inline double bulk_density(const SpectrumSpec& spec, double lambda) {
    const double x = (lambda - spec.scale * spec.t) / spec.scale;
    if (std::abs(x) >= 2.0) return 0.0;
    return std::sqrt(4.0 - x * x) / (2.0 * std::numbers::pi * spec.scale);
}

inline double bulk_cdf(const SpectrumSpec& spec, double lambda) {
    const double x = (lambda - spec.scale * spec.t) / spec.scale;
    if (x <= -2.0) return 0.0;
    if (x >= 2.0) return 1.0;
    return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * std::numbers::pi) + std::asin(x / 2.0) / std::numbers::pi;
}

/// Kolmogorov-Smirnov distance between a sample and the bulk law.
inline double ks_distance(std::span<const double> sample, const SpectrumSpec& spec) {
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double F = bulk_cdf(spec, s[i]);
        d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
    }
    return d;
}

}  // namespace smt
