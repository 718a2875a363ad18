#pragma once

// Model parameters and the covariance function of the spiked matrix-tensor loss.
//
// Conventions used throughout the library:
//   * configurations carry squared norm n; overlaps are per spin, m = <s, s*>/n;
//   * energies are per spin, eps = L/n, split into tensor (eps_p) and matrix (eps_2) channels;
//   * the rescaled loss L has Cov[L(a), L(b)] = n Q(<a,b>/n) and mean -n Q(m), with
//       Q(x) = x^p / (p Delta_p) + x^2 / (2 Delta_2).

#include <cmath>
#include <stdexcept>
#include <string>

namespace smt {

struct ModelParams {
    int p = 3;
    double delta_p = 1.0;
    double delta_2 = 0.5;
    double temperature = 0.0;

    static ModelParams with_snr(int p, double delta_p, double delta2_inv, double temperature = 0.0) {
        ModelParams params{p, delta_p, 1.0 / delta2_inv, temperature};
        params.validate();
        return params;
    }

    double snr() const { return 1.0 / delta_2; }

    void validate() const {
        if (p < 3) {
            throw std::invalid_argument("tensor order p must be >= 3, got " + std::to_string(p));
        }
        if (!(delta_p > 0.0) || !std::isfinite(delta_p)) {
            throw std::invalid_argument("delta_p must be positive and finite");
        }
        if (!(delta_2 > 0.0) || !std::isfinite(delta_2)) {
            throw std::invalid_argument("delta_2 must be positive and finite");
        }
        if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
            throw std::invalid_argument("temperature must be >= 0");
        }
    }
};

enum class Channel { tensor, matrix };

namespace detail {

inline double ipow(double x, int k) {
    double r = 1.0;
    for (; k > 0; --k) r *= x;
    return r;
}

}  // namespace detail

/// Analytic view over Q and its first two derivatives, whole or per channel.
/// The accessors do not range-check their argument; cov_eval() does.
class CovFn {
public:
    explicit CovFn(const ModelParams& params)
        : p_(params.p), inv_dp_(1.0 / params.delta_p), inv_d2_(1.0 / params.delta_2) {
        params.validate();
    }

    int p() const { return p_; }

    double value(double x) const { return tensor(x, 0) + matrix(x, 0); }
    double d1(double x) const { return tensor(x, 1) + matrix(x, 1); }
    double d2(double x) const { return tensor(x, 2) + matrix(x, 2); }

    double operator()(double x, int order) const { return tensor(x, order) + matrix(x, order); }

    /// Q_p(x) = x^p / (p Delta_p) and derivatives.
    double tensor(double x, int order) const {
        switch (order) {
            case 0: return detail::ipow(x, p_) * inv_dp_ / p_;
            case 1: return detail::ipow(x, p_ - 1) * inv_dp_;
            case 2: return (p_ - 1) * detail::ipow(x, p_ - 2) * inv_dp_;
            default: throw std::invalid_argument("derivative order must be 0, 1 or 2");
        }
    }

    /// Q_2(x) = x^2 / (2 Delta_2) and derivatives.
    double matrix(double x, int order) const {
        switch (order) {
            case 0: return 0.5 * x * x * inv_d2_;
            case 1: return x * inv_d2_;
            case 2: return inv_d2_;
            default: throw std::invalid_argument("derivative order must be 0, 1 or 2");
        }
    }

    double channel(Channel c, double x, int order) const {
        return c == Channel::tensor ? tensor(x, order) : matrix(x, order);
    }

    /// Homogeneity degree of a channel (p for the tensor, 2 for the matrix).
    int degree(Channel c) const { return c == Channel::tensor ? p_ : 2; }

    /// sqrt(Q''(1)): the radius scale of the Hessian semicircle.
    double hessian_scale() const { return std::sqrt(d2(1.0)); }

private:
    int p_;
    double inv_dp_;
    double inv_d2_;
};

/// Q (order 0), Q' (order 1) or Q'' (order 2) at x in [-1, 1].
inline double cov_eval(const ModelParams& params, double x, int order) {
    if (!(std::abs(x) <= 1.0)) {
        throw std::domain_error("cov_eval: |x| must be <= 1");
    }
    return CovFn(params)(x, order);
}

}  // namespace smt
