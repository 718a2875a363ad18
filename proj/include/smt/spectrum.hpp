#pragma once

// Empirical spectra of the Riemannian Hessian P (grad^2 L) P + mu I on the (n-1)-dimensional
// tangent space of the sphere at sigma. Dense mode builds the matrix and restricts it with a
// Householder reflection that maps sigma to the last basis vector; extremal mode runs Lanczos
// with full reorthogonalization on the tangent operator.

#include "errors.hpp"
#include "instance.hpp"
#include "loss.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace smt {

inline constexpr std::uint32_t kDenseSpectrumLimit = 4096;

/// Dense Euclidean Hessian of L at sigma.
inline Eigen::MatrixXd euclidean_hessian(const Instance& inst, std::span<const double> sigma) {
    detail::check_dimension(inst, sigma.size());
    const Eigen::Index n = inst.n;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    auto add = [&](const EdgeSet& set) {
        set.for_each([&](std::span<const std::uint32_t> idx, double coupling) {
            const std::size_t a = idx.size();
            for (std::size_t r = 0; r < a; ++r) {
                for (std::size_t u = r + 1; u < a; ++u) {
                    double prod = coupling;
                    for (std::size_t w = 0; w < a; ++w) {
                        if (w != r && w != u) prod *= sigma[idx[w]];
                    }
                    H(idx[r], idx[u]) -= prod;
                    H(idx[u], idx[r]) -= prod;
                }
            }
        });
    };
    add(inst.tensor);
    add(inst.matrix);
    const CovFn Q(inst.params);
    const double m = overlap(inst, sigma);
    const Eigen::Map<const Eigen::VectorXd> s(inst.signal.data(), n);
    H.noalias() -= (Q.d2(m) / static_cast<double>(n)) * s * s.transpose();
    return H;
}

/// The (n-1) x (n-1) tangent-space Hessian in the Householder basis.
inline Eigen::MatrixXd tangent_hessian(const Instance& inst, std::span<const double> sigma, double* mu_out = nullptr) {
    const Eigen::Index n = inst.n;
    Eigen::MatrixXd M = euclidean_hessian(inst, sigma);
    std::vector<double> grad(inst.n);
    const Observables o = evaluate(inst, sigma, grad);
    if (mu_out) *mu_out = o.mu;
    M.diagonal().array() += o.mu;

    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(sigma.data(), n) / std::sqrt(static_cast<double>(n));
    w(n - 1) -= 1.0;
    const double wn = w.norm();
    if (wn > 1e-14) {
        w /= wn;
        const Eigen::VectorXd Mw = M * w;
        const double wMw = w.dot(Mw);
        // (I - 2ww^T) M (I - 2ww^T)
        M.noalias() -= 2.0 * w * Mw.transpose();
        M.noalias() -= 2.0 * Mw * w.transpose();
        M.noalias() += 4.0 * wMw * w * w.transpose();
    }
    return M.topLeftCorner(n - 1, n - 1);
}

enum class SpectrumMode { dense, extremal };

struct ExtremalOptions {
    std::size_t count = 10;        // eigenvalues reported at each end
    std::size_t iterations = 300;  // Lanczos steps
    std::uint64_t seed = 11;
};

namespace detail {

inline std::vector<double> lanczos_extremal(const Instance& inst, std::span<const double> sigma,
                                            const ExtremalOptions& opt) {
    const std::size_t n = inst.n;
    std::vector<double> grad(n);
    const double mu = evaluate(inst, sigma, grad).mu;
    auto project = [&](std::vector<double>& v) {
        const double c = dot(v, sigma) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) v[i] -= c * sigma[i];
    };
    auto apply = [&](const std::vector<double>& v) {
        std::vector<double> hv = hessian_vector(inst, sigma, v);
        project(hv);
        for (std::size_t i = 0; i < n; ++i) hv[i] += mu * v[i];
        return hv;
    };
    const std::size_t k = std::min(opt.iterations, n - 1);
    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    auto rng = make_stream(opt.seed, 5);
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    project(v);
    double nv = std::sqrt(dot(v, v));
    for (auto& x : v) x /= nv;
    for (std::size_t j = 0; j < k; ++j) {
        basis.push_back(v);
        std::vector<double> w = apply(v);
        alpha.push_back(dot(w, v));
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double c = dot(w, b);
                for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
            }
        }
        project(w);
        const double nb = std::sqrt(dot(w, w));
        if (nb < 1e-12 || j + 1 == k) break;
        beta.push_back(nb);
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nb;
    }
    const Eigen::Index m = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + m);
    std::vector<double> out;
    const std::size_t c = std::min<std::size_t>(opt.count, ev.size());
    out.insert(out.end(), ev.begin(), ev.begin() + c);
    out.insert(out.end(), ev.end() - std::min(c, ev.size() - c), ev.end());
    return out;
}

}  // namespace detail

/// Ascending eigenvalues (dense) or the `count` smallest followed by the `count` largest
/// Ritz values (extremal) of the tangent-space Hessian.
inline std::vector<double> empirical_spectrum(const Instance& inst, std::span<const double> sigma, SpectrumMode mode,
                                              const ExtremalOptions& opt = {}) {
    if (mode == SpectrumMode::extremal) return detail::lanczos_extremal(inst, sigma, opt);
    if (inst.n > kDenseSpectrumLimit) {
        throw PreconditionError("dense spectrum needs n <= 4096; use extremal mode for n = " + std::to_string(inst.n));
    }
    const Eigen::MatrixXd H = tangent_hessian(inst, sigma);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::vector<double>(ev.data(), ev.data() + ev.size());
}

}  // namespace smt
