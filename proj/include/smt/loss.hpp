#pragma once

// Loss, gradient and Hessian-vector products of the rescaled loss L = n * eps on an Instance.
//
//   L(s) = -sum_tensor J_e prod s  -  sum_matrix J_e s_i s_j  -  n Q_p(m)  -  n Q_2(m)
//
// Gradients are of the total L (components O(1) for squared norm n); the spherical
// multiplier is mu = -<grad L, s> / n, which equals -(p eps_p + 2 eps_2) by homogeneity.

#include "errors.hpp"
#include "instance.hpp"
#include "model.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace smt {

struct Energies {
    double eps = 0.0;
    double eps_p = 0.0;
    double eps_2 = 0.0;
};

struct Observables {
    double eps = 0.0;
    double eps_p = 0.0;
    double eps_2 = 0.0;
    double m = 0.0;
    double mu = 0.0;
};

/// Reproducible mode splits every edge sweep into a fixed number of chunks reduced in
/// order, so results do not depend on `threads`. Fast mode uses one chunk per thread.
struct EvalOptions {
    unsigned threads = 1;
    bool reproducible = true;
};

inline constexpr unsigned kReproducibleChunks = 16;

namespace detail {

template <int K, bool Grad>
void rows_arity3(const EdgeSet& s, std::size_t r0, std::size_t r1, const double* const* x, double* const* g,
                 double* sums) {
    const std::uint16_t* tail = s.tail.data();
    const float* z = s.z.data();
    for (std::size_t i = r0; i < r1; ++i) {
        const std::uint64_t e0 = s.row_ptr[i], e1 = s.row_ptr[i + 1];
        if (e0 == e1) continue;
        double xi[K], acc[K];
        for (int q = 0; q < K; ++q) {
            xi[q] = x[q][i];
            acc[q] = 0.0;
        }
        for (std::uint64_t e = e0; e < e1; ++e) {
            const std::uint32_t j = tail[2 * e], k = tail[2 * e + 1];
            const double w = z[e];
            for (int q = 0; q < K; ++q) {
                const double xj = x[q][j], xk = x[q][k];
                acc[q] += w * xj * xk;
                if constexpr (Grad) {
                    const double wi = w * xi[q];
                    g[q][j] += wi * xk;
                    g[q][k] += wi * xj;
                }
            }
        }
        for (int q = 0; q < K; ++q) {
            sums[q] += xi[q] * acc[q];
            if constexpr (Grad) g[q][i] += acc[q];
        }
    }
}

template <int K, bool Grad>
void rows_arity2(const EdgeSet& s, std::size_t r0, std::size_t r1, const double* const* x, double* const* g,
                 double* sums) {
    const std::uint16_t* tail = s.tail.data();
    const float* z = s.z.data();
    for (std::size_t i = r0; i < r1; ++i) {
        const std::uint64_t e0 = s.row_ptr[i], e1 = s.row_ptr[i + 1];
        if (e0 == e1) continue;
        double xi[K], acc[K];
        for (int q = 0; q < K; ++q) {
            xi[q] = x[q][i];
            acc[q] = 0.0;
        }
        for (std::uint64_t e = e0; e < e1; ++e) {
            const std::uint32_t j = tail[e];
            const double w = z[e];
            for (int q = 0; q < K; ++q) {
                acc[q] += w * x[q][j];
                if constexpr (Grad) g[q][j] += w * xi[q];
            }
        }
        for (int q = 0; q < K; ++q) {
            sums[q] += xi[q] * acc[q];
            if constexpr (Grad) g[q][i] += acc[q];
        }
    }
}

template <bool Grad>
void rows_generic(const EdgeSet& s, int states, std::size_t r0, std::size_t r1, const double* const* x,
                  double* const* g, double* sums) {
    const int a = s.arity, t = a - 1;
    std::vector<std::uint32_t> idx(a);
    std::vector<double> prefix(a + 1), suffix(a + 1);
    for (std::size_t i = r0; i < r1; ++i) {
        idx[0] = static_cast<std::uint32_t>(i);
        for (std::uint64_t e = s.row_ptr[i]; e < s.row_ptr[i + 1]; ++e) {
            for (int r = 0; r < t; ++r) idx[r + 1] = s.tail[e * t + r];
            const double w = s.z[e];
            for (int q = 0; q < states; ++q) {
                prefix[0] = 1.0;
                for (int r = 0; r < a; ++r) prefix[r + 1] = prefix[r] * x[q][idx[r]];
                sums[q] += w * prefix[a];
                if constexpr (Grad) {
                    suffix[a] = 1.0;
                    for (int r = a - 1; r >= 0; --r) suffix[r] = suffix[r + 1] * x[q][idx[r]];
                    for (int r = 0; r < a; ++r) g[q][idx[r]] += w * prefix[r] * suffix[r + 1];
                }
            }
        }
    }
}

template <bool Grad>
void rows_dispatch(const EdgeSet& s, int states, std::size_t r0, std::size_t r1, const double* const* x,
                   double* const* g, double* sums) {
    if (s.arity == 3) {
        switch (states) {
            case 1: return rows_arity3<1, Grad>(s, r0, r1, x, g, sums);
            case 2: return rows_arity3<2, Grad>(s, r0, r1, x, g, sums);
            case 3: return rows_arity3<3, Grad>(s, r0, r1, x, g, sums);
            case 4: return rows_arity3<4, Grad>(s, r0, r1, x, g, sums);
            default: break;
        }
    } else if (s.arity == 2) {
        switch (states) {
            case 1: return rows_arity2<1, Grad>(s, r0, r1, x, g, sums);
            case 2: return rows_arity2<2, Grad>(s, r0, r1, x, g, sums);
            case 3: return rows_arity2<3, Grad>(s, r0, r1, x, g, sums);
            case 4: return rows_arity2<4, Grad>(s, r0, r1, x, g, sums);
            default: break;
        }
    }
    rows_generic<Grad>(s, states, r0, r1, x, g, sums);
}

/// Row boundaries splitting the edges of `s` into `chunks` contiguous pieces of similar size.
inline std::vector<std::size_t> row_chunks(const EdgeSet& s, unsigned chunks) {
    const std::size_t rows = s.row_ptr.size() - 1;
    const std::uint64_t total = s.row_ptr.back();
    std::vector<std::size_t> cut(chunks + 1, rows);
    cut[0] = 0;
    for (unsigned c = 1; c < chunks; ++c) {
        const std::uint64_t target = total * c / chunks;
        auto it = std::lower_bound(s.row_ptr.begin(), s.row_ptr.end(), target);
        cut[c] = std::max(cut[c - 1], static_cast<std::size_t>(it - s.row_ptr.begin()));
        cut[c] = std::min(cut[c], rows);
    }
    return cut;
}

/// For each state q: sums[q] = sum_e z_e prod_{r} x_q[idx_r] and, when grads is non-empty,
/// grads[q] = the gradient of that form (overwritten). Unscaled by the channel scale.
inline void edge_forms(const EdgeSet& s, std::span<const double* const> x, std::span<double* const> grads,
                       std::span<double> sums, std::size_t n, const EvalOptions& opt) {
    const int states = static_cast<int>(x.size());
    const bool want_grad = !grads.empty();
    for (int q = 0; q < states; ++q) {
        sums[q] = 0.0;
        if (want_grad) std::fill(grads[q], grads[q] + n, 0.0);
    }
    if (s.size() == 0) return;
    const unsigned chunks = opt.reproducible ? kReproducibleChunks : std::max(1u, opt.threads);
    if (chunks == 1) {
        if (want_grad)
            rows_dispatch<true>(s, states, 0, s.row_ptr.size() - 1, x.data(), grads.data(), sums.data());
        else
            rows_dispatch<false>(s, states, 0, s.row_ptr.size() - 1, x.data(), nullptr, sums.data());
        return;
    }
    const auto cut = row_chunks(s, chunks);
    std::vector<std::vector<double>> part_sums(chunks, std::vector<double>(states, 0.0));
    std::vector<std::vector<double>> part_grad(want_grad ? chunks : 0);
    parallel_for(chunks, opt.threads, [&](std::size_t c) {
        if (cut[c] == cut[c + 1]) return;
        if (want_grad) {
            part_grad[c].assign(static_cast<std::size_t>(states) * n, 0.0);
            std::vector<double*> gp(states);
            for (int q = 0; q < states; ++q) gp[q] = part_grad[c].data() + q * n;
            rows_dispatch<true>(s, states, cut[c], cut[c + 1], x.data(), gp.data(), part_sums[c].data());
        } else {
            rows_dispatch<false>(s, states, cut[c], cut[c + 1], x.data(), nullptr, part_sums[c].data());
        }
    });
    for (unsigned c = 0; c < chunks; ++c) {
        for (int q = 0; q < states; ++q) sums[q] += part_sums[c][q];
        if (want_grad && !part_grad[c].empty()) {
            for (int q = 0; q < states; ++q) {
                const double* src = part_grad[c].data() + q * n;
                for (std::size_t i = 0; i < n; ++i) grads[q][i] += src[i];
            }
        }
    }
}

inline void check_dimension(const Instance& inst, std::size_t size) {
    if (size != inst.n) {
        throw std::invalid_argument("vector length " + std::to_string(size) + " does not match instance size " +
                                    std::to_string(inst.n));
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Coupling scales of an instance re-targeted to other noise levels (same p, same draws).
inline std::pair<double, double> channel_scales(const Instance& inst, const ModelParams& params) {
    if (params.p != inst.params.p) throw std::invalid_argument("tensor order differs from the instance");
    return {inst.tensor.scale * std::sqrt(inst.params.delta_p / params.delta_p),
            inst.matrix.scale * std::sqrt(inst.params.delta_2 / params.delta_2)};
}

}  // namespace detail

inline double overlap(const Instance& inst, std::span<const double> sigma) {
    detail::check_dimension(inst, sigma.size());
    return detail::dot(sigma, inst.signal) / inst.n;
}

/// Evaluates several configurations against the same couplings in one sweep over the edges.
/// State q uses params[q] (which must share p with the instance; Delta_p and Delta_2 may
/// differ, rescaling the stored draws). grads may be empty to skip gradients.
inline void evaluate_many(const Instance& inst, std::span<const ModelParams> params,
                          std::span<const double* const> sigmas, std::span<double* const> grads,
                          std::span<Observables> out, const EvalOptions& opt = {}) {
    const std::size_t states = sigmas.size();
    if (params.size() != states || out.size() != states || (!grads.empty() && grads.size() != states)) {
        throw std::invalid_argument("evaluate_many: mismatched state counts");
    }
    if (states == 0) return;
    const std::size_t n = inst.n;
    const bool want_grad = !grads.empty();
    std::vector<double> st(states), sm(states);
    std::vector<double> gbuf(want_grad ? states * n : 0);
    std::vector<double*> gmat(want_grad ? states : 0);
    for (std::size_t q = 0; q < gmat.size(); ++q) gmat[q] = gbuf.data() + q * n;

    std::span<double* const> tensor_grads = want_grad ? grads : std::span<double* const>{};
    detail::edge_forms(inst.tensor, sigmas, tensor_grads, st, n, opt);
    detail::edge_forms(inst.matrix, sigmas, std::span<double* const>(gmat), sm, n, opt);

    const double nd = static_cast<double>(n);
    for (std::size_t q = 0; q < states; ++q) {
        const CovFn Q(params[q]);
        const auto [scale_t, scale_m] = detail::channel_scales(inst, params[q]);
        std::span<const double> s(sigmas[q], n);
        const double m = detail::dot(s, inst.signal) / nd;
        Observables& o = out[q];
        o.m = m;
        o.eps_p = -scale_t * st[q] / nd - Q.tensor(m, 0);
        o.eps_2 = -scale_m * sm[q] / nd - Q.matrix(m, 0);
        o.eps = o.eps_p + o.eps_2;
        if (want_grad) {
            double* g = grads[q];
            const double* gm = gmat[q];
            const double spike = Q.d1(m);
            for (std::size_t i = 0; i < n; ++i) {
                g[i] = -scale_t * g[i] - scale_m * gm[i] - spike * inst.signal[i];
            }
            o.mu = -detail::dot(std::span<const double>(g, n), s) / nd;
        } else {
            o.mu = -(params[q].p * o.eps_p + 2.0 * o.eps_2);
        }
    }
}

/// Observables at sigma; when grad is non-empty it receives grad L (length n).
inline Observables evaluate(const Instance& inst, std::span<const double> sigma, std::span<double> grad = {},
                            const EvalOptions& opt = {}) {
    detail::check_dimension(inst, sigma.size());
    if (!grad.empty()) detail::check_dimension(inst, grad.size());
    const double* sp = sigma.data();
    double* gp = grad.data();
    Observables out;
    evaluate_many(inst, std::span<const ModelParams>(&inst.params, 1), std::span<const double* const>(&sp, 1),
                  grad.empty() ? std::span<double* const>{} : std::span<double* const>(&gp, 1),
                  std::span<Observables>(&out, 1), opt);
    return out;
}

/// A configuration on the sphere of squared norm n with its cached observables.
struct StateVector {
    std::vector<double> sigma;
    Observables cached;

    static StateVector random(std::uint32_t n, std::uint64_t seed) {
        auto rng = detail::make_stream(seed, 7);
        return StateVector{detail::sphere_point(n, rng), {}};
    }

    /// Takes any non-zero vector and rescales it onto the sphere.
    static StateVector from(std::vector<double> v) {
        StateVector s{std::move(v), {}};
        s.renormalize();
        return s;
    }

    double squared_norm() const { return detail::dot(sigma, sigma); }

    void renormalize() {
        const double norm2 = squared_norm();
        if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
            throw NumericalError("cannot renormalize a zero or non-finite configuration");
        }
        const double f = std::sqrt(static_cast<double>(sigma.size()) / norm2);
        for (auto& x : sigma) x *= f;
    }

    const Observables& refresh(const Instance& inst, const EvalOptions& opt = {}) {
        cached = evaluate(inst, sigma, {}, opt);
        return cached;
    }
};

inline Energies loss(const Instance& inst, const StateVector& state, const EvalOptions& opt = {}) {
    const Observables o = evaluate(inst, state.sigma, {}, opt);
    return {o.eps, o.eps_p, o.eps_2};
}

struct GradientResult {
    std::vector<double> grad;
    double mu = 0.0;
    Observables observables;
};

inline GradientResult gradient(const Instance& inst, const StateVector& state, const EvalOptions& opt = {}) {
    GradientResult r;
    r.grad.assign(inst.n, 0.0);
    r.observables = evaluate(inst, state.sigma, r.grad, opt);
    r.mu = r.observables.mu;
    return r;
}

/// Euclidean Hessian of L at sigma applied to v.
inline std::vector<double> hessian_vector(const Instance& inst, std::span<const double> sigma,
                                          std::span<const double> v) {
    detail::check_dimension(inst, sigma.size());
    detail::check_dimension(inst, v.size());
    const std::size_t n = inst.n;
    std::vector<double> out(n, 0.0);
    auto add_edges = [&](const EdgeSet& set) {
        set.for_each([&](std::span<const std::uint32_t> idx, double coupling) {
            const std::size_t a = idx.size();
            // d/ds_r d/ds_u prod = product over the other members
            for (std::size_t r = 0; r < a; ++r) {
                double acc = 0.0;
                for (std::size_t u = 0; u < a; ++u) {
                    if (u == r) continue;
                    double prod = v[idx[u]];
                    for (std::size_t w = 0; w < a; ++w) {
                        if (w != r && w != u) prod *= sigma[idx[w]];
                    }
                    acc += prod;
                }
                out[idx[r]] -= coupling * acc;
            }
        });
    };
    add_edges(inst.tensor);
    add_edges(inst.matrix);
    const CovFn Q(inst.params);
    const double m = detail::dot(sigma, inst.signal) / n;
    const double proj = Q.d2(m) * detail::dot(inst.signal, v) / n;
    for (std::size_t i = 0; i < n; ++i) out[i] -= proj * inst.signal[i];
    return out;
}

}  // namespace smt
