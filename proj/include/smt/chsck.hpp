#pragma once

// Two-time integrator for the closed correlation / response / overlap equations of
// gradient flow (Langevin dynamics at temperature T) on the spiked matrix-tensor loss.
//
// Unknowns on a uniform grid t_i = i h: C(t_i, t_j) (symmetric, C(t,t) = 1), R(t_i, t_j)
// for j <= i (R(t,t) = 1, the t' -> t^- limit), m(t_i); mu(t_i) is algebraic. Memory
// integrals use the trapezoid rule over the stored history; rows advance with an explicit
// Euler step or a Heun predictor-corrector. Storage is three capacity x capacity arrays
// (C, R and R transposed) so every memory integral is a contiguous dot product.

#include "errors.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace smt {

enum class Integrator { euler, heun };

struct SolverConfig {
    double dt = 0.05;
    double t_max = 200.0;
    double m0 = 0.0;
    double temperature = 0.0;
    Integrator integrator = Integrator::heun;
    /// When the grid is full, drop every other time point and double dt.
    bool decimation = false;
    /// Grid rows; 0 means t_max / dt + 1 (or 2001 with decimation).
    std::size_t capacity = 0;
    unsigned threads = 1;

    std::size_t rows() const {
        if (capacity != 0) return capacity;
        if (decimation) return 2001;
        return static_cast<std::size_t>(std::llround(t_max / dt)) + 1;
    }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
        if (!(t_max > 0.0) || !std::isfinite(t_max)) throw ConfigError("t_max must be positive");
        if (!(m0 >= 0.0 && m0 < 1.0)) throw ConfigError("m0 must lie in [0, 1)");
        if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
        const std::size_t need = static_cast<std::size_t>(std::llround(t_max / dt)) + 1;
        if (!decimation && rows() < need) {
            throw ConfigError("t_max / dt exceeds the grid capacity; enable decimation or raise capacity");
        }
        if (rows() < 4) throw ConfigError("grid capacity must be at least 4 rows");
        if (rows() > 20000) throw ConfigError("grid capacity above 20000 rows needs > 9 GB");
    }
};

class TwoTimeGrid {
public:
    TwoTimeGrid() = default;
    TwoTimeGrid(std::size_t capacity, double dt)
        : cap_(capacity), dt_(dt), c_(capacity * capacity, 0.0), r_(capacity * capacity, 0.0),
          rt_(capacity * capacity, 0.0) {}

    /// Number of filled rows.
    std::size_t size() const { return m_.size(); }
    std::size_t capacity() const { return cap_; }
    /// Current grid spacing (doubles at each decimation).
    double dt() const { return dt_; }

    double time(std::size_t i) const { return times_[i]; }
    double C(std::size_t i, std::size_t j) const { return c_[i * cap_ + j]; }
    /// Zero above the diagonal.
    double R(std::size_t i, std::size_t j) const { return j > i ? 0.0 : r_[i * cap_ + j]; }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& m() const { return m_; }
    const std::vector<double>& mu() const { return mu_; }
    const std::vector<double>& eps_p() const { return eps_p_; }
    const std::vector<double>& eps_2() const { return eps_2_; }

    /// Raw row access for the solver.
    double* c_row(std::size_t i) { return c_.data() + i * cap_; }
    double* r_row(std::size_t i) { return r_.data() + i * cap_; }
    double* rt_row(std::size_t i) { return rt_.data() + i * cap_; }
    const double* c_row(std::size_t i) const { return c_.data() + i * cap_; }
    const double* r_row(std::size_t i) const { return r_.data() + i * cap_; }
    const double* rt_row(std::size_t i) const { return rt_.data() + i * cap_; }

private:
    friend class ChsckSolver;
    std::size_t cap_ = 0;
    double dt_ = 0.0;
    std::vector<double> c_, r_, rt_;
    std::vector<double> times_, m_, mu_, eps_p_, eps_2_;
};

namespace detail {

/// h * trapezoid sum of f[lo..hi] (inclusive); zero for an empty interval.
inline double trapezoid(const double* f, std::size_t lo, std::size_t hi, double h) {
    if (hi <= lo) return 0.0;
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += f[k];
    return h * (s - 0.5 * (f[lo] + f[hi]));
}

/// h * trapezoid sum of a[k] * b[k] over k in [lo, hi].
inline double trapezoid_dot(const double* a, const double* b, std::size_t lo, std::size_t hi, double h) {
    if (hi <= lo) return 0.0;
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += a[k] * b[k];
    return h * (s - 0.5 * (a[lo] * b[lo] + a[hi] * b[hi]));
}

}  // namespace detail

class ChsckSolver {
public:
    ChsckSolver(const ModelParams& params, const SolverConfig& config)
        : params_(params), config_(config), Q_(params) {
        config_.validate();
    }

    TwoTimeGrid solve() {
        const std::size_t cap = config_.rows();
        TwoTimeGrid g(cap, config_.dt);
        g.c_row(0)[0] = 1.0;
        g.r_row(0)[0] = 1.0;
        g.rt_row(0)[0] = 1.0;
        g.times_.push_back(0.0);
        g.m_.push_back(config_.m0);
        dC0_.assign(cap, 0.0);
        dR0_.assign(cap, 0.0);
        dC1_.assign(cap, 0.0);
        dR1_.assign(cap, 0.0);
        a_.assign(cap, 0.0);
        b_.assign(cap, 0.0);

        const double t_end = config_.t_max * (1.0 - 1e-12);
        while (g.times_.back() < t_end) {
            std::size_t i = g.size() - 1;
            if (i + 1 >= cap) {
                if (!config_.decimation) break;
                decimate(g);
                i = g.size() - 1;
            }
            step(g, i);
        }
        // observables of the last row
        const std::size_t last = g.size() - 1;
        double dm = 0.0;
        const double mu = row_derivatives(g, last, dC0_.data(), dR0_.data(), dm, false);
        g.mu_.push_back(mu);
        push_energies(g, last);
        return g;
    }

private:
    ModelParams params_;
    SolverConfig config_;
    CovFn Q_;
    std::vector<double> dC0_, dR0_, dC1_, dR1_, a_, b_, tmp_;

    /// Fills a_k = R(i,k) Q''(C(i,k)), b_k = Q'(C(i,k)); returns mu(t_i). With `full` also
    /// computes dC/dt(i, j), dR/dt(i, j) for j <= i and dm/dt(i).
    double row_derivatives(const TwoTimeGrid& g, std::size_t i, double* dC, double* dR, double& dm, bool full) {
        const double h = g.dt_;
        const double* ci = g.c_row(i);
        const double* ri = g.r_row(i);
        tmp_.resize(i + 1);
        for (std::size_t k = 0; k <= i; ++k) {
            const double c = ci[k];
            const double q1 = Q_.d1(c), q2 = Q_.d2(c);
            a_[k] = ri[k] * q2;
            b_[k] = q1;
            tmp_[k] = ri[k] * (q1 + q2 * c);
        }
        const double mi = g.m_[i];
        const double mu = config_.temperature + Q_.d1(mi) * mi + detail::trapezoid(tmp_.data(), 0, i, h);
        if (!full) return mu;

        for (std::size_t k = 0; k <= i; ++k) tmp_[k] = a_[k] * g.m_[k];
        dm = -mu * mi + Q_.d1(mi) + detail::trapezoid(tmp_.data(), 0, i, h);

        const double drive = Q_.d1(mi);
        parallel_for(i + 1, config_.threads, [&](std::size_t j) {
            const double i1 = detail::trapezoid_dot(a_.data(), g.c_row(j), 0, i, h);
            const double i2 = detail::trapezoid_dot(b_.data(), g.r_row(j), 0, j, h);
            const double i3 = detail::trapezoid_dot(a_.data(), g.rt_row(j), j, i, h);
            dC[j] = -mu * ci[j] + drive * g.m_[j] + i1 + i2;
            dR[j] = -mu * ri[j] + i3;
        });
        return mu;
    }

    void write_row(TwoTimeGrid& g, std::size_t i, const double* c, const double* r) {
        double* ci = g.c_row(i);
        double* ri = g.r_row(i);
        for (std::size_t j = 0; j < i; ++j) {
            ci[j] = c[j];
            g.c_row(j)[i] = c[j];
            ri[j] = r[j];
            g.rt_row(j)[i] = r[j];
        }
        ci[i] = 1.0;
        ri[i] = 1.0;
        g.rt_row(i)[i] = 1.0;
    }

    void step(TwoTimeGrid& g, std::size_t i) {
        const double h = g.dt_;
        double dm0 = 0.0;
        const double mu = row_derivatives(g, i, dC0_.data(), dR0_.data(), dm0, true);
        g.mu_.push_back(mu);
        push_energies(g, i);

        std::vector<double>& c_new = c_new_;
        std::vector<double>& r_new = r_new_;
        c_new.assign(i + 1, 0.0);
        r_new.assign(i + 1, 0.0);
        const double* ci = g.c_row(i);
        const double* ri = g.r_row(i);
        for (std::size_t j = 0; j <= i; ++j) {
            c_new[j] = ci[j] + h * dC0_[j];
            r_new[j] = ri[j] + h * dR0_[j];
        }
        double m_new = g.m_[i] + h * dm0;
        g.times_.push_back(g.times_[i] + h);
        g.m_.push_back(m_new);
        write_row(g, i + 1, c_new.data(), r_new.data());

        if (config_.integrator == Integrator::heun) {
            double dm1 = 0.0;
            row_derivatives(g, i + 1, dC1_.data(), dR1_.data(), dm1, true);
            for (std::size_t j = 0; j <= i; ++j) {
                c_new[j] = ci[j] + 0.5 * h * (dC0_[j] + dC1_[j]);
                r_new[j] = ri[j] + 0.5 * h * (dR0_[j] + dR1_[j]);
            }
            m_new = g.m_[i] + 0.5 * h * (dm0 + dm1);
            g.m_[i + 1] = m_new;
            write_row(g, i + 1, c_new.data(), r_new.data());
        }
        for (std::size_t j = 0; j <= i; ++j) {
            if (!std::isfinite(c_new[j]) || !std::isfinite(r_new[j])) {
                std::ostringstream msg;
                msg << "non-finite two-time function at (i, j) = (" << i + 1 << ", " << j << "), t = "
                    << g.times_[i + 1] << ", C = " << c_new[j] << ", R = " << r_new[j] << ", mu = " << mu;
                throw NumericalError(msg.str());
            }
        }
        if (!std::isfinite(m_new)) {
            throw NumericalError("non-finite overlap at step " + std::to_string(i + 1));
        }
    }

    void push_energies(TwoTimeGrid& g, std::size_t i) {
        const double h = g.dt_;
        const double* ci = g.c_row(i);
        const double* ri = g.r_row(i);
        const int p = params_.p;
        tmp_.resize(i + 1);
        // channel k: -(1/deg) [Q_k'(m) m + int R (Q_k'(C) + Q_k''(C) C)]
        for (std::size_t k = 0; k <= i; ++k) tmp_[k] = ri[k] * p * Q_.tensor(ci[k], 1);
        const double mi = g.m_[i];
        const double ep = -(Q_.tensor(mi, 1) * mi + detail::trapezoid(tmp_.data(), 0, i, h)) / p;
        for (std::size_t k = 0; k <= i; ++k) tmp_[k] = ri[k] * 2.0 * Q_.matrix(ci[k], 1);
        const double e2 = -(Q_.matrix(mi, 1) * mi + detail::trapezoid(tmp_.data(), 0, i, h)) / 2.0;
        g.eps_p_.push_back(ep);
        g.eps_2_.push_back(e2);
    }

    /// Keeps rows 0, 2, 4, ... and doubles the spacing.
    void decimate(TwoTimeGrid& g) {
        const std::size_t old = g.size();
        const std::size_t kept = (old + 1) / 2;
        for (std::size_t a = 0; a < kept; ++a) {
            for (std::size_t b = 0; b < kept; ++b) {
                g.c_row(a)[b] = g.c_row(2 * a)[2 * b];
                g.r_row(a)[b] = g.r_row(2 * a)[2 * b];
                g.rt_row(a)[b] = g.rt_row(2 * a)[2 * b];
            }
        }
        auto thin = [kept](std::vector<double>& v) {
            for (std::size_t a = 0; a < kept && 2 * a < v.size(); ++a) v[a] = v[2 * a];
            v.resize(std::min(kept, v.size()));
        };
        thin(g.times_);
        thin(g.m_);
        thin(g.mu_);
        thin(g.eps_p_);
        thin(g.eps_2_);
        // the last kept row gets its single-time observables recomputed on the next step
        g.mu_.resize(kept - 1);
        g.eps_p_.resize(kept - 1);
        g.eps_2_.resize(kept - 1);
        g.dt_ *= 2.0;
    }

    std::vector<double> c_new_, r_new_;
};

inline TwoTimeGrid solve(const ModelParams& params, const SolverConfig& config) {
    return ChsckSolver(params, config).solve();
}

struct ChannelEnergies {
    double eps = 0.0;
    double eps_p = 0.0;
    double eps_2 = 0.0;
};

inline ChannelEnergies energy_of(const TwoTimeGrid& grid, std::size_t i) {
    return {grid.eps_p().at(i) + grid.eps_2().at(i), grid.eps_p().at(i), grid.eps_2().at(i)};
}

/// t = -(p eps_p + 2 eps_2) / sqrt(Q''(1)).
inline double t_parameter(const ModelParams& params, const TwoTimeGrid& grid, std::size_t i) {
    return -(params.p * grid.eps_p().at(i) + 2.0 * grid.eps_2().at(i)) / CovFn(params).hessian_scale();
}

/// Semicircle edges sqrt(Q''(1)) (-2 + t), sqrt(Q''(1)) (2 + t) at row i.
inline std::pair<double, double> support_edges(const ModelParams& params, const TwoTimeGrid& grid, std::size_t i) {
    const double s = CovFn(params).hessian_scale();
    const double t = t_parameter(params, grid, i);
    return {s * (-2.0 + t), s * (2.0 + t)};
}

/// Index of the last row with time <= t.
inline std::size_t row_at(const TwoTimeGrid& grid, double t) {
    const auto& ts = grid.times();
    auto it = std::upper_bound(ts.begin(), ts.end(), t + 1e-9);
    return it == ts.begin() ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
}

struct InstabilityFit {
    double rate = 0.0;       // Lambda
    double intercept = 0.0;  // of ln m
    double window_lo = 0.0;
    double window_hi = 0.0;
    double m_end = 0.0;
};

/// Least-squares slope of ln m(t) on [0.5, 0.9] t_max of an existing solution.
inline InstabilityFit fit_instability(const TwoTimeGrid& grid, double t_max) {
    const double lo = 0.5 * t_max, hi = 0.9 * t_max;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.time(i);
        if (t < lo || t > hi) continue;
        const double m = grid.m()[i];
        if (!(m > 1e-300)) {
            throw NumericalError("overlap underflow (m <= 1e-300) at t = " + std::to_string(t) +
                                 "; raise m0 or shorten t_max");
        }
        if (m >= 0.01) {
            throw PreconditionError("overlap reached " + std::to_string(m) + " inside the fit window at t = " +
                                    std::to_string(t) + "; rerun with a smaller m0");
        }
        xs.push_back(t);
        ys.push_back(std::log(m));
    }
    if (xs.size() < 2) throw ConfigError("fit window holds fewer than two grid points");
    const auto [slope, intercept] = numerics::linear_fit(xs, ys);
    return {slope, intercept, lo, hi, grid.m().back()};
}

/// Growth rate Lambda of m(t) ~ delta exp(Lambda t) in the aging regime.
inline double instability_rate(const ModelParams& params, const SolverConfig& config) {
    if (!(config.m0 > 0.0)) throw ConfigError("instability_rate needs m0 > 0");
    return fit_instability(solve(params, config), config.t_max).rate;
}

// ---------------------------------------------------------------------------------------------
// Grid dump (little endian):
//   char[8] "SMTGRID1", u64 rows M, f64 times[M], f64 m[M], f64 mu[M], f64 eps_p[M], f64 eps_2[M],
//   f64 C lower triangle row by row (i = 0..M-1, j = 0..i), f64 R lower triangle likewise.
// ---------------------------------------------------------------------------------------------
inline void write_grid(const TwoTimeGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out.write("SMTGRID1", 8);
    const std::uint64_t rows = grid.size();
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    for (const auto* v : {&grid.times(), &grid.m(), &grid.mu(), &grid.eps_p(), &grid.eps_2()}) {
        out.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(rows * sizeof(double)));
    }
    for (std::size_t i = 0; i < rows; ++i) {
        out.write(reinterpret_cast<const char*>(grid.c_row(i)), static_cast<std::streamsize>((i + 1) * sizeof(double)));
    }
    for (std::size_t i = 0; i < rows; ++i) {
        out.write(reinterpret_cast<const char*>(grid.r_row(i)), static_cast<std::streamsize>((i + 1) * sizeof(double)));
    }
    if (!out) throw ConfigError("failed to write grid dump");
}

}  // namespace smt
