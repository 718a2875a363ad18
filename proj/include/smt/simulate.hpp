#pragma once

// Discrete gradient descent on the sphere, s <- s - dt (grad L + mu s), followed by exact
// renormalization to squared norm n, with recorded observables and batch statistics.

#include "errors.hpp"
#include "instance.hpp"
#include "loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smt {

struct RunConfig {
    /// Stable while dt times the largest tangent curvature (about 4 sqrt(Q''(1)) near
    /// threshold) stays below 2; larger steps stall far above the threshold energy.
    double dt = 0.2;
    std::size_t steps = 500;
    std::uint64_t seed = 0;  // initial-condition stream
    std::size_t record_every = 1;
    /// Allowed per-step energy increase before a warning is logged.
    double slack = 1e-6;
    /// Remove the signal component after every step (keeps m = 0).
    bool constrain_equator = false;
    /// Stop a run once |m| exceeds this value.
    std::optional<double> stop_overlap;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (record_every < 1) throw ConfigError("record_every must be >= 1");
    }
};

struct Trajectory {
    std::vector<double> times, eps, eps_p, eps_2, m, mu;
    std::vector<std::string> warnings;
    std::vector<double> final_sigma;

    void record(double t, const Observables& o) {
        times.push_back(t);
        eps.push_back(o.eps);
        eps_p.push_back(o.eps_p);
        eps_2.push_back(o.eps_2);
        m.push_back(o.m);
        mu.push_back(o.mu);
    }
    std::size_t size() const { return times.size(); }
};

namespace detail {

inline void remove_component(std::span<double> v, std::span<const double> dir) {
    const double c = dot(v, dir) / dot(dir, dir);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * dir[i];
}

}  // namespace detail

/// Runs one trajectory per entry of `params` on the shared couplings of `inst` (see
/// evaluate_many), each from its own initial condition.
inline std::vector<Trajectory> run_gd_many(const Instance& inst, std::span<const ModelParams> params,
                                           const RunConfig& config, std::vector<std::vector<double>> init,
                                           const EvalOptions& opt = {}) {
    config.validate();
    const std::size_t states = params.size();
    if (init.size() != states) throw std::invalid_argument("one initial condition per state is required");
    const std::size_t n = inst.n;
    std::vector<Trajectory> out(states);
    std::vector<std::vector<double>> grads(states, std::vector<double>(n));
    std::vector<Observables> obs(states);
    std::vector<std::size_t> active;
    for (std::size_t q = 0; q < states; ++q) {
        detail::check_dimension(inst, init[q].size());
        const double norm2 = detail::dot(init[q], init[q]);
        if (std::abs(norm2 - static_cast<double>(n)) > 1e-8 * n) {
            throw std::invalid_argument("initial condition must have squared norm n");
        }
        if (config.constrain_equator) {
            detail::remove_component(init[q], inst.signal);
            StateVector s = StateVector::from(std::move(init[q]));
            init[q] = std::move(s.sigma);
        }
        active.push_back(q);
    }

    auto evaluate_active = [&] {
        std::vector<ModelParams> ps;
        std::vector<const double*> xs;
        std::vector<double*> gs;
        std::vector<Observables> os(active.size());
        for (std::size_t q : active) {
            ps.push_back(params[q]);
            xs.push_back(init[q].data());
            gs.push_back(grads[q].data());
        }
        evaluate_many(inst, ps, xs, gs, os, opt);
        for (std::size_t a = 0; a < active.size(); ++a) obs[active[a]] = os[a];
    };

    evaluate_active();
    for (std::size_t q : active) out[q].record(0.0, obs[q]);

    for (std::size_t step = 1; step <= config.steps && !active.empty(); ++step) {
        std::vector<double> previous(states);
        for (std::size_t q : active) {
            previous[q] = obs[q].eps;
            auto& s = init[q];
            const auto& g = grads[q];
            const double mu = obs[q].mu;
            for (std::size_t i = 0; i < n; ++i) s[i] -= config.dt * (g[i] + mu * s[i]);
            if (config.constrain_equator) detail::remove_component(s, inst.signal);
            const double norm2 = detail::dot(s, s);
            if (!std::isfinite(norm2) || !(norm2 > 0.0)) {
                throw NumericalError("gradient descent produced a non-finite state at step " + std::to_string(step));
            }
            const double f = std::sqrt(static_cast<double>(n) / norm2);
            for (auto& x : s) x *= f;
        }
        evaluate_active();
        std::vector<std::size_t> still;
        for (std::size_t q : active) {
            Trajectory& tr = out[q];
            if (!std::isfinite(obs[q].eps)) {
                throw NumericalError("non-finite loss at step " + std::to_string(step));
            }
            if (obs[q].eps > previous[q] + config.slack) {
                if (tr.warnings.empty()) {
                    tr.warnings.push_back("energy increased by " + std::to_string(obs[q].eps - previous[q]) +
                                          " at step " + std::to_string(step) + "; consider a smaller dt");
                }
            }
            const bool stop = config.stop_overlap && std::abs(obs[q].m) > *config.stop_overlap;
            if (step % config.record_every == 0 || step == config.steps || stop) {
                tr.record(static_cast<double>(step) * config.dt, obs[q]);
            }
            if (!stop) still.push_back(q);
        }
        active = std::move(still);
    }
    for (std::size_t q = 0; q < states; ++q) out[q].final_sigma = std::move(init[q]);
    return out;
}

/// Single run from a random start (seeded by config.seed) or from `init`.
inline Trajectory run_gd(const Instance& inst, const RunConfig& config,
                         std::optional<std::vector<double>> init = std::nullopt, const EvalOptions& opt = {}) {
    std::vector<std::vector<double>> starts;
    starts.push_back(init ? std::move(*init) : StateVector::random(inst.n, config.seed).sigma);
    auto runs = run_gd_many(inst, std::span<const ModelParams>(&inst.params, 1), config, std::move(starts), opt);
    return std::move(runs.front());
}

struct RunOutcome {
    std::uint64_t instance_seed = 0;
    double m_final = 0.0;
    double eps_final = 0.0;
    double steps_run = 0.0;
    bool success = false;  // |m_final| > 0.5
};

struct BatchResult {
    ModelParams params;
    std::vector<double> times, eps_mean, eps_std, m_abs_mean, m_abs_std;
    std::vector<RunOutcome> outcomes;
    std::vector<Trajectory> runs;

    std::size_t successes() const {
        return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [](auto& o) { return o.success; }));
    }
};

struct BatchOptions {
    bool diluted = true;
    std::uint64_t base_seed = 1;
    EvalOptions eval;
    bool keep_runs = true;
};

inline std::uint64_t instance_seed(std::uint64_t base, std::size_t k) {
    auto rng = detail::make_stream(base, 1000 + k);
    return rng();
}

namespace detail {

inline void summarize(BatchResult& b) {
    // runs that stopped early hold their last recorded values
    std::size_t len = 0;
    const Trajectory* longest = nullptr;
    for (auto& r : b.runs) {
        if (r.size() > len) {
            len = r.size();
            longest = &r;
        }
    }
    if (!longest) return;
    b.times = longest->times;
    const double count = static_cast<double>(b.runs.size());
    b.eps_mean.assign(len, 0.0);
    b.eps_std.assign(len, 0.0);
    b.m_abs_mean.assign(len, 0.0);
    b.m_abs_std.assign(len, 0.0);
    // sample standard deviation (n - 1), two passes
    auto at = [](const std::vector<double>& v, std::size_t i) { return v[std::min(i, v.size() - 1)]; };
    for (std::size_t i = 0; i < len; ++i) {
        double se = 0, sm = 0;
        for (auto& r : b.runs) {
            se += at(r.eps, i);
            sm += std::abs(at(r.m, i));
        }
        b.eps_mean[i] = se / count;
        b.m_abs_mean[i] = sm / count;
        double ve = 0, vm = 0;
        for (auto& r : b.runs) {
            const double de = at(r.eps, i) - b.eps_mean[i], dm = std::abs(at(r.m, i)) - b.m_abs_mean[i];
            ve += de * de;
            vm += dm * dm;
        }
        b.eps_std[i] = std::sqrt(ve / (count - 1.0));
        b.m_abs_std[i] = std::sqrt(vm / (count - 1.0));
    }
}

}  // namespace detail

/// `instances` runs for every entry of `params` (all sharing p and Delta_p). Run k of every
/// entry uses the same instance draws (seed derived from base_seed and k) and the same start.
inline std::vector<BatchResult> batch_many(std::span<const ModelParams> params, std::uint32_t n,
                                           std::size_t instances, const RunConfig& config,
                                           const BatchOptions& options = {}) {
    if (instances < 2) throw ConfigError("a batch needs at least two instances");
    if (params.empty()) throw ConfigError("no parameter sets given");
    std::vector<BatchResult> out(params.size());
    for (std::size_t q = 0; q < params.size(); ++q) {
        out[q].params = params[q];
        if (params[q].p != params[0].p) throw ConfigError("batched parameter sets must share p");
    }
    for (std::size_t k = 0; k < instances; ++k) {
        const std::uint64_t seed = instance_seed(options.base_seed, k);
        const Instance inst = generate_instance(params[0], n, seed, options.diluted);
        RunConfig rc = config;
        rc.seed = seed;
        const auto start = StateVector::random(n, seed).sigma;
        std::vector<std::vector<double>> starts(params.size(), start);
        auto runs = run_gd_many(inst, params, rc, std::move(starts), options.eval);
        for (std::size_t q = 0; q < params.size(); ++q) {
            Trajectory& tr = runs[q];
            RunOutcome o;
            o.instance_seed = seed;
            o.m_final = tr.m.back();
            o.eps_final = tr.eps.back();
            o.steps_run = tr.times.back() / config.dt;
            o.success = std::abs(o.m_final) > 0.5;
            out[q].outcomes.push_back(o);
            tr.final_sigma.clear();
            out[q].runs.push_back(std::move(tr));
        }
    }
    for (auto& b : out) {
        detail::summarize(b);
        if (!options.keep_runs) b.runs.clear();
    }
    return out;
}

inline BatchResult batch(const ModelParams& params, std::uint32_t n, std::size_t instances, const RunConfig& config,
                         const BatchOptions& options = {}) {
    return std::move(batch_many(std::span<const ModelParams>(&params, 1), n, instances, config, options).front());
}

}  // namespace smt
