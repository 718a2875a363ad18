// smt_cli: thresholds, phase diagram, complexity curves, CHSCK dynamics, finite-n gradient
// descent and Hessian spectra for the spiked matrix-tensor model.
//
// Every subcommand writes its CSV/JSON outputs and a manifest.json into --out.
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include "cli_support.hpp"

#include <smt/smt.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using cli::CsvWriter;
using cli::json;

struct Common {
    int p = 3;
    double delta_p = 1.0;
    std::vector<double> snr{2.0};
    std::uint64_t seed = 1;
    std::string out = ".";
    unsigned threads = 1;
    bool reproducible = false;

    smt::ModelParams params(double s) const { return smt::ModelParams::with_snr(p, delta_p, s); }

    double single_snr() const {
        if (snr.size() != 1) throw smt::ConfigError("this command takes exactly one --delta2-inv value");
        return snr.front();
    }

    smt::EvalOptions eval() const { return {threads, reproducible}; }

    fs::path dir() const {
        fs::create_directories(out);
        return fs::path(out);
    }

    json to_json() const {
        return {{"p", p}, {"delta_p", delta_p}, {"delta2_inv", snr}, {"seed", seed},
                {"threads", threads}, {"reproducible", reproducible}};
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--p", c.p, "tensor order")->check(CLI::Range(3, 16));
    app->add_option("--delta-p", c.delta_p, "tensor noise variance Delta_p")->check(CLI::PositiveNumber);
    app->add_option("--delta2-inv", c.snr, "matrix signal-to-noise 1/Delta_2 (several allowed)")
        ->check(CLI::PositiveNumber)
        ->delimiter(',');
    app->add_option("--seed", c.seed, "base seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1u, 256u));
    app->add_flag("--reproducible", c.reproducible, "thread-count independent reductions");
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n < 2) return {lo};
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

// ---------------------------------------------------------------------------------------------

struct ThresholdsCmd {
    bool triv = true;
};

void run_thresholds(const Common& c, const ThresholdsCmd& o, cli::Manifest& man) {
    const fs::path dir = c.dir();
    const smt::ModelParams base{c.p, c.delta_p, 0.5, 0.0};
    base.validate();
    const double gf = smt::gf_threshold(c.p, c.delta_p);
    auto with_d2 = [&](double d2) { return smt::ModelParams{c.p, c.delta_p, d2, 0.0}; };
    const auto theta_root =
        smt::numerics::bisect([&](double d2) { return smt::bbp_condition(with_d2(d2), 0.0) - 1.0; }, 1e-3, 1e3, 1e-14);
    const auto resid_root =
        smt::numerics::bisect([&](double d2) { return smt::stability_residual(with_d2(d2)); }, 1e-3, 1e3, 1e-14);
    if (!theta_root || !resid_root) throw smt::NumericalError("failed to bracket the gradient-flow threshold");
    const double agree = std::max({std::abs(gf - *theta_root), std::abs(gf - *resid_root),
                                   std::abs(*theta_root - *resid_root)});

    json doc = {{"p", c.p}, {"delta_p", c.delta_p}, {"delta2_gf", gf}, {"delta2_inv_gf", 1.0 / gf},
                {"delta2_gf_theta_root", *theta_root}, {"delta2_gf_residual_root", *resid_root},
                {"delta2_gf_max_disagreement", agree}, {"delta2_amp", 1.0}};
    // eps_th at the requested snr values (default 1/Delta_2 = 2)
    json eps = json::array();
    for (double s : c.snr) {
        const auto prm = c.params(s);
        eps.push_back({{"delta2_inv", s},
                       {"eps_th", smt::threshold_energy_kr(prm)},
                       {"eps_th_dyn", smt::threshold_energy_dyn(prm)},
                       {"eps_th_p", smt::threshold_energy_dyn(prm, smt::Channel::tensor)},
                       {"eps_th_2", smt::threshold_energy_dyn(prm, smt::Channel::matrix)},
                       {"mu_inf", smt::mu_infinity(prm, 0.0)}});
    }
    doc["threshold_energy"] = eps;
    if (o.triv) {
        const auto grid = smt::default_m_grid();
        const auto r = smt::trivialization_threshold(with_d2(gf), grid);
        doc["trivialization"] = {{"delta2_inv", r.delta2_inv ? json(*r.delta2_inv) : json(nullptr)},
                                 {"delta2", r.delta2_inv ? json(1.0 / *r.delta2_inv) : json(nullptr)},
                                 {"scanned_lo", r.scanned_lo}, {"scanned_hi", r.scanned_hi},
                                 {"construction", r.construction}};
    }
    cli::write_json(dir / "thresholds.json", doc);
    man.add_output(dir / "thresholds.json");

    std::printf("delta2_gf      %.10g  (1/Delta_2 = %.10g)\n", gf, 1.0 / gf);
    std::printf("  theta root   %.10g\n  residual root %.10g\n  max disagreement %.2e\n", *theta_root, *resid_root,
                agree);
    if (o.triv) {
        const auto& t = doc["trivialization"];
        if (t["delta2"].is_null()) {
            std::printf("delta2_triv    not bracketed in 1/Delta_2 in [%g, %g]\n", t["scanned_lo"].get<double>(),
                        t["scanned_hi"].get<double>());
        } else {
            std::printf("delta2_triv    %.6g  (1/Delta_2 = %.6g)\n", t["delta2"].get<double>(),
                        t["delta2_inv"].get<double>());
        }
    }
    std::printf("delta2_amp     1\n");
    for (const auto& e : eps) {
        std::printf("eps_th         %.10g  at 1/Delta_2 = %g\n", e["eps_th"].get<double>(),
                    e["delta2_inv"].get<double>());
    }
}

// ---------------------------------------------------------------------------------------------

struct PhaseCmd {
    std::vector<double> delta_p{0.5, 5.0};
    std::size_t delta_p_count = 10;
    std::vector<double> snr{0.5, 4.0};
    std::size_t snr_count = 36;
    std::size_t m_points = 96;
};

const char* region(double snr, double gf_inv, const std::optional<double>& triv_inv) {
    if (snr < gf_inv) return "gf_stuck";
    if (!triv_inv || snr < *triv_inv) return "gf_succeeds_spurious";
    return "trivial";
}

void run_phase(const Common& c, const PhaseCmd& o, cli::Manifest& man) {
    if (o.delta_p.size() != 2 || o.snr.size() != 2) throw smt::ConfigError("ranges take two values lo,hi");
    const fs::path dir = c.dir();
    const auto dps = linspace(o.delta_p[0], o.delta_p[1], o.delta_p_count);
    const auto snrs = linspace(o.snr[0], o.snr[1], o.snr_count);
    const auto grid = smt::default_m_grid(o.m_points);
    std::vector<double> gf_inv(dps.size());
    std::vector<smt::TrivializationResult> triv(dps.size());
    smt::parallel_for(dps.size(), c.threads, [&](std::size_t i) {
        const double gf = smt::gf_threshold(c.p, dps[i]);
        gf_inv[i] = 1.0 / gf;
        triv[i] = smt::trivialization_threshold({c.p, dps[i], gf, 0.0}, grid);
    });

    CsvWriter b(dir / "phase_boundaries.csv", {"delta_p", "delta2_inv_gf", "delta2_inv_triv", "delta2_inv_amp"});
    for (std::size_t i = 0; i < dps.size(); ++i) {
        b << dps[i] << gf_inv[i] << (triv[i].delta2_inv ? cli::num(*triv[i].delta2_inv) : std::string("nan")) << 1.0;
        b.end_row();
    }
    CsvWriter r(dir / "phase_diagram.csv", {"delta_p", "delta2_inv", "region", "amp_succeeds"});
    for (std::size_t i = 0; i < dps.size(); ++i) {
        for (double s : snrs) {
            r << dps[i] << s << region(s, gf_inv[i], triv[i].delta2_inv) << (s > 1.0 ? "1" : "0");
            r.end_row();
        }
    }
    man.add_output(b.path());
    man.add_output(r.path());
    man["regions"] = {{"gf_stuck", "1/Delta_2 below the gradient-flow line"},
                      {"gf_succeeds_spurious", "gradient flow succeeds while spurious minima remain"},
                      {"trivial", "no spurious minimum with positive complexity"}};
}

// ---------------------------------------------------------------------------------------------

struct ComplexityCmd {
    double m = 0.0;
    std::vector<double> eps{-2.4, -1.0};
    std::size_t count = 701;
};

json zero_crossings(const std::vector<smt::ComplexityPoint>& pts, bool minima) {
    json out = json::array();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double a = minima ? smt::value_or_neg_inf(pts[i - 1].sigma_minima) : *pts[i - 1].sigma_stationary;
        const double b = minima ? smt::value_or_neg_inf(pts[i].sigma_minima) : *pts[i].sigma_stationary;
        if ((a > 0.0) != (b > 0.0)) out.push_back({pts[i - 1].epsilon, pts[i].epsilon});
    }
    return out;
}

void run_complexity(const Common& c, const ComplexityCmd& o, cli::Manifest& man) {
    if (o.eps.size() != 2) throw smt::ConfigError("--eps takes two values lo,hi");
    if (!(std::abs(o.m) < 1.0)) throw smt::ConfigError("--m must satisfy |m| < 1");
    const fs::path dir = c.dir();
    const auto grid = linspace(o.eps[0], o.eps[1], o.count);
    json summary = json::array();
    for (double s : c.snr) {
        const auto prm = c.params(s);
        const auto curve = smt::complexity_curve(prm, o.m, grid, c.threads);
        CsvWriter w(dir / ("complexity_snr" + cli::tag(s) + ".csv"),
                    {"m", "epsilon", "epsilon_p", "epsilon_2", "sigma_stationary", "sigma_minima", "t", "theta",
                     "classification"});
        for (const auto& pt : curve.points) {
            w << pt.m << pt.epsilon << pt.epsilon_p << pt.epsilon_2 << *pt.sigma_stationary
              << (pt.sigma_minima ? cli::num(*pt.sigma_minima) : std::string("-inf")) << pt.t << pt.theta
              << smt::to_string(pt.classification);
            w.end_row();
        }
        man.add_output(w.path());
        summary.push_back({{"delta2_inv", s},
                           {"csv", w.path().filename().string()},
                           {"eps_th", smt::threshold_energy_kr(prm)},
                           {"rs_caveat", curve.rs_caveat},
                           {"stationary_zero_crossings", zero_crossings(curve.points, false)},
                           {"minima_zero_crossings", zero_crossings(curve.points, true)}});
    }
    cli::write_json(dir / "complexity_summary.json", summary);
    man.add_output(dir / "complexity_summary.json");
}

// ---------------------------------------------------------------------------------------------

struct ChsckCmd {
    smt::SolverConfig solver;
    std::string integrator = "heun";
    std::size_t every = 1;
    bool dump = false;
    bool fit = false;
};

void run_chsck(const Common& c, ChsckCmd o, cli::Manifest& man) {
    o.solver.integrator = o.integrator == "euler" ? smt::Integrator::euler : smt::Integrator::heun;
    o.solver.threads = c.threads;
    o.solver.validate();
    if (o.every < 1) throw smt::ConfigError("--every must be >= 1");
    const fs::path dir = c.dir();
    json summary = json::array();
    for (double s : c.snr) {
        const auto prm = c.params(s);
        const auto g = smt::solve(prm, o.solver);
        CsvWriter w(dir / ("chsck_snr" + cli::tag(s) + ".csv"),
                    {"t", "m", "mu", "eps", "eps_p", "eps_2", "t_param", "support_lo", "support_hi"});
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (i % o.every != 0 && i + 1 != g.size()) continue;
            const auto e = smt::energy_of(g, i);
            const auto [lo, hi] = smt::support_edges(prm, g, i);
            w << g.time(i) << g.m()[i] << g.mu()[i] << e.eps << e.eps_p << e.eps_2 << smt::t_parameter(prm, g, i) << lo
              << hi;
            w.end_row();
        }
        man.add_output(w.path());
        const std::size_t last = g.size() - 1;
        json item = {{"delta2_inv", s},
                     {"csv", w.path().filename().string()},
                     {"t_end", g.time(last)},
                     {"eps_end", smt::energy_of(g, last).eps},
                     {"mu_end", g.mu()[last]},
                     {"m_end", g.m()[last]},
                     {"eps_th", smt::threshold_energy_dyn(prm)},
                     {"mu_inf", smt::mu_infinity(prm, 0.0)}};
        if (o.fit) {
            const auto f = smt::fit_instability(g, o.solver.t_max);
            item["lambda"] = f.rate;
            item["lambda_window"] = {f.window_lo, f.window_hi};
        }
        if (o.dump) {
            const fs::path bin = dir / ("chsck_snr" + cli::tag(s) + ".bin");
            smt::write_grid(g, bin.string());
            man.add_output(bin);
        }
        summary.push_back(item);
    }
    cli::write_json(dir / "chsck_summary.json", summary);
    man.add_output(dir / "chsck_summary.json");
}

// ---------------------------------------------------------------------------------------------

struct SimulateCmd {
    std::uint32_t n = 1023;
    std::size_t instances = 10;
    smt::RunConfig run;
    double stop = 0.0;
    bool dense = false;
    bool keep_runs = false;
};

void run_simulate(const Common& c, SimulateCmd o, cli::Manifest& man) {
    if (o.stop > 0.0) o.run.stop_overlap = o.stop;
    o.run.validate();
    const fs::path dir = c.dir();
    std::vector<smt::ModelParams> prms;
    for (double s : c.snr) prms.push_back(c.params(s));
    smt::BatchOptions bo;
    bo.diluted = !o.dense;
    bo.base_seed = c.seed;
    bo.eval = c.eval();
    bo.keep_runs = true;
    const auto batches = smt::batch_many(prms, o.n, o.instances, o.run, bo);
    json summary = json::array();
    for (const auto& b : batches) {
        const std::string t = cli::tag(b.params.snr());
        CsvWriter w(dir / ("batch_snr" + t + ".csv"), {"t", "eps_mean", "eps_std", "m_abs_mean", "m_abs_std"});
        for (std::size_t i = 0; i < b.times.size(); ++i) {
            w << b.times[i] << b.eps_mean[i] << b.eps_std[i] << b.m_abs_mean[i] << b.m_abs_std[i];
            w.end_row();
        }
        man.add_output(w.path());
        CsvWriter ow(dir / ("outcomes_snr" + t + ".csv"),
                     {"instance_seed", "m_final", "eps_final", "steps_run", "success"});
        for (const auto& out : b.outcomes) {
            ow << std::to_string(out.instance_seed) << out.m_final << out.eps_final << out.steps_run
               << (out.success ? "1" : "0");
            ow.end_row();
        }
        man.add_output(ow.path());
        json warnings = json::array();
        for (std::size_t k = 0; k < b.runs.size(); ++k) {
            const auto& r = b.runs[k];
            for (const auto& msg : r.warnings) {
                warnings.push_back({{"run", k}, {"message", msg}});
                std::fprintf(stderr, "warning: 1/Delta_2 = %s, run %zu: %s\n", t.c_str(), k, msg.c_str());
            }
            if (!o.keep_runs) continue;
            CsvWriter rw(dir / ("run_snr" + t + "_" + std::to_string(k) + ".csv"),
                         {"t", "eps", "eps_p", "eps_2", "m", "mu"});
            for (std::size_t i = 0; i < r.size(); ++i) {
                rw << r.times[i] << r.eps[i] << r.eps_p[i] << r.eps_2[i] << r.m[i] << r.mu[i];
                rw.end_row();
            }
            man.add_output(rw.path());
        }
        summary.push_back({{"delta2_inv", b.params.snr()},
                           {"successes", b.successes()},
                           {"runs", b.outcomes.size()},
                           {"eps_th", smt::threshold_energy_kr(b.params)},
                           {"warnings", warnings}});
        std::printf("1/Delta_2 = %s: %zu/%zu runs reached |m| > 0.5\n", t.c_str(), b.successes(), b.outcomes.size());
    }
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < o.instances; ++k) seeds.push_back(smt::instance_seed(c.seed, k));
    man["instance_seeds"] = seeds;
    cli::write_json(dir / "simulate_summary.json", summary);
    man.add_output(dir / "simulate_summary.json");
}

// ---------------------------------------------------------------------------------------------

struct HessianCmd {
    std::string mode = "theory";
    std::optional<double> t;
    std::optional<double> theta;
    std::uint32_t n = 1000;
    bool dense_instance = false;
    smt::RunConfig run;
    std::size_t count = 10;
    std::size_t density_points = 801;
};

void write_theory(const fs::path& path, const smt::SpectrumSpec& spec, std::size_t points, cli::Manifest& man) {
    CsvWriter w(path, {"lambda", "density"});
    for (double l : linspace(spec.support_lo, spec.support_hi, points)) {
        w << l << smt::bulk_density(spec, l);
        w.end_row();
    }
    man.add_output(path);
}

json spec_json(const smt::SpectrumSpec& s) {
    return {{"scale", s.scale}, {"t", s.t}, {"theta", s.theta}, {"support_lo", s.support_lo},
            {"support_hi", s.support_hi}, {"isolated", s.isolated ? json(*s.isolated) : json(nullptr)}};
}

void run_hessian(const Common& c, HessianCmd o, cli::Manifest& man) {
    const fs::path dir = c.dir();
    const auto prm = c.params(c.single_snr());
    json summary;
    if (o.mode == "theory") {
        // default: threshold states (t = 2) at zero overlap
        const double t = o.t.value_or(2.0);
        const double theta = o.theta.value_or(smt::bbp_condition(prm, 0.0));
        const auto spec = smt::make_spectrum(prm, t, theta);
        write_theory(dir / "spectrum_theory.csv", spec, o.density_points, man);
        summary = spec_json(spec);
    } else if (o.mode == "dense" || o.mode == "extremal") {
        o.run.validate();
        const auto inst = smt::generate_instance(prm, o.n, c.seed, !o.dense_instance);
        o.run.seed = c.seed;
        const auto tr = smt::run_gd(inst, o.run, std::nullopt, c.eval());
        const auto obs = smt::evaluate(inst, tr.final_sigma, {}, c.eval());
        const auto spec = smt::spectrum_at(prm, obs.m, obs.eps_p, obs.eps_2);
        smt::ExtremalOptions eo;
        eo.count = o.count;
        eo.seed = c.seed;
        const auto ev = smt::empirical_spectrum(inst, tr.final_sigma,
                                                o.mode == "dense" ? smt::SpectrumMode::dense : smt::SpectrumMode::extremal,
                                                eo);
        CsvWriter w(dir / "spectrum.csv", {"lambda"});
        for (double l : ev) {
            w << l;
            w.end_row();
        }
        man.add_output(w.path());
        write_theory(dir / "spectrum_theory.csv", spec, o.density_points, man);
        summary = spec_json(spec);
        summary["n"] = o.n;
        summary["mode"] = o.mode;
        summary["m"] = obs.m;
        summary["eps"] = obs.eps;
        summary["mu"] = obs.mu;
        summary["lambda_min"] = ev.front();
        summary["lambda_max"] = ev.back();
        if (o.mode == "dense") summary["ks_distance"] = smt::ks_distance(ev, spec);
        summary["warnings"] = tr.warnings;
        for (const auto& msg : tr.warnings) std::fprintf(stderr, "warning: %s\n", msg.c_str());
    } else {
        throw smt::ConfigError("--mode must be theory, dense or extremal");
    }
    cli::write_json(dir / "spectrum.json", summary);
    man.add_output(dir / "spectrum.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spiked matrix-tensor landscape and dynamics toolkit"};
    app.set_config("--config", "", "key = value file; keys are long option names, [section] per subcommand");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", cli::kToolVersion);

    Common common;
    ThresholdsCmd th;
    PhaseCmd ph;
    ComplexityCmd cx;
    ChsckCmd ch;
    SimulateCmd sim;
    HessianCmd hs;

    auto* thresholds = app.add_subcommand("thresholds", "gradient-flow, trivialization and AMP thresholds");
    add_common(thresholds, common);
    thresholds->add_flag("!--no-triv", th.triv, "skip the trivialization search");

    auto* phase = app.add_subcommand("phase-diagram", "region labels over a (Delta_p, 1/Delta_2) grid");
    add_common(phase, common);
    phase->add_option("--delta-p-range", ph.delta_p, "lo,hi")->delimiter(',')->expected(2);
    phase->add_option("--delta-p-count", ph.delta_p_count, "grid points in Delta_p");
    phase->add_option("--snr-range", ph.snr, "1/Delta_2 lo,hi")->delimiter(',')->expected(2);
    phase->add_option("--snr-count", ph.snr_count, "grid points in 1/Delta_2");
    phase->add_option("--m-points", ph.m_points, "overlap grid for the spurious-branch search");

    auto* complexity = app.add_subcommand("complexity", "annealed complexity curves at fixed overlap");
    add_common(complexity, common);
    complexity->add_option("--m", cx.m, "overlap with the signal");
    complexity->add_option("--eps", cx.eps, "energy range lo,hi")->delimiter(',')->expected(2);
    complexity->add_option("--count", cx.count, "energy grid points")->check(CLI::Range(2u, 1000000u));

    auto* chsck = app.add_subcommand("chsck", "integrate the two-time dynamical equations");
    add_common(chsck, common);
    chsck->add_option("--dt", ch.solver.dt, "time step");
    chsck->add_option("--t-max", ch.solver.t_max, "final time");
    chsck->add_option("--m0", ch.solver.m0, "initial overlap");
    chsck->add_option("--temperature", ch.solver.temperature, "Langevin temperature");
    chsck->add_option("--integrator", ch.integrator, "heun or euler")->check(CLI::IsMember({"heun", "euler"}));
    chsck->add_flag("--decimation", ch.solver.decimation, "halve the grid when full");
    chsck->add_option("--capacity", ch.solver.capacity, "grid rows (0: t_max/dt + 1)");
    chsck->add_option("--every", ch.every, "write every k-th row");
    chsck->add_flag("--dump", ch.dump, "write the binary two-time grid");
    chsck->add_flag("--fit-lambda", ch.fit, "fit ln m(t) on [0.5, 0.9] t_max");

    auto* simulate = app.add_subcommand("simulate", "finite-n gradient descent batches");
    add_common(simulate, common);
    simulate->add_option("--n", sim.n, "system size")->check(CLI::Range(3u, 65535u));
    simulate->add_option("--instances", sim.instances, "instances per 1/Delta_2")->check(CLI::Range(2u, 100000u));
    simulate->add_option("--steps", sim.run.steps, "gradient steps");
    simulate->add_option("--dt", sim.run.dt, "step size");
    simulate->add_option("--record-every", sim.run.record_every, "record every k-th step");
    simulate->add_option("--stop-overlap", sim.stop, "stop a run once |m| exceeds this (0: never)");
    simulate->add_flag("--dense", sim.dense, "all tensor entries instead of the diluted graph");
    simulate->add_flag("--keep-runs", sim.keep_runs, "write one CSV per run");

    auto* hessian = app.add_subcommand("hessian", "Hessian spectra, predicted or measured at a GD endpoint");
    add_common(hessian, common);
    hessian->add_option("--mode", hs.mode, "theory, dense or extremal")
        ->check(CLI::IsMember({"theory", "dense", "extremal"}));
    hessian->add_option("--t", hs.t, "shift parameter (theory mode)");
    hessian->add_option("--theta", hs.theta, "rank-one strength (theory mode)");
    hessian->add_option("--n", hs.n, "system size")->check(CLI::Range(3u, 65535u));
    hessian->add_flag("--dense-instance", hs.dense_instance, "all tensor entries instead of the diluted graph");
    hessian->add_option("--steps", hs.run.steps, "gradient steps before measuring");
    hessian->add_option("--dt", hs.run.dt, "step size");
    hessian->add_flag("--equator", hs.run.constrain_equator, "keep m = 0 during descent");
    hessian->add_option("--count", hs.count, "eigenvalues per end (extremal mode)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    cli::Manifest man(sub->get_name(), std::vector<std::string>(argv, argv + argc));
    man["params"] = common.to_json();
    man["config_text"] = sub->config_to_str(true, false);
    try {
        if (sub == thresholds) run_thresholds(common, th, man);
        if (sub == phase) run_phase(common, ph, man);
        if (sub == complexity) run_complexity(common, cx, man);
        if (sub == chsck) run_chsck(common, ch, man);
        if (sub == simulate) run_simulate(common, sim, man);
        if (sub == hessian) run_hessian(common, hs, man);
        man.write(common.dir());
    } catch (const smt::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const smt::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const smt::PhaseError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const smt::PreconditionError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
