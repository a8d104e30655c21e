#pragma once

// The acceptance suite: every check runs against a parameter set (normally the
// shipped fixture) and reports one pass/fail row. Tolerances and budgets are
// fixed here, not configurable.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "battx/identify.hpp"
#include "battx/io.hpp"
#include "battx/ladder.hpp"
#include "battx/model.hpp"
#include "battx/profile.hpp"
#include "battx/simulate.hpp"
#include "battx/synth.hpp"

namespace battx::validate {

struct CheckResult {
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline Eigen::VectorXd rk4_linear(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  double current, Eigen::VectorXd v, double t_end, double dt) {
    auto f = [&](const Eigen::VectorXd& x) { return (a * x + b * current).eval(); };
    double t = 0.0;
    while (t < t_end - 1e-12) {
        const double h = std::min(dt, t_end - t);
        const Eigen::VectorXd k1 = f(v);
        const Eigen::VectorXd k2 = f(v + 0.5 * h * k1);
        const Eigen::VectorXd k3 = f(v + 0.5 * h * k2);
        const Eigen::VectorXd k4 = f(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return v;
}

/// Index of the nearest node of a log-spaced grid; defines the grid cell.
inline int log_cell_of(double value, double lo, double hi, int n) {
    const double l = std::log(value);
    int best = 0;
    double dist = 1e300;
    for (int i = 0; i < n; ++i) {
        const double node = std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1);
        if (std::abs(l - node) < dist) {
            dist = std::abs(l - node);
            best = i;
        }
    }
    return best;
}

struct SubCheck {
    std::string label;
    bool pass;
};

inline std::string render(const std::vector<SubCheck>& subs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (i) os << "; ";
        os << subs[i].label << (subs[i].pass ? " [ok]" : " [FAIL]");
    }
    return os.str();
}

inline bool all_pass(const std::vector<SubCheck>& subs) {
    for (const auto& s : subs)
        if (!s.pass) return false;
    return true;
}

inline double held_out_rms(const ModelParams& truth, const ModelParams& fitted, double rate_c) {
    synth::SynthSpec spec;
    spec.design = synth::Design::constant;
    spec.rate_c = rate_c;
    const Dataset held = synth::make_clean_dataset(truth, spec);

    ModelParams sim = fitted;
    sim.v_cut_low = -1e30;
    sim.v_cut_high = 1e30;
    CurrentProfile prof;
    prof.samples = {{0.0, held.current.front()}, {held.time.back() + 1e-9, held.current.front()}};
    prof.t_amb = held.t_amb;
    SimOptions opts;
    opts.soc0 = 1.0;
    opts.strict_bounds = false;
    const SimulationTrace tr = simulate(prof, sim, opts);
    std::vector<double> tt, uu;
    tt.reserve(tr.rows.size());
    for (const auto& r : tr.rows) {
        tt.push_back(r.time);
        uu.push_back(r.voltage);
    }
    double sse = 0.0;
    for (std::size_t k = 0; k < held.size(); ++k) {
        const double d = ident::detail::interp_series(tt, uu, held.time[k]) - held.voltage[k];
        sse += d * d;
    }
    return std::sqrt(sse / static_cast<double>(held.size()));
}

struct RoundTripOutcome {
    ident::PipelineResult pipeline;
    double ocv_curve_rms = 0.0;
    double seconds = 0.0;
};

inline RoundTripOutcome run_round_trip(const ModelParams& truth, double noise_mv,
                                       double noise_k, std::uint64_t seed, int threads) {
    const Stopwatch watch;
    synth::SynthSpec spec;
    spec.noise_mv = noise_mv;
    spec.temp_noise_k = noise_k;
    spec.seed = seed;
    ident::PipelineDatasets data;
    spec.design = synth::Design::ocv;
    data.ocv = synth::make_dataset(truth, spec);
    spec.design = synth::Design::ro;
    data.ro = synth::make_dataset(truth, spec);
    spec.design = synth::Design::solid;
    data.solid = synth::make_dataset(truth, spec);
    spec.design = synth::Design::thermal;
    data.thermal = synth::make_dataset(truth, spec);
    spec.design = synth::Design::electrolyte;
    data.electrolyte = synth::make_dataset(truth, spec);

    ident::FitContext ctx;
    ctx.nls.seed = seed;
    ctx.nls.max_threads = threads;

    RoundTripOutcome out;
    out.pipeline = ident::run_pipeline(data, truth, default_bounds(), ctx);

    double sse = 0.0;
    int n = 0;
    for (double s = 0.02; s <= 0.98 + 1e-12; s += 0.002) {
        const double d = ocv_us(s, out.pipeline.params) - ocv_us(s, truth);
        sse += d * d;
        ++n;
    }
    out.ocv_curve_rms = std::sqrt(sse / n);
    out.seconds = watch.seconds();
    return out;
}

inline bool same_file_bytes(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

} // namespace detail

/// Criterion 1: the electrolyte ladder's printed spectrum and Vandermonde.
inline CheckResult check_structural(const ModelParams& params) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "1 structural fixture (omega_e spectrum, Vandermonde)";
    const LadderSystem sys = build_omega_e(params);
    const bool eigs = sys.eigenvalues(0) == 0.0 && sys.eigenvalues(1) == -1.0 &&
                      sys.eigenvalues(2) == -3.0;
    const double psi[3][3] = {{1, 0, 0}, {1, -1, 1}, {1, -3, 9}};
    bool vand = true;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) vand = vand && sys.vandermonde(i, j) == psi[i][j];
    r.seconds = watch.seconds();
    r.pass = eigs && vand && r.seconds < 1e-3;
    std::ostringstream os;
    os << "eigenvalues {" << sys.eigenvalues(0) << ", " << sys.eigenvalues(1) << ", "
       << sys.eigenvalues(2) << "}, Vandermonde " << (vand ? "exact" : "mismatch");
    r.detail = os.str();
    return r;
}

/// Criterion 2: closed forms against RK4 on both ladders, 0.1..3 C, 1800 s.
inline CheckResult check_closed_form_equivalence(const ModelParams& params) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "2 closed-form / integrator equivalence";
    const double cap = 2.55;
    const LadderSystem solid = build_omega_s(params);
    const LadderSystem elec = build_omega_e(params);
    double worst = 0.0;
    for (double rate : {0.1, 0.5, 1.0, 3.0}) {
        const double current = -rate * cap;
        for (double t : {100.0, 600.0, 1200.0, 1800.0}) {
            const Eigen::VectorXd vs_ref =
                detail::rk4_linear(solid.mu * solid.omega, solid.b, current,
                                   Eigen::VectorXd::Constant(5, 1.0), t, 0.1);
            const auto vs = vs_closed_form(t, current, std::vector<double>(5, 1.0), params);
            for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(vs[i] - vs_ref(i)));
            const Eigen::VectorXd ve_ref =
                detail::rk4_linear(elec.mu * elec.omega, elec.b, current,
                                   Eigen::VectorXd::Constant(3, 0.5), t, 0.1);
            const auto ve = ve_closed_form(t, current, {0.5, 0.5, 0.5}, params);
            for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(ve[i] - ve_ref(i)));
        }
    }
    r.seconds = watch.seconds();
    r.pass = worst < 1e-6 && r.seconds < 5.0;
    r.detail = "max |closed form - RK4| = " + io::format_double(worst);
    return r;
}

/// Criterion 3: conservation on random states and Coulomb drift on traces.
inline CheckResult check_conservation(const ModelParams& params) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "3 conservation suite";
    GaussianSampler g(2026);
    double worst_solid = 0.0, worst_elec = 0.0;
    for (int k = 0; k < 100; ++k) {
        CellState s;
        s.v_s.resize(params.eta.size());
        for (auto& v : s.v_s) v = 0.05 + 0.9 * g.uniform01();
        for (auto& v : s.v_e) v = 0.05 + 0.9 * g.uniform01();
        s.t_core = 285.0 + 40.0 * g.uniform01();
        s.t_surf = 285.0 + 40.0 * g.uniform01();
        const double current = -12.0 + 24.0 * g.uniform01();
        const StateDerivative d = rhs(s, current, 298.15, params);
        double weighted = 0.0;
        for (std::size_t i = 0; i < d.v_s.size(); ++i)
            weighted += params.eta[i] * params.c_s1 * d.v_s[i];
        worst_solid = std::max(worst_solid,
                               std::abs(weighted - current) / std::max(1.0, std::abs(current)));
        worst_elec = std::max(worst_elec, std::abs(d.v_e[0] + d.v_e[1] + d.v_e[2]) /
                                              (std::abs(current) / params.c_e + 1e-300));
    }

    double worst_drift = 0.0;
    {
        SimOptions o;
        o.soc0 = 1.0;
        const SimulationTrace t1 = simulate(gen_constant(1.0, 4000.0, 2.55), params, o);
        const CurrentProfile p1 = gen_constant(1.0, 4000.0, 2.55);
        worst_drift = std::abs(t1.rows.back().soc - 1.0 -
                               p1.integral(0.0, t1.rows.back().time) /
                                   params.total_solid_capacity());
        const CurrentProfile p2 = gen_pulse_train(0.5, 300.0, 900.0, 4, 2.55);
        const SimulationTrace t2 = simulate(p2, params, o);
        worst_drift = std::max(worst_drift,
                               std::abs(t2.rows.back().soc - 1.0 -
                                        p2.integral(0.0, t2.rows.back().time) /
                                            params.total_solid_capacity()));
    }
    r.seconds = watch.seconds();
    r.pass = worst_solid <= 1e-12 && worst_elec <= 1e-12 && worst_drift <= 1e-6 &&
             r.seconds < 5.0;
    r.detail = "charge " + io::format_double(worst_solid) + ", electrolyte " +
               io::format_double(worst_elec) + ", Coulomb drift " +
               io::format_double(worst_drift);
    return r;
}

/// Criterion 4: total solid charge against the measured 2.55 Ah.
inline CheckResult check_capacity_identity(const ModelParams& params) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "4 capacity identity";
    const double q_model = params.c_s1 * params.sum_eta();
    const double q_meas = 2.55 * 3600.0;
    const double err = std::abs(q_model - q_meas) / q_meas;
    r.seconds = watch.seconds();
    r.pass = err < 0.05;
    r.detail = io::format_double(q_model) + " C vs " + io::format_double(q_meas) +
               " C (" + io::format_double(100.0 * err) + "%)";
    return r;
}

/// Criterion 5: noiseless identification round trip.
inline CheckResult check_round_trip_noiseless(const ModelParams& truth, std::uint64_t seed,
                                              int threads) {
    CheckResult r;
    r.name = "5 identification round trip (noiseless)";
    const detail::RoundTripOutcome rt = detail::run_round_trip(truth, 0.0, 0.0, seed, threads);
    const ModelParams& est = rt.pipeline.params;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    const ParamBounds bounds = default_bounds();
    const BoundTriple bk1 = bounds.scalar("kappa1");
    const BoundTriple bk2 = bounds.scalar("kappa2");
    const bool kappa_cell =
        detail::log_cell_of(est.kappa1, bk1.lower, bk1.upper, 8) ==
            detail::log_cell_of(truth.kappa1, bk1.lower, bk1.upper, 8) &&
        detail::log_cell_of(est.kappa2, bk2.lower, bk2.upper, 8) ==
            detail::log_cell_of(truth.kappa2, bk2.lower, bk2.upper, 8);

    std::vector<detail::SubCheck> subs = {
        {"U_s curve " + io::format_double(1e3 * rt.ocv_curve_rms) + " mV (<=2)",
         rt.ocv_curve_rms <= 2e-3},
        {"gamma1 " + io::format_double(100 * rel(est.gamma1, truth.gamma1)) + "% (<=1)",
         rel(est.gamma1, truth.gamma1) <= 0.01},
        {"gamma2 " + io::format_double(100 * rel(est.gamma2, truth.gamma2)) + "% (<=1)",
         rel(est.gamma2, truth.gamma2) <= 0.01},
        {"gamma3 " + io::format_double(100 * rel(est.gamma3, truth.gamma3)) + "% (<=1)",
         rel(est.gamma3, truth.gamma3) <= 0.01},
        {"C_s1 " + io::format_double(100 * rel(est.c_s1, truth.c_s1)) + "% (<=2)",
         rel(est.c_s1, truth.c_s1) <= 0.02},
        {"R_s1 " + io::format_double(100 * rel(est.r_s1, truth.r_s1)) + "% (<=2)",
         rel(est.r_s1, truth.r_s1) <= 0.02},
        {"thermal refit " +
             io::format_double(rt.pipeline.fits.at("thermal").residual_rms) + " K (<=0.05)",
         rt.pipeline.fits.at("thermal").residual_rms <= 0.05},
        {"beta1 " + io::format_double(100 * rel(est.beta1, truth.beta1)) + "% (<=5)",
         rel(est.beta1, truth.beta1) <= 0.05},
        {"R_e*C_e " + io::format_double(100 * rel(est.r_e * est.c_e, truth.r_e * truth.c_e)) +
             "% (<=5)",
         rel(est.r_e * est.c_e, truth.r_e * truth.c_e) <= 0.05},
        {"kappa cell", kappa_cell},
        {"runtime " + io::format_double(rt.seconds) + " s (<180)", rt.seconds < 180.0},
    };
    r.seconds = rt.seconds;
    r.pass = detail::all_pass(subs);
    r.detail = detail::render(subs);
    return r;
}

/// Criterion 6: noisy round trip plus held-out 4 C / 5 C prediction.
inline CheckResult check_round_trip_noisy(const ModelParams& truth, std::uint64_t seed,
                                          int threads) {
    CheckResult r;
    r.name = "6 identification round trip (noisy)";
    const detail::Stopwatch watch;
    const detail::RoundTripOutcome rt = detail::run_round_trip(truth, 5.0, 0.2, seed, threads);
    const ModelParams& est = rt.pipeline.params;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    const double rms4 = detail::held_out_rms(truth, est, 4.0);
    const double rms5 = detail::held_out_rms(truth, est, 5.0);
    std::vector<detail::SubCheck> subs = {
        {"C_s1 " + io::format_double(100 * rel(est.c_s1, truth.c_s1)) + "% (<=5)",
         rel(est.c_s1, truth.c_s1) <= 0.05},
        {"R_s1 " + io::format_double(100 * rel(est.r_s1, truth.r_s1)) + "% (<=5)",
         rel(est.r_s1, truth.r_s1) <= 0.05},
        {"held-out 4C " + io::format_double(1e3 * rms4) + " mV (<=15)", rms4 <= 15e-3},
        {"held-out 5C " + io::format_double(1e3 * rms5) + " mV (<=15)", rms5 <= 15e-3},
    };
    r.seconds = watch.seconds();
    subs.push_back({"runtime " + io::format_double(r.seconds) + " s (<300)", r.seconds < 300.0});
    r.pass = detail::all_pass(subs);
    r.detail = detail::render(subs);
    return r;
}

/// Criterion 7: qualitative analogs of the paper's figures.
inline CheckResult check_qualitative(const ModelParams& params, const std::string& data_dir) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "7 qualitative figure analogs";
    const double cap = 2.55;
    std::vector<detail::SubCheck> subs;

    {
        SimOptions o;
        o.soc0 = 1.0;
        const SimulationTrace tr = simulate(gen_constant(2.0, 3600.0, cap), params, o);
        double rise = 0.0;
        for (const auto& row : tr.rows)
            rise = std::max(rise, row.state.t_surf - tr.rows.front().state.t_surf);
        subs.push_back({"2C surface rise " + io::format_double(rise) + " K (10+-4)",
                        rise >= 6.0 && rise <= 14.0});
    }
    {
        const CurrentProfile prof = gen_evtol_mission(cap, 90.0, 1200.0, 90.0);
        const SimulationTrace tr = simulate(prof, params, SimOptions{});
        double s5 = 0.0, scruise = 0.0;
        for (std::size_t k = 1; k < tr.rows.size(); ++k) {
            const double slope = (tr.rows[k].state.t_surf - tr.rows[k - 1].state.t_surf) /
                                 (tr.rows[k].time - tr.rows[k - 1].time);
            const bool in5 = tr.rows[k].time <= 90.0 || tr.rows[k].time > 1290.0;
            double& peak = in5 ? s5 : scruise;
            peak = std::max(peak, slope);
        }
        subs.push_back({"eVTOL max dT/dt in 5C phases", s5 > scruise});
    }
    {
        const auto tmpl = io::load_udds_template(data_dir + "/udds_template.csv");
        const CurrentProfile prof = gen_udds_like(tmpl, -8.0, 5.0, cap, 0, 3);
        SimOptions o;
        o.soc0 = 0.85;
        const SimulationTrace tr = simulate(prof, params, o);
        bool inside = tr.termination == Termination::low_cutoff;
        for (std::size_t k = 0; k + 1 < tr.rows.size(); ++k)
            inside = inside && tr.rows[k].voltage > params.v_cut_low &&
                     tr.rows[k].voltage < params.v_cut_high;
        subs.push_back({"UDDS within cutoffs until depletion", inside});
    }
    r.seconds = watch.seconds();
    subs.push_back({"runtime " + io::format_double(r.seconds) + " s (<30)", r.seconds < 30.0});
    r.pass = detail::all_pass(subs);
    r.detail = detail::render(subs);
    return r;
}

/// Criterion 8: byte-identical artifacts from repeated CLI runs.
inline CheckResult check_determinism(const std::string& cli, const std::string& params_path,
                                     std::uint64_t seed) {
    const detail::Stopwatch watch;
    CheckResult r;
    r.name = "8 determinism of CLI artifacts";
    if (cli.empty()) {
        r.detail = "CLI path not provided";
        return r;
    }
    namespace fs = std::filesystem;
    const fs::path work = fs::temp_directory_path() / "battx_acceptance_determinism";
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work / "data");

    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };

    bool ok = true;
    const std::string d = (work / "data").string();
    for (const char* design : {"ocv", "ro", "solid", "thermal", "electrolyte"})
        ok = ok && run("synth --params " + params_path + " --design " + design +
                       " --seed " + std::to_string(seed) + " --out " + d + "/" + design +
                       ".csv");
    for (int pass = 1; pass <= 2 && ok; ++pass) {
        const std::string out = (work / ("run" + std::to_string(pass))).string();
        ok = ok && run("identify --step all --data " + d + " --params-in " + params_path +
                       " --seed " + std::to_string(seed) + " --out " + out);
        ok = ok && run("simulate --params " + params_path + " --gen constant:1 --soc0 1" +
                       " --out " + out + "/trace.csv");
    }
    bool identical = ok;
    if (ok) {
        for (const char* f : {"params_identified.json", "fit_ocv.json", "fit_ro.json",
                              "fit_solid.json", "fit_thermal.json", "fit_electrolyte.json",
                              "trace.csv"})
            identical = identical &&
                        detail::same_file_bytes((work / "run1" / f).string(),
                                                (work / "run2" / f).string());
    }
    r.seconds = watch.seconds();
    r.pass = ok && identical && r.seconds < 180.0;
    r.detail = !ok ? "CLI invocation failed"
                   : (identical ? "all artifacts byte-identical" : "artifact mismatch");
    fs::remove_all(work, ec);
    return r;
}

struct SuiteOptions {
    bool full = false;
    std::uint64_t seed = 42;
    int threads = 4;
    std::string data_dir = BATTX_DATA_DIR;
    std::string cli_path;    // for the determinism check; empty skips it
    std::string params_path; // file the CLI runs should load
};

inline std::vector<CheckResult> run_suite(const ModelParams& params, const SuiteOptions& opt) {
    params.validate();
    std::vector<CheckResult> out;
    out.push_back(check_structural(params));
    out.push_back(check_closed_form_equivalence(params));
    out.push_back(check_conservation(params));
    out.push_back(check_capacity_identity(params));
    if (opt.full) {
        out.push_back(check_round_trip_noiseless(params, opt.seed, opt.threads));
        out.push_back(check_round_trip_noisy(params, opt.seed, opt.threads));
    }
    out.push_back(check_qualitative(params, opt.data_dir));
    if (opt.full && !opt.cli_path.empty())
        out.push_back(check_determinism(opt.cli_path, opt.params_path, opt.seed));
    return out;
}

} // namespace battx::validate
