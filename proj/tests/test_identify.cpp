#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "battx/identify.hpp"
#include "battx/io.hpp"
#include "battx/synth.hpp"

using namespace battx;
using namespace battx::ident;
using Catch::Approx;

namespace {

FitContext make_ctx(double capacity_ah) {
    FitContext ctx;
    ctx.capacity_ah = capacity_ah;
    ctx.nls.seed = 42;
    ctx.nls.max_threads = 4;
    return ctx;
}

double rel_err(double est, double truth) { return std::abs(est - truth) / std::abs(truth); }

} // namespace

TEST_CASE("coulomb counting") {
    Dataset ds;
    SECTION("zero current stays at soc0") {
        ds.time = {0, 10, 20, 30};
        ds.current = {0, 0, 0, 0};
        ds.voltage = {3.6, 3.6, 3.6, 3.6};
        const auto soc = coulomb_count(ds, 0.4, 2.5);
        for (double s : soc) REQUIRE(s == Approx(0.4).margin(1e-15));
    }
    SECTION("full charge by definition") {
        ds.time = {0, 3600};
        ds.current = {2.5, 2.5};
        ds.voltage = {3.0, 4.2};
        const auto soc = coulomb_count(ds, 0.0, 2.5);
        REQUIRE(soc.back() == Approx(1.0).margin(1e-12));
    }
    SECTION("clipping is counted") {
        ds.time = {0, 3600, 7200};
        ds.current = {2.5, 2.5, 2.5};
        ds.voltage = {3.0, 4.2, 4.2};
        int clips = 0;
        const auto soc = coulomb_count(ds, 0.5, 2.5, &clips);
        REQUIRE(clips == 1);
        REQUIRE(soc.back() == 1.0);
    }
    SECTION("trickle discharge lands on empty") {
        ModelParams truth;
        synth::SynthSpec spec;
        spec.design = synth::Design::ocv;
        const Dataset trickle = synth::make_dataset(truth, spec);
        const double cap = measure_capacity_ah(trickle);
        const auto soc = coulomb_count(trickle, 1.0, cap);
        REQUIRE(std::abs(soc.back()) <= 1e-3);
    }
}

TEST_CASE("pulse edge detection on the published profile design") {
    // 5-minute 0.5 C pulses with two-hour rests, twelve pulses
    ModelParams p;
    const double cap = 2.55;
    CurrentProfile prof = gen_pulse_train(0.5, 300.0, 7200.0, 12, cap);
    SimOptions o;
    o.output_interval = 1.0;
    const SimulationTrace tr = simulate(prof, p, o);
    const Dataset ds = dataset_from_trace(tr, 298.15, 1.0, cap);

    const auto edges = detect_pulse_edges(ds, cap);
    int stops = 0;
    for (const auto& e : edges) stops += e.is_stop ? 1 : 0;
    REQUIRE(stops == 12);
    REQUIRE(edges.size() == 24); // starts and stops

    SECTION("constant current has no edges") {
        const SimulationTrace cc = simulate(gen_constant(0.5, 600.0, cap), p, o);
        const auto none = detect_pulse_edges(dataset_from_trace(cc, 298.15, 1.0, cap), cap);
        REQUIRE(none.empty());
    }
    SECTION("single pulse gives a start and a flagged stop") {
        const SimulationTrace one =
            simulate(gen_pulse_train(0.5, 300.0, 600.0, 1, cap), p, o);
        const auto two = detect_pulse_edges(dataset_from_trace(one, 298.15, 1.0, cap), cap);
        REQUIRE(two.size() == 2);
        REQUIRE_FALSE(two[0].is_stop);
        REQUIRE(two[1].is_stop);
    }
    SECTION("a ramp spanning several samples collapses to one edge") {
        Dataset ramp;
        ramp.time = {0, 1, 2, 3, 4, 5, 6};
        ramp.current = {-1.25, -1.25, -0.6, 0.0, 0.0, 0.0, 0.0};
        ramp.voltage = {3.6, 3.6, 3.65, 3.7, 3.7, 3.7, 3.7};
        const auto merged = detect_pulse_edges(ramp, cap);
        REQUIRE(merged.size() == 1);
        REQUIRE(merged[0].is_stop);
        REQUIRE(merged[0].index_before == 1);
        REQUIRE(merged[0].index_after == 3);
    }
}

TEST_CASE("ro sample arithmetic") {
    FitContext ctx = make_ctx(2.5);
    Dataset ds;
    ds.time = {0, 1, 2, 3};
    ds.current = {-1.25, -1.25, 0.0, 0.0};
    ds.voltage = {3.60, 3.60, 3.65, 3.651};
    ds.soc0 = 0.8;
    const auto edges = detect_pulse_edges(ds, ctx.capacity_ah);
    const auto set = estimate_ro_samples(ds, edges, ctx);
    REQUIRE(set.samples.size() == 1);
    // |dU / dI| = 0.05 / 1.25
    REQUIRE(set.samples[0].r_ohm == Approx(0.04).epsilon(1e-12));
    REQUIRE(set.skipped == 0);
}

TEST_CASE("fit_ro recovers the exponential and enforces identifiability") {
    FitContext ctx = make_ctx(2.55);
    const ParamBounds bounds = default_bounds();

    SECTION("noiseless samples from the shipped gamma") {
        RoSampleSet set;
        for (int k = 0; k <= 20; ++k) {
            const double s = 0.02 + 0.96 * k / 20.0;
            set.samples.push_back({s, r_o(s, 0.026, 0.061, 14.36), 0.0});
        }
        const FitResult fit = fit_ro(set, bounds, ctx);
        REQUIRE(rel_err(fit.estimates.at("gamma1"), 0.026) < 0.01);
        REQUIRE(rel_err(fit.estimates.at("gamma2"), 0.061) < 0.01);
        REQUIRE(rel_err(fit.estimates.at("gamma3"), 14.36) < 0.01);
    }
    SECTION("flat truth gives a flat curve") {
        RoSampleSet set;
        for (int k = 0; k <= 10; ++k)
            set.samples.push_back({0.05 + 0.09 * k, 0.026, 0.0});
        const FitResult fit = fit_ro(set, bounds, ctx);
        REQUIRE(fit.residual_rms < 1e-9);
    }
    SECTION("too few samples") {
        RoSampleSet set;
        set.samples = {{0.1, 0.03, 0}, {0.5, 0.027, 0}, {0.9, 0.026, 0}};
        REQUIRE_THROWS_AS(fit_ro(set, bounds, ctx), DatasetError);
    }
    SECTION("narrow SoC span") {
        RoSampleSet set;
        for (int k = 0; k < 8; ++k) set.samples.push_back({0.5 + 0.02 * k, 0.027, 0.0});
        REQUIRE_THROWS_AS(fit_ro(set, bounds, ctx), DatasetError);
    }
}

TEST_CASE("fit_ocv preconditions and exact linear case") {
    ModelParams truth;
    const double cap = truth.total_solid_capacity() / 3600.0;
    FitContext ctx = make_ctx(cap);

    SECTION("0.5 C dataset is rejected as non-trickle") {
        synth::SynthSpec spec;
        spec.design = synth::Design::solid;
        const Dataset fast = synth::make_dataset(truth, spec);
        REQUIRE_THROWS_AS(fit_ocv(fast, default_bounds(), ctx), DatasetError);
    }
    SECTION("model containing the truth fits to numerical precision") {
        // linear-only OCV: alpha_12 = 4 plus a feasible constant
        Dataset ds;
        ds.soc0 = 1.0;
        const double amps = -cap / 30.0;
        for (int k = 0; k <= 2000; ++k) {
            const double t = k * 54.0;
            const double s = 1.0 - std::abs(amps) * t / truth.total_solid_capacity();
            ds.time.push_back(t);
            ds.current.push_back(amps);
            ds.voltage.push_back(2.0 + 4.0 * s);
        }
        ParamBounds b = default_bounds();
        for (int i = 0; i < 17; ++i) b.alpha[i] = {-1.0, 0.0, 1.0};
        b.alpha[0] = {0.0, 1.0, 5.0};
        b.alpha[12] = {0.0, 1.0, 6.0};
        const FitResult fit = fit_ocv(ds, b, ctx);
        REQUIRE(fit.residual_rms < 1e-6);
    }
}

TEST_CASE("fit_solid rejects variable-current data") {
    ModelParams truth;
    const double cap = truth.total_solid_capacity() / 3600.0;
    FitContext ctx = make_ctx(cap);
    synth::SynthSpec spec;
    spec.design = synth::Design::ro; // pulse data is not constant current
    const Dataset pulses = synth::make_dataset(truth, spec);
    REQUIRE_THROWS_AS(fit_solid(pulses, truth, default_bounds(), ctx), DatasetError);
}

TEST_CASE("fit_thermal degenerate and missing-channel cases") {
    ModelParams truth;
    FitContext ctx = make_ctx(2.55);
    SECTION("no temperature channel") {
        Dataset ds;
        ds.time = {0, 1, 2};
        ds.current = {-5, -5, -5};
        ds.voltage = {3.6, 3.59, 3.58};
        REQUIRE_THROWS_AS(fit_thermal(ds, truth, default_bounds(), ctx), DatasetError);
    }
    SECTION("zero current flags a degenerate fit and returns the priors") {
        Dataset ds;
        for (int k = 0; k <= 100; ++k) {
            ds.time.push_back(k);
            ds.current.push_back(0.0);
            ds.voltage.push_back(3.7);
            ds.temp_surf.push_back(298.15);
        }
        const FitResult fit = fit_thermal(ds, truth, default_bounds(), ctx);
        REQUIRE_FALSE(fit.converged);
        REQUIRE_FALSE(fit.warnings.empty());
        REQUIRE(fit.estimates.at("c_surf") == default_bounds().scalar("c_surf").init);
    }
}

TEST_CASE("step ordering is enforced") {
    REQUIRE_NOTHROW(require_step_order({}, "ocv"));
    REQUIRE_NOTHROW(require_step_order({}, "ro"));
    REQUIRE_THROWS_AS(require_step_order({}, "solid"), DomainError);
    REQUIRE_THROWS_AS(require_step_order({"ocv"}, "solid"), DomainError);
    REQUIRE_NOTHROW(require_step_order({"ocv", "ro"}, "solid"));
    REQUIRE_THROWS_AS(require_step_order({"ocv", "ro"}, "electrolyte"), DomainError);
    REQUIRE_THROWS_AS(require_step_order({}, "nonsense"), DomainError);
}

TEST_CASE("electrolyte fit: truth priors and a kappa grid containing truth") {
    ModelParams truth;
    const double cap = truth.total_solid_capacity() / 3600.0;
    FitContext ctx = make_ctx(cap);
    synth::SynthSpec spec;
    spec.design = synth::Design::electrolyte;
    const Dataset ds = synth::make_dataset(truth, spec);

    ParamBounds b = default_bounds();
    b.scalars["kappa1"] = {30.0, 30.0, 30.0};
    b.scalars["kappa2"] = {70.0, 70.0, 70.0};
    const FitResult fit = fit_electrolyte_arrhenius(ds, truth, b, ctx, {1, 1});
    REQUIRE(rel_err(fit.estimates.at("beta1"), truth.beta1) < 0.05);
    REQUIRE(rel_err(fit.estimates.at("r_e") * fit.estimates.at("c_e"),
                    truth.r_e * truth.c_e) < 0.05);
    REQUIRE(fit.estimates.at("kappa1") == 30.0);
    REQUIRE(fit.estimates.at("kappa2") == 70.0);
    REQUIRE(fit.warnings.empty());
}

TEST_CASE("electrolyte fit flags non-identifiability at low rate") {
    ModelParams truth;
    const double cap = truth.total_solid_capacity() / 3600.0;
    FitContext ctx = make_ctx(cap);
    ctx.nls.restarts = 4;
    // 0.5 C data generated without electrolyte/Arrhenius content
    synth::SynthSpec spec;
    spec.design = synth::Design::solid;
    const Dataset ds = synth::make_dataset(truth, spec);
    const FitResult fit =
        fit_electrolyte_arrhenius(ds, truth, default_bounds(), ctx, {3, 3});
    bool warned = false;
    for (const auto& w : fit.warnings)
        warned = warned || w.find("non-identifiable") != std::string::npos;
    REQUIRE(warned);
}

TEST_CASE("inner electrolyte evaluation equals the closed form") {
    // the fit collapses V_e to one exponential; pin it against ve_closed_form
    ModelParams p;
    for (double t : {0.0, 1.0, 12.3, 100.0, 700.0}) {
        const double current = -7.65;
        const auto ve = ve_closed_form(t, current, {0.5, 0.5, 0.5}, p);
        const double tau = p.c_e * p.r_e;
        const double dv = -current * p.r_e * std::expm1(-t / tau);
        REQUIRE(ve[0] == Approx(0.5 + dv).margin(1e-12));
        REQUIRE(ve[1] == Approx(0.5).margin(1e-12));
        REQUIRE(ve[2] == Approx(0.5 - dv).margin(1e-12));
    }
}

TEST_CASE("capacity identity of the shipped fixture") {
    ModelParams p;
    // total solid charge vs the paper's measured 2.55 Ah
    const double q_model = p.c_s1 * p.sum_eta();
    const double q_meas = 2.55 * 3600.0;
    REQUIRE(std::abs(q_model - q_meas) / q_meas < 0.05);
    REQUIRE(q_model == Approx(9264.89).epsilon(1e-4));
}

TEST_CASE("solid round trip from a sub-model dataset") {
    ModelParams truth;
    synth::SynthSpec spec;
    spec.design = synth::Design::solid;
    const Dataset ds = synth::make_dataset(truth, spec);
    FitContext ctx = make_ctx(truth.total_solid_capacity() / 3600.0);
    const FitResult fit = fit_solid(ds, truth, default_bounds(), ctx);
    REQUIRE(rel_err(fit.estimates.at("c_s1"), truth.c_s1) < 0.02);
    REQUIRE(rel_err(fit.estimates.at("r_s1"), truth.r_s1) < 0.02);

    SECTION("with 5 mV noise, seed 42, within 5%") {
        const Dataset noisy = add_noise(ds, 0.005, 0.0, 42);
        const FitResult nf = fit_solid(noisy, truth, default_bounds(), ctx);
        REQUIRE(rel_err(nf.estimates.at("c_s1"), truth.c_s1) < 0.05);
        REQUIRE(rel_err(nf.estimates.at("r_s1"), truth.r_s1) < 0.05);
    }
}

TEST_CASE("fit results are deterministic for a fixed master seed") {
    ModelParams truth;
    synth::SynthSpec spec;
    spec.design = synth::Design::ro;
    spec.noise_mv = 5.0;
    spec.seed = 7;
    const Dataset ds = synth::make_dataset(truth, spec);
    FitContext ctx = make_ctx(truth.total_solid_capacity() / 3600.0);
    ctx.nls.seed = 7;
    const auto edges = detect_pulse_edges(ds, ctx.capacity_ah);
    const auto samples = estimate_ro_samples(ds, edges, ctx);
    const FitResult a = fit_ro(samples, default_bounds(), ctx);
    const FitResult b = fit_ro(samples, default_bounds(), ctx);
    REQUIRE(a.estimates == b.estimates);
    REQUIRE(a.residual_rms == b.residual_rms);
    REQUIRE(a.multi_start.start_costs == b.multi_start.start_costs);
}
