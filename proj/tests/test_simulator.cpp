#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "battx/io.hpp"
#include "battx/ladder.hpp"
#include "battx/model.hpp"
#include "battx/profile.hpp"
#include "battx/simulate.hpp"
#include "support/oracles.hpp"

using namespace battx;
using Catch::Approx;

namespace {
constexpr double kCapAh = 2.55; // paper-measured capacity, the C-rate reference

ModelParams reference_temp_params() {
    ModelParams p;
    p.kappa1 = 0.0;
    p.kappa2 = 0.0; // closed forms hold only at fixed temperature
    return p;
}
} // namespace

TEST_CASE("initial state from soc") {
    ModelParams p;
    const CellState full = initial_state_from_soc(1.0, 298.15, p);
    for (double v : full.v_s) REQUIRE(v == 1.0);
    for (double v : full.v_e) REQUIRE(v == 0.5);

    const CellState s = initial_state_from_soc(0.3, 298.15, p);
    REQUIRE(soc(s, p) == Approx(0.3).margin(1e-15));

    const StateDerivative d = rhs(s, 0.0, 298.15, p);
    for (double v : d.v_s) REQUIRE(v == Approx(0.0).margin(1e-16));
    for (double v : d.v_e) REQUIRE(v == Approx(0.0).margin(1e-16));
    REQUIRE(d.t_core == 0.0);
    REQUIRE(d.t_surf == 0.0);

    REQUIRE_THROWS_AS(initial_state_from_soc(1.2, 298.15, p), DomainError);
}

TEST_CASE("step_rk4 equilibrium and ladder causality") {
    ModelParams p;
    const CellState eq = initial_state_from_soc(0.5, 298.15, p);
    const CellState next = step_rk4(eq, 0.0, 298.15, 1.0, p);
    for (std::size_t i = 0; i < eq.v_s.size(); ++i)
        REQUIRE(next.v_s[i] == Approx(eq.v_s[i]).margin(1e-15));
    REQUIRE(next.t_surf == Approx(eq.t_surf).margin(1e-15));

    const CellState full = initial_state_from_soc(1.0, 298.15, p);
    const CellState after = step_rk4(full, -0.5 * kCapAh, 298.15, 1.0, p);
    REQUIRE(after.v_s[0] < 1.0 - 1e-5);
    REQUIRE(std::abs(after.v_s[4] - 1.0) < 1e-10); // center node lags by O(dt^4)

    REQUIRE_THROWS_AS(step_rk4(full, 0.0, 298.15, 0.0, p), DomainError);
}

TEST_CASE("step_rk4 fourth-order convergence against the closed form") {
    const ModelParams p = reference_temp_params();
    const double current = -0.5 * kCapAh;
    const double horizon = 60.0;

    auto err_at = [&](double dt) {
        CellState s = initial_state_from_soc(1.0, p.t_ref, p);
        for (double t = 0.0; t < horizon - 1e-9; t += dt)
            s = step_rk4(s, current, p.t_ref, dt, p);
        const auto vs_ref = vs_closed_form(horizon, current, std::vector<double>(5, 1.0), p);
        const auto ve_ref = ve_closed_form(horizon, current, {0.5, 0.5, 0.5}, p);
        double e = 0.0;
        for (int i = 0; i < 5; ++i) e = std::max(e, std::abs(s.v_s[i] - vs_ref[i]));
        for (int i = 0; i < 3; ++i) e = std::max(e, std::abs(s.v_e[i] - ve_ref[i]));
        return e;
    };

    const double e2 = err_at(2.0);
    const double e1 = err_at(1.0);
    REQUIRE(e2 / e1 == Approx(16.0).margin(6.0)); // classical 4th order
}

TEST_CASE("zero-current hold keeps the open-circuit voltage") {
    ModelParams p;
    CurrentProfile prof;
    prof.samples = {{0.0, 0.0}, {3600.0, 0.0}};
    SimOptions opts;
    opts.soc0 = 0.5;
    opts.output_interval = 10.0;
    const SimulationTrace tr = simulate(prof, p, opts);
    REQUIRE(tr.termination == Termination::profile_end);
    const double u = ocv_us(0.5, p);
    for (const auto& r : tr.rows) REQUIRE(r.voltage == Approx(u).margin(1e-12));
}

TEST_CASE("1 C full discharge duration matches the Coulomb bound") {
    ModelParams p;
    const CurrentProfile prof = gen_constant(1.0, 4000.0, kCapAh);
    const SimulationTrace tr = simulate(prof, p, SimOptions{});
    REQUIRE(tr.termination == Termination::low_cutoff);
    const double duration = tr.rows.back().time;
    REQUIRE(duration >= 3200.0);
    REQUIRE(duration <= 3600.0);
}

TEST_CASE("SoC drift against the exact profile integral") {
    ModelParams p;
    const double cs_total = p.total_solid_capacity();

    auto check = [&](const CurrentProfile& prof, SimOptions opts) {
        const SimulationTrace tr = simulate(prof, p, opts);
        const double q = prof.integral(0.0, tr.rows.back().time);
        const double predicted = tr.rows.front().soc + q / cs_total;
        REQUIRE(std::abs(tr.rows.back().soc - predicted) <= 1e-6);
        return tr;
    };

    SECTION("0.5 C partial discharge") {
        SimOptions o;
        o.soc0 = 0.9;
        check(gen_constant(0.5, 1800.0, kCapAh), o);
    }
    SECTION("pulse train") {
        SimOptions o;
        o.soc0 = 1.0;
        check(gen_pulse_train(0.5, 300.0, 900.0, 4, kCapAh), o);
    }
    SECTION("piecewise-linear drive cycle") {
        auto tmpl = io::load_udds_template(std::string(BATTX_DATA_DIR) + "/udds_template.csv");
        CurrentProfile prof = gen_udds_like(tmpl, -2.0, 1.2, kCapAh);
        SimOptions o;
        o.soc0 = 0.7;
        check(prof, o);
    }
}

TEST_CASE("cutoff causality and back-interpolated crossing") {
    ModelParams p;
    const CurrentProfile prof = gen_constant(2.0, 3600.0, kCapAh);
    const SimulationTrace tr = simulate(prof, p, SimOptions{});
    REQUIRE(tr.termination == Termination::low_cutoff);
    for (std::size_t k = 0; k + 1 < tr.rows.size(); ++k) {
        REQUIRE(tr.rows[k].voltage > p.v_cut_low);
        REQUIRE(tr.rows[k].voltage < p.v_cut_high);
    }
    REQUIRE(tr.rows.back().voltage == Approx(p.v_cut_low).margin(1e-9));
    // crossing time is off the output grid but inside the last step
    const double tc = tr.rows.back().time;
    REQUIRE(tc > tr.rows[tr.rows.size() - 2].time);
}

TEST_CASE("high cutoff terminates a full-charge attempt") {
    ModelParams p;
    CurrentProfile prof;
    prof.samples = {{0.0, 0.5 * kCapAh}, {7200.0, 0.5 * kCapAh}};
    SimOptions opts;
    opts.soc0 = 0.9;
    const SimulationTrace tr = simulate(prof, p, opts);
    REQUIRE(tr.termination == Termination::high_cutoff);
    REQUIRE(tr.rows.back().voltage == Approx(p.v_cut_high).margin(1e-9));
}

TEST_CASE("bounds violation reported when cutoffs cannot intervene") {
    ModelParams p;
    p.v_cut_low = 0.1; // cutoffs out of the way: discharge drives v_s negative
    const CurrentProfile prof = gen_constant(1.0, 2.0 * 3600.0, kCapAh);
    const SimulationTrace tr = simulate(prof, p, SimOptions{});
    REQUIRE(tr.termination == Termination::bounds_violation);
    double vmin = 1.0;
    for (double v : tr.rows.back().state.v_s) vmin = std::min(vmin, v);
    REQUIRE(vmin < -kBoundsSlack);
}

TEST_CASE("constant-current segment matches the closed forms at fixed temperature") {
    const ModelParams p = reference_temp_params();
    const CurrentProfile prof = gen_constant(0.5, 1800.0, kCapAh);
    SimOptions opts;
    opts.soc0 = 0.95;
    const SimulationTrace tr = simulate(prof, p, opts);
    REQUIRE(tr.termination == Termination::profile_end);
    const double current = prof.samples.front().current;
    for (std::size_t k = 0; k < tr.rows.size(); k += 100) {
        const auto& r = tr.rows[k];
        const auto vs = vs_closed_form(r.time, current, std::vector<double>(5, 0.95), p);
        const auto ve = ve_closed_form(r.time, current, {0.5, 0.5, 0.5}, p);
        for (int i = 0; i < 5; ++i) REQUIRE(r.state.v_s[i] == Approx(vs[i]).margin(1e-6));
        for (int i = 0; i < 3; ++i) REQUIRE(r.state.v_e[i] == Approx(ve[i]).margin(1e-6));
    }
}

TEST_CASE("integrated heat grows with C-rate") {
    ModelParams p;
    auto heat_of = [&](double rate) {
        const SimulationTrace tr =
            simulate(gen_constant(rate, 1.4 * 3600.0 / rate, kCapAh), p, SimOptions{});
        double q = 0.0;
        for (std::size_t k = 1; k < tr.rows.size(); ++k)
            q += tr.rows[k].heat * (tr.rows[k].time - tr.rows[k - 1].time);
        REQUIRE(q > 0.0);
        // heat stays non-negative along single-signed-current traces
        for (const auto& r : tr.rows) REQUIRE(r.heat >= -1e-12);
        return q;
    };
    const double q1 = heat_of(1.0);
    const double q2 = heat_of(2.0);
    const double q3 = heat_of(3.0);
    REQUIRE(q1 < q2);
    REQUIRE(q2 < q3);
}

TEST_CASE("eVTOL mission heats fastest in the 5 C phases") {
    ModelParams p;
    const CurrentProfile prof = gen_evtol_mission(kCapAh, 90.0, 1200.0, 90.0);
    const SimulationTrace tr = simulate(prof, p, SimOptions{});
    double slope_5c = 0.0, slope_cruise = 0.0;
    for (std::size_t k = 1; k < tr.rows.size(); ++k) {
        const double slope = (tr.rows[k].state.t_surf - tr.rows[k - 1].state.t_surf) /
                             (tr.rows[k].time - tr.rows[k - 1].time);
        const bool in_5c = tr.rows[k].time <= 90.0 || tr.rows[k].time > 1290.0;
        double& peak = in_5c ? slope_5c : slope_cruise;
        peak = std::max(peak, slope);
    }
    REQUIRE(slope_5c > slope_cruise);

    // discharge-only mission: SoC strictly decreasing
    for (std::size_t k = 1; k < tr.rows.size(); ++k)
        REQUIRE(tr.rows[k].soc < tr.rows[k - 1].soc);
}

TEST_CASE("identical inputs give bit-identical traces") {
    ModelParams p;
    const CurrentProfile prof = gen_pulse_train(0.5, 300.0, 600.0, 3, kCapAh);
    SimOptions opts;
    opts.soc0 = 0.8;
    const SimulationTrace a = simulate(prof, p, opts);
    const SimulationTrace b = simulate(prof, p, opts);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        REQUIRE(std::memcmp(&a.rows[k].time, &b.rows[k].time, sizeof(double)) == 0);
        REQUIRE(std::memcmp(&a.rows[k].voltage, &b.rows[k].voltage, sizeof(double)) == 0);
        for (std::size_t i = 0; i < 5; ++i)
            REQUIRE(std::memcmp(&a.rows[k].state.v_s[i], &b.rows[k].state.v_s[i],
                                sizeof(double)) == 0);
    }
}

TEST_CASE("simulation option validation") {
    SimOptions bad;
    bad.step = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), DomainError);
    bad.step = 2.0;
    bad.output_interval = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), DomainError);
}
