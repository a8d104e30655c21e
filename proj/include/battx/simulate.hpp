#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "battx/model.hpp"
#include "battx/params.hpp"
#include "battx/profile.hpp"

namespace battx {

/// Node-voltage excursions beyond [0,1] by more than this terminate a strict
/// simulation; anything smaller is integrator noise and tolerated.
inline constexpr double kBoundsSlack = 1e-6;

enum class Termination { profile_end, low_cutoff, high_cutoff, bounds_violation };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::profile_end: return "profile-end";
        case Termination::low_cutoff: return "low-cutoff";
        case Termination::high_cutoff: return "high-cutoff";
        case Termination::bounds_violation: return "bounds-violation";
    }
    return "unknown";
}

struct TraceRow {
    double time = 0.0;
    CellState state;
    double voltage = 0.0;
    double soc = 0.0;
    double heat = 0.0;
    double current = 0.0;
};

struct SimulationTrace {
    std::vector<TraceRow> rows;
    Termination termination = Termination::profile_end;
};

struct SimOptions {
    double step = 0.1;
    double output_interval = 1.0;
    std::optional<CellState> initial_state;
    double soc0 = 1.0;
    bool strict_bounds = true;

    void validate() const {
        if (!(step > 0.0) || !(step <= output_interval))
            throw DomainError("SimOptions: require 0 < step <= output_interval");
        if (!initial_state && (!(soc0 >= 0.0) || !(soc0 <= 1.0)))
            throw DomainError("SimOptions: soc0 must lie in [0,1]");
    }
};

/// Rested cell at the given SoC: all solid nodes equal, electrolyte at its
/// 0.5 equilibrium, both temperatures at ambient.
inline CellState initial_state_from_soc(double soc0, double t_amb, const ModelParams& p) {
    if (!(soc0 >= 0.0) || !(soc0 <= 1.0))
        throw DomainError("initial_state_from_soc: soc0 must lie in [0,1]");
    CellState s;
    s.v_s.assign(static_cast<std::size_t>(p.n_solid_nodes), soc0);
    s.v_e = {0.5, 0.5, 0.5};
    s.t_core = t_amb;
    s.t_surf = t_amb;
    return s;
}

namespace detail {

inline void axpy(CellState& y, const StateDerivative& d, double a) {
    for (std::size_t i = 0; i < y.v_s.size(); ++i) y.v_s[i] += a * d.v_s[i];
    for (std::size_t i = 0; i < 3; ++i) y.v_e[i] += a * d.v_e[i];
    y.t_core += a * d.t_core;
    y.t_surf += a * d.t_surf;
}

/// One classical RK4 step with per-stage currents (i0 at t, im at t+dt/2,
/// i1 at t+dt), so piecewise-linear profiles integrate their charge exactly.
inline CellState rk4_stage_step(const CellState& s, double i0, double im, double i1,
                                double t_amb, double dt, const ModelParams& p) {
    const StateDerivative k1 = rhs(s, i0, t_amb, p);
    CellState s2 = s;
    axpy(s2, k1, 0.5 * dt);
    const StateDerivative k2 = rhs(s2, im, t_amb, p);
    CellState s3 = s;
    axpy(s3, k2, 0.5 * dt);
    const StateDerivative k3 = rhs(s3, im, t_amb, p);
    CellState s4 = s;
    axpy(s4, k3, dt);
    const StateDerivative k4 = rhs(s4, i1, t_amb, p);

    CellState out = s;
    axpy(out, k1, dt / 6.0);
    axpy(out, k2, dt / 3.0);
    axpy(out, k3, dt / 3.0);
    axpy(out, k4, dt / 6.0);
    return out;
}

inline CellState clamped_for_eval(const CellState& s) {
    CellState c = s;
    for (double& v : c.v_s) v = std::clamp(v, 0.0, 1.0);
    for (double& v : c.v_e) v = std::clamp(v, 0.0, 1.0);
    return c;
}

inline bool within_bounds(const CellState& s, double slack) {
    for (double v : s.v_s)
        if (v < -slack || v > 1.0 + slack) return false;
    for (double v : s.v_e)
        if (v < -slack || v > 1.0 + slack) return false;
    return true;
}

inline CellState lerp_state(const CellState& a, const CellState& b, double w) {
    CellState out = a;
    for (std::size_t i = 0; i < out.v_s.size(); ++i)
        out.v_s[i] += w * (b.v_s[i] - a.v_s[i]);
    for (std::size_t i = 0; i < 3; ++i) out.v_e[i] += w * (b.v_e[i] - a.v_e[i]);
    out.t_core += w * (b.t_core - a.t_core);
    out.t_surf += w * (b.t_surf - a.t_surf);
    return out;
}

} // namespace detail

/// Single constant-current RK4 step of the full coupled system.
inline CellState step_rk4(const CellState& state, double current, double t_amb, double dt,
                          const ModelParams& p) {
    if (!(dt > 0.0)) throw DomainError("step_rk4: dt must be positive");
    return detail::rk4_stage_step(state, current, current, current, t_amb, dt, p);
}

/// Integrates the model over a current profile. Fixed-step RK4; steps are cut
/// at profile breakpoints and output times so hold-previous loads see exactly
/// constant current within every step. Rows land on the output grid; a cutoff
/// or bounds violation appends one terminal row (cutoff crossings are located
/// by linear back-interpolation between the bracketing steps).
inline SimulationTrace simulate(const CurrentProfile& profile, const ModelParams& params,
                                const SimOptions& options) {
    params.validate();
    profile.validate();
    options.validate();

    SimulationTrace trace;
    CellState state = options.initial_state
                          ? *options.initial_state
                          : initial_state_from_soc(options.soc0, profile.ambient_at(0.0), params);
    state.validate(kBoundsSlack);
    if (state.v_s.size() != params.eta.size())
        throw DomainError("simulate: initial state size does not match params");

    const double t_end = profile.duration();
    const bool hold = profile.interpolation == CurrentProfile::Interp::hold_previous;

    auto make_row = [&](double t, const CellState& s, double current) {
        const CellState c = detail::clamped_for_eval(s);
        TraceRow row;
        row.time = t;
        row.state = s;
        row.current = current;
        row.voltage = terminal_voltage(c, current, params);
        row.soc = soc(c, params);
        row.heat = heat_rate(current, c, params);
        return row;
    };

    double t = 0.0;
    std::size_t bp = 0; // last breakpoint index with time <= t
    long out_k = 0;
    TraceRow row = make_row(0.0, state, profile.current_at(0.0));
    trace.rows.push_back(row);
    if (row.voltage <= params.v_cut_low) {
        trace.termination = Termination::low_cutoff;
        return trace;
    }
    if (row.voltage >= params.v_cut_high) {
        trace.termination = Termination::high_cutoff;
        return trace;
    }
    ++out_k;

    while (t < t_end - 1e-12) {
        while (bp + 1 < profile.samples.size() && profile.samples[bp + 1].time <= t) ++bp;
        const double next_bp = bp + 1 < profile.samples.size()
                                   ? profile.samples[bp + 1].time
                                   : t_end;
        const double next_out = static_cast<double>(out_k) * options.output_interval;
        double t_next = std::min({t + options.step, next_out, next_bp, t_end});
        if (t_next <= t) t_next = std::min(next_bp, t_end);

        const double i0 = profile.current_at(t);
        const double i1 = profile.current_at(t_next, /*from_left=*/hold);
        const double im = hold ? i0 : profile.current_at(0.5 * (t + t_next));
        const double amb = profile.ambient_at(0.5 * (t + t_next));

        const CellState prev_state = state;
        const double t_prev = t;
        state = detail::rk4_stage_step(state, i0, im, i1, amb, t_next - t, params);
        t = t_next;

        if (options.strict_bounds && !detail::within_bounds(state, kBoundsSlack)) {
            trace.rows.push_back(make_row(t, state, profile.current_at(t, hold)));
            trace.termination = Termination::bounds_violation;
            return trace;
        }

        const double i_row = profile.current_at(t);
        const double voltage = terminal_voltage(detail::clamped_for_eval(state), i_row, params);

        const bool low = voltage <= params.v_cut_low;
        const bool high = voltage >= params.v_cut_high;
        if (low || high) {
            const double target = low ? params.v_cut_low : params.v_cut_high;
            // Interpolate the crossing within the step that produced it.
            const double v0 = terminal_voltage(detail::clamped_for_eval(prev_state),
                                               profile.current_at(t_prev), params);
            double w = 1.0;
            if (std::abs(voltage - v0) > 0.0) w = std::clamp((target - v0) / (voltage - v0), 0.0, 1.0);
            const double t_cross = t_prev + w * (t - t_prev);
            const CellState crossing = detail::lerp_state(prev_state, state, w);
            trace.rows.push_back(make_row(t_cross, crossing, profile.current_at(t_cross)));
            trace.termination = low ? Termination::low_cutoff : Termination::high_cutoff;
            return trace;
        }

        if (t == static_cast<double>(out_k) * options.output_interval) {
            trace.rows.push_back(make_row(t, state, i_row));
            ++out_k;
        }
    }

    if (trace.rows.back().time < t_end)
        trace.rows.push_back(make_row(t_end, state, profile.current_at(t_end)));
    trace.termination = Termination::profile_end;
    return trace;
}

} // namespace battx
