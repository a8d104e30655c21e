#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "battx/dataset.hpp"
#include "battx/errors.hpp"
#include "battx/model.hpp"
#include "battx/profile.hpp"
#include "battx/simulate.hpp"

namespace battx::synth {

/// Experiment designs of the identification pipeline plus a plain full-model
/// constant-current run for held-out validation traces.
enum class Design { ocv, ro, solid, thermal, electrolyte, constant };

inline Design design_from_string(const std::string& s) {
    if (s == "ocv") return Design::ocv;
    if (s == "ro") return Design::ro;
    if (s == "solid") return Design::solid;
    if (s == "thermal") return Design::thermal;
    if (s == "electrolyte") return Design::electrolyte;
    if (s == "constant") return Design::constant;
    throw DomainError("unknown synth design '" + s + "'");
}

struct SynthSpec {
    Design design = Design::solid;
    double rate_c = 0.0; // only for Design::constant
    double noise_mv = 0.0;
    double temp_noise_k = 0.0;
    std::uint64_t seed = 0;
    double step = 0.1;
    double output_interval = 1.0;
};

/// Truth parameters with the couplings a given experiment design treats as
/// inactive actually switched off, so the round-trip oracle inverts exactly
/// the model each step fits: Steps 1-3 see no electrolyte potential and no
/// Arrhenius feedback, Step 4 no Arrhenius; Step 5 sees the full model.
inline ModelParams sub_model_for(Design design, const ModelParams& truth) {
    ModelParams p = truth;
    switch (design) {
        case Design::ocv:
        case Design::ro:
        case Design::solid:
        case Design::thermal:
            p.beta1 = 0.0;
            p.kappa1 = 0.0;
            p.kappa2 = 0.0;
            break;
        case Design::electrolyte:
        case Design::constant:
            break;
    }
    return p;
}

/// Clean dataset for one experiment design, generated from the truth model.
inline Dataset make_clean_dataset(const ModelParams& truth, const SynthSpec& spec) {
    truth.validate();
    const ModelParams p = sub_model_for(spec.design, truth);
    const double cap_ah = truth.total_solid_capacity() / 3600.0;
    const double t_amb = truth.t_ref;

    if (spec.design == Design::ocv) {
        // Trickle limit: the solid chain rides its equilibrium, U = U_s(SoC).
        Dataset d;
        d.capacity_ah = cap_ah;
        d.t_amb = t_amb;
        d.soc0 = 1.0;
        const double amps = -cap_ah / 30.0;
        const double t_end = truth.total_solid_capacity() / std::abs(amps);
        const double dt = 10.0;
        for (double t = 0.0;; t += dt) {
            const bool last = t >= t_end;
            const double tt = last ? t_end : t;
            const double s = 1.0 - std::abs(amps) * tt / truth.total_solid_capacity();
            d.time.push_back(tt);
            d.current.push_back(amps);
            d.voltage.push_back(ocv_us(std::clamp(s, 0.0, 1.0), p.alpha));
            if (last) break;
        }
        d.termination = "profile-end";
        return d;
    }

    CurrentProfile profile;
    SimOptions opts;
    opts.step = spec.step;
    opts.output_interval = spec.output_interval;
    opts.soc0 = 1.0;
    double rest_tail_s = 0.0;
    switch (spec.design) {
        case Design::ro:
            profile = gen_pulse_train(0.5, 60.0, 120.0, 120, cap_ah);
            opts.output_interval = spec.step; // edge jumps need tight sampling
            break;
        case Design::solid:
            profile = gen_constant(0.5, 2.2 * 3600.0, cap_ah);
            break;
        case Design::thermal:
            profile = gen_constant(2.0, 0.65 * 3600.0, cap_ah);
            rest_tail_s = 1800.0; // cooldown separates the conduction/convection poles
            break;
        case Design::electrolyte:
            profile = gen_constant(3.0, 0.45 * 3600.0, cap_ah);
            break;
        case Design::constant:
            if (!(spec.rate_c > 0.0))
                throw DomainError("synth constant design needs rate_c > 0");
            profile = gen_constant(spec.rate_c, 1.3 * 3600.0 / spec.rate_c, cap_ah);
            break;
        case Design::ocv:
            break; // handled above
    }
    profile.t_amb = t_amb;
    SimulationTrace trace = simulate(profile, p, opts);
    if (rest_tail_s > 0.0) {
        // drop the fractional cutoff row so the rest starts on the output grid
        while (trace.rows.size() > 1) {
            const double t = trace.rows.back().time;
            const double snapped = std::round(t / opts.output_interval) * opts.output_interval;
            if (std::abs(t - snapped) < 1e-9) break;
            trace.rows.pop_back();
        }
        CurrentProfile rest;
        rest.samples = {{0.0, 0.0}, {rest_tail_s, 0.0}};
        rest.t_amb = t_amb;
        SimOptions ropts = opts;
        ropts.initial_state = trace.rows.back().state;
        const double t0 = trace.rows.back().time;
        const SimulationTrace resting = simulate(rest, p, ropts);
        trace.rows.pop_back(); // replaced by the rest's opening row (current 0)
        for (const auto& r : resting.rows) {
            trace.rows.push_back(r);
            trace.rows.back().time += t0;
        }
        trace.termination = resting.termination;
    }
    const bool with_temp = spec.design != Design::ro;
    return dataset_from_trace(trace, t_amb, 1.0, cap_ah, with_temp);
}

/// Clean dataset plus seeded measurement noise.
inline Dataset make_dataset(const ModelParams& truth, const SynthSpec& spec) {
    const Dataset clean = make_clean_dataset(truth, spec);
    if (spec.noise_mv <= 0.0 && spec.temp_noise_k <= 0.0) return clean;
    return add_noise(clean, spec.noise_mv * 1e-3, spec.temp_noise_k, spec.seed);
}

} // namespace battx::synth
