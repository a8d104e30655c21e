#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "battx/errors.hpp"

namespace battx {

/// Piecewise applied-current time series. Sign convention: I > 0 charging,
/// I < 0 discharging. hold_previous replays battery-tester step loads;
/// linear suits drive cycles.
struct CurrentProfile {
    enum class Interp { hold_previous, linear };

    struct Sample {
        double time = 0.0;
        double current = 0.0;
    };

    std::vector<Sample> samples;
    Interp interpolation = Interp::hold_previous;
    double t_amb = 298.15;
    /// Optional ambient series (linear interpolation); empty means constant t_amb.
    std::vector<Sample> t_amb_series;

    void validate() const {
        if (samples.size() < 2) throw DomainError("CurrentProfile: need at least two breakpoints");
        if (samples.front().time != 0.0)
            throw DomainError("CurrentProfile: times must start at 0");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (!std::isfinite(samples[i].current))
                throw DomainError("CurrentProfile: currents must be finite");
            if (i > 0 && !(samples[i].time > samples[i - 1].time))
                throw DomainError("CurrentProfile: times must be strictly increasing");
        }
        if (!(t_amb > 0.0)) throw DomainError("CurrentProfile: t_amb must be positive");
    }

    double duration() const { return samples.back().time; }

    /// Index of the segment containing t (from the left when from_left is set,
    /// so hold-previous steps keep the old value at the breakpoint itself).
    std::size_t segment_index(double t, bool from_left = false) const {
        std::size_t lo = 0, hi = samples.size() - 1;
        while (lo + 1 < hi) {
            const std::size_t mid = (lo + hi) / 2;
            const bool left_of = from_left ? (samples[mid].time < t) : (samples[mid].time <= t);
            if (left_of) lo = mid; else hi = mid;
        }
        return lo;
    }

    double current_at(double t, bool from_left = false) const {
        if (t <= samples.front().time) return samples.front().current;
        if (t >= samples.back().time && !from_left) return samples.back().current;
        const std::size_t k = segment_index(std::min(t, duration()), from_left);
        if (interpolation == Interp::hold_previous) return samples[k].current;
        const auto& a = samples[k];
        const auto& b = samples[k + 1];
        const double w = (t - a.time) / (b.time - a.time);
        return a.current + w * (b.current - a.current);
    }

    double ambient_at(double t) const {
        if (t_amb_series.empty()) return t_amb;
        if (t <= t_amb_series.front().time) return t_amb_series.front().current;
        if (t >= t_amb_series.back().time) return t_amb_series.back().current;
        for (std::size_t k = 0; k + 1 < t_amb_series.size(); ++k) {
            if (t <= t_amb_series[k + 1].time) {
                const auto& a = t_amb_series[k];
                const auto& b = t_amb_series[k + 1];
                const double w = (t - a.time) / (b.time - a.time);
                return a.current + w * (b.current - a.current);
            }
        }
        return t_amb_series.back().current;
    }

    /// Exact integral of the current over [t0, t1] under this profile's
    /// interpolation rule. Used by the Coulomb bookkeeping checks.
    double integral(double t0, double t1) const {
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
            const double a = std::max(t0, samples[k].time);
            const double b = std::min(t1, samples[k + 1].time);
            if (b <= a) continue;
            if (interpolation == Interp::hold_previous) {
                acc += samples[k].current * (b - a);
            } else {
                const double ia = current_at(a);
                const double ib = current_at(b, /*from_left=*/true);
                acc += 0.5 * (ia + ib) * (b - a);
            }
        }
        if (t1 > samples.back().time)
            acc += samples.back().current * (t1 - std::max(t0, samples.back().time));
        return acc;
    }
};

inline double c_rate_to_amps(double rate_c, double capacity_ah) {
    return rate_c * capacity_ah;
}

/// Constant-current discharge profile (two breakpoints, hold-previous).
inline CurrentProfile gen_constant(double rate_c, double duration_s, double capacity_ah) {
    if (!(duration_s > 0.0)) throw DomainError("gen_constant: duration must be positive");
    if (!(capacity_ah > 0.0)) throw DomainError("gen_constant: capacity must be positive");
    CurrentProfile p;
    const double amps = -c_rate_to_amps(rate_c, capacity_ah);
    p.samples = {{0.0, amps}, {duration_s, amps}};
    return p;
}

/// Pulse train: count discharge pulses of pulse_s seconds, each followed by a
/// rest of rest_s seconds.
inline CurrentProfile gen_pulse_train(double rate_c, double pulse_s, double rest_s, int count,
                                      double capacity_ah) {
    if (count < 1) throw DomainError("gen_pulse_train: count must be >= 1");
    if (!(pulse_s > 0.0) || !(rest_s > 0.0))
        throw DomainError("gen_pulse_train: pulse and rest durations must be positive");
    CurrentProfile p;
    const double amps = -c_rate_to_amps(rate_c, capacity_ah);
    double t = 0.0;
    for (int k = 0; k < count; ++k) {
        p.samples.push_back({t, amps});
        t += pulse_s;
        p.samples.push_back({t, 0.0});
        t += rest_s;
    }
    p.samples.push_back({t, 0.0});
    return p;
}

/// Notional eVTOL mission: takeoff at 5 C, cruise at 1.48 C, landing at 5 C,
/// all discharging. Zero-length phases are skipped. Full sorties are composed
/// with concat_profiles.
inline CurrentProfile gen_evtol_mission(double capacity_ah, double takeoff_s, double cruise_s,
                                        double landing_s) {
    if (takeoff_s < 0.0 || cruise_s < 0.0 || landing_s < 0.0)
        throw DomainError("gen_evtol_mission: durations must be non-negative");
    if (!(takeoff_s + cruise_s + landing_s > 0.0))
        throw DomainError("gen_evtol_mission: mission has zero length");
    CurrentProfile p;
    double t = 0.0;
    auto phase = [&](double rate_c, double dur) {
        if (dur <= 0.0) return;
        p.samples.push_back({t, -c_rate_to_amps(rate_c, capacity_ah)});
        t += dur;
    };
    phase(5.0, takeoff_s);
    phase(1.48, cruise_s);
    phase(5.0, landing_s);
    p.samples.push_back({t, 0.0});
    return p;
}

/// Appends b after a, shifting b's times past a's end. Interpolation and
/// ambient settings are taken from a.
inline CurrentProfile concat_profiles(const CurrentProfile& a, const CurrentProfile& b) {
    a.validate();
    b.validate();
    CurrentProfile out = a;
    const double shift = a.duration();
    // a's trailing breakpoint is replaced by b's opening one.
    out.samples.pop_back();
    for (const auto& s : b.samples) out.samples.push_back({s.time + shift, s.current});
    return out;
}

/// CC segment followed by an exponentially tapering current, approximating a
/// constant-current/constant-voltage charge. Taper sampled every sample_s and
/// replayed hold-previous.
inline CurrentProfile gen_cc_cv_charge(double rate_c, double capacity_ah, double cc_s,
                                       double taper_s, double taper_tau_s,
                                       double sample_s = 30.0) {
    if (!(cc_s > 0.0) || !(taper_s > 0.0) || !(taper_tau_s > 0.0))
        throw DomainError("gen_cc_cv_charge: durations must be positive");
    CurrentProfile p;
    const double amps = c_rate_to_amps(rate_c, capacity_ah);
    p.samples.push_back({0.0, amps});
    for (double t = cc_s; t < cc_s + taper_s; t += sample_s)
        p.samples.push_back({t, amps * std::exp(-(t - cc_s) / taper_tau_s)});
    p.samples.push_back({cc_s + taper_s, 0.0});
    return p;
}

/// One row of the bundled drive-cycle template: (time, normalized load).
struct UddsTemplatePoint {
    double time = 0.0;
    double load = 0.0;
};

/// Affinely rescales the template so its extreme loads hit scale_low_c and
/// scale_high_c exactly, repeated `repeats` times back to back. Deterministic;
/// the seed parameter is accepted for interface stability and unused.
inline CurrentProfile gen_udds_like(const std::vector<UddsTemplatePoint>& tmpl,
                                    double scale_low_c, double scale_high_c,
                                    double capacity_ah, std::uint64_t /*seed*/ = 0,
                                    int repeats = 1) {
    if (tmpl.size() < 2) throw DomainError("gen_udds_like: template too short");
    if (!(scale_low_c <= scale_high_c))
        throw DomainError("gen_udds_like: scale_low_c must not exceed scale_high_c");
    if (repeats < 1) throw DomainError("gen_udds_like: repeats must be >= 1");
    double xmin = tmpl.front().load, xmax = tmpl.front().load;
    for (const auto& p : tmpl) {
        xmin = std::min(xmin, p.load);
        xmax = std::max(xmax, p.load);
    }
    const double lo = c_rate_to_amps(scale_low_c, capacity_ah);
    const double hi = c_rate_to_amps(scale_high_c, capacity_ah);
    const double span = xmax - xmin;
    CurrentProfile out;
    out.interpolation = CurrentProfile::Interp::linear;
    const double cycle = tmpl.back().time;
    for (int r = 0; r < repeats; ++r) {
        for (std::size_t k = 0; k < tmpl.size(); ++k) {
            if (r > 0 && k == 0) continue; // cycle boundary shared
            const double x = tmpl[k].load;
            const double amps = span > 0.0 ? lo + (x - xmin) * (hi - lo) / span
                                           : 0.5 * (lo + hi);
            out.samples.push_back({r * cycle + tmpl[k].time, amps});
        }
    }
    return out;
}

} // namespace battx
