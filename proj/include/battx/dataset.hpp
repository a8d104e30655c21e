#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "battx/errors.hpp"
#include "battx/rng.hpp"
#include "battx/simulate.hpp"

namespace battx {

/// A measurement record as the identification pipeline consumes it: time,
/// current, terminal voltage, optionally surface temperature, plus the
/// metadata the experiment carries (capacity reference, ambient, starting SoC).
struct Dataset {
    std::vector<double> time;
    std::vector<double> current;
    std::vector<double> voltage;
    std::vector<double> temp_surf; // empty when not measured

    double capacity_ah = 0.0; // 0 = unknown
    double t_amb = 298.15;
    double soc0 = 1.0;
    std::string termination;

    bool has_temperature() const { return !temp_surf.empty(); }
    std::size_t size() const { return time.size(); }

    void validate() const {
        if (time.size() < 2) throw DatasetError("Dataset: need at least two rows");
        if (current.size() != time.size() || voltage.size() != time.size())
            throw DatasetError("Dataset: column lengths disagree");
        if (!temp_surf.empty() && temp_surf.size() != time.size())
            throw DatasetError("Dataset: temperature column length disagrees");
        for (std::size_t k = 0; k < time.size(); ++k) {
            if (k > 0 && !(time[k] > time[k - 1]))
                throw DatasetError("Dataset: times must be strictly increasing");
            if (!std::isfinite(current[k]) || !std::isfinite(voltage[k]))
                throw DatasetError("Dataset: currents/voltages must be finite");
        }
    }

    double mean_abs_current() const {
        double s = 0.0;
        for (double i : current) s += std::abs(i);
        return s / static_cast<double>(current.size());
    }

    /// True when the current column is one constant nonzero value (the CC
    /// experiment designs). Trailing zero rows after a cutoff are tolerated.
    bool is_constant_current(double rel_tol = 1e-9) const {
        double ref = 0.0;
        for (double i : current)
            if (std::abs(i) > std::abs(ref)) ref = i;
        if (ref == 0.0) return false;
        for (double i : current)
            if (i != 0.0 && std::abs(i - ref) > rel_tol * std::abs(ref)) return false;
        return true;
    }

    double constant_current_value() const {
        double ref = 0.0;
        for (double i : current)
            if (std::abs(i) > std::abs(ref)) ref = i;
        return ref;
    }
};

/// Projects a simulated trace onto the dataset shape (with temperature).
inline Dataset dataset_from_trace(const SimulationTrace& trace, double t_amb, double soc0,
                                  double capacity_ah, bool with_temperature = true) {
    Dataset d;
    d.t_amb = t_amb;
    d.soc0 = soc0;
    d.capacity_ah = capacity_ah;
    d.termination = to_string(trace.termination);
    d.time.reserve(trace.rows.size());
    for (const auto& r : trace.rows) {
        d.time.push_back(r.time);
        d.current.push_back(r.current);
        d.voltage.push_back(r.voltage);
        if (with_temperature) d.temp_surf.push_back(r.state.t_surf);
    }
    return d;
}

/// Seeded gaussian noise on the measured channels; time and current stay
/// untouched. sigma 0 is the identity.
inline Dataset add_noise(const Dataset& clean, double voltage_sigma, double temp_sigma,
                         std::uint64_t seed) {
    if (voltage_sigma < 0.0 || temp_sigma < 0.0)
        throw DomainError("add_noise: sigmas must be non-negative");
    Dataset out = clean;
    GaussianSampler g(seed);
    if (voltage_sigma > 0.0)
        for (double& v : out.voltage) v += voltage_sigma * g.normal();
    if (temp_sigma > 0.0)
        for (double& v : out.temp_surf) v += temp_sigma * g.normal();
    return out;
}

} // namespace battx
