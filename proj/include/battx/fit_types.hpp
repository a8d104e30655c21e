#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "battx/errors.hpp"

namespace battx {

/// Box constraint plus starting point for one parameter.
struct BoundTriple {
    double lower = 0.0;
    double init = 0.0;
    double upper = 0.0;

    void validate(const std::string& name) const {
        if (!(lower <= init && init <= upper))
            throw DomainError("ParamBounds: " + name + " must satisfy lower <= init <= upper");
    }
};

/// Prior search ranges for every identifiable parameter (Remark-1 style box
/// constraints). Scalar groups are looked up by ModelParams field name; the
/// 17 OCV coefficients get their own block.
struct ParamBounds {
    std::map<std::string, BoundTriple> scalars;
    std::array<BoundTriple, 17> alpha{};

    const BoundTriple& scalar(const std::string& name) const {
        auto it = scalars.find(name);
        if (it == scalars.end())
            throw DomainError("ParamBounds: no bounds for parameter '" + name + "'");
        it->second.validate(name);
        return it->second;
    }

    void validate() const {
        for (const auto& [name, triple] : scalars) triple.validate(name);
        for (std::size_t i = 0; i < alpha.size(); ++i)
            alpha[i].validate("alpha_" + std::to_string(i));
    }
};

/// Shipped defaults: the printed initial-guess/bound rows where the paper has
/// them, ballpark priors elsewhere (gamma rows print no bounds; the OCV block
/// prints none at all).
inline ParamBounds default_bounds() {
    ParamBounds b;
    b.scalars["gamma1"] = {0.0, 1.0, 1.0};
    b.scalars["gamma2"] = {0.0, 1.0, 1.0};
    b.scalars["gamma3"] = {-50.0, 1.0, 50.0};
    b.scalars["c_s1"] = {3600.0, 4391.0, 5500.0};
    b.scalars["r_s1"] = {0.054, 0.090, 0.167};
    b.scalars["c_surf"] = {3.0, 7.0, 12.0};
    b.scalars["r_surf"] = {3.0, 6.0, 20.0};
    b.scalars["c_core"] = {5.0, 20.0, 50.0};
    b.scalars["r_core"] = {0.5, 1.0, 7.0};
    b.scalars["c_e"] = {500.0, 1032.0, 5000.0};
    b.scalars["r_e"] = {0.002, 0.028, 0.080};
    b.scalars["beta1"] = {0.42, 0.53, 1.00};
    b.scalars["beta2"] = {0.19, 0.31, 0.423};
    b.scalars["kappa1"] = {10.0, 15.0, 100.0};
    b.scalars["kappa2"] = {10.0, 22.0, 100.0};

    const std::array<double, 17> init{-9.0, -2.0, -13.0, 0.0, 13.0, -33.0, -0.1, 2.0,
                                      -15.0, 0.05, -0.8, -7.0, 1.0, 30.0, -3.0, 0.5, 2.0};
    for (std::size_t i = 0; i < 17; ++i) {
        const double a = std::abs(init[i]);
        const double w = a >= 5.0 ? 0.5 * a : (a >= 1.0 ? 2.0 : 1.0);
        b.alpha[i] = {init[i] - w, init[i], init[i] + w};
    }
    return b;
}

struct MultiStartSummary {
    int starts = 0;
    int best_start = -1;
    std::vector<double> start_costs;
};

/// Outcome of one identification step.
struct FitResult {
    std::map<std::string, double> estimates;
    double residual_rms = 0.0; // volts or kelvin, per step
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> active_bounds;
    MultiStartSummary multi_start;
    std::vector<std::string> warnings;
    std::uint64_t seed = 0;
};

} // namespace battx
