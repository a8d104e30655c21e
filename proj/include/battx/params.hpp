#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "battx/errors.hpp"

namespace battx {

/// Every identifiable constant of the BattX cell model. Defaults are the
/// Samsung INR18650-25R estimates shipped as data/params_inr18650_25r.json.
///
/// Units: capacitances in coulomb per normalized volt, resistances in ohm,
/// thermal capacitances in J/K, thermal resistances in K/W, temperatures in
/// kelvin, voltages in volt. The solid chain is parameterized by its first
/// element plus dimensionless ratios: C_s,i = eta[i]*c_s1, R_s,j = sigma[j]*r_s1.
struct ModelParams {
    int n_solid_nodes = 5;

    double c_s1 = 4521.0;
    double r_s1 = 0.114;
    std::vector<double> eta{1.0, 0.6066, 0.3115, 0.1148, 0.0164};
    std::vector<double> sigma{1.0, 1.77, 4.00, 15.98};

    double c_e = 3691.0;
    double r_e = 0.007;

    /// Open-circuit-voltage coefficients: alpha[0..12] parameterize the low
    /// branch (constant, four logistic terms, linear term), alpha[13..16] the
    /// two-exponential branch above the 0.9 split.
    std::array<double, 17> alpha{
        -9.048, -2.360, -12.986, 0.010, 13.036, -32.840, -0.087, 2.359,
        -14.863, 0.055, -0.788, -7.136, 0.966, 31.132, -3.414, 0.513, 1.816};

    double beta1 = 0.789;
    double beta2 = 0.317;

    double gamma1 = 0.026;
    double gamma2 = 0.061;
    double gamma3 = 14.36;

    double kappa1 = 30.0;
    double kappa2 = 70.0;

    double c_core = 40.0;
    double r_core = 4.0;
    double c_surf = 10.0;
    double r_surf = 7.0;

    double t_ref = 298.15;

    double v_cut_low = 2.5;
    double v_cut_high = 4.2;

    /// Sum of all solid capacitances, i.e. the total charge (coulomb) between
    /// SoC 0 and 1.
    double total_solid_capacity() const {
        double s = 0.0;
        for (double e : eta) s += e;
        return c_s1 * s;
    }

    double sum_eta() const {
        double s = 0.0;
        for (double e : eta) s += e;
        return s;
    }

    /// Throws DomainError naming the offending field if any invariant fails.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw DomainError(std::string("ModelParams: ") + name + " must be strictly positive");
        };
        if (n_solid_nodes < 2)
            throw DomainError("ModelParams: n_solid_nodes must be >= 2");
        if (eta.size() != static_cast<std::size_t>(n_solid_nodes))
            throw DomainError("ModelParams: eta length must equal n_solid_nodes");
        if (sigma.size() != static_cast<std::size_t>(n_solid_nodes) - 1)
            throw DomainError("ModelParams: sigma length must equal n_solid_nodes - 1");
        if (eta[0] != 1.0)
            throw DomainError("ModelParams: eta[0] must be exactly 1");
        if (sigma[0] != 1.0)
            throw DomainError("ModelParams: sigma[0] must be exactly 1");
        for (double e : eta) positive(e, "eta entries");
        for (double s : sigma) positive(s, "sigma entries");
        positive(c_s1, "c_s1");
        positive(r_s1, "r_s1");
        positive(c_e, "c_e");
        positive(r_e, "r_e");
        positive(c_core, "c_core");
        positive(r_core, "r_core");
        positive(c_surf, "c_surf");
        positive(r_surf, "r_surf");
        positive(t_ref, "t_ref");
        for (double a : alpha)
            if (!std::isfinite(a)) throw DomainError("ModelParams: alpha entries must be finite");
        for (double v : {beta1, beta2, gamma1, gamma2, gamma3, kappa1, kappa2})
            if (!std::isfinite(v)) throw DomainError("ModelParams: coefficients must be finite");
        if (!(v_cut_low < v_cut_high))
            throw DomainError("ModelParams: v_cut_low must be below v_cut_high");
    }
};

/// Dynamic state of one cell: normalized solid/electrolyte node voltages plus
/// the two lumped temperatures. Node 0 of v_s is the surface node that the
/// terminal current enters; v_e[0] and v_e[2] are the two end nodes of the
/// electrolyte chain (equilibrium value 0.5).
struct CellState {
    std::vector<double> v_s;
    std::array<double, 3> v_e{0.5, 0.5, 0.5};
    double t_core = 298.15;
    double t_surf = 298.15;

    void validate(double tol = 0.0) const {
        if (v_s.empty()) throw DomainError("CellState: v_s is empty");
        for (double v : v_s)
            if (!std::isfinite(v) || v < -tol || v > 1.0 + tol)
                throw DomainError("CellState: v_s entry outside [0,1]");
        for (double v : v_e)
            if (!std::isfinite(v) || v < -tol || v > 1.0 + tol)
                throw DomainError("CellState: v_e entry outside [0,1]");
        if (!(t_core > 0.0) || !(t_surf > 0.0))
            throw DomainError("CellState: temperatures must be positive");
    }
};

/// Time derivative of CellState, per second.
struct StateDerivative {
    std::vector<double> v_s;
    std::array<double, 3> v_e{0.0, 0.0, 0.0};
    double t_core = 0.0;
    double t_surf = 0.0;
};

} // namespace battx
