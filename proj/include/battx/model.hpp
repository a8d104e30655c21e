#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "battx/errors.hpp"
#include "battx/params.hpp"

namespace battx {

/// Evaluation slack for states handed in by integrators: node voltages within
/// this distance of [0,1] are clamped before entering U_s/U_e; anything
/// further out is a genuine domain violation.
inline constexpr double kStateEvalSlack = 1e-3;

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline double checked01(double v, const char* what) {
    if (!std::isfinite(v) || v < -kStateEvalSlack || v > 1.0 + kStateEvalSlack)
        throw DomainError(std::string(what) + " outside unit range");
    return clamp01(v);
}

} // namespace detail

/// State of charge as the capacitance-weighted mean of the solid node
/// voltages, returned as a fraction in [0,1].
inline double soc(const CellState& state, const ModelParams& params) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < state.v_s.size(); ++i) {
        num += params.eta[i] * state.v_s[i];
        den += params.eta[i];
    }
    return num / den;
}

/// Open-circuit voltage U_s(v). The low branch (v <= 0.9) is a constant plus
/// four logistic terms plus a linear term; the high branch (v > 0.9) is a sum
/// of two exponentials. The split is strict at 0.9 so the function is total;
/// continuity there depends on the coefficients, not on the code.
inline double ocv_us(double v_s1, const std::array<double, 17>& a) {
    if (!std::isfinite(v_s1) || v_s1 < 0.0 || v_s1 > 1.0)
        throw DomainError("ocv_us: v_s1 outside [0,1]");
    if (v_s1 <= 0.9) {
        double u = a[0];
        u += a[1] / (1.0 + std::exp(a[2] * (v_s1 - a[3])));
        u += a[4] / (1.0 + std::exp(a[5] * (v_s1 - a[6])));
        u += a[7] / (1.0 + std::exp(a[8] * (v_s1 - a[9])));
        u += a[10] / (1.0 + std::exp(a[11] * v_s1));
        u += a[12] * v_s1;
        return u;
    }
    return a[13] * std::exp(a[14] * v_s1) + a[15] * std::exp(a[16] * v_s1);
}

inline double ocv_us(double v_s1, const ModelParams& params) {
    return ocv_us(v_s1, params.alpha);
}

/// Electrolyte potential U_e = beta1 * ln((v_e1 + beta2)/(v_e3 + beta2)).
inline double ue(double v_e1, double v_e3, double beta1, double beta2) {
    const double num = v_e1 + beta2;
    const double den = v_e3 + beta2;
    if (!(num > 0.0) || !(den > 0.0))
        throw DomainError("ue: log argument non-positive; beta2 inconsistent with state range");
    return beta1 * std::log(num / den);
}

/// SoC-dependent part of the internal resistance.
inline double r_o(double soc_frac, double gamma1, double gamma2, double gamma3) {
    return gamma1 + gamma2 * std::exp(-gamma3 * soc_frac);
}

inline double arrhenius_factor(double kappa, double t_kelvin, double t_ref) {
    if (!(t_kelvin > 0.0) || !(t_ref > 0.0))
        throw DomainError("arrhenius_factor: non-positive temperature");
    return std::exp(kappa * (1.0 / t_kelvin - 1.0 / t_ref));
}

/// Temperature-corrected internal resistance R_o,T.
inline double r_o_T(double soc_frac, double t_core, const ModelParams& p) {
    return r_o(soc_frac, p.gamma1, p.gamma2, p.gamma3) *
           arrhenius_factor(p.kappa1, t_core, p.t_ref);
}

/// Temperature-corrected base solid resistance R_s,1,T. The whole chain
/// scales with it: R_s,j(T) = sigma[j] * r_s1_T(T).
inline double r_s1_T(double t_core, const ModelParams& p) {
    return p.r_s1 * arrhenius_factor(p.kappa2, t_core, p.t_ref);
}

/// Internal heat generation rate, Q = -I [U_s(SoC) - U_s(v_s1) - R_oT I].
/// Sign convention: I > 0 charging, I < 0 discharging; Q is in watts.
inline double heat_rate(double current, const CellState& state, const ModelParams& p) {
    const double s = detail::checked01(soc(state, p), "heat_rate: SoC");
    const double v1 = detail::checked01(state.v_s[0], "heat_rate: v_s1");
    const double rot = r_o_T(s, state.t_core, p);
    return -current * (ocv_us(s, p) - ocv_us(v1, p) - rot * current);
}

/// Terminal voltage U = U_s(v_s1) + U_e(v_e1, v_e3) + R_oT * I.
inline double terminal_voltage(const CellState& state, double current, const ModelParams& p) {
    const double v1 = detail::checked01(state.v_s[0], "terminal_voltage: v_s1");
    const double e1 = detail::checked01(state.v_e[0], "terminal_voltage: v_e1");
    const double e3 = detail::checked01(state.v_e[2], "terminal_voltage: v_e3");
    const double s = detail::checked01(soc(state, p), "terminal_voltage: SoC");
    return ocv_us(v1, p) + ue(e1, e3, p.beta1, p.beta2) +
           r_o_T(s, state.t_core, p) * current;
}

/// Right-hand side of the coupled ODE system: solid ladder with
/// temperature-dependent resistances, electrolyte ladder, lumped thermal
/// pair. t_amb is the ambient temperature seen by the surface node.
inline StateDerivative rhs(const CellState& state, double current, double t_amb,
                           const ModelParams& p) {
    const std::size_t n = state.v_s.size();
    if (n != p.eta.size()) throw DomainError("rhs: state size does not match params");
    state.validate(kStateEvalSlack);
    if (!std::isfinite(current) || !std::isfinite(t_amb) || !(t_amb > 0.0))
        throw DomainError("rhs: current/ambient must be finite, t_amb positive");

    StateDerivative d;
    d.v_s.resize(n);

    // Solid chain: C_s,i = eta_i c_s1, R_s,j = sigma_j r_s1_T(t_core).
    const double mu_s = 1.0 / (p.c_s1 * r_s1_T(state.t_core, p));
    const auto& vs = state.v_s;
    d.v_s[0] = mu_s * (vs[1] - vs[0]) / (p.eta[0] * p.sigma[0]) + current / (p.eta[0] * p.c_s1);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d.v_s[i] = mu_s * ((vs[i - 1] - vs[i]) / (p.eta[i] * p.sigma[i - 1]) +
                           (vs[i + 1] - vs[i]) / (p.eta[i] * p.sigma[i]));
    }
    d.v_s[n - 1] = mu_s * (vs[n - 2] - vs[n - 1]) / (p.eta[n - 1] * p.sigma[n - 2]);

    // Electrolyte chain: uniform C_e, R_e; current enters node 1, leaves node 3.
    const double mu_e = 1.0 / (p.c_e * p.r_e);
    const auto& ve = state.v_e;
    d.v_e[0] = mu_e * (ve[1] - ve[0]) + current / p.c_e;
    d.v_e[1] = mu_e * (ve[0] - 2.0 * ve[1] + ve[2]);
    d.v_e[2] = mu_e * (ve[1] - ve[2]) - current / p.c_e;

    // Thermal pair: conduction core<->surface, convection surface<->ambient.
    const double q = heat_rate(current, state, p);
    d.t_core = q / p.c_core + (state.t_surf - state.t_core) / (p.r_core * p.c_core);
    d.t_surf = (t_amb - state.t_surf) / (p.r_surf * p.c_surf) -
               (state.t_surf - state.t_core) / (p.r_core * p.c_surf);

    for (double v : d.v_s)
        if (!std::isfinite(v)) throw NumericalError("rhs: non-finite solid derivative");
    for (double v : d.v_e)
        if (!std::isfinite(v)) throw NumericalError("rhs: non-finite electrolyte derivative");
    if (!std::isfinite(d.t_core) || !std::isfinite(d.t_surf))
        throw NumericalError("rhs: non-finite thermal derivative");
    return d;
}

} // namespace battx
