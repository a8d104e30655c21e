#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "battx/errors.hpp"
#include "battx/params.hpp"

namespace battx {

/// Condition-number guard for the eigenvalue Vandermonde; beyond this the
/// polynomial expansion of e^{At} cannot be trusted.
inline constexpr double kMaxVandermondeCondition = 1e12;

/// A first-order ladder dV/dt = mu * Omega * V + b * I with one conserved
/// linear functional (weights' * V). Eigen data is computed once at build
/// time; eigenvalues[0] is exactly zero, the rest are negative and distinct.
struct LadderSystem {
    Eigen::MatrixXd omega;
    double mu = 0.0;
    Eigen::VectorXd b;
    Eigen::VectorXd eigenvalues;
    Eigen::VectorXd weights;
    Eigen::MatrixXd vandermonde;
    Eigen::PartialPivLU<Eigen::MatrixXd> vandermonde_lu;
    double vandermonde_condition = 0.0;

    Eigen::Index size() const { return omega.rows(); }
};

namespace detail {

inline void assert_distinct_spectrum(const Eigen::VectorXd& eigs, double rel_tol = 1e-9) {
    const double scale = eigs.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < eigs.size(); ++i)
        for (Eigen::Index j = i + 1; j < eigs.size(); ++j)
            if (std::abs(eigs[i] - eigs[j]) <= rel_tol * scale)
                throw NumericalError("ladder spectrum degenerate: repeated eigenvalues");
}

inline Eigen::MatrixXd vandermonde_of(const Eigen::VectorXd& eigs) {
    const Eigen::Index n = eigs.size();
    Eigen::MatrixXd v(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            v(i, j) = p;
            p *= eigs[i];
        }
    }
    return v;
}

inline double condition_estimate(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    return s(0) / s(s.size() - 1);
}

inline void finish_system(LadderSystem& sys) {
    assert_distinct_spectrum(sys.eigenvalues);
    sys.vandermonde = vandermonde_of(sys.eigenvalues);
    sys.vandermonde_lu.compute(sys.vandermonde);
    sys.vandermonde_condition = condition_estimate(sys.vandermonde);
}

} // namespace detail

/// Builds the solid-diffusion ladder. Row pattern of Omega_s: the i-th node
/// couples to its neighbours through 1/(eta_i sigma_j); mu = 1/(C_s1 R_s1),
/// b = e_1 / C_s1. The conserved functional is the eta-weighted sum, which is
/// the SoC numerator.
inline LadderSystem build_omega_s(std::span<const double> eta, std::span<const double> sigma,
                                  double c_s1, double r_s1) {
    const Eigen::Index n = static_cast<Eigen::Index>(eta.size());
    if (n < 2 || sigma.size() + 1 != eta.size())
        throw DomainError("build_omega_s: need N >= 2 with N-1 sigma entries");
    for (double e : eta)
        if (!(e > 0.0)) throw DomainError("build_omega_s: eta entries must be positive");
    for (double s : sigma)
        if (!(s > 0.0)) throw DomainError("build_omega_s: sigma entries must be positive");
    if (!(c_s1 > 0.0) || !(r_s1 > 0.0))
        throw DomainError("build_omega_s: c_s1 and r_s1 must be positive");

    LadderSystem sys;
    sys.omega = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i > 0) {
            const double c = 1.0 / (eta[i] * sigma[i - 1]);
            sys.omega(i, i - 1) += c;
            sys.omega(i, i) -= c;
        }
        if (i + 1 < n) {
            const double c = 1.0 / (eta[i] * sigma[i]);
            sys.omega(i, i + 1) += c;
            sys.omega(i, i) -= c;
        }
    }
    sys.mu = 1.0 / (c_s1 * r_s1);
    sys.b = Eigen::VectorXd::Zero(n);
    sys.b(0) = 1.0 / c_s1;
    sys.weights = Eigen::Map<const Eigen::VectorXd>(eta.data(), n);

    // Omega_s = D^{-1} T with D = diag(eta) and T symmetric tridiagonal, so it
    // shares its spectrum with the symmetric D^{-1/2} T D^{-1/2}.
    Eigen::MatrixXd sym(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            sym(i, j) = sys.omega(i, j) * std::sqrt(eta[i] / eta[j]);
    sym = 0.5 * (sym + sym.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw NumericalError("build_omega_s: eigenvalue solve failed");

    // Ascending order puts the (numerically) zero eigenvalue last; snap it to
    // exact zero and store as [0, lambda_2, ...] with decreasing magnitude last.
    Eigen::VectorXd lam = es.eigenvalues();
    const double scale = lam.cwiseAbs().maxCoeff();
    if (std::abs(lam(n - 1)) > 1e-10 * scale)
        throw NumericalError("build_omega_s: conserved mode eigenvalue not numerically zero");
    sys.eigenvalues.resize(n);
    sys.eigenvalues(0) = 0.0;
    for (Eigen::Index k = 1; k < n; ++k) sys.eigenvalues(k) = lam(n - 1 - k);
    detail::finish_system(sys);
    return sys;
}

inline LadderSystem build_omega_s(const ModelParams& p) {
    return build_omega_s(p.eta, p.sigma, p.c_s1, p.r_s1);
}

/// Copy of a solid ladder with new rate constants; the spectrum depends only
/// on (eta, sigma) and is reused. For identification loops over (C_s1, R_s1).
inline LadderSystem with_solid_rates(const LadderSystem& base, double c_s1, double r_s1) {
    if (!(c_s1 > 0.0) || !(r_s1 > 0.0))
        throw DomainError("with_solid_rates: c_s1 and r_s1 must be positive");
    LadderSystem sys = base;
    sys.mu = 1.0 / (c_s1 * r_s1);
    sys.b.setZero();
    sys.b(0) = 1.0 / c_s1;
    return sys;
}

/// Builds the fixed 3x3 electrolyte ladder. Eigenvalues {0, -1, -3} and the
/// Vandermonde are exact integer data; mu = 1/(C_e R_e), b = [1/C_e, 0, -1/C_e].
inline LadderSystem build_omega_e(double c_e, double r_e) {
    if (!(c_e > 0.0) || !(r_e > 0.0))
        throw DomainError("build_omega_e: c_e and r_e must be positive");
    LadderSystem sys;
    sys.omega.resize(3, 3);
    sys.omega << -1.0, 1.0, 0.0,
                  1.0, -2.0, 1.0,
                  0.0, 1.0, -1.0;
    sys.mu = 1.0 / (c_e * r_e);
    sys.b.resize(3);
    sys.b << 1.0 / c_e, 0.0, -1.0 / c_e;
    sys.eigenvalues.resize(3);
    sys.eigenvalues << 0.0, -1.0, -3.0;
    sys.weights = Eigen::VectorXd::Ones(3);
    detail::finish_system(sys);
    return sys;
}

inline LadderSystem build_omega_e(const ModelParams& p) { return build_omega_e(p.c_e, p.r_e); }

/// The expansion a (x) A = sum_i a_i A^{i-1}, evaluated Horner style.
inline Eigen::MatrixXd tensor_expand(const Eigen::VectorXd& coeffs, const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || coeffs.size() != n)
        throw DomainError("tensor_expand: coefficient count must equal matrix dimension");
    Eigen::MatrixXd r = coeffs(n - 1) * Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index k = n - 2; k >= 0; --k) {
        r = (r * a).eval();
        r.diagonal().array() += coeffs(k);
    }
    return r;
}

namespace detail {

inline void check_conditioning(const LadderSystem& sys) {
    if (sys.vandermonde_condition > kMaxVandermondeCondition)
        throw NumericalError("ladder Vandermonde ill-conditioned; eigenvalues too clustered");
}

/// phi(mu, t): exponential vector [1, e^{mu l_2 t}, ...].
inline Eigen::VectorXd phi_vector(const LadderSystem& sys, double t) {
    Eigen::VectorXd v(sys.size());
    v(0) = 1.0;
    for (Eigen::Index k = 1; k < sys.size(); ++k)
        v(k) = std::exp(sys.mu * sys.eigenvalues(k) * t);
    return v;
}

/// phibar(mu, t) - phibar(mu, 0), carried out symbolically: first entry t,
/// the rest expm1(mu l t)/(mu l). Avoids cancellation at small t.
inline Eigen::VectorXd phibar_delta_vector(const LadderSystem& sys, double t) {
    Eigen::VectorXd v(sys.size());
    v(0) = t;
    for (Eigen::Index k = 1; k < sys.size(); ++k) {
        const double ml = sys.mu * sys.eigenvalues(k);
        v(k) = std::expm1(ml * t) / ml;
    }
    return v;
}

} // namespace detail

/// e^{A t} with A = mu * Omega, via the Cayley-Hamilton expansion
/// [Phi^{-1} phi(mu,t)] (x) Omega.
inline Eigen::MatrixXd matrix_exponential_ch(const LadderSystem& sys, double t) {
    if (!(t >= 0.0)) throw DomainError("matrix_exponential_ch: t must be >= 0");
    detail::check_conditioning(sys);
    const Eigen::VectorXd a = sys.vandermonde_lu.solve(detail::phi_vector(sys, t));
    return tensor_expand(a, sys.omega);
}

/// Constant-current solution V(t) = e^{At} V(0) + [Phi^{-1}(phibar(t)-phibar(0))] (x) Omega * b * I.
inline Eigen::VectorXd ladder_closed_form(const LadderSystem& sys, double t, double current,
                                          const Eigen::VectorXd& v0) {
    if (!(t >= 0.0)) throw DomainError("ladder_closed_form: t must be >= 0");
    if (v0.size() != sys.size()) throw DomainError("ladder_closed_form: state size mismatch");
    detail::check_conditioning(sys);
    const Eigen::VectorXd a = sys.vandermonde_lu.solve(detail::phi_vector(sys, t));
    const Eigen::VectorXd c = sys.vandermonde_lu.solve(detail::phibar_delta_vector(sys, t));
    return tensor_expand(a, sys.omega) * v0 + tensor_expand(c, sys.omega) * sys.b * current;
}

/// Batched constant-current solution on a time grid; column k is V(times[k]).
/// Krylov columns Omega^j v0 and Omega^j b are shared across the grid.
inline Eigen::MatrixXd ladder_closed_form_grid(const LadderSystem& sys,
                                               std::span<const double> times, double current,
                                               const Eigen::VectorXd& v0) {
    if (v0.size() != sys.size()) throw DomainError("ladder_closed_form_grid: state size mismatch");
    detail::check_conditioning(sys);
    const Eigen::Index n = sys.size();
    Eigen::MatrixXd pv(n, n), pb(n, n);
    pv.col(0) = v0;
    pb.col(0) = sys.b;
    for (Eigen::Index k = 1; k < n; ++k) {
        pv.col(k) = sys.omega * pv.col(k - 1);
        pb.col(k) = sys.omega * pb.col(k - 1);
    }
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!(times[j] >= 0.0)) throw DomainError("ladder_closed_form_grid: times must be >= 0");
        const Eigen::VectorXd a = sys.vandermonde_lu.solve(detail::phi_vector(sys, times[j]));
        const Eigen::VectorXd c =
            sys.vandermonde_lu.solve(detail::phibar_delta_vector(sys, times[j]));
        out.col(static_cast<Eigen::Index>(j)) = pv * a + pb * c * current;
    }
    return out;
}

/// Solid nodes after t seconds of constant current at reference temperature.
inline std::vector<double> vs_closed_form(double t, double current,
                                          std::span<const double> v_s0, const ModelParams& p) {
    const LadderSystem sys = build_omega_s(p);
    if (static_cast<Eigen::Index>(v_s0.size()) != sys.size())
        throw DomainError("vs_closed_form: v_s0 size mismatch");
    const Eigen::VectorXd v0 = Eigen::Map<const Eigen::VectorXd>(v_s0.data(), sys.size());
    const Eigen::VectorXd v = ladder_closed_form(sys, t, current, v0);
    return std::vector<double>(v.data(), v.data() + v.size());
}

/// Electrolyte nodes after t seconds of constant current.
inline std::array<double, 3> ve_closed_form(double t, double current,
                                            const std::array<double, 3>& v_e0,
                                            const ModelParams& p) {
    const LadderSystem sys = build_omega_e(p);
    Eigen::Vector3d v0(v_e0[0], v_e0[1], v_e0[2]);
    const Eigen::VectorXd v = ladder_closed_form(sys, t, current, v0);
    return {v(0), v(1), v(2)};
}

} // namespace battx
