#pragma once

// Test-only numerical oracles, kept independent of the library's
// Cayley-Hamilton / closed-form code paths.

#include <Eigen/Dense>
#include <cmath>

namespace oracles {

/// Matrix exponential by Pade [6/6] approximation with scaling and squaring.
inline Eigen::MatrixXd expm_pade(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    double scale = 1.0;
    while (norm * scale > 0.5) {
        scale *= 0.5;
        ++squarings;
    }
    const Eigen::MatrixXd m = a * scale;

    const int q = 6;
    double c = 0.5;
    Eigen::MatrixXd x = m;
    Eigen::MatrixXd num = Eigen::MatrixXd::Identity(n, n) + c * m;
    Eigen::MatrixXd den = Eigen::MatrixXd::Identity(n, n) - c * m;
    bool plus = true;
    for (int k = 2; k <= q; ++k) {
        c = c * static_cast<double>(q - k + 1) / static_cast<double>(k * (2 * q - k + 1));
        x = (m * x).eval();
        num += c * x;
        if (plus)
            den += c * x;
        else
            den -= c * x;
        plus = !plus;
    }
    Eigen::MatrixXd e = den.partialPivLu().solve(num);
    for (int k = 0; k < squarings; ++k) e = (e * e).eval();
    return e;
}

/// RK4 on the linear ladder dv/dt = A v + b I with constant current.
inline Eigen::VectorXd rk4_linear(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  double current, Eigen::VectorXd v, double t_end, double dt) {
    auto f = [&](const Eigen::VectorXd& x) { return (a * x + b * current).eval(); };
    double t = 0.0;
    while (t < t_end - 1e-12) {
        const double h = std::min(dt, t_end - t);
        const Eigen::VectorXd k1 = f(v);
        const Eigen::VectorXd k2 = f(v + 0.5 * h * k1);
        const Eigen::VectorXd k3 = f(v + 0.5 * h * k2);
        const Eigen::VectorXd k4 = f(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return v;
}

} // namespace oracles
