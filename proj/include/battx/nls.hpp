#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "battx/errors.hpp"
#include "battx/fit_types.hpp"
#include "battx/rng.hpp"

namespace battx {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct NlsOptions {
    int max_iterations = 300;
    double ftol = 1e-12;       // relative cost decrease considered converged
    double gtol = 1e-12;       // projected-gradient threshold
    int restarts = 8;          // total starts including the initial guess
    std::uint64_t seed = 0;
    int max_threads = 1;       // parallel fan-out over starts; reduction is by index
    /// Caller-chosen start points tried after the initial guess and before the
    /// random draws; they count against `restarts`.
    std::vector<Eigen::VectorXd> extra_starts;
};

struct NlsStartOutcome {
    double cost = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

struct NlsResult {
    Eigen::VectorXd x;
    double cost = std::numeric_limits<double>::infinity();
    double rms = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<bool> at_lower, at_upper;
    int best_start = -1;
    std::vector<NlsStartOutcome> starts;
};

namespace detail {

inline Eigen::VectorXd clamp_box(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = std::clamp(x(i), lo(i), hi(i));
    return x;
}

struct LmRun {
    Eigen::VectorXd x;
    double cost = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt with projection onto the box after every trial step.
/// Jacobian by forward differences with bound-aware steps.
inline LmRun lm_minimize(const ResidualFn& f, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi, const Eigen::VectorXd& x0,
                         const NlsOptions& opt) {
    const Eigen::Index p = x0.size();
    LmRun run;
    run.x = clamp_box(x0, lo, hi);

    Eigen::VectorXd r;
    try {
        r = f(run.x);
    } catch (const Error&) {
        return run; // infinite cost, caller skips this start
    }
    if (!r.allFinite()) return run;
    run.cost = 0.5 * r.squaredNorm();
    const Eigen::Index m = r.size();

    double lambda = 1e-3;
    int small_steps = 0; // consecutive accepted steps with negligible improvement
    Eigen::MatrixXd jac(m, p);

    for (run.iterations = 0; run.iterations < opt.max_iterations; ++run.iterations) {
        // Central-difference Jacobian; one-sided at an active bound.
        for (Eigen::Index j = 0; j < p; ++j) {
            const double range = hi(j) - lo(j);
            double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                       std::max(std::abs(run.x(j)), 1e-3 * std::max(range, 1e-12));
            if (h == 0.0) h = 1e-10;
            const double hp = std::min(h, hi(j) - run.x(j));
            const double hm = std::min(h, run.x(j) - lo(j));
            auto eval = [&](double xv) -> Eigen::VectorXd {
                Eigen::VectorXd xj = run.x;
                xj(j) = xv;
                try {
                    Eigen::VectorXd rj = f(xj);
                    if (rj.allFinite()) return rj;
                } catch (const Error&) {
                }
                return r; // treat as flat
            };
            if (hp > 0.25 * h && hm > 0.25 * h) {
                jac.col(j) = (eval(run.x(j) + hp) - eval(run.x(j) - hm)) / (hp + hm);
            } else if (hp >= hm) {
                jac.col(j) = (eval(run.x(j) + hp) - r) / hp;
            } else {
                jac.col(j) = (r - eval(run.x(j) - hm)) / hm;
            }
        }

        const Eigen::VectorXd g = jac.transpose() * r;
        const Eigen::MatrixXd h_gn = jac.transpose() * jac;

        // Projected gradient: directions pinned at an active bound contribute nothing.
        double pg = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double range = hi(j) - lo(j);
            const bool at_lo = run.x(j) <= lo(j) + 1e-12 * std::max(range, 1.0);
            const bool at_hi = run.x(j) >= hi(j) - 1e-12 * std::max(range, 1.0);
            double gj = g(j);
            if ((at_lo && gj > 0.0) || (at_hi && gj < 0.0)) gj = 0.0;
            pg = std::max(pg, std::abs(gj));
        }
        if (pg <= opt.gtol * (1.0 + run.cost)) {
            run.converged = true;
            break;
        }

        bool accepted = false;
        for (int tries = 0; tries < 25; ++tries) {
            Eigen::MatrixXd a = h_gn;
            for (Eigen::Index j = 0; j < p; ++j)
                a(j, j) += lambda * std::max(h_gn(j, j), 1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd xt = clamp_box(run.x + step, lo, hi);
            Eigen::VectorXd rt;
            bool ok = true;
            try {
                rt = f(xt);
            } catch (const Error&) {
                ok = false;
            }
            if (ok && rt.allFinite()) {
                const double ct = 0.5 * rt.squaredNorm();
                if (ct < run.cost) {
                    const double rel = (run.cost - ct) / std::max(run.cost, 1e-300);
                    run.x = xt;
                    r = rt;
                    run.cost = ct;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    accepted = true;
                    small_steps = rel < opt.ftol ? small_steps + 1 : 0;
                    if (small_steps >= 2) run.converged = true;
                    break;
                }
            }
            lambda *= 4.0;
            if (lambda > 1e14) break;
        }
        if (!accepted || run.converged) {
            if (!accepted) run.converged = true; // stalled at a minimum within tolerance
            break;
        }
    }
    return run;
}

} // namespace detail

/// Box-constrained least squares with seeded multi-start. Start 0 is the
/// initial guess; the rest are uniform draws over the box, generated up front
/// so results do not depend on scheduling. Ties go to the lowest start index.
inline NlsResult bounded_nls(const ResidualFn& residual, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, const Eigen::VectorXd& x0,
                             const NlsOptions& opt = {}) {
    const Eigen::Index p = x0.size();
    if (lo.size() != p || hi.size() != p)
        throw DomainError("bounded_nls: bound vectors must match parameter count");
    for (Eigen::Index j = 0; j < p; ++j)
        if (!(lo(j) <= hi(j))) throw DomainError("bounded_nls: lower bound above upper bound");

    const int nstarts =
        std::max({1, opt.restarts, 1 + static_cast<int>(opt.extra_starts.size())});
    std::vector<Eigen::VectorXd> starts;
    starts.reserve(nstarts);
    starts.push_back(detail::clamp_box(x0, lo, hi));
    for (const auto& xs : opt.extra_starts) {
        if (xs.size() != p) throw DomainError("bounded_nls: extra start has wrong dimension");
        starts.push_back(detail::clamp_box(xs, lo, hi));
    }
    GaussianSampler g(mix_seed(opt.seed, 0x5ba1ce));
    for (int s = static_cast<int>(starts.size()); s < nstarts; ++s) {
        Eigen::VectorXd x(p);
        for (Eigen::Index j = 0; j < p; ++j) x(j) = lo(j) + g.uniform01() * (hi(j) - lo(j));
        starts.push_back(std::move(x));
    }

    std::vector<detail::LmRun> runs(nstarts);
    if (opt.max_threads > 1 && nstarts > 1) {
        std::vector<std::future<detail::LmRun>> futs;
        futs.reserve(nstarts);
        for (int s = 0; s < nstarts; ++s)
            futs.push_back(std::async(std::launch::async, [&, s] {
                return detail::lm_minimize(residual, lo, hi, starts[s], opt);
            }));
        for (int s = 0; s < nstarts; ++s) runs[s] = futs[s].get();
    } else {
        for (int s = 0; s < nstarts; ++s)
            runs[s] = detail::lm_minimize(residual, lo, hi, starts[s], opt);
    }

    NlsResult res;
    res.starts.resize(nstarts);
    for (int s = 0; s < nstarts; ++s) {
        res.starts[s] = {runs[s].cost, runs[s].converged, runs[s].iterations};
        if (runs[s].cost < res.cost) {
            res.cost = runs[s].cost;
            res.best_start = s;
        }
    }
    if (res.best_start < 0 || !std::isfinite(res.cost))
        throw OptimizationError("bounded_nls: no start produced a finite residual");

    const detail::LmRun& best = runs[res.best_start];
    res.x = best.x;
    res.iterations = best.iterations;
    res.converged = best.converged;
    const Eigen::VectorXd r = residual(res.x);
    res.rms = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
    res.at_lower.assign(p, false);
    res.at_upper.assign(p, false);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double range = std::max(hi(j) - lo(j), 1.0);
        res.at_lower[j] = res.x(j) <= lo(j) + 1e-10 * range;
        res.at_upper[j] = res.x(j) >= hi(j) - 1e-10 * range;
    }
    return res;
}

} // namespace battx
