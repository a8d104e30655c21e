#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "battx/nls.hpp"

using namespace battx;
using Catch::Approx;

TEST_CASE("quadratic residual converges to the interior optimum") {
    Eigen::Vector2d target(0.3, -1.2);
    ResidualFn fn = [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(x - target);
    };
    Eigen::Vector2d lo(-5.0, -5.0), hi(5.0, 5.0), x0(4.0, 4.0);
    const NlsResult r = bounded_nls(fn, lo, hi, x0, {});
    REQUIRE(r.converged);
    REQUIRE(r.x(0) == Approx(0.3).margin(1e-8));
    REQUIRE(r.x(1) == Approx(-1.2).margin(1e-8));
    REQUIRE_FALSE(r.at_lower[0]);
    REQUIRE_FALSE(r.at_upper[0]);
}

TEST_CASE("optimum outside the box lands on the bound and is flagged") {
    Eigen::VectorXd target(1);
    target << 7.0;
    ResidualFn fn = [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(x - target);
    };
    Eigen::VectorXd lo(1), hi(1), x0(1);
    lo << -1.0;
    hi << 2.0;
    x0 << 0.0;
    const NlsResult r = bounded_nls(fn, lo, hi, x0, {});
    REQUIRE(r.x(0) == Approx(2.0).margin(1e-12));
    REQUIRE(r.at_upper[0]);
}

TEST_CASE("rosenbrock valley reached from every start") {
    // residual form of Rosenbrock: r = (10 (y - x^2), 1 - x)
    ResidualFn fn = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r(0) = 10.0 * (x(1) - x(0) * x(0));
        r(1) = 1.0 - x(0);
        return r;
    };
    Eigen::Vector2d lo(-2.0, -1.0), hi(2.0, 3.0), x0(-1.2, 1.0);

    // brute-force grid oracle for the global minimum location
    double best = 1e300, bx = 0, by = 0;
    for (int i = 0; i <= 400; ++i)
        for (int j = 0; j <= 400; ++j) {
            const double x = -2.0 + 4.0 * i / 400.0;
            const double y = -1.0 + 4.0 * j / 400.0;
            const double c = 100.0 * (y - x * x) * (y - x * x) + (1.0 - x) * (1.0 - x);
            if (c < best) {
                best = c;
                bx = x;
                by = y;
            }
        }
    REQUIRE(bx == Approx(1.0).margin(0.02));
    REQUIRE(by == Approx(1.0).margin(0.02));

    NlsOptions opt;
    opt.restarts = 8;
    opt.seed = 123;
    opt.max_iterations = 500;
    const NlsResult r = bounded_nls(fn, lo, hi, x0, opt);
    REQUIRE(r.x(0) == Approx(1.0).margin(1e-6));
    REQUIRE(r.x(1) == Approx(1.0).margin(1e-6));
    // every start reaches the (unique) global minimum on this box
    for (const auto& s : r.starts) REQUIRE(s.cost < 1e-10);
}

TEST_CASE("all-infeasible residuals raise an optimization error") {
    ResidualFn fn = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(1);
        r(0) = std::numeric_limits<double>::quiet_NaN();
        return r;
    };
    Eigen::VectorXd lo(1), hi(1), x0(1);
    lo << 0.0;
    hi << 1.0;
    x0 << 0.5;
    REQUIRE_THROWS_AS(bounded_nls(fn, lo, hi, x0, {}), OptimizationError);
}

TEST_CASE("multi-start is deterministic for a fixed seed") {
    ResidualFn fn = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(2);
        r(0) = std::sin(3.0 * x(0)) + 0.1 * x(0) * x(0);
        r(1) = std::cos(2.0 * x(1)) + 0.1 * (x(1) - 1.0) * (x(1) - 1.0);
        return r;
    };
    Eigen::Vector2d lo(-4.0, -4.0), hi(4.0, 4.0), x0(0.0, 0.0);
    NlsOptions opt;
    opt.seed = 77;
    const NlsResult a = bounded_nls(fn, lo, hi, x0, opt);
    const NlsResult b = bounded_nls(fn, lo, hi, x0, opt);
    REQUIRE(a.x == b.x);
    REQUIRE(a.cost == b.cost);
    REQUIRE(a.best_start == b.best_start);

    SECTION("parallel fan-out reduces to the same answer") {
        NlsOptions par = opt;
        par.max_threads = 4;
        const NlsResult c = bounded_nls(fn, lo, hi, x0, par);
        REQUIRE(c.x == a.x);
        REQUIRE(c.best_start == a.best_start);
    }
}
