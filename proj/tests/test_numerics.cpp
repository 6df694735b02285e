#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include <sdesched/errors.hpp>
#include <sdesched/numerics.hpp>

using namespace sdesched;

TEST_CASE("lambert_w0 known values") {
    CHECK(lambert_w0(0.0) == 0.0);
    CHECK(std::abs(lambert_w0(std::exp(1.0)) - 1.0) <= 1e-14);
    // W(1) is the omega constant.
    CHECK(std::abs(lambert_w0(1.0) - 0.56714329040978384) <= 1e-14);
    // W(2e^2) = 2.
    CHECK(std::abs(lambert_w0(2.0 * std::exp(2.0)) - 2.0) <= 1e-13);
}

TEST_CASE("lambert_w0 defining identity on a log-spaced sweep") {
    for (int i = 0; i < 200; ++i) {
        const double z =
            std::exp(std::log(1e-6) + i * (std::log(1e6) - std::log(1e-6)) / 199.0);
        const double w = lambert_w0(z);
        CHECK(std::abs(w * std::exp(w) - z) <= 1e-12 * std::max(1.0, z));
    }
}

TEST_CASE("lambert_w0 rejects negative arguments") {
    CHECK_THROWS_AS(lambert_w0(-1e-12), std::domain_error);
    CHECK_THROWS_AS(lambert_w0(-3.0), std::domain_error);
}

TEST_CASE("parallel_sum basics") {
    CHECK(parallel_sum(2.0, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(parallel_sum(1.0, 3.0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(parallel_sum(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(parallel_sum(1.0, -2.0), std::domain_error);
}

TEST_CASE("parallel_sum extended-real limits") {
    const ExtendedReal a = ExtendedReal::finite(3.0);
    const ExtendedReal inf = ExtendedReal::unbounded();
    const ExtendedReal r1 = parallel_sum(a, inf);
    CHECK_FALSE(r1.is_unbounded);
    CHECK(r1.value == doctest::Approx(3.0).epsilon(1e-15));
    const ExtendedReal r2 = parallel_sum(inf, inf);
    CHECK(r2.is_unbounded);
    const ExtendedReal r3 = parallel_sum(ExtendedReal::finite(2.0), ExtendedReal::finite(2.0));
    CHECK(r3.value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("integrate: smooth integrand to relative 1e-10") {
    const double v = integrate([](double t) { return std::exp(t); }, 0.0, 1.0);
    CHECK(std::abs(v - (std::exp(1.0) - 1.0)) <= 1e-10 * (std::exp(1.0) - 1.0));

    const double osc = integrate([](double t) { return std::sin(10.0 * t); }, 0.0, 3.0);
    const double exact = (1.0 - std::cos(30.0)) / 10.0;
    CHECK(std::abs(osc - exact) <= 1e-9);
}

TEST_CASE("integrate: degenerate and invalid inputs") {
    CHECK(integrate([](double) { return 42.0; }, 2.0, 2.0) == 0.0);
    CHECK_THROWS_AS(integrate([](double) { return 1.0; }, 1.0, 0.0), ValidationError);
    CHECK_THROWS_AS(
        integrate([](double t) { return t < 0.5 ? 1.0 : std::nan(""); }, 0.0, 1.0),
        NumericError);
}

TEST_CASE("solve_ode: exponential growth accuracy and convergence order") {
    const OdeRhs rhs = [](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy[0] = y[0];
    };
    const auto coarse = solve_ode(rhs, {1.0}, OdeGrid::uniform(0.0, 1.0, 2));
    const double err_coarse = std::abs(coarse.back()[0] - std::exp(1.0));
    CHECK(err_coarse <= 1e-5);

    const auto fine = solve_ode(rhs, {1.0}, OdeGrid::uniform(0.0, 1.0, 3));
    const double err_fine = std::abs(fine.back()[0] - std::exp(1.0));
    // Halving the grid spacing halves the RK4 substep: fourth-order decay.
    CHECK(err_fine * 10.0 <= err_coarse);
}

TEST_CASE("solve_ode: coupled system hits a rotated state") {
    const OdeRhs rhs = [](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy[0] = -y[1];
        dy[1] = y[0];
    };
    const auto sol = solve_ode(rhs, {1.0, 0.0}, OdeGrid::uniform(0.0, M_PI / 2.0, 21));
    CHECK(std::abs(sol.back()[0] - 0.0) <= 1e-9);
    CHECK(std::abs(sol.back()[1] - 1.0) <= 1e-9);
}

TEST_CASE("solve_ode: divergence guard names the failure") {
    const OdeRhs rhs = [](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy[0] = y[0] * y[0];  // blows up at t = 1/y0
    };
    CHECK_THROWS_AS(solve_ode(rhs, {10.0}, OdeGrid::uniform(0.0, 1.0, 101)), DivergenceError);
}

TEST_CASE("grid and quadrature spec validation") {
    const OdeGrid unsorted{{0.0, 1.0, 0.5}};
    CHECK_THROWS_AS(unsorted.validate(), ValidationError);
    const OdeGrid negative{{-1.0, 1.0}};
    CHECK_THROWS_AS(negative.validate(), ValidationError);
    const OdeGrid empty{{}};
    CHECK_THROWS_AS(empty.validate(), ValidationError);
    OdeGrid::uniform(0.0, 2.0, 5).validate();

    QuadratureSpec bad;
    bad.rel_tol = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
