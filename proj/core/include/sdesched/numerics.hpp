#pragma once

#include <functional>
#include <vector>

#include "sdesched/errors.hpp"

namespace sdesched {

/// Controls adaptive quadrature (and the error tolerance of adaptive helpers
/// built on top of it).
struct QuadratureSpec {
    double rel_tol = 1e-10;   // relative tolerance on the integral estimate
    int max_depth = 18;       // maximum bisection depth (2^depth subintervals)

    void validate() const;
};

/// Strictly increasing evaluation times, first point >= 0. Used to request
/// trajectory values (Fisher ODE, variance ODE) at specific times.
struct OdeGrid {
    std::vector<double> times;

    void validate() const;
    static OdeGrid uniform(double t0, double t1, int points);
};

/// Nonnegative extended real with an explicit "unbounded" state, used where
/// the math calls for a +infinity limit (parallel sums with sigma^2 = 0,
/// step-size bounds with f == 0) without putting IEEE infinities in results.
struct ExtendedReal {
    double value = 0.0;
    bool is_unbounded = false;

    static ExtendedReal finite(double v) { return {v, false}; }
    static ExtendedReal unbounded() { return {0.0, true}; }
};

/// Principal-branch Lambert W on z >= 0: the w >= 0 with w*e^w = z.
/// Residual |w*e^w - z| <= 1e-12 * max(1, z). Throws std::domain_error for z < 0.
double lambert_w0(double z);

/// Parallel sum (1/a + 1/b)^-1 for a, b > 0. Throws std::domain_error otherwise.
double parallel_sum(double a, double b);

/// Parallel sum on extended reals: PS(a, unbounded) = a; PS(unbounded, unbounded)
/// stays unbounded. Finite operands must be positive.
ExtendedReal parallel_sum(const ExtendedReal& a, const ExtendedReal& b);

/// Adaptive Gauss-Kronrod quadrature of fn over [a, b] (a <= b; [a, a] -> 0).
/// A non-finite evaluation raises NumericError naming the offending abscissa.
double integrate(const std::function<double(double)>& fn, double a, double b,
                 const QuadratureSpec& spec = {});

/// Right-hand side of a vector ODE: writes dy/dt for state y at time t.
using OdeRhs =
    std::function<void(double t, const std::vector<double>& y, std::vector<double>& dydt)>;

/// Classical RK4 over the given grid, taking fixed internal substeps no longer
/// than (grid spacing)/8 (more when spec.rel_tol demands it is not needed for
/// the smooth systems in scope; the count is deterministic). Returns the state
/// at every grid time, starting with y0 at grid.times.front(). If the state
/// norm exceeds the overflow guard, raises DivergenceError naming the last
/// valid time.
std::vector<std::vector<double>> solve_ode(const OdeRhs& rhs, const std::vector<double>& y0,
                                           const OdeGrid& grid, const QuadratureSpec& spec = {});

}  // namespace sdesched
