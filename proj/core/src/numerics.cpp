#include "sdesched/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace sdesched {

void QuadratureSpec::validate() const {
    if (!(rel_tol > 0.0)) throw ValidationError("QuadratureSpec: rel_tol must be > 0");
    if (max_depth < 1) throw ValidationError("QuadratureSpec: max_depth must be >= 1");
}

void OdeGrid::validate() const {
    if (times.empty()) throw ValidationError("OdeGrid: empty grid");
    if (times.front() < 0.0) throw ValidationError("OdeGrid: first time must be >= 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1]))
            throw ValidationError("OdeGrid: times must be strictly increasing (index " +
                                  std::to_string(i) + ")");
    }
}

OdeGrid OdeGrid::uniform(double t0, double t1, int points) {
    if (points < 1) throw ValidationError("OdeGrid::uniform: points must be >= 1");
    if (points == 1) return OdeGrid{{t0}};
    if (!(t1 > t0)) throw ValidationError("OdeGrid::uniform: t1 must exceed t0");
    OdeGrid g;
    g.times.resize(static_cast<std::size_t>(points));
    const double h = (t1 - t0) / (points - 1);
    for (int i = 0; i < points; ++i) g.times[static_cast<std::size_t>(i)] = t0 + h * i;
    g.times.back() = t1;
    return g;
}

double lambert_w0(double z) {
    if (std::isnan(z) || z < 0.0)
        throw std::domain_error("lambert_w0: argument must be >= 0, got " + std::to_string(z));
    if (z == 0.0) return 0.0;

    // Seed from the asymptotics of W, then polish with Halley steps.
    double w;
    if (z < 1.0) {
        // W(z) = z - z^2 + (3/2) z^3 - ... for small z; the leading terms are
        // plenty because Halley converges cubically from anywhere on [0, z].
        w = z * (1.0 - z + 1.5 * z * z);
        if (w <= 0.0) w = z / (1.0 + z);
    } else {
        const double l1 = std::log(z);
        const double l2 = std::log(std::max(l1, 1e-300));
        w = (l1 > 1.0) ? (l1 - l2 + l2 / l1) : 0.5 * l1 + 0.3;
        if (w <= 0.0) w = l1;  // z in [1, e): log z in [0, 1), safe positive seed
        if (w <= 0.0) w = 0.5;
    }

    const double tol = 1e-13 * std::max(1.0, z);
    for (int iter = 0; iter < 50; ++iter) {
        const double ew = std::exp(w);
        const double r = w * ew - z;
        if (std::abs(r) <= tol) break;
        // Halley: w <- w - r / (e^w (w+1) - (w+2) r / (2w+2))
        const double denom = ew * (w + 1.0) - (w + 2.0) * r / (2.0 * w + 2.0);
        w -= r / denom;
    }
    return w;
}

double parallel_sum(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::domain_error("parallel_sum: operands must be > 0, got (" + std::to_string(a) +
                                ", " + std::to_string(b) + ")");
    return (a * b) / (a + b);
}

ExtendedReal parallel_sum(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.is_unbounded && b.is_unbounded) return ExtendedReal::unbounded();
    if (a.is_unbounded) {
        if (!(b.value > 0.0)) throw std::domain_error("parallel_sum: finite operand must be > 0");
        return ExtendedReal::finite(b.value);
    }
    if (b.is_unbounded) {
        if (!(a.value > 0.0)) throw std::domain_error("parallel_sum: finite operand must be > 0");
        return ExtendedReal::finite(a.value);
    }
    return ExtendedReal::finite(parallel_sum(a.value, b.value));
}

double integrate(const std::function<double(double)>& fn, double a, double b,
                 const QuadratureSpec& spec) {
    spec.validate();
    if (!(a <= b))
        throw ValidationError("integrate: lower limit " + std::to_string(a) +
                              " exceeds upper limit " + std::to_string(b));
    if (a == b) return 0.0;

    auto checked = [&fn](double x) {
        const double v = fn(x);
        if (!std::isfinite(v))
            throw NumericError("integrate: integrand is not finite at t = " + std::to_string(x));
        return v;
    };
    double err = 0.0;
    const double result = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        checked, a, b, spec.max_depth, spec.rel_tol, &err);
    if (!std::isfinite(result))
        throw NumericError("integrate: non-finite result over [" + std::to_string(a) + ", " +
                           std::to_string(b) + "]");
    return result;
}

std::vector<std::vector<double>> solve_ode(const OdeRhs& rhs, const std::vector<double>& y0,
                                           const OdeGrid& grid, const QuadratureSpec& spec) {
    grid.validate();
    spec.validate();
    if (y0.empty()) throw ValidationError("solve_ode: empty initial state");

    const std::size_t dim = y0.size();
    const double overflow_guard = 1e150;

    std::vector<std::vector<double>> out;
    out.reserve(grid.times.size());
    out.push_back(y0);

    std::vector<double> y = y0;
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

    auto check_state = [&](double t_last) {
        for (double v : y) {
            if (!std::isfinite(v) || std::abs(v) > overflow_guard)
                throw DivergenceError("solve_ode: state exceeded overflow guard; last valid time " +
                                      std::to_string(t_last));
        }
    };

    for (std::size_t i = 1; i < grid.times.size(); ++i) {
        const double t0 = grid.times[i - 1];
        const double t1 = grid.times[i];
        const int substeps = 8;  // local step <= grid spacing / 8
        const double h = (t1 - t0) / substeps;
        for (int s = 0; s < substeps; ++s) {
            const double t = t0 + h * s;
            rhs(t, y, k1);
            for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
            rhs(t + 0.5 * h, tmp, k2);
            for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
            rhs(t + 0.5 * h, tmp, k3);
            for (std::size_t j = 0; j < dim; ++j) tmp[j] = y[j] + h * k3[j];
            rhs(t + h, tmp, k4);
            for (std::size_t j = 0; j < dim; ++j)
                y[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            check_state(t0 + h * s);
        }
        out.push_back(y);
    }
    return out;
}

}  // namespace sdesched
