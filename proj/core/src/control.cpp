#include "sdesched/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <utility>

#include <nlohmann/json.hpp>

#include "sdesched/errors.hpp"

namespace sdesched {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return std::string(buf);
}

// Deterministically derives a per-time seed so Monte-Carlo moment estimates are
// reproducible yet decorrelated across ODE evaluation times.
std::uint64_t seed_for_time(std::uint64_t seed, double t) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &t, sizeof(bits));
    bits *= 0x9e3779b97f4a7c15ULL;
    bits ^= bits >> 29;
    return seed ^ bits;
}

SmoothedMoments moments_checked(const Target& target, const NoiseSchedule& schedule, double t,
                                const MomentMethod& method) {
    const MarginalCoeffs mc = marginal_coeffs(schedule, t);
    MomentMethod local = method;
    local.seed = seed_for_time(method.seed, t);
    const SmoothedMoments m = target_moments(target, mc.alpha, mc.sigma2, local);
    if (m.H_stderr && *m.H_stderr > 0.05 * m.H) {
        throw NumericError(fmt("Monte Carlo estimate of the score-gradient norm is too noisy at "
                               "t = %.6g (stderr %.3g > 5%% of H = %.3g); increase nsamples",
                               t, *m.H_stderr, m.H));
    }
    return m;
}

// Derivative of a sampled function at x1 from the quadratic through three
// nearby points; exact for quadratics, second-order on nonuniform grids.
double lagrange3_derivative(double x0, double y0, double x1, double y1, double x2, double y2,
                            double at) {
    const double d0 = y0 * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
    const double d1 = y1 * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
    const double d2 = y2 * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
    return d0 + d1 + d2;
}

}  // namespace

FisherTrajectory fisher_ode_solve(const NoiseSchedule& schedule, const Target& target,
                                  const OdeGrid& grid, const MomentMethod& method) {
    grid.validate();
    const double T = schedule.T();
    if (grid.times.front() < -1e-12 * T || grid.times.back() > T * (1.0 + 1e-12) + 1e-300) {
        throw ValidationError(fmt("Fisher ODE grid [%.6g, %.6g] exceeds the schedule horizon %.6g",
                                  grid.times.front(), grid.times.back(), T));
    }

    const SmoothedMoments m0 = moments_checked(target, schedule, grid.times.front(), method);

    // The ODE dJ/dt = 2 f J - g H is linear with integrating factor alpha^2
    // (d log alpha/dt = -f), so it has the exact representation
    //   alpha(t)^2 J(t) = alpha(t0)^2 J(t0) - int_{t0}^t alpha^2 g H ds.
    // Marching that with quadrature resolves the initial layer of poorly
    // conditioned targets (H ~ 1/t^2 near t = 0), where a fixed-step scheme
    // on the raw ODE loses positivity.
    const auto weighted_H = [&](double s) {
        const MarginalCoeffs mc = marginal_coeffs(schedule, s);
        const double H = moments_checked(target, schedule, s, method).H;
        return std::exp(2.0 * mc.log_alpha) * schedule.g(s) * H;
    };
    // Monte-Carlo H is re-seeded per time, so the integrand is noisy and an
    // adaptive rule would chase the noise; a fixed Simpson stencil is already
    // well below the sampling error.
    const bool stochastic = method.kind == MomentMethod::Kind::MonteCarlo;
    QuadratureSpec quad;
    quad.rel_tol = 1e-12;

    FisherTrajectory traj{grid, {}, {}, schedule};
    traj.J.reserve(grid.times.size());
    traj.H.reserve(grid.times.size());
    traj.J.push_back(m0.J);
    traj.H.push_back(m0.H);
    double mass = std::exp(2.0 * marginal_coeffs(schedule, grid.times.front()).log_alpha) * m0.J;
    for (std::size_t i = 1; i < grid.times.size(); ++i) {
        const double lo = grid.times[i - 1], hi = grid.times[i];
        double shed;
        if (stochastic) {
            const double h = (hi - lo) / 4.0;
            shed = (weighted_H(lo) + 4.0 * weighted_H(lo + h) + 2.0 * weighted_H(lo + 2.0 * h) +
                    4.0 * weighted_H(lo + 3.0 * h) + weighted_H(hi)) *
                   h / 3.0;
        } else {
            shed = integrate(weighted_H, lo, hi, quad);
        }
        mass -= shed;
        const double J = mass / std::exp(2.0 * marginal_coeffs(schedule, hi).log_alpha);
        if (!(std::isfinite(J) && J > 0.0)) {
            throw NumericError(fmt("Fisher information became nonpositive at t = %.6g (J = %.6g); "
                                   "the grid is too coarse or the schedule too stiff",
                                   hi, J));
        }
        traj.J.push_back(J);
        traj.H.push_back(moments_checked(target, schedule, hi, method).H);
    }
    return traj;
}

LambdaSolve lambda_from_boundary(const std::function<double(double)>& f, double T, double J_star,
                                 double J_T) {
    if (!f) throw ValidationError("lambda_from_boundary requires a drift evaluator");
    if (!(std::isfinite(T) && T > 0.0)) throw ValidationError(fmt("horizon T = %.6g must be positive", T));
    if (!(std::isfinite(J_star) && J_star > 0.0) || !(std::isfinite(J_T) && J_T > 0.0)) {
        throw ValidationError(fmt("Fisher endpoints must be positive (J_star = %.6g, J_T = %.6g)",
                                  J_star, J_T));
    }
    const double int_f = integrate(f, 0.0, T);
    LambdaSolve out;
    out.lambda = (2.0 * int_f + std::log(J_star / J_T)) / T;
    out.provenance = LambdaProvenance::Boundary;
    out.no_noise_needed = !(out.lambda > 0.0);
    return out;
}

LambdaSolve lambda_adaptive(double K, int n, double T) {
    if (!(std::isfinite(K) && K > 0.0)) throw ValidationError(fmt("budget constant K = %.6g must be positive", K));
    if (n < 1) throw ValidationError("step budget n must be >= 1");
    if (!(std::isfinite(T) && T > 0.0)) throw ValidationError(fmt("horizon T = %.6g must be positive", T));
    LambdaSolve out;
    out.z = K * static_cast<double>(n);
    out.K = K;
    out.n = n;
    out.lambda = lambert_w0(out.z) / T;
    out.provenance = LambdaProvenance::Lambert;
    return out;
}

NoiseSchedule optimal_g_gaussian(const GaussianTarget& target,
                                 const std::function<double(double)>& f, double lambda, double T) {
    if (!f) throw ValidationError("optimal_g_gaussian requires a drift evaluator");
    if (!(std::isfinite(lambda) && lambda > 0.0)) {
        throw ValidationError(fmt("lambda = %.6g must be positive", lambda));
    }
    if (!(std::isfinite(T) && T > 0.0)) throw ValidationError(fmt("horizon T = %.6g must be positive", T));

    const Eigen::VectorXd ells = target.cov_eigenvalues();

    // g*(state) = lambda TrA / TrA^2 with A = (alpha^2 Sigma + sigma^2 I)^{-1}.
    auto g_star = [&ells, lambda](double log_alpha, double sigma2) {
        const double a2 = std::exp(2.0 * log_alpha);
        double P = 0.0, Q = 0.0;
        for (Eigen::Index i = 0; i < ells.size(); ++i) {
            const double a = 1.0 / (a2 * ells[i] + sigma2);
            P += a;
            Q += a * a;
        }
        return lambda * P / Q;
    };
    // d g*/dt along the flow, used for cubic-Hermite evaluation between nodes.
    auto g_star_rate = [&ells, lambda, &f, &g_star](double t, double log_alpha, double sigma2) {
        const double a2 = std::exp(2.0 * log_alpha);
        const double ft = f(t);
        const double g = g_star(log_alpha, sigma2);
        const double dsigma2 = -2.0 * ft * sigma2 + g;
        double P = 0.0, Q = 0.0, dP = 0.0, dQ = 0.0;
        for (Eigen::Index i = 0; i < ells.size(); ++i) {
            const double a = 1.0 / (a2 * ells[i] + sigma2);
            const double da = -a * a * (-2.0 * ft * a2 * ells[i] + dsigma2);
            P += a;
            Q += a * a;
            dP += da;
            dQ += 2.0 * a * da;
        }
        return lambda * (dP * Q - P * dQ) / (Q * Q);
    };

    constexpr int kNodes = 4096;
    const double delta = T / kNodes;
    auto nodes = std::make_shared<std::vector<double>>();
    auto rates = std::make_shared<std::vector<double>>();
    nodes->reserve(kNodes + 1);
    rates->reserve(kNodes + 1);

    double log_alpha = 0.0, sigma2 = 0.0;
    auto record = [&](double t) {
        const double g = g_star(log_alpha, sigma2);
        const double dg = g_star_rate(t, log_alpha, sigma2);
        if (!(std::isfinite(g) && g > 0.0 && std::isfinite(dg))) {
            throw NumericError(fmt("optimal-g synthesis diverged at t = %.6g (g = %.6g)", t, g));
        }
        nodes->push_back(g);
        rates->push_back(dg);
    };
    record(0.0);
    constexpr int kSubsteps = 8;
    for (int i = 0; i < kNodes; ++i) {
        const double t0 = i * delta;
        const double hs = delta / kSubsteps;
        for (int s = 0; s < kSubsteps; ++s) {
            const double t = t0 + s * hs;
            auto rhs = [&](double tt, double la, double s2, double& dla, double& ds2) {
                dla = -f(tt);
                ds2 = -2.0 * f(tt) * s2 + g_star(la, s2);
            };
            double k1a, k1s, k2a, k2s, k3a, k3s, k4a, k4s;
            rhs(t, log_alpha, sigma2, k1a, k1s);
            rhs(t + 0.5 * hs, log_alpha + 0.5 * hs * k1a, sigma2 + 0.5 * hs * k1s, k2a, k2s);
            rhs(t + 0.5 * hs, log_alpha + 0.5 * hs * k2a, sigma2 + 0.5 * hs * k2s, k3a, k3s);
            rhs(t + hs, log_alpha + hs * k3a, sigma2 + hs * k3s, k4a, k4s);
            log_alpha += hs / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            sigma2 += hs / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        }
        record((i + 1) * delta);
    }

    auto g_eval = [nodes, rates, T, delta](double t) {
        const double tc = std::clamp(t, 0.0, T);
        const int i = std::min(static_cast<int>(tc / delta), kNodes - 1);
        const double s = (tc - i * delta) / delta;
        const double h00 = (2.0 * s - 3.0) * s * s + 1.0;
        const double h10 = ((s - 2.0) * s + 1.0) * s;
        const double h01 = (3.0 - 2.0 * s) * s * s;
        const double h11 = (s - 1.0) * s * s;
        return (*nodes)[i] * h00 + delta * (*rates)[i] * h10 + (*nodes)[i + 1] * h01 +
               delta * (*rates)[i + 1] * h11;
    };
    return NoiseSchedule(f, g_eval, T, ScheduleKind::Custom);
}

HparamSolve hparam_solve(double theta, double omega, double gamma, double lambda_star, double E) {
    if (!(std::isfinite(lambda_star) && lambda_star > 0.0)) {
        throw ValidationError(fmt("lambda_star = %.6g must be positive", lambda_star));
    }
    HparamSolve out;
    out.params.theta = theta;
    out.params.omega = omega;
    out.params.gamma = gamma;
    out.params.lambda_n = lambda_star;
    out.params.E_n = E;
    out.params.c_n = gamma * lambda_star;

    if (!(std::isfinite(theta) && theta > 0.0)) out.violated.push_back("theta must be in (0, inf)");
    if (!(omega >= 0.0 && omega < E)) out.violated.push_back("omega must be in [0, E)");
    if (!(gamma >= 2.0 * E / lambda_star)) {
        out.violated.push_back("gamma must be >= 2E/lambda_star");
    }
    if (!out.violated.empty()) return out;

    // g0 chosen so the schedule's drift integrates to exactly E over [0, 1]:
    // invert int_0^1 g dt = (E - omega)/theta through the closed-form ACS mass
    // int_0^1 g = (1/2theta) log(1 + (2 theta g0 / x)(1 - e^{-x})), x = 2 omega - c.
    const double c = out.params.c_n;
    const double x = 2.0 * omega - c;
    const double growth = std::expm1(2.0 * (E - omega));
    double g0;
    if (std::abs(x) <= 1e-12 * std::max(1.0, c)) {
        g0 = growth / (2.0 * theta);
    } else {
        g0 = -x * growth / (2.0 * theta * std::expm1(-x));
    }
    if (!(std::isfinite(g0) && g0 > 0.0)) {
        throw NumericError(fmt("hyperparameter solve produced g0 = %.6g (x = %.6g); "
                               "parameters are too extreme to represent",
                               g0, x));
    }
    out.params.g0 = g0;
    out.feasible = true;
    return out;
}

HparamSolve adaptive_params(double K, double gamma, double theta, double rho, int n, double T) {
    if (!(rho >= 0.0 && rho <= 0.99)) {
        throw ValidationError(fmt("omega fraction rho = %.6g must lie in [0, 0.99]", rho));
    }
    const LambdaSolve ls = lambda_adaptive(K, n, T);  // validates K, n, T
    const double E_n = ls.lambda / 2.0;
    HparamSolve out = hparam_solve(theta, rho * E_n, gamma, ls.lambda, E_n);
    out.params.K = K;
    out.params.n = n;
    return out;
}

KlBoundTerms kl_upper_bound(const NoiseSchedule& schedule, const FisherTrajectory& traj, int n,
                            int d, double x_norm_sq) {
    if (n < 1) throw ValidationError("step count n must be >= 1");
    if (d < 1) throw ValidationError("dimension d must be >= 1");
    if (!(std::isfinite(x_norm_sq) && x_norm_sq >= 0.0)) {
        throw ValidationError(fmt("x_norm_sq = %.6g must be nonnegative", x_norm_sq));
    }
    const std::vector<double>& t = traj.grid.times;
    const std::vector<double>& J = traj.J;
    if (J.size() != t.size()) throw ValidationError("trajectory J values do not match its grid");
    if (t.size() < 3) throw ValidationError("trajectory needs at least 3 grid points");

    std::vector<double> u(J.size());
    for (std::size_t i = 0; i < J.size(); ++i) {
        if (!(J[i] > 0.0)) throw ValidationError(fmt("J must be positive (J = %.6g at t = %.6g)", J[i], t[i]));
        u[i] = std::log(J[i]);
        if (i > 0 && std::max(J[i], J[i - 1]) > 5.0 * std::min(J[i], J[i - 1])) {
            throw ResolutionError(fmt("Fisher trajectory jumps by a factor of 5 between t = %.6g "
                                      "and t = %.6g; refine the grid",
                                      t[i - 1], t[i]));
        }
    }

    const std::size_t m = t.size();
    std::vector<double> integrand(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t a = (i == 0) ? 0 : (i == m - 1 ? m - 3 : i - 1);
        const double du = lagrange3_derivative(t[a], u[a], t[a + 1], u[a + 1], t[a + 2], u[a + 2], t[i]);
        const double v = 2.0 * schedule.f(t[i]) - du;
        integrand[i] = v * v;
    }
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        integral += 0.5 * (integrand[i] + integrand[i + 1]) * (t[i + 1] - t[i]);
    }

    const double span = t.back() - t.front();
    const double h = span / n;
    const MarginalCoeffs end = marginal_coeffs(schedule, t.back());
    if (!(end.sigma2 > 0.0)) {
        throw NumericError(fmt("terminal variance %.6g is not positive at t = %.6g", end.sigma2, t.back()));
    }
    KlBoundTerms out;
    out.init_term = std::exp(2.0 * end.log_alpha) / end.sigma2 * x_norm_sq;
    out.disc_term = h * d * integral;
    return out;
}

double log_fisher_action(const std::function<double(double)>& f, const OdeGrid& grid,
                         const std::vector<double>& u) {
    if (!f) throw ValidationError("log_fisher_action requires a drift evaluator");
    grid.validate();
    if (u.size() != grid.times.size()) throw ValidationError("path values do not match the grid");
    if (u.size() < 2) throw ValidationError("path needs at least 2 grid points");
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        const double t0 = grid.times[i], t1 = grid.times[i + 1];
        const double slope = (u[i + 1] - u[i]) / (t1 - t0);
        total += integrate(
            [&](double t) {
                const double v = 2.0 * f(t) - slope;
                return v * v;
            },
            t0, t1);
    }
    return total;
}

GirsanovBound girsanov_bound_gaussian(const NoiseSchedule& schedule, const GaussianTarget& target,
                                      int n) {
    if (n < 1) throw ValidationError("step count n must be >= 1");
    const double T = schedule.T();
    const double h = T / n;
    const Eigen::VectorXd ells = target.cov_eigenvalues();
    const double x2 = target.second_moment();

    GirsanovBound out;
    const MarginalCoeffs end = marginal_coeffs(schedule, T);
    out.init_term = std::exp(2.0 * end.log_alpha) / (2.0 * end.sigma2) * x2;

    out.per_interval.reserve(n);
    for (int k = 1; k <= n; ++k) {
        // The sampler freezes the score at each reverse step's start state,
        // which is the later forward time: interval [t_{k-1}, t_k], frozen at
        // t_k. The frozen-time marginals anchor the joint law below.
        const double tk0 = (k - 1) * h;
        const double tk = (k == n) ? T : k * h;
        const MarginalCoeffs mk = marginal_coeffs(schedule, tk);
        const double ak2 = std::exp(2.0 * mk.log_alpha);

        // E||s_t(X_t) - s_{t_k}(X_{t_k})||^2 in the shared eigenbasis:
        // X_{t_k} = r X_t + noise(q), r = alpha_{t_k}/alpha_t,
        // q = sigma_{t_k}^2 - r^2 sigma_t^2, and both scores are affine, so
        // the mean parts cancel exactly and only variances contribute.
        auto integrand = [&](double t) {
            const MarginalCoeffs mt = marginal_coeffs(schedule, t);
            const double at2 = std::exp(2.0 * mt.log_alpha);
            const double r = std::exp(mk.log_alpha - mt.log_alpha);
            double sum = 0.0;
            for (Eigen::Index i = 0; i < ells.size(); ++i) {
                const double a_t = 1.0 / (at2 * ells[i] + mt.sigma2);
                const double a_k = 1.0 / (ak2 * ells[i] + mk.sigma2);
                const double q = std::max(mk.sigma2 - r * r * mt.sigma2, 0.0);
                const double diff = a_k * r - a_t;
                sum += diff * diff * (at2 * ells[i] + mt.sigma2) + a_k * a_k * q;
            }
            return schedule.g(t) * sum;
        };
        const double contribution = 0.5 * integrate(integrand, tk0, tk);
        out.per_interval.push_back(contribution);
        out.disc_sum += contribution;
    }
    return out;
}

ExtendedReal stepsize_sufficient(const NoiseSchedule& schedule, const Target& target, double T) {
    if (T < 0.0) T = schedule.T();
    if (!(std::isfinite(T) && T > 0.0 && T <= schedule.T() * (1.0 + 1e-12))) {
        throw ValidationError(fmt("T = %.6g must lie in (0, %.6g]", T, schedule.T()));
    }
    const int d = target_dim(target);
    const double x2 = target_second_moment(target);

    constexpr int kGrid = 1000;
    double f_max = 0.0, g_min = std::numeric_limits<double>::infinity();
    double min_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGrid; ++i) {
        const double t = T * i / (kGrid - 1);
        f_max = std::max(f_max, schedule.f(t));
        g_min = std::min(g_min, schedule.g(t));
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        const double second = mc.alpha * mc.alpha * x2 + mc.sigma2 * d;
        if (second > 0.0) min_ratio = std::min(min_ratio, d / second);
    }
    if (f_max == 0.0) return ExtendedReal::unbounded();
    return ExtendedReal::finite(g_min / (f_max * f_max) * min_ratio);
}

double legacy_bounds(LegacyBoundKind kind, const LegacyBoundParams& params, double J_star, int d,
                     double kappa, double T, double h) {
    if (!(std::isfinite(J_star) && J_star > 0.0)) throw ValidationError(fmt("J_star = %.6g must be positive", J_star));
    if (d < 1) throw ValidationError("dimension d must be >= 1");
    if (!(std::isfinite(kappa) && kappa >= 1.0)) throw ValidationError(fmt("kappa = %.6g must be >= 1", kappa));
    if (!(std::isfinite(T) && T > 0.0)) throw ValidationError(fmt("horizon T = %.6g must be positive", T));
    if (!(std::isfinite(h) && h > 0.0)) throw ValidationError(fmt("step size h = %.6g must be positive", h));

    const double k4 = kappa * kappa * kappa * kappa;
    const double ratio = J_star / d;
    switch (kind) {
        case LegacyBoundKind::VpLinear: {
            if (!(std::isfinite(params.g_max) && params.g_max > 0.0) ||
                !(params.g_min >= 0.0 && params.g_min <= params.g_max)) {
                throw ValidationError(fmt("VP-linear needs 0 <= g_min <= g_max with g_max > 0 "
                                          "(g_min = %.6g, g_max = %.6g)",
                                          params.g_min, params.g_max));
            }
            return h * d * k4 * params.g_max * (T * params.g_max + 1.0) * std::max(1.0, ratio);
        }
        case LegacyBoundKind::VpConstant: {
            if (!(std::isfinite(params.g_const) && params.g_const > 0.0)) {
                throw ValidationError(fmt("VP-constant needs g_const > 0 (got %.6g)", params.g_const));
            }
            const double u = params.g_const * T;
            const double log_term = (u > 700.0)
                                        ? u + std::log(ratio + (1.0 - ratio) * std::exp(-u))
                                        : std::log1p(ratio * std::expm1(u));
            return h * d * k4 * params.g_const * (ratio + log_term);
        }
    }
    throw ValidationError("unknown legacy bound kind");
}

std::string bound_report_json(const std::string& bound_name,
                              const std::vector<std::pair<std::string, double>>& terms) {
    nlohmann::ordered_json j;
    j["bound_name"] = bound_name;
    nlohmann::ordered_json jt = nlohmann::ordered_json::object();
    double total = 0.0;
    for (const auto& [name, value] : terms) {
        jt[name] = value;
        total += value;
    }
    j["terms"] = jt;
    j["total"] = total;
    j["constants_policy"] = "unit";
    return j.dump(2);
}

}  // namespace sdesched
