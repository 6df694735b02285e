#pragma once

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sdesched/numerics.hpp"

namespace sdesched {

/// Forward-time marginal coefficients at a single time: X_t = alpha_t X_0 + sigma_t Z.
/// log_alpha is carried alongside alpha so ratios of nearby alphas stay accurate
/// when alpha underflows toward 0.
struct MarginalCoeffs {
    double alpha = 1.0;      // signal scale, in (0, 1]
    double sigma2 = 0.0;     // noise variance, >= 0
    double log_alpha = 0.0;  // log of alpha (exact integral of -f)
};

enum class ScheduleKind {
    Linear,         // variance-preserving, beta ramps linearly
    Cosine,         // variance-preserving, cosine signal decay
    SigmoidExact,   // variance-preserving, sigmoidal signal decay (exact form)
    SigmoidApprox,  // variance-preserving, sigmoidal with the sigma(h(1)) ~= 1 shortcut
    VeExponential,  // variance-exploding, g grows exponentially, f == 0
    Constant,       // constant (f, g)
    Acs,            // affine-coupled schedule: f = theta*g + omega, closed-form g
    Custom,         // arbitrary evaluators; not serializable
};

const char* schedule_kind_name(ScheduleKind kind);

/// Affine-coupled schedule parameters: f = theta*g + omega with g solving
/// g' = -(2*theta*g + 2*omega - lambda_star)*g, g(0) = g0.
struct AcsParams {
    double theta = 0.0;        // coupling slope, >= 0
    double omega = 0.0;        // drift offset, >= 0
    double lambda_star = 1.0;  // decay rate, > 0
    double g0 = 1.0;           // initial diffusion rate, > 0

    void validate() const;
};

// -- catalog parameter variants ------------------------------------------------

/// VP schedule with beta(t) = beta_min + (beta_max - beta_min) * t/T, f = beta/2.
struct LinearParams {
    double beta_min = 0.0;
    double beta_max = 0.0;

    static LinearParams defaults(double T) { return {0.1 / T, 20.0 / T}; }
};

/// VP schedule with alpha_t^2 following the shifted-cosine profile.
struct CosineParams {
    double s = 0.008;  // endpoint shift, > 0
};

/// VP schedule with alpha_t^2 following a sigmoidal profile in
/// h(u) = (u*(theta_max - theta_min) + theta_min)/tau, u = t/T.
/// The exact form normalizes by sigma(h(1)) - sigma(h(u)) and blows up at t = T;
/// the approximate form replaces sigma(h(1)) by 1 and stays finite.
struct SigmoidParams {
    double theta_min = -3.0;
    double theta_max = 3.0;
    double tau = 1.0;    // temperature, > 0
    bool exact = true;   // false selects the sigma(h(1)) ~= 1 variant
};

/// Variance-exploding schedule: f == 0, g(t) = g0 * exp(lambda * t).
struct VeExponentialParams {
    double g0 = 1.0;
    double lambda = 0.0;
};

/// Constant drift and diffusion rates (f_const >= 0, g_const > 0).
struct ConstantParams {
    double f_const = 0.0;
    double g_const = 1.0;
};

using CatalogParams =
    std::variant<LinearParams, CosineParams, SigmoidParams, VeExponentialParams, ConstantParams>;

namespace detail {
class MarginalCache;
}

/// A noise schedule: the pair (f, g) on [0, T] defining the forward SDE
/// dX = -f X dt + sqrt(g) dB. Construction spot-checks f >= 0, g > 0, and a
/// finite slope of g on an interior grid. Immutable after construction; copies
/// share one lazily built marginal cache and are safe to use concurrently.
class NoiseSchedule {
public:
    NoiseSchedule(std::function<double(double)> f, std::function<double(double)> g, double T,
                  ScheduleKind kind = ScheduleKind::Custom, std::string params_json = "");

    double f(double t) const { return f_(t); }
    double g(double t) const { return g_(t); }
    double T() const { return T_; }
    ScheduleKind kind() const { return kind_; }
    /// JSON fragment holding the construction parameters ("" for Custom kinds).
    const std::string& params_json() const { return params_json_; }
    /// True when the two objects share one marginal law (copies of a single
    /// schedule do; independently constructed ones never do).
    bool same_marginals(const NoiseSchedule& other) const { return cache_ == other.cache_; }

private:
    std::function<double(double)> f_;
    std::function<double(double)> g_;
    double T_;
    ScheduleKind kind_;
    std::string params_json_;
    std::shared_ptr<detail::MarginalCache> cache_;

    friend MarginalCoeffs marginal_coeffs(const NoiseSchedule& schedule, double t);
};

/// (alpha_t, sigma_t^2) with alpha_t = exp(-int_0^t f) and sigma_t^2 solving
/// d sigma^2/dt = -2 f sigma^2 + g, sigma_0^2 = 0. Values come from a cached
/// checkpointed integration shared by all copies of the schedule; t outside
/// [0, T] is a domain error, and times beyond a numerically singular point
/// (e.g. the cosine schedule's terminal blow-up) raise NumericError.
MarginalCoeffs marginal_coeffs(const NoiseSchedule& schedule, double t);

/// alpha_t^2 / sigma_t^2. Strictly decreasing in t; t = 0 returns the
/// unbounded sentinel (sigma_0 = 0).
ExtendedReal snr(const NoiseSchedule& schedule, double t);

/// Builds a catalog schedule on [0, T]. Linear/Cosine/Sigmoid are
/// variance-preserving (g = 2f); VeExponential has f == 0.
NoiseSchedule make_catalog(const CatalogParams& params, double T);

/// Builds the affine-coupled schedule from its closed-form g (two branches,
/// selected by |2*omega - lambda_star| against a 1e-9 tolerance) with
/// f = theta*g + omega.
NoiseSchedule make_acs(const AcsParams& params, double T);

/// Pairs the supplied drift f with g(t) = g0 * exp(-int_0^t (2f - lambda_star)),
/// the diffusion rate that keeps t -> e^{lambda_star t} proportional to the
/// certificate integrand. Quadrature-backed; the result is a Custom schedule.
NoiseSchedule make_g_circle(const std::function<double(double)>& f, double lambda_star, double g0,
                            double T);

/// Same evaluators restricted to [0, T_new] with T_new < schedule.T(). Useful
/// for schedules whose f diverges at the original horizon (cosine, exact
/// sigmoid). The result is a Custom schedule.
NoiseSchedule restrict_horizon(const NoiseSchedule& schedule, double T_new);

/// Time substitution: given phi with phi(0) = 0, phi(T2) = schedule.T(),
/// phi' > 0, returns the schedule on [0, T2] with f2(T2 - tau) =
/// f1(T1 - phi(tau)) * phi'(tau) (and likewise g2), so the forward marginals
/// satisfy alpha2(t) = alpha1(psi(t)) with psi(t) = T1 - phi(T2 - t).
/// Monotonicity of phi is derivative-sign-checked on a grid.
NoiseSchedule reparameterize(const NoiseSchedule& schedule,
                             const std::function<double(double)>& phi,
                             const std::function<double(double)>& phi_prime, double T2);

/// The time tau on schedule `a` whose SNR equals schedule `b`'s SNR at t,
/// found by bisection on the monotone SNR curve to relative 1e-10. A target
/// SNR below a's terminal SNR raises CoverageError reporting the achievable
/// interval.
double snr_time_map(const NoiseSchedule& a, const NoiseSchedule& b, double t);

using ScoreFn = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x)>;

/// Translates a score trained/known under schedule `a` to schedule `b` at time
/// t: s_b(t, x) = r * s_a(tau_t, r * x) with r = sigma_a(tau_t)/sigma_b(t) and
/// tau_t = snr_time_map(a, b, t).
Eigen::VectorXd map_score(const ScoreFn& score_a, const NoiseSchedule& a, const NoiseSchedule& b,
                          double t, const Eigen::VectorXd& x);

/// Wraps a noise-prediction model S into a score: s(t, x) = -S(t, x)/sigma_t.
ScoreFn score_from_noise_pred(const ScoreFn& noise_pred, const NoiseSchedule& schedule);

/// JSON round-trip for parametric schedules: {"kind", "T", "params"}.
/// Bit-faithful for all parameters. Custom schedules have no parametric form
/// and raise ValidationError on serialization.
std::string schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const std::string& json_text);

}  // namespace sdesched
