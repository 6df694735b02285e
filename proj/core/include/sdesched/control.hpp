#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdesched/numerics.hpp"
#include "sdesched/schedule.hpp"
#include "sdesched/targets.hpp"

namespace sdesched {

/// Time-gridded solution of the Fisher-information ODE dJ/dt = 2 f J - g H,
/// together with the H = ||grad s_t||^2 values it was driven by and the
/// schedule it was computed under.
struct FisherTrajectory {
    OdeGrid grid;
    std::vector<double> J;
    std::vector<double> H;
    NoiseSchedule schedule;
};

/// Integrates the Fisher ODE from J(t_0) given by the target's exact/estimated
/// moments, with H evaluated from the target at the schedule-implied
/// (alpha_t, sigma_t^2). The linear ODE is marched through its exact
/// integrating-factor form (alpha^2 J sheds int alpha^2 g H), so stiff initial
/// layers cost quadrature work, not stability. Monte-Carlo H whose standard
/// error exceeds 5% of H is refused (NumericError) — raise nsamples instead of
/// silently degrading.
FisherTrajectory fisher_ode_solve(const NoiseSchedule& schedule, const Target& target,
                                  const OdeGrid& grid, const MomentMethod& method = {});

enum class LambdaProvenance { Boundary, Lambert };

/// A solved Euler-Lagrange slope lambda and how it was obtained.
struct LambdaSolve {
    double lambda = 0.0;
    LambdaProvenance provenance = LambdaProvenance::Boundary;
    double z = 0.0;   // Lambert driving quantity (K n); lambda T = W(z)
    double K = 0.0;   // budget constant (Lambert provenance only)
    int n = 0;        // step budget (Lambert provenance only)
    /// Boundary data produced lambda <= 0: the schedule already contracts
    /// Fisher information and no added noise is needed. A warning, not an error.
    bool no_noise_needed = false;
};

/// lambda = (2 int_0^T f + log(J_star / J_T)) / T from the two-point boundary
/// condition of the Euler-Lagrange equation.
LambdaSolve lambda_from_boundary(const std::function<double(double)>& f, double T, double J_star,
                                 double J_T);

/// Budget-adaptive slope lambda_n = W(K n) / T (monotone nondecreasing in n).
LambdaSolve lambda_adaptive(double K, int n, double T);

/// Synthesizes the optimal diffusion rate for a Gaussian target by solving the
/// self-consistent variance ODE d sigma^2/dt = -2 f sigma^2 + lambda trA/trA^2,
/// A = (alpha^2 Sigma + sigma^2 I)^{-1}, and defining g(t) along the solution.
/// The result satisfies 2f - Jdot/J = lambda up to integration tolerance.
NoiseSchedule optimal_g_gaussian(const GaussianTarget& target,
                                 const std::function<double(double)>& f, double lambda, double T);

/// Resolved ACS hyperparameters: the search-space triple (theta, omega, gamma)
/// plus the per-budget quantities they induce.
struct AcsHparams {
    double theta = 0.0;
    double omega = 0.0;
    double gamma = 0.0;
    double K = 0.0;        // 0 when not derived from a budget
    int n = 0;             // 0 when not derived from a budget
    double lambda_n = 0.0;
    double E_n = 0.0;      // drift budget int_0^1 f
    double c_n = 0.0;      // effective decay rate gamma * lambda_n
    double g0 = 0.0;

    AcsParams acs() const { return AcsParams{theta, omega, c_n, g0}; }
};

/// Result of the hyperparameter constraint solver: either resolved parameters
/// or the list of violated constraints, each named.
struct HparamSolve {
    bool feasible = false;
    AcsHparams params;
    std::vector<std::string> violated;
};

/// Solves for g0 in the unit-horizon convention so that the ACS schedule with
/// decay rate c = gamma * lambda_star satisfies int_0^1 f dt = E with g' > 0.
/// Feasible iff theta > 0, omega in [0, E), gamma >= 2E/lambda_star.
HparamSolve hparam_solve(double theta, double omega, double gamma, double lambda_star, double E);

/// Budget-adaptive hyperparameters: lambda_n = W(K n)/T, E_n = lambda_n/2,
/// omega = rho E_n, then g0 via hparam_solve with the effective rate
/// c_n = gamma lambda_n. The unit-horizon convention applies (the int f = E_n
/// guarantee is exact at T = 1).
HparamSolve adaptive_params(double K, double gamma, double theta, double rho, int n, double T);

/// The two terms of the sampling-error upper bound (reported with unit
/// constants): init = (alpha_T^2/sigma_T^2) ||x||^2 and
/// disc = h d int_0^T (2f - Jdot/J)^2 dt, with Jdot/J taken from the stored
/// trajectory by central differences (second-order one-sided at the ends).
struct KlBoundTerms {
    double init_term = 0.0;
    double disc_term = 0.0;
    double total() const { return init_term + disc_term; }
};

KlBoundTerms kl_upper_bound(const NoiseSchedule& schedule, const FisherTrajectory& traj, int n,
                            int d, double x_norm_sq);

/// int_0^T (2 f(t) - udot(t))^2 dt for a piecewise-linear path u on the grid —
/// the action the Euler-Lagrange condition minimizes over fixed endpoints.
double log_fisher_action(const std::function<double(double)>& f, const OdeGrid& grid,
                         const std::vector<double>& u);

/// The exact Girsanov decomposition for Gaussian targets: initialization part
/// (alpha_T^2 / (2 sigma_T^2)) E||X*||^2 plus the accumulated score-freezing
/// error 1/2 sum_k int g(t) E||s_t(X_t) - s_{t_k}(X_{t_k})||^2 dt, evaluated in
/// closed form through the shared eigenbasis of the jointly Gaussian pair.
struct GirsanovBound {
    double init_term = 0.0;
    double disc_sum = 0.0;
    std::vector<double> per_interval;
    double total() const { return init_term + disc_sum; }
};

GirsanovBound girsanov_bound_gaussian(const NoiseSchedule& schedule, const GaussianTarget& target,
                                      int n);

/// Sufficient step size h_max = (g_min / f_max^2) min_t d / E||X_t||^2 on a
/// 1000-point grid over [0, T] (T <= schedule horizon; pass a negative T for
/// the full horizon). f == 0 yields the unbounded sentinel.
ExtendedReal stepsize_sufficient(const NoiseSchedule& schedule, const Target& target,
                                 double T = -1.0);

enum class LegacyBoundKind { VpLinear, VpConstant };

struct LegacyBoundParams {
    double g_min = 0.0;    // VP-linear
    double g_max = 0.0;    // VP-linear
    double g_const = 0.0;  // VP-constant
};

/// Discretization bounds of the reference VP schedules, verbatim with unit
/// constants: VP-linear h d kappa^4 g_max (T g_max + 1) max{1, J*/d};
/// VP-constant h d kappa^4 g_const [J*/d + log(1 + (J*/d)(e^{g_const T} - 1))].
double legacy_bounds(LegacyBoundKind kind, const LegacyBoundParams& params, double J_star, int d,
                     double kappa, double T, double h);

/// {"bound_name": ..., "terms": {...}, "total": sum, "constants_policy": "unit"}.
std::string bound_report_json(const std::string& bound_name,
                              const std::vector<std::pair<std::string, double>>& terms);

}  // namespace sdesched
