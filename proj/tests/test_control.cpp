#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <sdesched/control.hpp>
#include <sdesched/errors.hpp>
#include <sdesched/numerics.hpp>
#include <sdesched/rng.hpp>
#include <sdesched/schedule.hpp>
#include <sdesched/targets.hpp>

using namespace sdesched;

namespace {

NoiseSchedule ou(double T = 3.0) { return make_catalog(ConstantParams{1.0, 2.0}, T); }

GaussianTarget aniso2() {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = 0.01;
    cov(1, 1) = 1.0;
    return GaussianTarget(Eigen::VectorXd::Zero(2), cov);
}

// d/dt log J by a symmetric difference on the stored grid; interior only.
double dlogJ(const FisherTrajectory& traj, std::size_t i) {
    return (std::log(traj.J[i + 1]) - std::log(traj.J[i - 1])) /
           (traj.grid.times[i + 1] - traj.grid.times[i - 1]);
}

}  // namespace

TEST_CASE("Fisher ODE matches the Gaussian closed form along OU") {
    const NoiseSchedule schedule = ou(3.0);
    const GaussianTarget target = aniso2();
    const OdeGrid grid = OdeGrid::uniform(0.0, 3.0, 200);
    const FisherTrajectory traj = fisher_ode_solve(schedule, Target(target), grid);
    REQUIRE(traj.J.size() == 200);
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        const MarginalCoeffs mc = marginal_coeffs(schedule, grid.times[i]);
        const double a2 = mc.alpha * mc.alpha;
        const double exact = 1.0 / (a2 * 0.01 + mc.sigma2) + 1.0 / (a2 * 1.0 + mc.sigma2);
        CHECK(std::abs(traj.J[i] - exact) <= 1e-6 * exact);
        CHECK(traj.J[i] > 0.0);
    }
    // H is reported at the same times.
    const SmoothedMoments m0 = gaussian_moments(target, 1.0, 0.0);
    CHECK(traj.H.front() == doctest::Approx(m0.H).epsilon(1e-12));
}

TEST_CASE("Fisher ODE validates its grid and refuses noisy Monte-Carlo moments") {
    const NoiseSchedule schedule = ou(1.0);
    CHECK_THROWS_AS(
        fisher_ode_solve(schedule, Target(aniso2()), OdeGrid::uniform(0.0, 2.0, 10)),
        ValidationError);

    std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Constant(1, -2.0),
                                       Eigen::VectorXd::Constant(1, 2.0)};
    const GmmTarget gmm({0.5, 0.5}, means, 0.2);
    CHECK_THROWS_AS(fisher_ode_solve(schedule, Target(gmm), OdeGrid::uniform(0.0, 1.0, 5),
                                     MomentMethod::monte_carlo(100, 3)),
                    NumericError);
}

TEST_CASE("boundary lambda: constant drift with matched endpoints") {
    const auto f1 = [](double) { return 1.0; };
    const LambdaSolve l2 = lambda_from_boundary(f1, 1.0, 10.0, 10.0);
    CHECK(l2.lambda == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(l2.provenance == LambdaProvenance::Boundary);
    CHECK_FALSE(l2.no_noise_needed);

    const LambdaSolve l4 = lambda_from_boundary(f1, 1.0, 10.0, 10.0 * std::exp(-2.0));
    CHECK(l4.lambda == doctest::Approx(4.0).epsilon(1e-12));

    // J_T above J* with no drift: lambda <= 0, flagged as needing no noise.
    const LambdaSolve l0 = lambda_from_boundary([](double) { return 0.0; }, 1.0, 1.0, 3.0);
    CHECK(l0.lambda < 0.0);
    CHECK(l0.no_noise_needed);
}

TEST_CASE("adaptive lambda solves the Lambert relation") {
    const LambdaSolve unit = lambda_adaptive(std::exp(1.0), 1, 1.0);
    CHECK(unit.lambda == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unit.z == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
    CHECK(unit.provenance == LambdaProvenance::Lambert);

    const LambdaSolve im = lambda_adaptive(24.359, 50, 1.0);
    CHECK(im.lambda == doctest::Approx(5.415634372046927).epsilon(1e-10));
    const double w = im.lambda * 1.0;
    CHECK(std::abs(w * std::exp(w) - 24.359 * 50.0) <= 1e-10 * 24.359 * 50.0);

    // Monotone nondecreasing in the step budget.
    double prev = 0.0;
    for (int n : {8, 16, 64, 256}) {
        const double l = lambda_adaptive(1.0, n, 1.0).lambda;
        CHECK(l >= prev);
        prev = l;
    }

    CHECK_THROWS_AS(lambda_adaptive(0.0, 10, 1.0), ValidationError);
    CHECK_THROWS_AS(lambda_adaptive(1.0, 0, 1.0), ValidationError);
    CHECK_THROWS_AS(lambda_adaptive(1.0, 10, 0.0), ValidationError);
}

TEST_CASE("boundary and Lambert lambdas agree on Lambert-consistent data") {
    const double T = 1.0, E = 0.7, J_star = 5.0;
    const LambdaSolve adaptive = lambda_adaptive(12.5, 40, T);
    // Along the optimal trajectory dJ/dt = (2f - lambda) J, so
    // J_T = J* exp((2E - lambda) T) closes the loop exactly.
    const double J_T = J_star * std::exp((2.0 * E - adaptive.lambda) * T);
    const LambdaSolve boundary =
        lambda_from_boundary([E](double) { return E; }, T, J_star, J_T);
    CHECK(std::abs(boundary.lambda - adaptive.lambda) <= 1e-10 * adaptive.lambda);
}

TEST_CASE("optimal g: isotropic closed form") {
    const double s2 = 0.5, lambda = 3.0, fval = 1.0, T = 1.0;
    const int d = 3;
    const GaussianTarget target = GaussianTarget::isotropic(d, s2);
    const NoiseSchedule schedule =
        optimal_g_gaussian(target, [fval](double) { return fval; }, lambda, T);
    for (double t : {0.0, 0.21, 0.64, 1.0}) {
        const double expected = lambda * s2 * std::exp((lambda - 2.0 * fval) * t);
        CHECK(std::abs(schedule.g(t) - expected) <= 1e-6 * expected);
    }
    CHECK(schedule.f(0.4) == fval);

    // Coincides with the exponential-certificate diffusion at g0 = lambda d / J*.
    const NoiseSchedule circle =
        make_g_circle([fval](double) { return fval; }, lambda, lambda * s2, T);
    for (double t : {0.3, 0.9}) {
        CHECK(std::abs(schedule.g(t) - circle.g(t)) <= 1e-6 * circle.g(t));
    }
}

TEST_CASE("optimal g: anisotropic Euler-Lagrange residual") {
    const double lambda = 3.0, T = 1.0;
    const GaussianTarget target = aniso2();
    const NoiseSchedule schedule =
        optimal_g_gaussian(target, [](double) { return 1.0; }, lambda, T);
    const OdeGrid grid = OdeGrid::uniform(0.0, T, 200);
    const FisherTrajectory traj = fisher_ode_solve(schedule, Target(target), grid);
    for (std::size_t i = 1; i + 1 < grid.times.size(); ++i) {
        const double residual = 2.0 * 1.0 - dlogJ(traj, i) - lambda;
        CHECK(std::abs(residual) <= 1e-6 * lambda);
    }
}

TEST_CASE("optimal g with a time-varying drift still contracts J at rate lambda") {
    const double lambda = 2.5, T = 1.0;
    const auto f = [](double t) { return 0.5 + 0.8 * t; };
    const GaussianTarget target = aniso2();
    const NoiseSchedule schedule = optimal_g_gaussian(target, f, lambda, T);
    const OdeGrid grid = OdeGrid::uniform(0.0, T, 200);
    const FisherTrajectory traj = fisher_ode_solve(schedule, Target(target), grid);
    for (std::size_t i = 1; i + 1 < grid.times.size(); ++i) {
        const double residual = 2.0 * f(grid.times[i]) - dlogJ(traj, i) - lambda;
        CHECK(std::abs(residual) <= 1e-5 * lambda);
    }
}

TEST_CASE("hparam_solve: drift budget met with increasing g") {
    // c = gamma * lambda_star = 5, E = 2, omega = 0.
    const HparamSolve hs = hparam_solve(0.5, 0.0, 2.0, 2.5, 2.0);
    REQUIRE(hs.feasible);
    CHECK(hs.violated.empty());
    const NoiseSchedule schedule = make_acs(hs.params.acs(), 1.0);
    const double drift = integrate([&](double t) { return schedule.f(t); }, 0.0, 1.0);
    CHECK(std::abs(drift - 2.0) <= 1e-8);
    for (int i = 0; i < 200; ++i) {
        const double t = i / 199.0;
        const double h = 1e-7;
        const double lo = std::max(t - h, 0.0), hi = std::min(t + h, 1.0);
        CHECK(schedule.g(hi) > schedule.g(lo));
    }
}

TEST_CASE("hparam_solve: each infeasibility branch is named") {
    const HparamSolve no_theta = hparam_solve(0.0, 0.5, 2.0, 2.5, 2.0);
    REQUIRE_FALSE(no_theta.feasible);
    CHECK(no_theta.violated.size() == 1);
    CHECK(no_theta.violated[0].find("theta") != std::string::npos);

    const HparamSolve no_omega = hparam_solve(0.5, 2.0, 2.0, 2.5, 2.0);
    REQUIRE_FALSE(no_omega.feasible);
    CHECK(no_omega.violated[0].find("omega") != std::string::npos);

    const HparamSolve no_gamma = hparam_solve(0.5, 0.0, 1.0, 2.5, 2.0);
    REQUIRE_FALSE(no_gamma.feasible);
    CHECK(no_gamma.violated[0].find("gamma") != std::string::npos);

    const HparamSolve all_bad = hparam_solve(0.0, 3.0, 0.1, 2.5, 2.0);
    REQUIRE_FALSE(all_bad.feasible);
    CHECK(all_bad.violated.size() == 3);
}

TEST_CASE("hparam_solve: the gamma boundary gives a nearly flat g") {
    const double E = 1.5, lambda_star = 3.0;
    const double gamma = 2.0 * E / lambda_star;  // feasibility boundary
    const HparamSolve hs = hparam_solve(0.8, 0.2, gamma, lambda_star, E);
    REQUIRE(hs.feasible);
    const NoiseSchedule schedule = make_acs(hs.params.acs(), 1.0);
    const double drift = integrate([&](double t) { return schedule.f(t); }, 0.0, 1.0);
    CHECK(std::abs(drift - E) <= 1e-8);
    CHECK(std::abs(schedule.g(1.0) - schedule.g(0.0)) <= 1e-9 * schedule.g(0.0));
}

TEST_CASE("adaptive_params resolves the budget-dependent quantities") {
    const HparamSolve hs = adaptive_params(37.323, 1.997, 0.564, 0.178, 50, 1.0);
    REQUIRE(hs.feasible);
    const double lambda_n = lambda_adaptive(37.323, 50, 1.0).lambda;
    CHECK(hs.params.lambda_n == doctest::Approx(lambda_n).epsilon(1e-12));
    CHECK(hs.params.E_n == doctest::Approx(lambda_n / 2.0).epsilon(1e-12));
    CHECK(hs.params.omega == doctest::Approx(0.178 * lambda_n / 2.0).epsilon(1e-12));
    CHECK(hs.params.c_n == doctest::Approx(1.997 * lambda_n).epsilon(1e-12));
    CHECK(hs.params.K == 37.323);
    CHECK(hs.params.n == 50);
    // The emitted schedule runs at the effective decay rate c_n.
    CHECK(hs.params.acs().lambda_star == doctest::Approx(hs.params.c_n).epsilon(1e-15));

    // The drift budget is met on the unit horizon.
    const NoiseSchedule schedule = make_acs(hs.params.acs(), 1.0);
    const double drift = integrate([&](double t) { return schedule.f(t); }, 0.0, 1.0);
    CHECK(std::abs(drift - hs.params.E_n) <= 1e-8);

    CHECK_THROWS_AS(adaptive_params(37.323, 1.997, 0.564, 1.5, 50, 1.0), ValidationError);
    CHECK_THROWS_AS(adaptive_params(37.323, 1.997, 0.564, -0.1, 50, 1.0), ValidationError);

    const HparamSolve infeasible = adaptive_params(37.323, 0.5, 0.564, 0.178, 50, 1.0);
    CHECK_FALSE(infeasible.feasible);
}

TEST_CASE("Euler-Lagrange minimality of the constant-slope log-trajectory") {
    const double T = 1.0, lambda = 3.0;
    const auto f = [](double) { return 1.0; };
    const OdeGrid grid = OdeGrid::uniform(0.0, T, 41);
    // Optimal path: u(t) = u0 + (2f - lambda) t; action = lambda^2 T exactly.
    std::vector<double> u_opt(grid.times.size());
    for (std::size_t i = 0; i < grid.times.size(); ++i) {
        u_opt[i] = 1.7 + (2.0 - lambda) * grid.times[i];
    }
    const double action_opt = log_fisher_action(f, grid, u_opt);
    CHECK(std::abs(action_opt - lambda * lambda * T) <= 1e-10 * lambda * lambda * T);

    std::mt19937_64 gen(12345);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> scale_draw(-8.0, -0.5);
    for (int trial = 0; trial < 100; ++trial) {
        const double scale = std::pow(10.0, scale_draw(gen));
        std::vector<double> u = u_opt;
        double sup = 0.0;
        for (std::size_t i = 1; i + 1 < u.size(); ++i) {
            const double d = scale * noise(gen);
            u[i] += d;
            sup = std::max(sup, std::abs(d));
        }
        const double action = log_fisher_action(f, grid, u);
        CHECK(action >= action_opt - 1e-9);
        if (sup > 1e-6) CHECK(action > action_opt);
    }
}

TEST_CASE("kl_upper_bound: terms, step-size scaling, and resolution guard") {
    const NoiseSchedule schedule = ou(3.0);
    const GaussianTarget target = aniso2();
    const FisherTrajectory traj =
        fisher_ode_solve(schedule, Target(target), OdeGrid::uniform(0.0, 3.0, 401));
    const double x2 = target.second_moment();
    const KlBoundTerms b100 = kl_upper_bound(schedule, traj, 100, 2, x2);
    const MarginalCoeffs end = marginal_coeffs(schedule, 3.0);
    const double init = end.alpha * end.alpha / end.sigma2 * x2;
    CHECK(b100.init_term == doctest::Approx(init).epsilon(1e-12));
    CHECK(b100.total() == b100.init_term + b100.disc_term);
    CHECK(b100.disc_term > 0.0);

    // disc is proportional to h = T/n: doubling n halves it.
    const KlBoundTerms b200 = kl_upper_bound(schedule, traj, 200, 2, x2);
    CHECK(b200.disc_term == doctest::Approx(b100.disc_term / 2.0).epsilon(1e-12));

    const FisherTrajectory jumpy{OdeGrid{{0.0, 1.5, 3.0}}, {100.0, 1e-3, 5e-4}, {1.0, 1.0, 1.0},
                                 schedule};
    CHECK_THROWS_AS(kl_upper_bound(schedule, jumpy, 10, 2, x2), ResolutionError);
}

TEST_CASE("kl_upper_bound on the optimal schedule equals h d lambda^2 T") {
    const double lambda = 3.0, T = 1.0;
    const int n = 50, d = 2;
    const GaussianTarget target = aniso2();
    const NoiseSchedule schedule =
        optimal_g_gaussian(target, [](double) { return 1.0; }, lambda, T);
    const FisherTrajectory traj =
        fisher_ode_solve(schedule, Target(target), OdeGrid::uniform(0.0, T, 401));
    const KlBoundTerms bound = kl_upper_bound(schedule, traj, n, d, target.second_moment());
    const double expected = (T / n) * d * lambda * lambda * T;
    CHECK(std::abs(bound.disc_term - expected) <= 1e-4 * expected);
}

TEST_CASE("disc_term is invariant under linear time reparameterization") {
    const GaussianTarget target = aniso2();
    const NoiseSchedule slow = ou(2.0);
    const NoiseSchedule fast = reparameterize(
        slow, [](double tau) { return 2.0 * tau; }, [](double) { return 2.0; }, 1.0);
    const int n = 64;
    const FisherTrajectory traj_slow =
        fisher_ode_solve(slow, Target(target), OdeGrid::uniform(0.0, 2.0, 801));
    const FisherTrajectory traj_fast =
        fisher_ode_solve(fast, Target(target), OdeGrid::uniform(0.0, 1.0, 801));
    const double x2 = target.second_moment();
    const KlBoundTerms slow_bound = kl_upper_bound(slow, traj_slow, n, 2, x2);
    const KlBoundTerms fast_bound = kl_upper_bound(fast, traj_fast, n, 2, x2);
    CHECK(std::abs(slow_bound.disc_term - fast_bound.disc_term) <=
          1e-6 * slow_bound.disc_term);
    // Initialization depends only on the shared terminal marginals.
    CHECK(std::abs(slow_bound.init_term - fast_bound.init_term) <= 1e-8 * slow_bound.init_term);
}

TEST_CASE("girsanov bound: terms against an independent recomputation") {
    const double T = 2.0;
    const NoiseSchedule schedule = ou(T);
    Eigen::VectorXd mu(1);
    mu << 0.5;
    Eigen::MatrixXd cov(1, 1);
    cov << 0.64;
    const GaussianTarget target(mu, cov);
    const int n = 8;
    const GirsanovBound gb = girsanov_bound_gaussian(schedule, target, n);

    const MarginalCoeffs end = marginal_coeffs(schedule, T);
    const double init =
        end.alpha * end.alpha / (2.0 * end.sigma2) * target.second_moment();
    CHECK(gb.init_term == doctest::Approx(init).epsilon(1e-12));
    REQUIRE(gb.per_interval.size() == static_cast<std::size_t>(n));

    // Independent oracle: scalar affine scores under the joint Gaussian law of
    // (X_t, X_{t_k}), integrated interval by interval, frozen at the interval's
    // right endpoint (the state the sampler holds during the step).
    const auto a_of = [&](double t) {
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        return 1.0 / (mc.alpha * mc.alpha * 0.64 + mc.sigma2);
    };
    double disc = 0.0;
    const double h = T / n;
    for (int k = 1; k <= n; ++k) {
        const double tk = k * h;
        const MarginalCoeffs mk = marginal_coeffs(schedule, tk);
        const double ak = a_of(tk);
        const double contribution = 0.5 * integrate(
                                              [&](double t) {
                                                  const MarginalCoeffs mt =
                                                      marginal_coeffs(schedule, t);
                                                  const double at = a_of(t);
                                                  const double r =
                                                      std::exp(mk.log_alpha - mt.log_alpha);
                                                  const double q = std::max(
                                                      mk.sigma2 - r * r * mt.sigma2, 0.0);
                                                  const double diff = ak * r - at;
                                                  const double var_t =
                                                      mt.alpha * mt.alpha * 0.64 + mt.sigma2;
                                                  const double e2 =
                                                      diff * diff * var_t + ak * ak * q;
                                                  return schedule.g(t) * e2;
                                              },
                                              (k - 1) * h, tk);
        CHECK(std::abs(gb.per_interval[k - 1] - contribution) <=
              1e-9 * std::max(1e-12, contribution));
        disc += contribution;
    }
    CHECK(gb.disc_sum == doctest::Approx(disc).epsilon(1e-9));
}

TEST_CASE("girsanov integrand matches a Monte-Carlo estimate at one probe point") {
    const double T = 2.0;
    const NoiseSchedule schedule = ou(T);
    Eigen::VectorXd mu(1);
    mu << 0.5;
    Eigen::MatrixXd cov(1, 1);
    cov << 0.64;
    const GaussianTarget target(mu, cov);

    const double t = 0.6, tk = 0.75;  // probe: t inside [0.5, 0.75], frozen at 0.75
    const MarginalCoeffs mt = marginal_coeffs(schedule, t);
    const MarginalCoeffs mk = marginal_coeffs(schedule, tk);
    const double r = std::exp(mk.log_alpha - mt.log_alpha);
    const double q = std::max(mk.sigma2 - r * r * mt.sigma2, 0.0);

    const CounterRng rng(99);
    const int samples = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < samples; ++i) {
        const std::uint64_t u = static_cast<std::uint64_t>(i);
        const double x_star = 0.5 + 0.8 * rng.normal(u, 0, 0);
        const double xt = mt.alpha * x_star + std::sqrt(mt.sigma2) * rng.normal(u, 1, 0);
        const double xk = r * xt + std::sqrt(q) * rng.normal(u, 2, 0);
        Eigen::VectorXd vt(1), vk(1);
        vt << xt;
        vk << xk;
        const double st = gaussian_score(target, mt.alpha, mt.sigma2, vt)(0);
        const double sk = gaussian_score(target, mk.alpha, mk.sigma2, vk)(0);
        const double d2 = (st - sk) * (st - sk);
        sum += d2;
        sum_sq += d2 * d2;
    }
    const double mc_mean = sum / samples;
    const double mc_se =
        std::sqrt((sum_sq / samples - mc_mean * mc_mean) / samples);

    const double at = 1.0 / (mt.alpha * mt.alpha * 0.64 + mt.sigma2);
    const double ak = 1.0 / (mk.alpha * mk.alpha * 0.64 + mk.sigma2);
    const double diff = ak * r - at;
    const double analytic =
        diff * diff * (mt.alpha * mt.alpha * 0.64 + mt.sigma2) + ak * ak * q;
    CHECK(std::abs(analytic - mc_mean) <= 4.0 * mc_se);
}

TEST_CASE("girsanov discretization shrinks as steps refine") {
    const NoiseSchedule schedule = ou(3.0);
    const GaussianTarget target = GaussianTarget::isotropic(2, 1.0);
    const double d8 = girsanov_bound_gaussian(schedule, target, 8).disc_sum;
    const double d16 = girsanov_bound_gaussian(schedule, target, 16).disc_sum;
    const double d32 = girsanov_bound_gaussian(schedule, target, 32).disc_sum;
    CHECK(d16 < d8);
    CHECK(d32 < d16);
    // First-order freezing error: roughly halves with the step.
    CHECK(d16 / d32 > 1.6);
    CHECK(d16 / d32 < 2.4);
}

TEST_CASE("sufficient step size: OU closed form and the driftless sentinel") {
    const ExtendedReal h_ou =
        stepsize_sufficient(ou(3.0), Target(GaussianTarget::isotropic(3, 1.0)));
    REQUIRE_FALSE(h_ou.is_unbounded);
    CHECK(h_ou.value == doctest::Approx(2.0).epsilon(1e-12));

    const NoiseSchedule ve = make_catalog(VeExponentialParams{1.0, 1.0}, 1.0);
    CHECK(stepsize_sufficient(ve, Target(GaussianTarget::isotropic(3, 1.0))).is_unbounded);
}

TEST_CASE("sufficient step size: anisotropic value equals the grid oracle") {
    const NoiseSchedule schedule = make_catalog(LinearParams{0.2, 4.0}, 1.5);
    const GaussianTarget target = aniso2();
    const ExtendedReal got = stepsize_sufficient(schedule, Target(target));
    REQUIRE_FALSE(got.is_unbounded);

    double f_max = 0.0, g_min = std::numeric_limits<double>::infinity(), min_ratio =
        std::numeric_limits<double>::infinity();
    const int d = 2;
    for (int i = 0; i < 1000; ++i) {
        const double t = 1.5 * i / 999.0;
        f_max = std::max(f_max, schedule.f(t));
        g_min = std::min(g_min, schedule.g(t));
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        const double ex2 =
            mc.alpha * mc.alpha * target.second_moment() + mc.sigma2 * d;
        min_ratio = std::min(min_ratio, d / ex2);
    }
    CHECK(got.value == doctest::Approx(g_min / (f_max * f_max) * min_ratio).epsilon(1e-12));
}

TEST_CASE("legacy bounds: limits, scaling exponents, and reduction") {
    LegacyBoundParams constant;
    constant.g_const = 1e-12;
    CHECK(legacy_bounds(LegacyBoundKind::VpConstant, constant, 100.0, 2, 1.0, 1.0, 0.01) <=
          1e-9);

    // Energy sweep with J*/d = 100, g_const = 2E: slope 1 in E at small E
    // (linear term E J*/d dominates), slope 2 at large E (E^2 term dominates).
    const auto bound_at = [&](double E) {
        LegacyBoundParams p;
        p.g_const = 2.0 * E;
        return legacy_bounds(LegacyBoundKind::VpConstant, p, 200.0, 2, 1.0, 1.0, 0.01);
    };
    const double small_slope =
        std::log(bound_at(0.02) / bound_at(0.01)) / std::log(2.0);
    CHECK(small_slope > 0.95);
    CHECK(small_slope < 1.1);
    const double large_slope =
        std::log(bound_at(400.0) / bound_at(200.0)) / std::log(2.0);
    CHECK(large_slope > 1.8);
    CHECK(large_slope <= 2.0 + 1e-9);

    // VP-linear at g_min = g_max approaches the VP-constant leading term when
    // the exponential correction is negligible.
    LegacyBoundParams lin;
    lin.g_min = lin.g_max = 0.01;
    LegacyBoundParams cst;
    cst.g_const = 0.01;
    const double v_lin = legacy_bounds(LegacyBoundKind::VpLinear, lin, 4.0, 2, 1.2, 1.0, 0.01);
    const double v_cst =
        legacy_bounds(LegacyBoundKind::VpConstant, cst, 4.0, 2, 1.2, 1.0, 0.01);
    CHECK(v_lin / v_cst > 0.9);
    CHECK(v_lin / v_cst < 1.1);

    // Very large exponents stay finite through the log-domain branch.
    LegacyBoundParams big;
    big.g_const = 2000.0;
    CHECK(std::isfinite(legacy_bounds(LegacyBoundKind::VpConstant, big, 100.0, 2, 1.0, 1.0,
                                      1e-4)));

    CHECK_THROWS_AS(legacy_bounds(LegacyBoundKind::VpConstant, cst, 0.0, 2, 1.0, 1.0, 0.01),
                    ValidationError);
    CHECK_THROWS_AS(legacy_bounds(LegacyBoundKind::VpConstant, cst, 1.0, 0, 1.0, 1.0, 0.01),
                    ValidationError);
    CHECK_THROWS_AS(legacy_bounds(LegacyBoundKind::VpConstant, cst, 1.0, 2, 0.5, 1.0, 0.01),
                    ValidationError);
    CHECK_THROWS_AS(legacy_bounds(LegacyBoundKind::VpConstant, cst, 1.0, 2, 1.0, -1.0, 0.01),
                    ValidationError);
}

TEST_CASE("bound reports serialize with unit-constant policy") {
    const std::string text =
        bound_report_json("girsanov", {{"init", 1.5}, {"disc", 0.25}});
    const auto j = nlohmann::json::parse(text);
    CHECK(j.at("bound_name") == "girsanov");
    CHECK(j.at("terms").at("init") == 1.5);
    CHECK(j.at("terms").at("disc") == 0.25);
    CHECK(j.at("total") == 1.75);
    CHECK(j.at("constants_policy") == "unit");
}
