#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sdesched/numerics.hpp"
#include "sdesched/schedule.hpp"

namespace sdesched {

/// Smoothed score statistics at one (alpha, sigma^2): J = E||grad log p||^2
/// (Fisher information) and H = E tr((grad^2 log p)^2) = ||grad s||^2 in L2.
/// Standard errors are present only for Monte-Carlo estimates.
struct SmoothedMoments {
    double J = 0.0;
    double H = 0.0;
    std::optional<double> J_stderr;
    std::optional<double> H_stderr;
};

/// Gaussian target N(mu, Sigma), Sigma positive-definite. The eigendecomposition
/// is cached at construction; diagonal covariances take a rotation-free path.
class GaussianTarget {
public:
    GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd cov);
    static GaussianTarget isotropic(int d, double variance);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    /// Eigenvalues ascending; eigenvectors column-matched.
    const Eigen::VectorXd& cov_eigenvalues() const { return eigenvalues_; }
    const Eigen::MatrixXd& cov_eigenvectors() const { return eigenvectors_; }
    bool diagonal() const { return diagonal_; }

    /// Log-concavity constants: m_star I <= -grad^2 log p <= M_star I.
    double m_star() const { return 1.0 / eigenvalues_(eigenvalues_.size() - 1); }
    double M_star() const { return 1.0 / eigenvalues_(0); }

    /// E||X*||^2 = ||mu||^2 + tr(Sigma).
    double second_moment() const { return mean_.squaredNorm() + eigenvalues_.sum(); }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
    bool diagonal_;
};

/// Isotropic Gaussian mixture: sum_i pi_i N(mu_i, nu^2 I).
class GmmTarget {
public:
    GmmTarget(std::vector<double> weights, std::vector<Eigen::VectorXd> means, double nu);

    int dim() const { return static_cast<int>(means_.front().size()); }
    int components() const { return static_cast<int>(weights_.size()); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& means() const { return means_; }
    double nu() const { return nu_; }

    Eigen::VectorXd mean_bar() const;  // sum_i pi_i mu_i
    double delta_mu() const;           // max pairwise mean distance
    double r_mu() const;               // max_i ||mu_i||

    /// E||X*||^2 = sum_i pi_i ||mu_i||^2 + d nu^2.
    double second_moment() const;

private:
    std::vector<double> weights_;
    std::vector<Eigen::VectorXd> means_;
    double nu_;
};

using Target = std::variant<GaussianTarget, GmmTarget>;

/// Score of the smoothed Gaussian (law of alpha X* + sigma Z):
/// -(alpha^2 Sigma + sigma^2 I)^{-1} (x - alpha mu).
Eigen::VectorXd gaussian_score(const GaussianTarget& target, double alpha, double sigma2,
                               const Eigen::VectorXd& x);

/// Exact J = tr A and H = tr A^2 with A = (alpha^2 Sigma + sigma^2 I)^{-1}.
SmoothedMoments gaussian_moments(const GaussianTarget& target, double alpha, double sigma2);

struct GmmEval {
    double log_density = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd hessian;
    /// Set when some posterior weight underflowed below 1e-300 (expected far
    /// from a mode of a well-separated mixture).
    bool tiny_weight = false;
};

/// Log density, score, and Hessian of the smoothed GMM (posterior weights in
/// log-space): score = (alpha E[M|x] - x)/v^2, hessian = -I/v^2 +
/// (alpha^2/v^4) Cov(M|x), with v^2 = alpha^2 nu^2 + sigma^2.
GmmEval gmm_logdensity_score_hessian(const GmmTarget& target, double alpha, double sigma2,
                                     const Eigen::VectorXd& x);

/// How to estimate GMM smoothed moments. Auto resolves to exact arithmetic for
/// Gaussians and 1D quadrature for GMMs (requiring d = 1).
struct MomentMethod {
    enum class Kind { Auto, Quadrature1d, MonteCarlo } kind = Kind::Auto;
    int nsamples = 0;
    std::uint64_t seed = 0;

    static MomentMethod auto_select() { return {}; }
    static MomentMethod quadrature() { return {Kind::Quadrature1d, 0, 0}; }
    static MomentMethod monte_carlo(int nsamples, std::uint64_t seed) {
        return {Kind::MonteCarlo, nsamples, seed};
    }
};

/// J = E||grad log p_t||^2 and H = E tr((grad^2 log p_t)^2) for the smoothed
/// GMM. Quadrature (d = 1 only) integrates over [min alpha mu_i - 12 v,
/// max alpha mu_i + 12 v]; Monte-Carlo (any d, nsamples >= 100) carries
/// standard errors and is deterministic in (seed, sample index).
SmoothedMoments gmm_moments(const GmmTarget& target, double alpha, double sigma2,
                            const MomentMethod& method);

/// Moment dispatcher over the target variant (Gaussian ignores the method).
SmoothedMoments target_moments(const Target& target, double alpha, double sigma2,
                               const MomentMethod& method = {});

int target_dim(const Target& target);
double target_second_moment(const Target& target);

/// The score-to-Fisher equivalence constant: eigenvalue ratio for Gaussians;
/// (1 + Delta^2/(4 nu^2))^{1/2} (1 + spread/(d nu^2)) for GMMs.
double kappa(const GaussianTarget& target);
double kappa(const GmmTarget& target);
double kappa(const Target& target);

/// Mean-radius upper bound on the GMM kappa: sqrt(1 + R^2/nu^2) (1 + R^2/(d nu^2))
/// with R = max_i ||mu_i||.
double kappa_upper_gmm(const GmmTarget& target);

/// Log-concavity constants of the smoothed target:
/// (PS(m_star/alpha^2, 1/sigma^2), PS(M_star/alpha^2, 1/sigma^2)), with the
/// sigma^2 = 0 limit handled by the unbounded sentinel.
std::pair<double, double> pl_bounds(double m_star, double M_star, double alpha, double sigma2);

/// Analytic score evaluator s(t, x) for the target under the schedule's
/// forward marginals.
ScoreFn analytic_score(const Target& target, const NoiseSchedule& schedule);

struct InequalityCheck {
    std::string name;
    double time = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;  // signed distance into the feasible side
    enum class Status { Pass, Fail, Inconclusive } status = Status::Pass;
};

struct InequalityReport {
    std::vector<InequalityCheck> checks;
    double kappa_value = 1.0;
    double kappa_upper = 1.0;  // equals kappa_value for Gaussians
    int passed = 0;
    int failed = 0;
    int inconclusive = 0;
    bool all_passed() const { return failed == 0; }
};

/// Per-time checks of the information inequalities along the schedule:
/// J^2 <= d H; J <= PS(J*/alpha^2, d/sigma^2); J >= d^2 / E||X_t||^2;
/// the terminal J_T sandwich (both previous bounds at the final grid time);
/// and d/kappa^2 <= J^2/H <= d. Estimated (Monte-Carlo) checks whose standard
/// error exceeds 10% of the margin are marked inconclusive rather than failed.
InequalityReport inequality_suite(const Target& target, const NoiseSchedule& schedule,
                                  const OdeGrid& grid, const MomentMethod& method = {});

std::string inequality_report_to_json(const InequalityReport& report);

/// Target JSON: {"kind":"gaussian","mean":[...],"cov":[[...]]} or
/// {"kind":"gmm","weights":[...],"means":[[...]],"nu":...}. Bit-faithful.
std::string target_to_json(const Target& target);
Target target_from_json(const std::string& json_text);

}  // namespace sdesched
