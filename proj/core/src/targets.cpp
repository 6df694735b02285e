#include "sdesched/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdesched/rng.hpp"

namespace sdesched {

using nlohmann::json;

GaussianTarget::GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto d = mean_.size();
    if (d < 1) throw ValidationError("GaussianTarget: dimension must be >= 1");
    if (cov_.rows() != d || cov_.cols() != d)
        throw ValidationError("GaussianTarget: covariance shape does not match the mean");
    if (!cov_.isApprox(cov_.transpose(), 1e-12))
        throw ValidationError("GaussianTarget: covariance must be symmetric");
    cov_ = ((cov_ + cov_.transpose()) / 2.0).eval();
    diagonal_ = cov_.isDiagonal(0.0);
    if (diagonal_) {
        // Diagonal fast path: eigenvalues are the sorted diagonal, no rotation.
        std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [this](Eigen::Index a, Eigen::Index b) { return cov_(a, a) < cov_(b, b); });
        eigenvalues_.resize(d);
        eigenvectors_ = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            eigenvalues_(i) = cov_(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
            eigenvectors_(order[static_cast<std::size_t>(i)], i) = 1.0;
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_);
        if (es.info() != Eigen::Success)
            throw NumericError("GaussianTarget: eigendecomposition failed");
        eigenvalues_ = es.eigenvalues();
        eigenvectors_ = es.eigenvectors();
    }
    if (!(eigenvalues_(0) > 0.0))
        throw ValidationError("GaussianTarget: covariance must be positive-definite (min eigenvalue " +
                              std::to_string(eigenvalues_(0)) + ")");
}

GaussianTarget GaussianTarget::isotropic(int d, double variance) {
    if (d < 1) throw ValidationError("GaussianTarget::isotropic: d must be >= 1");
    if (!(variance > 0.0)) throw ValidationError("GaussianTarget::isotropic: variance must be > 0");
    return GaussianTarget(Eigen::VectorXd::Zero(d),
                          variance * Eigen::MatrixXd::Identity(d, d));
}

GmmTarget::GmmTarget(std::vector<double> weights, std::vector<Eigen::VectorXd> means, double nu)
    : weights_(std::move(weights)), means_(std::move(means)), nu_(nu) {
    if (weights_.empty() || weights_.size() != means_.size())
        throw ValidationError("GmmTarget: weights and means must be nonempty and match");
    if (!(nu_ > 0.0)) throw ValidationError("GmmTarget: nu must be > 0");
    double total = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0)) throw ValidationError("GmmTarget: weights must be > 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError("GmmTarget: weights must sum to 1 (got " + std::to_string(total) + ")");
    const auto d = means_.front().size();
    if (d < 1) throw ValidationError("GmmTarget: dimension must be >= 1");
    for (const auto& m : means_)
        if (m.size() != d) throw ValidationError("GmmTarget: all means must share one dimension");
}

Eigen::VectorXd GmmTarget::mean_bar() const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
    for (std::size_t i = 0; i < weights_.size(); ++i) out += weights_[i] * means_[i];
    return out;
}

double GmmTarget::delta_mu() const {
    double best = 0.0;
    for (std::size_t i = 0; i < means_.size(); ++i)
        for (std::size_t j = i + 1; j < means_.size(); ++j)
            best = std::max(best, (means_[i] - means_[j]).norm());
    return best;
}

double GmmTarget::r_mu() const {
    double best = 0.0;
    for (const auto& m : means_) best = std::max(best, m.norm());
    return best;
}

double GmmTarget::second_moment() const {
    double s = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * means_[i].squaredNorm();
    return s + dim() * nu_ * nu_;
}

namespace {

void check_smoothing(const GaussianTarget& target, double alpha, double sigma2) {
    if (!(sigma2 >= 0.0)) throw ValidationError("smoothed Gaussian: sigma^2 must be >= 0");
    const double floor = alpha * alpha * target.cov_eigenvalues()(0) + sigma2;
    if (!(floor > 0.0))
        throw NumericError("smoothed Gaussian: alpha^2 Sigma + sigma^2 I is singular");
}

}  // namespace

Eigen::VectorXd gaussian_score(const GaussianTarget& target, double alpha, double sigma2,
                               const Eigen::VectorXd& x) {
    check_smoothing(target, alpha, sigma2);
    if (x.size() != target.dim())
        throw ValidationError("gaussian_score: point dimension mismatch");
    const double a2 = alpha * alpha;
    Eigen::VectorXd y = x - alpha * target.mean();
    if (target.diagonal()) {
        const auto& diag = target.cov().diagonal();
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) /= -(a2 * diag(i) + sigma2);
        return y;
    }
    Eigen::VectorXd w = target.cov_eigenvectors().transpose() * y;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w(i) /= -(a2 * target.cov_eigenvalues()(i) + sigma2);
    return target.cov_eigenvectors() * w;
}

SmoothedMoments gaussian_moments(const GaussianTarget& target, double alpha, double sigma2) {
    check_smoothing(target, alpha, sigma2);
    const double a2 = alpha * alpha;
    SmoothedMoments m;
    for (Eigen::Index i = 0; i < target.dim(); ++i) {
        const double prec = 1.0 / (a2 * target.cov_eigenvalues()(i) + sigma2);
        m.J += prec;
        m.H += prec * prec;
    }
    return m;
}

GmmEval gmm_logdensity_score_hessian(const GmmTarget& target, double alpha, double sigma2,
                                     const Eigen::VectorXd& x) {
    if (!(sigma2 >= 0.0)) throw ValidationError("smoothed GMM: sigma^2 must be >= 0");
    const double v2 = alpha * alpha * target.nu() * target.nu() + sigma2;
    if (!(v2 > 0.0)) throw NumericError("smoothed GMM: v^2 = alpha^2 nu^2 + sigma^2 must be > 0");
    const int d = target.dim();
    if (x.size() != d) throw ValidationError("gmm eval: point dimension mismatch");
    const int L = target.components();

    // Posterior weights in log-space.
    std::vector<double> lw(static_cast<std::size_t>(L));
    double lw_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < L; ++i) {
        const double q = (x - alpha * target.means()[static_cast<std::size_t>(i)]).squaredNorm();
        lw[static_cast<std::size_t>(i)] =
            std::log(target.weights()[static_cast<std::size_t>(i)]) - q / (2.0 * v2);
        lw_max = std::max(lw_max, lw[static_cast<std::size_t>(i)]);
    }
    double z = 0.0;
    for (double v : lw) z += std::exp(v - lw_max);

    GmmEval out;
    out.log_density = lw_max + std::log(z) - 0.5 * d * std::log(2.0 * M_PI * v2);

    Eigen::VectorXd post_mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < L; ++i) {
        const double w = std::exp(lw[static_cast<std::size_t>(i)] - lw_max) / z;
        if (w < 1e-300) out.tiny_weight = true;
        const auto& mu = target.means()[static_cast<std::size_t>(i)];
        post_mean += w * mu;
        second += w * mu * mu.transpose();
    }
    out.score = (alpha * post_mean - x) / v2;
    const Eigen::MatrixXd post_cov = second - post_mean * post_mean.transpose();
    out.hessian = -Eigen::MatrixXd::Identity(d, d) / v2 +
                  (alpha * alpha / (v2 * v2)) * post_cov;
    return out;
}

SmoothedMoments gmm_moments(const GmmTarget& target, double alpha, double sigma2,
                            const MomentMethod& method) {
    const double v2 = alpha * alpha * target.nu() * target.nu() + sigma2;
    if (!(v2 > 0.0)) throw NumericError("gmm_moments: v^2 must be > 0");
    const double v = std::sqrt(v2);
    const int d = target.dim();

    MomentMethod m = method;
    if (m.kind == MomentMethod::Kind::Auto) {
        if (d != 1)
            throw ValidationError(
                "gmm_moments: quadrature supports d = 1 only; pass a monte-carlo method");
        m.kind = MomentMethod::Kind::Quadrature1d;
    }

    if (m.kind == MomentMethod::Kind::Quadrature1d) {
        if (d != 1) throw ValidationError("gmm_moments: quadrature-1d requires a 1D target");
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& mu : target.means()) {
            lo = std::min(lo, alpha * mu(0));
            hi = std::max(hi, alpha * mu(0));
        }
        lo -= 12.0 * v;
        hi += 12.0 * v;
        Eigen::VectorXd point(1);
        auto j_integrand = [&](double x) {
            point(0) = x;
            const GmmEval e = gmm_logdensity_score_hessian(target, alpha, sigma2, point);
            return std::exp(e.log_density) * e.score.squaredNorm();
        };
        auto h_integrand = [&](double x) {
            point(0) = x;
            const GmmEval e = gmm_logdensity_score_hessian(target, alpha, sigma2, point);
            const double h = e.hessian(0, 0);
            return std::exp(e.log_density) * h * h;
        };
        SmoothedMoments out;
        out.J = integrate(j_integrand, lo, hi);
        out.H = integrate(h_integrand, lo, hi);
        return out;
    }

    // Monte-Carlo: X_t = alpha mu_I + v Z per sample, counter-derived streams.
    if (m.nsamples < 100)
        throw ValidationError("gmm_moments: monte-carlo requires nsamples >= 100");
    const CounterRng rng(m.seed);
    std::vector<double> cum(target.weights().size());
    std::partial_sum(target.weights().begin(), target.weights().end(), cum.begin());
    std::vector<double> js(static_cast<std::size_t>(m.nsamples));
    std::vector<double> hs(static_cast<std::size_t>(m.nsamples));
    Eigen::VectorXd x(d);
    for (int i = 0; i < m.nsamples; ++i) {
        const double u = rng.uniform(static_cast<std::uint64_t>(i), 0, 0);
        const std::size_t comp = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        const auto& mu = target.means()[std::min(comp, cum.size() - 1)];
        for (int j = 0; j < d; ++j)
            x(j) = alpha * mu(j) +
                   v * rng.normal(static_cast<std::uint64_t>(i), 1, static_cast<std::uint64_t>(j));
        const GmmEval e = gmm_logdensity_score_hessian(target, alpha, sigma2, x);
        js[static_cast<std::size_t>(i)] = e.score.squaredNorm();
        hs[static_cast<std::size_t>(i)] = e.hessian.squaredNorm();  // tr(H^2), H symmetric
    }
    auto mean_stderr = [](const std::vector<double>& vals) {
        const double n = static_cast<double>(vals.size());
        double mean = 0.0;
        for (double v_ : vals) mean += v_;
        mean /= n;
        double ss = 0.0;
        for (double v_ : vals) ss += (v_ - mean) * (v_ - mean);
        return std::make_pair(mean, std::sqrt(ss / (n - 1.0) / n));
    };
    SmoothedMoments out;
    const auto [jm, jse] = mean_stderr(js);
    const auto [hm, hse] = mean_stderr(hs);
    out.J = jm;
    out.H = hm;
    out.J_stderr = jse;
    out.H_stderr = hse;
    return out;
}

SmoothedMoments target_moments(const Target& target, double alpha, double sigma2,
                               const MomentMethod& method) {
    if (const auto* g = std::get_if<GaussianTarget>(&target))
        return gaussian_moments(*g, alpha, sigma2);
    return gmm_moments(std::get<GmmTarget>(target), alpha, sigma2, method);
}

int target_dim(const Target& target) {
    return std::visit([](const auto& t) { return t.dim(); }, target);
}

double target_second_moment(const Target& target) {
    return std::visit([](const auto& t) { return t.second_moment(); }, target);
}

double kappa(const GaussianTarget& target) {
    return target.cov_eigenvalues()(target.dim() - 1) / target.cov_eigenvalues()(0);
}

double kappa(const GmmTarget& target) {
    const double nu2 = target.nu() * target.nu();
    const double delta = target.delta_mu();
    const Eigen::VectorXd bar = target.mean_bar();
    double spread = 0.0;
    for (std::size_t i = 0; i < target.weights().size(); ++i)
        spread += target.weights()[i] * (target.means()[i] - bar).squaredNorm();
    return std::sqrt(1.0 + delta * delta / (4.0 * nu2)) *
           (1.0 + spread / (target.dim() * nu2));
}

double kappa(const Target& target) {
    return std::visit([](const auto& t) { return kappa(t); }, target);
}

double kappa_upper_gmm(const GmmTarget& target) {
    const double nu2 = target.nu() * target.nu();
    const double r2 = target.r_mu() * target.r_mu();
    return std::sqrt(1.0 + r2 / nu2) * (1.0 + r2 / (target.dim() * nu2));
}

std::pair<double, double> pl_bounds(double m_star, double M_star, double alpha, double sigma2) {
    if (!(m_star > 0.0) || !(M_star >= m_star))
        throw ValidationError("pl_bounds: need 0 < m_star <= M_star");
    if (!(alpha > 0.0)) throw ValidationError("pl_bounds: alpha must be > 0");
    if (!(sigma2 >= 0.0)) throw ValidationError("pl_bounds: sigma^2 must be >= 0");
    const double a2 = alpha * alpha;
    const ExtendedReal noise =
        sigma2 > 0.0 ? ExtendedReal::finite(1.0 / sigma2) : ExtendedReal::unbounded();
    const double m_t = parallel_sum(ExtendedReal::finite(m_star / a2), noise).value;
    const double M_t = parallel_sum(ExtendedReal::finite(M_star / a2), noise).value;
    return {m_t, M_t};
}

ScoreFn analytic_score(const Target& target, const NoiseSchedule& schedule) {
    return [target, schedule](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        if (const auto* g = std::get_if<GaussianTarget>(&target))
            return gaussian_score(*g, mc.alpha, mc.sigma2, x);
        return gmm_logdensity_score_hessian(std::get<GmmTarget>(target), mc.alpha, mc.sigma2, x)
            .score;
    };
}

namespace {

InequalityCheck::Status judged(double margin, double scale, double stderr_estimate) {
    const double tol = 1e-9 * std::max(1.0, scale);
    if (stderr_estimate > 0.0 && stderr_estimate > 0.1 * std::abs(margin))
        return InequalityCheck::Status::Inconclusive;
    return margin >= -tol ? InequalityCheck::Status::Pass : InequalityCheck::Status::Fail;
}

}  // namespace

InequalityReport inequality_suite(const Target& target, const NoiseSchedule& schedule,
                                  const OdeGrid& grid, const MomentMethod& method) {
    grid.validate();
    if (grid.times.back() > schedule.T() * (1.0 + 1e-12))
        throw ValidationError("inequality_suite: grid extends past the schedule horizon");
    const int d = target_dim(target);
    const double dd = static_cast<double>(d);

    InequalityReport report;
    report.kappa_value = kappa(target);
    report.kappa_upper = std::holds_alternative<GmmTarget>(target)
                             ? kappa_upper_gmm(std::get<GmmTarget>(target))
                             : report.kappa_value;

    const SmoothedMoments base = target_moments(target, 1.0, 0.0, method);
    const double j_star = base.J;
    const double x2 = target_second_moment(target);

    auto add = [&report](InequalityCheck c) {
        switch (c.status) {
            case InequalityCheck::Status::Pass: ++report.passed; break;
            case InequalityCheck::Status::Fail: ++report.failed; break;
            case InequalityCheck::Status::Inconclusive: ++report.inconclusive; break;
        }
        report.checks.push_back(std::move(c));
    };

    for (std::size_t idx = 0; idx < grid.times.size(); ++idx) {
        const double t = grid.times[idx];
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        const SmoothedMoments m = target_moments(target, mc.alpha, mc.sigma2, method);
        const double seJ = m.J_stderr.value_or(0.0);
        const double seH = m.H_stderr.value_or(0.0);
        const double a2 = mc.alpha * mc.alpha;

        {  // entropy-power concavity: J^2 <= d H
            InequalityCheck c{"entropy-power-concavity", t, m.J * m.J, dd * m.H, 0.0,
                              InequalityCheck::Status::Pass};
            c.margin = c.rhs - c.lhs;
            const double se = std::hypot(2.0 * m.J * seJ, dd * seH);
            c.status = judged(c.margin, std::max(c.lhs, c.rhs), se);
            add(c);
        }

        const ExtendedReal noise = mc.sigma2 > 0.0 ? ExtendedReal::finite(dd / mc.sigma2)
                                                   : ExtendedReal::unbounded();
        const double bs_rhs = parallel_sum(ExtendedReal::finite(j_star / a2), noise).value;
        {  // Blachman-Stam smoothing bound: J_t <= PS(J*/alpha^2, d/sigma^2)
            InequalityCheck c{"blachman-stam", t, m.J, bs_rhs, 0.0, InequalityCheck::Status::Pass};
            c.margin = c.rhs - c.lhs;
            c.status = judged(c.margin, std::max(c.lhs, c.rhs), seJ);
            add(c);
        }

        const double crlb = dd * dd / (a2 * x2 + mc.sigma2 * dd);
        {  // Cramer-Rao: J_t >= d^2 / E||X_t||^2
            InequalityCheck c{"crlb", t, crlb, m.J, 0.0, InequalityCheck::Status::Pass};
            c.margin = c.rhs - c.lhs;
            c.status = judged(c.margin, std::max(c.lhs, c.rhs), seJ);
            add(c);
        }

        if (idx + 1 == grid.times.size()) {
            // Terminal sandwich: CRLB <= J_T <= Blachman-Stam at the last time.
            InequalityCheck c{"jt-squeeze", t, crlb, bs_rhs, 0.0, InequalityCheck::Status::Pass};
            c.margin = std::min(m.J - crlb, bs_rhs - m.J);
            c.status = judged(c.margin, std::max(std::abs(c.lhs), std::abs(c.rhs)), seJ);
            add(c);
        }

        {  // kappa equivalence: d/kappa^2 <= J^2/H <= d
            const double ratio = m.J * m.J / m.H;
            InequalityCheck c{"kappa-equivalence", t, dd / (report.kappa_value * report.kappa_value),
                              dd, 0.0, InequalityCheck::Status::Pass};
            c.margin = std::min(ratio - c.lhs, c.rhs - ratio);
            const double se = ratio * std::hypot(2.0 * seJ / m.J, seH / std::max(m.H, 1e-300));
            c.status = judged(c.margin, dd, se);
            add(c);
        }
    }
    return report;
}

std::string inequality_report_to_json(const InequalityReport& report) {
    json checks = json::array();
    for (const auto& c : report.checks) {
        const char* status = c.status == InequalityCheck::Status::Pass ? "pass"
                             : c.status == InequalityCheck::Status::Fail ? "fail"
                                                                         : "inconclusive";
        checks.push_back(json{{"name", c.name},
                              {"time", c.time},
                              {"lhs", c.lhs},
                              {"rhs", c.rhs},
                              {"margin", c.margin},
                              {"status", status}});
    }
    const json j{{"kappa", report.kappa_value},
                 {"kappa_upper", report.kappa_upper},
                 {"checks", checks},
                 {"summary",
                  {{"passed", report.passed},
                   {"failed", report.failed},
                   {"inconclusive", report.inconclusive}}}};
    return j.dump(2);
}

std::string target_to_json(const Target& target) {
    json j;
    if (const auto* g = std::get_if<GaussianTarget>(&target)) {
        j["kind"] = "gaussian";
        j["mean"] = std::vector<double>(g->mean().data(), g->mean().data() + g->mean().size());
        json cov = json::array();
        for (Eigen::Index r = 0; r < g->cov().rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < g->cov().cols(); ++c) row.push_back(g->cov()(r, c));
            cov.push_back(std::move(row));
        }
        j["cov"] = std::move(cov);
    } else {
        const auto& m = std::get<GmmTarget>(target);
        j["kind"] = "gmm";
        j["weights"] = m.weights();
        json means = json::array();
        for (const auto& mu : m.means())
            means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
        j["means"] = std::move(means);
        j["nu"] = m.nu();
    }
    return j.dump();
}

Target target_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("target_from_json: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("target_from_json: document must be a JSON object");
    const std::string kind = j.value("kind", "");
    if (kind == "gaussian") {
        const auto mean_v = j.at("mean").get<std::vector<double>>();
        const Eigen::VectorXd mean =
            Eigen::Map<const Eigen::VectorXd>(mean_v.data(), static_cast<Eigen::Index>(mean_v.size()));
        const auto rows = j.at("cov");
        Eigen::MatrixXd cov(mean.size(), mean.size());
        if (static_cast<Eigen::Index>(rows.size()) != mean.size())
            throw ValidationError("target_from_json: cov row count must equal the dimension");
        for (Eigen::Index r = 0; r < mean.size(); ++r) {
            const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != mean.size())
                throw ValidationError("target_from_json: cov must be square");
            for (Eigen::Index c = 0; c < mean.size(); ++c) cov(r, c) = row[static_cast<std::size_t>(c)];
        }
        return GaussianTarget(mean, cov);
    }
    if (kind == "gmm") {
        const auto weights = j.at("weights").get<std::vector<double>>();
        std::vector<Eigen::VectorXd> means;
        for (const auto& row : j.at("means")) {
            const auto v = row.get<std::vector<double>>();
            means.push_back(
                Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        }
        return GmmTarget(weights, means, j.at("nu").get<double>());
    }
    throw ValidationError("target_from_json: kind must be \"gaussian\" or \"gmm\"");
}

}  // namespace sdesched
