#include "sdesched/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdesched/errors.hpp"
#include "sdesched/numerics.hpp"
#include "sdesched/rng.hpp"

namespace sdesched {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b);
    return std::string(buf);
}

}  // namespace

void SamplerConfig::validate() const {
    if (n < 1) throw ValidationError("step count n must be >= 1");
    if (paths < 1) throw ValidationError("path count must be >= 1");
    if (jobs < 1) throw ValidationError("jobs must be >= 1");
    const double horizon = resolved_T();
    if (!(std::isfinite(horizon) && horizon > 0.0 &&
          horizon <= schedule.T() * (1.0 + 1e-12))) {
        throw ValidationError(fmt("horizon T = %.6g must lie in (0, %.6g]", horizon, schedule.T()));
    }
    if (!(terminal_offset >= 0.0 && terminal_offset < horizon)) {
        throw ValidationError(
            fmt("terminal offset %.6g must lie in [0, T = %.6g)", terminal_offset, horizon));
    }
}

EiStepCoeffs ei_step_coeffs(const NoiseSchedule& schedule, double tau_k, double tau_next,
                            double horizon) {
    const double T = horizon < 0.0 ? schedule.T() : horizon;
    if (!(T > 0.0 && T <= schedule.T() * (1.0 + 1e-12))) {
        throw ValidationError(fmt("horizon %.6g must lie in (0, %.6g]", T, schedule.T()));
    }
    if (!(0.0 <= tau_k && tau_k < tau_next && tau_next <= T * (1.0 + 1e-12))) {
        throw ValidationError(
            fmt("reverse times must satisfy 0 <= tau_k < tau_next <= T (got %.6g, %.6g)", tau_k,
                tau_next));
    }

    // log alpha at the anchor forward time T - tau_next, against which
    // Phi(u) = alpha(T - tau_next)/alpha(T - u) is computed.
    const double la_next = marginal_coeffs(schedule, T - tau_next).log_alpha;
    auto phi = [&](double u) {
        return std::exp(la_next - marginal_coeffs(schedule, T - u).log_alpha);
    };

    EiStepCoeffs out;
    out.A = std::exp(la_next - marginal_coeffs(schedule, T - tau_k).log_alpha);
    out.B = integrate([&](double u) { return phi(u) * schedule.g(T - u); }, tau_k, tau_next);
    const double v = integrate(
        [&](double u) {
            const double p = phi(u);
            return p * p * schedule.g(T - u);
        },
        tau_k, tau_next);
    out.V = std::max(v, 0.0);
    if (!(std::isfinite(out.A) && std::isfinite(out.B) && std::isfinite(out.V))) {
        throw NumericError(fmt("step coefficients are not finite over [%.6g, %.6g]", tau_k, tau_next));
    }
    return out;
}

namespace {

struct StepPlan {
    std::vector<EiStepCoeffs> coeffs;
    std::vector<double> score_time;  // forward time of each step's frozen score
    double sigma_T2 = 0.0;
};

StepPlan build_plan(const SamplerConfig& config) {
    config.validate();
    const double T = config.resolved_T();
    const double span = T - config.terminal_offset;
    const double h = span / config.n;
    StepPlan plan;
    plan.sigma_T2 = marginal_coeffs(config.schedule, T).sigma2;
    plan.coeffs.reserve(config.n);
    plan.score_time.reserve(config.n);
    for (int k = 0; k < config.n; ++k) {
        const double tau_k = k * h;
        const double tau_next = (k == config.n - 1) ? span : (k + 1) * h;
        plan.coeffs.push_back(ei_step_coeffs(config.schedule, tau_k, tau_next, T));
        plan.score_time.push_back(T - tau_k);
    }
    return plan;
}

Eigen::MatrixXd run_paths(const SamplerConfig& config, const ScoreFn& score) {
    const StepPlan plan = build_plan(config);
    const int d = target_dim(config.target);
    const double sigma_T = std::sqrt(plan.sigma_T2);
    Eigen::MatrixXd out(config.paths, d);

    CounterRng rng(config.seed);
    auto simulate_range = [&](std::int64_t begin, std::int64_t end) {
        Eigen::VectorXd x(d);
        for (std::int64_t p = begin; p < end; ++p) {
            const auto path = static_cast<std::uint64_t>(p);
            for (int j = 0; j < d; ++j) x[j] = sigma_T * rng.normal(path, 0, j);
            for (int k = 0; k < config.n; ++k) {
                const EiStepCoeffs& c = plan.coeffs[static_cast<std::size_t>(k)];
                const Eigen::VectorXd s = score(plan.score_time[static_cast<std::size_t>(k)], x);
                const double noise = std::sqrt(c.V);
                for (int j = 0; j < d; ++j) {
                    x[j] = c.A * x[j] + c.B * s[j] +
                           noise * rng.normal(path, static_cast<std::uint64_t>(k) + 1, j);
                }
                if (!x.allFinite()) {
                    throw DivergenceError(fmt("path %.0f diverged at step %.0f",
                                              static_cast<double>(p), static_cast<double>(k)));
                }
            }
            out.row(p) = x.transpose();
        }
    };

    const int workers = std::min<std::int64_t>(config.jobs, config.paths);
    if (workers <= 1) {
        simulate_range(0, config.paths);
        return out;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::int64_t block = (config.paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t begin = w * block;
        const std::int64_t end = std::min<std::int64_t>(begin + block, config.paths);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                simulate_range(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace

Eigen::MatrixXd sample_paths(const SamplerConfig& config) {
    return run_paths(config, analytic_score(config.target, config.schedule));
}

Eigen::MatrixXd sample_paths(const SamplerConfig& config, const ScoreFn& score) {
    if (!score) throw ValidationError("sample_paths requires a score evaluator");
    return run_paths(config, score);
}

GaussianChainState propagate_gaussian(const SamplerConfig& config) {
    const auto* gaussian = std::get_if<GaussianTarget>(&config.target);
    if (gaussian == nullptr) {
        throw ValidationError("exact propagation requires a Gaussian target");
    }
    const StepPlan plan = build_plan(config);
    const Eigen::VectorXd ells = gaussian->cov_eigenvalues();
    const Eigen::MatrixXd U = gaussian->cov_eigenvectors();
    const Eigen::VectorXd mu_eig = U.transpose() * gaussian->mean();
    const int d = gaussian->dim();

    // The frozen Gaussian score is affine and diagonal in the target's
    // eigenbasis, so the chain factorizes into d scalar affine recursions.
    Eigen::VectorXd mean_eig = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd var_eig = Eigen::VectorXd::Constant(d, plan.sigma_T2);
    for (int k = 0; k < config.n; ++k) {
        const EiStepCoeffs& c = plan.coeffs[static_cast<std::size_t>(k)];
        const MarginalCoeffs mk = marginal_coeffs(config.schedule, plan.score_time[static_cast<std::size_t>(k)]);
        const double ak2 = std::exp(2.0 * mk.log_alpha);
        for (int j = 0; j < d; ++j) {
            const double slope = 1.0 / (ak2 * ells[j] + mk.sigma2);
            const double gain = c.A - c.B * slope;
            mean_eig[j] = gain * mean_eig[j] + c.B * slope * mk.alpha * mu_eig[j];
            var_eig[j] = gain * gain * var_eig[j] + c.V;
        }
    }
    for (int j = 0; j < d; ++j) {
        if (var_eig[j] < -1e-12) {
            throw NumericError(fmt("propagated variance %.6g fell below the PSD floor", var_eig[j]));
        }
        if (!std::isfinite(var_eig[j]) || !std::isfinite(mean_eig[j])) {
            throw NumericError("propagated moments are not finite");
        }
    }

    GaussianChainState state;
    state.mean = U * mean_eig;
    state.cov = U * var_eig.asDiagonal() * U.transpose();
    return state;
}

GaussianChainState propagate_gaussian_mapped(const SamplerConfig& config,
                                             const NoiseSchedule& source) {
    const auto* gaussian = std::get_if<GaussianTarget>(&config.target);
    if (gaussian == nullptr) {
        throw ValidationError("exact propagation requires a Gaussian target");
    }
    const StepPlan plan = build_plan(config);
    const Eigen::VectorXd ells = gaussian->cov_eigenvalues();
    const Eigen::MatrixXd U = gaussian->cov_eigenvectors();
    const Eigen::VectorXd mu_eig = U.transpose() * gaussian->mean();
    const int d = gaussian->dim();

    Eigen::VectorXd mean_eig = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd var_eig = Eigen::VectorXd::Constant(d, plan.sigma_T2);
    for (int k = 0; k < config.n; ++k) {
        const EiStepCoeffs& c = plan.coeffs[static_cast<std::size_t>(k)];
        const double t = plan.score_time[static_cast<std::size_t>(k)];
        // Translated score s_b(t, x) = r s_a(tau, r x) stays affine: slope
        // -r^2 a_tau, intercept r a_tau alpha_a(tau) mu per eigendirection.
        const double tau = snr_time_map(source, config.schedule, t);
        const MarginalCoeffs ms = marginal_coeffs(source, tau);
        const MarginalCoeffs md = marginal_coeffs(config.schedule, t);
        if (!(md.sigma2 > 0.0 && ms.sigma2 > 0.0)) {
            throw NumericError(fmt("degenerate marginal variance at t = %.6g", t));
        }
        const double r2 = ms.sigma2 / md.sigma2;
        const double r = std::sqrt(r2);
        const double as2 = std::exp(2.0 * ms.log_alpha);
        for (int j = 0; j < d; ++j) {
            const double a_tau = 1.0 / (as2 * ells[j] + ms.sigma2);
            const double slope = r2 * a_tau;
            const double gain = c.A - c.B * slope;
            mean_eig[j] = gain * mean_eig[j] + c.B * r * a_tau * ms.alpha * mu_eig[j];
            var_eig[j] = gain * gain * var_eig[j] + c.V;
        }
    }
    for (int j = 0; j < d; ++j) {
        if (var_eig[j] < -1e-12) {
            throw NumericError(fmt("propagated variance %.6g fell below the PSD floor", var_eig[j]));
        }
    }
    GaussianChainState state;
    state.mean = U * mean_eig;
    state.cov = U * var_eig.asDiagonal() * U.transpose();
    return state;
}

Eigen::MatrixXd sample_paths_with_mapped_score(const SamplerConfig& config,
                                               const NoiseSchedule& source,
                                               const ScoreFn& source_score) {
    if (!source_score) throw ValidationError("mapped sampling requires a source score evaluator");
    if (source.same_marginals(config.schedule)) {
        return run_paths(config, source_score);  // identity translation, bit-exact
    }

    const StepPlan plan = build_plan(config);
    std::string gaps;
    for (int k = 0; k < config.n; ++k) {
        try {
            (void)snr_time_map(source, config.schedule, plan.score_time[static_cast<std::size_t>(k)]);
        } catch (const CoverageError&) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s%d (t = %.6g)", gaps.empty() ? "" : ", ", k,
                          plan.score_time[static_cast<std::size_t>(k)]);
            gaps += buf;
        }
    }
    if (!gaps.empty()) {
        throw CoverageError("source schedule cannot match the SNR required at steps " + gaps);
    }

    ScoreFn mapped = [&source, &config, &source_score](double t, const Eigen::VectorXd& x) {
        return map_score(source_score, source, config.schedule, t, x);
    };
    return run_paths(config, mapped);
}

void samples_to_csv(const Eigen::MatrixXd& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        out << (j ? ",x" : "x") << j;
    }
    out << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index j = 0; j < samples.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", samples(i, j));
            if (j) out << ",";
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

namespace {
constexpr char kMagic[4] = {'S', 'D', 'S', 'B'};
constexpr std::uint32_t kBinaryVersion = 1;
}  // namespace

void samples_to_binary(const Eigen::MatrixXd& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const std::uint64_t rows = static_cast<std::uint64_t>(samples.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(samples.cols());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kBinaryVersion), sizeof(kBinaryVersion));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
        for (std::uint64_t j = 0; j < cols; ++j) row[j] = samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

Eigen::MatrixXd read_samples_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw ValidationError(path + " is not a sample block (bad magic)");
    }
    if (version != kBinaryVersion) {
        throw ValidationError(fmt("unsupported sample block version %.0f", double(version)));
    }
    if (rows == 0 || cols == 0 || cols > (1u << 20)) {
        throw ValidationError(path + " has an implausible sample block header");
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(double)));
        if (!in) throw ValidationError(path + " is truncated");
        for (std::uint64_t j = 0; j < cols; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return out;
}

std::string gaussian_chain_to_json(const GaussianChainState& state) {
    nlohmann::ordered_json j;
    j["mean"] = std::vector<double>(state.mean.data(), state.mean.data() + state.mean.size());
    nlohmann::ordered_json cov = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < state.cov.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(state.cov.cols()));
        for (Eigen::Index k = 0; k < state.cov.cols(); ++k) row[static_cast<std::size_t>(k)] = state.cov(i, k);
        cov.push_back(row);
    }
    j["cov"] = cov;
    return j.dump(2);
}

}  // namespace sdesched
