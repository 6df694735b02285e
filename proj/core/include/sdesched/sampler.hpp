#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "sdesched/schedule.hpp"
#include "sdesched/targets.hpp"

namespace sdesched {

/// Reverse-SDE simulation setup. Reverse time tau runs over [0, T - offset]
/// with tau_k = k h, h = (T - offset)/n; scores are queried at forward times
/// t_k = T - tau_k (never below offset + h, so t = 0 is never touched).
/// T = 0 means "the schedule's full horizon".
struct SamplerConfig {
    NoiseSchedule schedule;
    Target target;
    int n = 1;
    double T = 0.0;
    int paths = 1;
    std::uint64_t seed = 0;
    double terminal_offset = 0.0;  // early-stopping offset delta >= 0
    int jobs = 1;

    double resolved_T() const { return T == 0.0 ? schedule.T() : T; }
    void validate() const;
};

/// Exact one-step integration coefficients of the frozen-score reverse SDE:
/// X <- A X + B s + sqrt(V) xi. A >= 1 whenever f >= 0; B, V >= 0.
struct EiStepCoeffs {
    double A = 1.0;
    double B = 0.0;
    double V = 0.0;
};

/// Coefficients over [tau_k, tau_next) with Phi(u) = exp(int_u^{tau_next}
/// f(T - v) dv): A = Phi(tau_k), B = int Phi g(T-u) du, V = int Phi^2 g(T-u) du
/// (quadrature to relative 1e-10). `horizon` anchors the reverse-time flip;
/// negative means the schedule's full horizon.
EiStepCoeffs ei_step_coeffs(const NoiseSchedule& schedule, double tau_k, double tau_next,
                            double horizon = -1.0);

/// Terminal samples, one row per path. The default overload scores with the
/// target's analytic score; the ScoreFn overload is the same engine with a
/// caller-supplied evaluator (queried at forward times). Deterministic in
/// (seed, path, step, coordinate) — independent of the worker count.
Eigen::MatrixXd sample_paths(const SamplerConfig& config);
Eigen::MatrixXd sample_paths(const SamplerConfig& config, const ScoreFn& score);

/// Exact law of the sampler chain for Gaussian targets (every step map is
/// affine-Gaussian, so no sampling is involved).
struct GaussianChainState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

GaussianChainState propagate_gaussian(const SamplerConfig& config);

/// propagate_gaussian with the per-step affine score taken from `source` via
/// the equal-SNR translation instead of the consumer schedule's own marginals.
/// Agrees with the native propagation up to the SNR lookup tolerance.
GaussianChainState propagate_gaussian_mapped(const SamplerConfig& config,
                                             const NoiseSchedule& source);

/// sample_paths with every score query routed through the cross-schedule
/// translation from `source` (equal-SNR time lookup plus amplitude scaling).
/// A source sharing the consumer's marginal law short-circuits to the identity
/// mapping, reproducing sample_paths byte for byte.
Eigen::MatrixXd sample_paths_with_mapped_score(const SamplerConfig& config,
                                               const NoiseSchedule& source,
                                               const ScoreFn& source_score);

/// CSV: header x0..x{d-1}, one row per path, 17 significant digits.
void samples_to_csv(const Eigen::MatrixXd& samples, const std::string& path);

/// Compact binary block: magic "SDSB", u32 version, u64 paths, u64 d,
/// then row-major 64-bit floats (native byte order).
void samples_to_binary(const Eigen::MatrixXd& samples, const std::string& path);
Eigen::MatrixXd read_samples_binary(const std::string& path);

std::string gaussian_chain_to_json(const GaussianChainState& state);

}  // namespace sdesched
