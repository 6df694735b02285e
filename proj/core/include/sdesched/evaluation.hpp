#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sdesched/sampler.hpp"
#include "sdesched/schedule.hpp"
#include "sdesched/targets.hpp"

namespace sdesched {

/// Closed-form KL(N(mu1, S1) || N(mu2, S2)). Elementwise-identical inputs
/// return exactly 0; a non-positive-definite covariance raises NumericError.
double kl_gaussians(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1,
                    const Eigen::VectorXd& mu2, const Eigen::MatrixXd& S2);

/// Exact sampling error of the n-step chain on a Gaussian target:
/// kl = KL(target || propagated terminal law) and the true initialization
/// error KL(forward marginal at T || N(0, sigma_T^2 I)).
struct SamplingKl {
    double kl = 0.0;
    double init_error = 0.0;
};

SamplingKl exact_sampling_kl(const NoiseSchedule& schedule, const GaussianTarget& target, int n);

/// Declarative description of one desk-scale experiment, read from JSON or
/// TOML. Fields irrelevant to a kind are ignored by its runner; defaults are
/// the write-ups' canonical settings (see each runner).
struct ExperimentSpec {
    std::string kind;  // "u-curve" | "n-scaling" | "bound-audit" | "gmm-sanity"
    std::uint64_t seed = 0;
    int jobs = 1;
    double T = 1.0;
    int n = 0;       // 0 = kind default
    int paths = 0;   // gmm-sanity; 0 = default
    std::vector<double> sweep;  // u-curve rate grid; empty = 20 log-spaced in [0.5, 50]
    std::vector<int> n_list;    // n-scaling step budgets
    std::string target_json;    // "" = kind default target
    std::string schedule_json;  // gmm-sanity chain schedule; "" = default

    struct AuditEntry {
        std::string schedule_json;
        int n = 0;
    };
    std::vector<AuditEntry> entries;  // bound-audit battery

    // n-scaling schedule family: adaptive ACS by default, self-consistent
    // optimal-g synthesis when optimal_g is set.
    double K = 0.0;
    double gamma = 0.0;
    double theta = 0.0;
    double rho = 0.0;
    bool optimal_g = false;

    // Assertion thresholds; `asserted` gates whether failures make the run
    // report failure (they are always recorded).
    bool asserted = true;
    double u_interior_factor = 5.0;
    double u_init_frac = 0.1;
    double slope_lo = -1.25;
    double slope_hi = -0.8;
    double weight_tol = 0.02;
    double mean_sigmas = 3.0;

    void validate() const;
};

ExperimentSpec spec_from_json(const std::string& text);
ExperimentSpec spec_from_toml(const std::string& text);
/// Dispatches on the file extension (.json / .toml).
ExperimentSpec spec_from_file(const std::string& path);

struct AssertionOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// One table of numbers plus everything needed to reproduce it. CSV export
/// writes `columns`/`rows` only (so reruns are byte-comparable); wall-clock
/// times and metadata live in the JSON form.
struct ExperimentResult {
    std::string kind;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<double> wall_time_sec;  // one entry per row
    std::string schedule_json;          // family or schedule descriptor
    std::string target_json;
    std::uint64_t seed = 0;
    std::string tool_version;
    std::vector<AssertionOutcome> assertions;
    std::vector<std::pair<std::string, double>> extras;  // e.g. {"slope", ...}

    bool all_assertions_passed() const;
};

ExperimentResult run_u_curve(const ExperimentSpec& spec);
ExperimentResult run_n_scaling(const ExperimentSpec& spec);
ExperimentResult run_bound_audit(const ExperimentSpec& spec);
ExperimentResult run_gmm_sanity(const ExperimentSpec& spec);
/// Dispatch on spec.kind.
ExperimentResult run_experiment(const ExperimentSpec& spec);

std::string result_to_csv(const ExperimentResult& result);
std::string result_to_json(const ExperimentResult& result);
ExperimentResult result_from_json(const std::string& text);
/// format: "csv" or "json". Writes the file (ending with a newline).
void export_result(const ExperimentResult& result, const std::string& format,
                   const std::string& path);

}  // namespace sdesched
