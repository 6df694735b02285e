// sdesched: schedule inspection, hyperparameter solving, sampling, bounds,
// and the experiment harness. Exit codes: 0 success, 1 failed assertion,
// 2 validation/infeasibility, 64 usage, 70 internal numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdesched/control.hpp"
#include "sdesched/errors.hpp"
#include "sdesched/evaluation.hpp"
#include "sdesched/numerics.hpp"
#include "sdesched/sampler.hpp"
#include "sdesched/schedule.hpp"
#include "sdesched/targets.hpp"
#include "sdesched/version.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace sdesched;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

NoiseSchedule schedule_from_file(const std::string& path) {
    return schedule_from_json(read_file(path));
}

Target target_from_file(const std::string& path) { return target_from_json(read_file(path)); }

// --out wins; otherwise the only environment variable the tool reads.
std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SDESCHED_OUT"); env != nullptr && env[0] != '\0') {
        return env;
    }
    return ".";
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ScheduleRow {
    double t, f, g, alpha, sigma2;
    ExtendedReal snr;
};

std::vector<ScheduleRow> tabulate(const NoiseSchedule& schedule, int points) {
    std::vector<ScheduleRow> rows;
    const double T = schedule.T();
    for (int i = 0; i < points; ++i) {
        const double t = points == 1 ? 0.0 : T * i / (points - 1);
        const MarginalCoeffs mc = marginal_coeffs(schedule, t);
        rows.push_back({t, schedule.f(t), schedule.g(t), mc.alpha, mc.sigma2, snr(schedule, t)});
    }
    return rows;
}

void print_rows_table(const std::vector<ScheduleRow>& rows) {
    std::printf("%12s %12s %12s %12s %12s %12s\n", "t", "f", "g", "alpha", "sigma2", "snr");
    for (const auto& r : rows) {
        std::printf("%12.6g %12.6g %12.6g %12.6g %12.6g ", r.t, r.f, r.g, r.alpha, r.sigma2);
        if (r.snr.is_unbounded) {
            std::printf("%12s\n", "inf");
        } else {
            std::printf("%12.6g\n", r.snr.value);
        }
    }
}

void print_rows_csv(const std::vector<ScheduleRow>& rows) {
    std::printf("t,f,g,alpha,sigma2,snr\n");
    for (const auto& r : rows) {
        std::printf("%s,%s,%s,%s,%s,%s\n", num(r.t).c_str(), num(r.f).c_str(), num(r.g).c_str(),
                    num(r.alpha).c_str(), num(r.sigma2).c_str(),
                    r.snr.is_unbounded ? "inf" : num(r.snr.value).c_str());
    }
}

ordered_json rows_to_json(const std::vector<ScheduleRow>& rows) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json row;
        row["t"] = r.t;
        row["f"] = r.f;
        row["g"] = r.g;
        row["alpha"] = r.alpha;
        row["sigma2"] = r.sigma2;
        if (r.snr.is_unbounded) {
            row["snr"] = "inf";  // JSON has no infinity literal
        } else {
            row["snr"] = r.snr.value;
        }
        arr.push_back(row);
    }
    return arr;
}

int cmd_schedule_show(const std::string& config, int grid, const std::string& format) {
    const NoiseSchedule schedule = schedule_from_file(config);
    const auto rows = tabulate(schedule, grid);
    if (format == "json") {
        ordered_json j;
        j["T"] = schedule.T();
        j["kind"] = schedule_kind_name(schedule.kind());
        j["rows"] = rows_to_json(rows);
        std::printf("%s\n", j.dump(2).c_str());
    } else if (format == "csv") {
        print_rows_csv(rows);
    } else {
        print_rows_table(rows);
    }
    return 0;
}

int cmd_schedule_acs(double theta, double rho, double gamma, double K, int n, double T, int grid,
                     const std::string& format) {
    const HparamSolve hs = adaptive_params(K, gamma, theta, rho, n, T);
    if (!hs.feasible) {
        std::fprintf(stderr, "infeasible hyperparameters:\n");
        for (const auto& v : hs.violated) std::fprintf(stderr, "  %s\n", v.c_str());
        return 2;
    }
    const NoiseSchedule schedule = make_acs(hs.params.acs(), T);
    const std::string schedule_json = schedule_to_json(schedule);
    const auto rows = tabulate(schedule, grid);

    if (format == "json") {
        ordered_json j;
        j["theta"] = hs.params.theta;
        j["omega"] = hs.params.omega;
        j["gamma"] = hs.params.gamma;
        j["K"] = hs.params.K;
        j["n"] = hs.params.n;
        j["lambda_n"] = hs.params.lambda_n;
        j["E_n"] = hs.params.E_n;
        j["c_n"] = hs.params.c_n;
        j["g0"] = hs.params.g0;
        j["schedule"] = ordered_json::parse(schedule_json);
        j["rows"] = rows_to_json(rows);
        std::printf("%s\n", j.dump(2).c_str());
    } else if (format == "csv") {
        print_rows_csv(rows);
    } else {
        std::printf("%s\n", schedule_json.c_str());
        std::printf("lambda_n = %.12g, E_n = %.12g, c_n = %.12g, g0 = %.12g\n",
                    hs.params.lambda_n, hs.params.E_n, hs.params.c_n, hs.params.g0);
        print_rows_table(rows);
    }
    return 0;
}

int cmd_lambda(double K, int n, double T) {
    const LambdaSolve ls = lambda_adaptive(K, n, T);
    ordered_json j;
    j["lambda"] = ls.lambda;
    j["E"] = ls.lambda / 2.0;
    j["z"] = ls.z;
    j["T"] = T;
    j["provenance"] = "lambert";
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

int cmd_simulate(const std::string& schedule_path, const std::string& target_path, int n,
                 int paths, std::uint64_t seed, double T, double terminal_offset, int jobs,
                 const std::string& out_flag, bool want_exact_law) {
    const NoiseSchedule schedule = schedule_from_file(schedule_path);
    const Target target = target_from_file(target_path);
    const auto* gaussian = std::get_if<GaussianTarget>(&target);
    if (want_exact_law && gaussian == nullptr) {
        throw ValidationError(
            "--exact-law requires a Gaussian target: the propagated terminal law is only "
            "available in closed form for Gaussians");
    }
    const SamplerConfig config{schedule, target, n, T, paths, seed, terminal_offset, jobs};
    config.validate();

    const fs::path out_dir = resolve_out_dir(out_flag);
    fs::create_directories(out_dir);

    const Eigen::MatrixXd samples = sample_paths(config);
    samples_to_csv(samples, (out_dir / "samples.csv").string());
    samples_to_binary(samples, (out_dir / "samples.bin").string());
    std::printf("wrote %s and %s (%d paths, dim %d)\n", (out_dir / "samples.csv").c_str(),
                (out_dir / "samples.bin").c_str(), static_cast<int>(samples.rows()),
                static_cast<int>(samples.cols()));

    if (gaussian != nullptr) {
        const GaussianChainState state = propagate_gaussian(config);
        std::ofstream law((out_dir / "exact_law.json").string());
        if (!law) throw std::runtime_error("cannot open exact_law.json for writing");
        law << gaussian_chain_to_json(state) << "\n";
        std::printf("wrote %s\n", (out_dir / "exact_law.json").c_str());
    }
    return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& out_flag, int jobs_override) {
    ExperimentSpec spec = spec_from_file(spec_path);  // validates before any file is created
    if (jobs_override > 0) spec.jobs = jobs_override;
    const ExperimentResult result = run_experiment(spec);

    const fs::path out_dir = resolve_out_dir(out_flag);
    fs::create_directories(out_dir);
    const std::string csv_path = (out_dir / (result.kind + ".csv")).string();
    const std::string json_path = (out_dir / (result.kind + ".json")).string();
    export_result(result, "csv", csv_path);
    export_result(result, "json", json_path);
    std::printf("wrote %s and %s\n", csv_path.c_str(), json_path.c_str());

    for (const auto& a : result.assertions) {
        std::printf("[%s] %s: %s\n", a.passed ? "PASS" : "FAIL", a.name.c_str(),
                    a.detail.c_str());
    }
    return result.all_assertions_passed() ? 0 : 1;
}

int cmd_bounds_girsanov(const std::string& schedule_path, const std::string& target_path, int n) {
    const NoiseSchedule schedule = schedule_from_file(schedule_path);
    const Target target = target_from_file(target_path);
    const auto* gaussian = std::get_if<GaussianTarget>(&target);
    if (gaussian == nullptr) {
        throw ValidationError("the exact Girsanov decomposition requires a Gaussian target");
    }
    const GirsanovBound gb = girsanov_bound_gaussian(schedule, *gaussian, n);
    std::printf("%s\n",
                bound_report_json("girsanov", {{"init", gb.init_term}, {"disc", gb.disc_sum}})
                    .c_str());
    return 0;
}

int cmd_bounds_thm1(const std::string& schedule_path, const std::string& target_path, int n,
                    int grid) {
    const NoiseSchedule schedule = schedule_from_file(schedule_path);
    const Target target = target_from_file(target_path);
    const FisherTrajectory traj =
        fisher_ode_solve(schedule, target, OdeGrid::uniform(0.0, schedule.T(), grid));
    const int d = std::visit([](const auto& t) { return t.dim(); }, target);
    const KlBoundTerms kb =
        kl_upper_bound(schedule, traj, n, d, target_second_moment(target));
    std::printf("%s\n",
                bound_report_json("fisher-action", {{"init", kb.init_term}, {"disc", kb.disc_term}})
                    .c_str());
    return 0;
}

int cmd_bounds_legacy(const std::string& kind, double g_min, double g_max, double g_const,
                      double J_star, int d, double kappa_value, double T, double h) {
    LegacyBoundParams params;
    params.g_min = g_min;
    params.g_max = g_max;
    params.g_const = g_const;
    const LegacyBoundKind bound_kind =
        kind == "vp-linear" ? LegacyBoundKind::VpLinear : LegacyBoundKind::VpConstant;
    const double value = legacy_bounds(bound_kind, params, J_star, d, kappa_value, T, h);
    std::printf("%s\n",
                bound_report_json("legacy-" + kind, {{"discretization", value}}).c_str());
    return 0;
}

int cmd_check(const std::string& schedule_path, const std::string& target_path, int grid,
              const std::string& format) {
    const NoiseSchedule schedule = schedule_from_file(schedule_path);
    const Target target = target_from_file(target_path);
    const InequalityReport report =
        inequality_suite(target, schedule, OdeGrid::uniform(0.0, schedule.T(), grid));
    if (format == "json") {
        std::printf("%s\n", inequality_report_to_json(report).c_str());
    } else {
        std::printf("kappa = %.12g (upper bound %.12g)\n", report.kappa_value,
                    report.kappa_upper);
        for (const auto& c : report.checks) {
            const char* status = c.status == InequalityCheck::Status::Pass           ? "PASS"
                                 : c.status == InequalityCheck::Status::Inconclusive ? "INCONCLUSIVE"
                                                                                     : "FAIL";
            std::printf("[%s] %-22s t = %-10.6g lhs = %-14.6g rhs = %-14.6g margin = %.6g\n",
                        status, c.name.c_str(), c.time, c.lhs, c.rhs, c.margin);
        }
        std::printf("%d passed, %d failed, %d inconclusive\n", report.passed, report.failed,
                    report.inconclusive);
    }
    return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"noise-schedule construction, analysis, and reverse-SDE sampling"};
    app.set_version_flag("--version", std::string("sdesched ") + kToolVersion + " (format " +
                                          std::to_string(kFormatVersion) + ")");
    app.require_subcommand(1);

    int rc = 0;

    // schedule {show, acs}
    auto* sched = app.add_subcommand("schedule", "Inspect or construct noise schedules");
    sched->require_subcommand(1);

    std::string show_config, show_format = "table";
    int show_grid = 9;
    auto* show = sched->add_subcommand("show", "Tabulate (t, f, g, alpha, sigma2, SNR)");
    show->add_option("--config", show_config, "schedule JSON file")->required();
    show->add_option("--grid", show_grid, "number of grid points")->check(CLI::PositiveNumber);
    show->add_option("--format", show_format, "output format")
        ->check(CLI::IsMember({"table", "json", "csv"}));
    show->callback([&] { rc = cmd_schedule_show(show_config, show_grid, show_format); });

    double acs_theta = 0.0, acs_rho = 0.0, acs_gamma = 0.0, acs_K = 0.0, acs_T = 1.0;
    int acs_n = 0, acs_grid = 9;
    std::string acs_format = "table";
    auto* acs = sched->add_subcommand(
        "acs", "Resolve budget-adaptive hyperparameters and emit the schedule");
    acs->add_option("--theta", acs_theta, "coupling slope theta")->required();
    acs->add_option("--omega-frac,--rho", acs_rho,
                    "drift offset as a fraction of the drift budget (omega = rho * E_n)");
    acs->add_option("--gamma", acs_gamma, "decay-rate multiplier gamma")->required();
    acs->add_option("--K", acs_K, "budget constant K")->required();
    acs->add_option("--n", acs_n, "step budget n")->required()->check(CLI::PositiveNumber);
    acs->add_option("--T", acs_T, "horizon")->check(CLI::PositiveNumber);
    acs->add_option("--grid", acs_grid, "table grid points")->check(CLI::PositiveNumber);
    acs->add_option("--format", acs_format, "output format")
        ->check(CLI::IsMember({"table", "json", "csv"}));
    acs->callback([&] {
        rc = cmd_schedule_acs(acs_theta, acs_rho, acs_gamma, acs_K, acs_n, acs_T, acs_grid,
                              acs_format);
    });

    // lambda
    double lam_K = 0.0, lam_T = 1.0;
    int lam_n = 0;
    auto* lam = app.add_subcommand("lambda", "Budget-adaptive optimal decay slope");
    lam->add_option("--K", lam_K, "budget constant K")
        ->required()
        ->check(CLI::PositiveNumber);
    lam->add_option("--n", lam_n, "step budget n")->required()->check(CLI::PositiveNumber);
    lam->add_option("--T", lam_T, "horizon")->check(CLI::PositiveNumber);
    lam->callback([&] { rc = cmd_lambda(lam_K, lam_n, lam_T); });

    // simulate
    std::string sim_schedule, sim_target, sim_out;
    int sim_n = 0, sim_paths = 0, sim_jobs = 1;
    std::uint64_t sim_seed = 0;
    double sim_T = 0.0, sim_offset = 0.0;
    bool sim_exact_law = false;
    auto* sim = app.add_subcommand("simulate", "Run the exponential-integrator reverse sampler");
    sim->add_option("--schedule", sim_schedule, "schedule JSON file")->required();
    sim->add_option("--target", sim_target, "target JSON file")->required();
    sim->add_option("--n", sim_n, "number of integrator steps")
        ->required()
        ->check(CLI::PositiveNumber);
    sim->add_option("--paths", sim_paths, "number of sample paths")
        ->required()
        ->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--T", sim_T, "horizon (default: the schedule's)");
    sim->add_option("--terminal-offset", sim_offset, "early-stopping offset delta");
    sim->add_option("--jobs", sim_jobs, "worker threads")->check(CLI::PositiveNumber);
    sim->add_option("--out", sim_out, "output directory (default $SDESCHED_OUT or .)");
    sim->add_flag("--exact-law", sim_exact_law,
                  "require the exact terminal law JSON (Gaussian targets only)");
    sim->callback([&] {
        rc = cmd_simulate(sim_schedule, sim_target, sim_n, sim_paths, sim_seed, sim_T, sim_offset,
                          sim_jobs, sim_out, sim_exact_law);
    });

    // experiment
    std::string exp_spec, exp_out;
    int exp_jobs = 0;
    auto* exp = app.add_subcommand("experiment", "Run a declarative experiment spec");
    exp->add_option("--spec", exp_spec, "experiment spec (.json or .toml)")->required();
    exp->add_option("--out", exp_out, "output directory (default $SDESCHED_OUT or .)");
    exp->add_option("--jobs", exp_jobs, "override the spec's worker count")
        ->check(CLI::PositiveNumber);
    exp->callback([&] { rc = cmd_experiment(exp_spec, exp_out, exp_jobs); });

    // bounds {girsanov, thm1, legacy}
    auto* bounds = app.add_subcommand("bounds", "Sampling-error upper bounds");
    bounds->require_subcommand(1);

    std::string gir_schedule, gir_target;
    int gir_n = 0;
    auto* gir = bounds->add_subcommand("girsanov", "Exact Girsanov decomposition (Gaussian)");
    gir->add_option("--schedule", gir_schedule, "schedule JSON file")->required();
    gir->add_option("--target", gir_target, "target JSON file")->required();
    gir->add_option("--n", gir_n, "number of integrator steps")
        ->required()
        ->check(CLI::PositiveNumber);
    gir->callback([&] { rc = cmd_bounds_girsanov(gir_schedule, gir_target, gir_n); });

    std::string thm_schedule, thm_target;
    int thm_n = 0, thm_grid = 401;
    auto* thm = bounds->add_subcommand("thm1", "Fisher-action discretization bound");
    thm->add_option("--schedule", thm_schedule, "schedule JSON file")->required();
    thm->add_option("--target", thm_target, "target JSON file")->required();
    thm->add_option("--n", thm_n, "number of integrator steps")
        ->required()
        ->check(CLI::PositiveNumber);
    thm->add_option("--grid", thm_grid, "Fisher ODE grid points")->check(CLI::PositiveNumber);
    thm->callback([&] { rc = cmd_bounds_thm1(thm_schedule, thm_target, thm_n, thm_grid); });

    std::string leg_kind;
    double leg_g_min = 0.0, leg_g_max = 0.0, leg_g_const = 0.0;
    double leg_J_star = 0.0, leg_kappa = 1.0, leg_T = 0.0, leg_h = 0.0;
    int leg_d = 0;
    auto* leg = bounds->add_subcommand("legacy", "Reference VP-schedule bounds");
    leg->add_option("--kind", leg_kind, "vp-linear | vp-constant")
        ->required()
        ->check(CLI::IsMember({"vp-linear", "vp-constant"}));
    leg->add_option("--g-min", leg_g_min, "minimum diffusion rate (vp-linear)");
    leg->add_option("--g-max", leg_g_max, "maximum diffusion rate (vp-linear)");
    leg->add_option("--g-const", leg_g_const, "constant diffusion rate (vp-constant)");
    leg->add_option("--J-star", leg_J_star, "target Fisher information")->required();
    leg->add_option("--d", leg_d, "dimension")->required()->check(CLI::PositiveNumber);
    leg->add_option("--kappa", leg_kappa, "score-equivalence constant")->required();
    leg->add_option("--T", leg_T, "horizon")->required()->check(CLI::PositiveNumber);
    leg->add_option("--step", leg_h, "step size h")->required()->check(CLI::PositiveNumber);
    leg->callback([&] {
        rc = cmd_bounds_legacy(leg_kind, leg_g_min, leg_g_max, leg_g_const, leg_J_star, leg_d,
                               leg_kappa, leg_T, leg_h);
    });

    // check
    std::string chk_schedule, chk_target, chk_format = "table";
    int chk_grid = 50;
    auto* chk = app.add_subcommand("check", "Run the information-inequality suite");
    chk->add_option("--schedule", chk_schedule, "schedule JSON file")->required();
    chk->add_option("--target", chk_target, "target JSON file")->required();
    chk->add_option("--grid", chk_grid, "number of grid times")->check(CLI::PositiveNumber);
    chk->add_option("--format", chk_format, "output format")
        ->check(CLI::IsMember({"table", "json"}));
    chk->callback([&] { rc = cmd_check(chk_schedule, chk_target, chk_grid, chk_format); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 64;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 70;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal failure: %s\n", e.what());
        return 70;
    }
    return rc;
}
