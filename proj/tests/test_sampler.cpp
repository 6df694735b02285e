#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <sdesched/errors.hpp>
#include <sdesched/rng.hpp>
#include <sdesched/sampler.hpp>
#include <sdesched/schedule.hpp>
#include <sdesched/targets.hpp>

using namespace sdesched;

namespace {

NoiseSchedule ou(double T) { return make_catalog(ConstantParams{1.0, 2.0}, T); }

GaussianTarget aniso2() {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = 0.01;
    cov(1, 1) = 1.0;
    return GaussianTarget(Eigen::VectorXd::Zero(2), cov);
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("step coefficients: OU closed forms at several positions") {
    const NoiseSchedule schedule = ou(3.0);
    for (double tau : {0.0, 0.7, 2.1}) {
        const double h = 0.4;
        const EiStepCoeffs c = ei_step_coeffs(schedule, tau, tau + h);
        CHECK(std::abs(c.A - std::exp(h)) <= 1e-12 * std::exp(h));
        CHECK(std::abs(c.B - 2.0 * (std::exp(h) - 1.0)) <= 1e-12 * c.B);
        CHECK(std::abs(c.V - (std::exp(2.0 * h) - 1.0)) <= 1e-12 * c.V);
    }
}

TEST_CASE("step coefficients: general constant-coefficient closed forms") {
    const double f = 0.6, g = 1.3, h = 0.25;
    const NoiseSchedule schedule = make_catalog(ConstantParams{f, g}, 2.0);
    const EiStepCoeffs c = ei_step_coeffs(schedule, 0.5, 0.5 + h);
    const double A = std::exp(f * h);
    const double B = g / f * (std::exp(f * h) - 1.0);
    const double V = g / (2.0 * f) * (std::exp(2.0 * f * h) - 1.0);
    CHECK(std::abs(c.A - A) <= 1e-12 * A);
    CHECK(std::abs(c.B - B) <= 1e-12 * B);
    CHECK(std::abs(c.V - V) <= 1e-12 * V);
}

TEST_CASE("step coefficients: driftless schedules collapse to accumulated noise") {
    const double g0 = 0.8, lam = 1.7, T = 1.5;
    const NoiseSchedule ve = make_catalog(VeExponentialParams{g0, lam}, T);
    const double tau0 = 0.2, tau1 = 0.55;
    const EiStepCoeffs c = ei_step_coeffs(ve, tau0, tau1);
    // Phi == 1, so B = V = int g(T - u) du over the step.
    const double mass =
        g0 * std::exp(lam * T) * (std::exp(-lam * tau0) - std::exp(-lam * tau1)) / lam;
    CHECK(c.A == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(c.B - mass) <= 1e-10 * mass);
    CHECK(std::abs(c.V - mass) <= 1e-10 * mass);
}

TEST_CASE("step coefficients stitch across a split point") {
    const NoiseSchedule schedule = make_catalog(LinearParams{0.1, 8.0}, 1.0);
    const double ta = 0.1, tb = 0.47, tc = 0.9;
    const EiStepCoeffs ab = ei_step_coeffs(schedule, ta, tb);
    const EiStepCoeffs bc = ei_step_coeffs(schedule, tb, tc);
    const EiStepCoeffs ac = ei_step_coeffs(schedule, ta, tc);
    CHECK(std::abs(ac.A - bc.A * ab.A) <= 1e-10 * ac.A);
    CHECK(std::abs(ac.B - (bc.A * ab.B + bc.B)) <= 1e-10 * ac.B);
    CHECK(std::abs(ac.V - (bc.A * bc.A * ab.V + bc.V)) <= 1e-10 * ac.V);
}

TEST_CASE("step coefficients validate their interval") {
    const NoiseSchedule schedule = ou(1.0);
    CHECK_THROWS_AS(ei_step_coeffs(schedule, 0.5, 0.5), ValidationError);
    CHECK_THROWS_AS(ei_step_coeffs(schedule, 0.8, 0.2), ValidationError);
    CHECK_THROWS_AS(ei_step_coeffs(schedule, 0.0, 1.5), ValidationError);
}

TEST_CASE("single-step exact propagation equals the hand-built affine map") {
    const double T = 1.2;
    Eigen::VectorXd mu(1);
    mu << 0.7;
    Eigen::MatrixXd cov(1, 1);
    cov << 0.36;
    SamplerConfig config{ou(T), Target(GaussianTarget(mu, cov)), 1, 0.0, 1, 0, 0.0, 1};
    const GaussianChainState state = propagate_gaussian(config);

    const MarginalCoeffs end = marginal_coeffs(config.schedule, T);
    const double A = std::exp(T), B = 2.0 * (std::exp(T) - 1.0), V = std::exp(2.0 * T) - 1.0;
    // One step from N(0, sigma_T^2) with the score frozen at forward time T:
    // s(x) = -a (x - alpha mu), a = 1/(alpha^2 Sigma + sigma^2).
    const double a = 1.0 / (end.alpha * end.alpha * 0.36 + end.sigma2);
    const double mean = B * a * end.alpha * 0.7;
    const double var = (A - B * a) * (A - B * a) * end.sigma2 + V;
    CHECK(state.mean(0) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(state.cov(0, 0) == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("early stopping shifts the final forward time to the offset") {
    const double T = 1.5, delta = 0.2;
    Eigen::VectorXd mu(1);
    mu << -0.4;
    Eigen::MatrixXd cov(1, 1);
    cov << 0.25;
    SamplerConfig config{ou(T), Target(GaussianTarget(mu, cov)), 1, 0.0, 1, 0, delta, 1};
    const GaussianChainState state = propagate_gaussian(config);

    const MarginalCoeffs end = marginal_coeffs(config.schedule, T);
    const double span = T - delta;
    const double A = std::exp(span), B = 2.0 * (std::exp(span) - 1.0),
                 V = std::exp(2.0 * span) - 1.0;
    const double a = 1.0 / (end.alpha * end.alpha * 0.25 + end.sigma2);
    const double mean = B * a * end.alpha * -0.4;
    const double var = (A - B * a) * (A - B * a) * end.sigma2 + V;
    CHECK(state.mean(0) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(state.cov(0, 0) == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("sampled moments track the exact chain law") {
    const int paths = 20000;
    SamplerConfig config{ou(2.0), Target(aniso2()), 20, 0.0, paths, 7, 0.0, 1};
    const Eigen::MatrixXd samples = sample_paths(config);
    REQUIRE(samples.rows() == paths);
    REQUIRE(samples.cols() == 2);
    const GaussianChainState exact = propagate_gaussian(config);

    for (int j = 0; j < 2; ++j) {
        const double var = exact.cov(j, j);
        const double mean = samples.col(j).mean();
        const double mean_se = std::sqrt(var / paths);
        CHECK(std::abs(mean - exact.mean(j)) <= 4.0 * mean_se);

        const double sample_var =
            (samples.col(j).array() - mean).square().sum() / (paths - 1);
        const double var_se = var * std::sqrt(2.0 / (paths - 1));
        CHECK(std::abs(sample_var - var) <= 4.0 * var_se);
    }
}

TEST_CASE("sampling is reproducible and independent of the worker count") {
    SamplerConfig config{ou(1.0), Target(aniso2()), 8, 0.0, 64, 123, 0.0, 1};
    const Eigen::MatrixXd first = sample_paths(config);
    const Eigen::MatrixXd second = sample_paths(config);
    CHECK(first == second);

    SamplerConfig parallel = config;
    parallel.jobs = 4;
    const Eigen::MatrixXd threaded = sample_paths(parallel);
    CHECK(first == threaded);

    SamplerConfig reseeded = config;
    reseeded.seed = 124;
    CHECK(sample_paths(reseeded) != first);
}

TEST_CASE("mapped scoring with an identical-law source is the identity") {
    const NoiseSchedule consumer = ou(1.0);
    const NoiseSchedule source = consumer;  // a copy shares the marginal law
    const GaussianTarget target = aniso2();
    SamplerConfig config{consumer, Target(target), 6, 0.0, 32, 5, 0.0, 1};
    const Eigen::MatrixXd native = sample_paths(config);
    const Eigen::MatrixXd mapped =
        sample_paths_with_mapped_score(config, source, analytic_score(Target(target), source));
    CHECK(native == mapped);
}

TEST_CASE("mapped exact propagation agrees with the native law across schedules") {
    // The source must reach below the consumer's terminal SNR (~4e-5 here).
    const NoiseSchedule source = ou(6.0);
    const NoiseSchedule consumer = make_catalog(LinearParams{0.1, 20.0}, 1.0);
    Eigen::VectorXd mu(2);
    mu << 0.3, -0.2;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = 0.5;
    cov(1, 1) = 1.5;
    SamplerConfig config{consumer, Target(GaussianTarget(mu, cov)), 24, 0.0, 1, 0, 0.0, 1};
    const GaussianChainState native = propagate_gaussian(config);
    const GaussianChainState mapped = propagate_gaussian_mapped(config, source);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(mapped.mean(j) - native.mean(j)) <= 1e-10 * (1.0 + std::abs(native.mean(j))));
        CHECK(std::abs(mapped.cov(j, j) - native.cov(j, j)) <= 1e-10 * native.cov(j, j));
    }
}

TEST_CASE("mapped propagation reports SNR coverage gaps") {
    // A short-horizon source never reaches the consumer's low terminal SNR.
    const NoiseSchedule source = ou(0.5);
    const NoiseSchedule consumer = ou(5.0);
    SamplerConfig config{consumer, Target(GaussianTarget::isotropic(1, 1.0)), 10, 0.0, 1, 0, 0.0,
                         1};
    CHECK_THROWS_AS(propagate_gaussian_mapped(config, source), CoverageError);
}

TEST_CASE("sample blocks round-trip exactly and reject corrupt input") {
    Eigen::MatrixXd m(7, 3);
    const CounterRng rng(2024);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = rng.normal(i, j, 0);

    const auto bin = temp_file("sdesched_block_test.bin");
    samples_to_binary(m, bin.string());
    const Eigen::MatrixXd back = read_samples_binary(bin.string());
    CHECK(back == m);

    // Bad magic.
    {
        std::ofstream out(bin, std::ios::binary | std::ios::trunc);
        out << "NOPE" << std::string(28, '\0');
    }
    CHECK_THROWS_AS(read_samples_binary(bin.string()), ValidationError);

    // Truncated payload: rewrite then chop the last coordinate off.
    samples_to_binary(m, bin.string());
    const auto full_size = std::filesystem::file_size(bin);
    std::filesystem::resize_file(bin, full_size - 8);
    CHECK_THROWS_AS(read_samples_binary(bin.string()), ValidationError);
    std::filesystem::remove(bin);
}

TEST_CASE("sample CSV carries a coordinate header") {
    Eigen::MatrixXd m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const auto csv = temp_file("sdesched_block_test.csv");
    samples_to_csv(m, csv.string());
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "x0,x1,x2");
    std::string row;
    int rows = 0;
    while (std::getline(in, row) && !row.empty()) ++rows;
    CHECK(rows == 2);
    std::filesystem::remove(csv);
}

TEST_CASE("sampler configuration validation") {
    SamplerConfig good{ou(1.0), Target(GaussianTarget::isotropic(1, 1.0)), 4, 0.0, 2, 0, 0.0, 1};
    CHECK_NOTHROW(good.validate());

    SamplerConfig bad = good;
    bad.n = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.paths = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.terminal_offset = 1.0;  // swallows the whole horizon
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.T = 1.5;  // beyond the schedule horizon
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = good;
    bad.jobs = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("exact chain law serializes to JSON") {
    SamplerConfig config{ou(1.0), Target(aniso2()), 4, 0.0, 1, 0, 0.0, 1};
    const GaussianChainState state = propagate_gaussian(config);
    const auto j = nlohmann::json::parse(gaussian_chain_to_json(state));
    REQUIRE(j.at("mean").is_array());
    REQUIRE(j.at("cov").is_array());
    CHECK(j.at("mean").size() == 2);
    CHECK(j.at("cov").size() == 2);
    CHECK(j.at("cov").at(0).size() == 2);
    CHECK(j.at("cov").at(0).at(0).get<double>() == doctest::Approx(state.cov(0, 0)));
}
