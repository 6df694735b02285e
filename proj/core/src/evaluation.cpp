#include "sdesched/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <variant>

#include <nlohmann/json.hpp>

#include "sdesched/control.hpp"
#include "sdesched/errors.hpp"
#include "sdesched/version.hpp"

namespace sdesched {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return std::string(buf);
}

}  // namespace

double kl_gaussians(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1,
                    const Eigen::VectorXd& mu2, const Eigen::MatrixXd& S2) {
    const Eigen::Index d = mu1.size();
    if (mu2.size() != d || S1.rows() != d || S1.cols() != d || S2.rows() != d || S2.cols() != d) {
        throw ValidationError("Gaussian KL requires matching dimensions");
    }
    if (!mu1.allFinite() || !mu2.allFinite() || !S1.allFinite() || !S2.allFinite()) {
        throw ValidationError("Gaussian KL requires finite inputs");
    }
    if ((mu1.array() == mu2.array()).all() && (S1.array() == S2.array()).all()) {
        return 0.0;  // identical laws, exactly
    }
    const Eigen::LLT<Eigen::MatrixXd> llt2(S2);
    if (llt2.info() != Eigen::Success) {
        throw NumericError("second covariance is not positive definite");
    }
    const Eigen::LLT<Eigen::MatrixXd> llt1(S1);
    if (llt1.info() != Eigen::Success) {
        throw NumericError("first covariance is not positive definite");
    }
    double log_det1 = 0.0, log_det2 = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        log_det1 += 2.0 * std::log(llt1.matrixL()(i, i));
        log_det2 += 2.0 * std::log(llt2.matrixL()(i, i));
    }
    const double trace = llt2.solve(S1).trace();
    const Eigen::VectorXd delta = mu2 - mu1;
    const double quad = delta.dot(llt2.solve(delta));
    return 0.5 * (trace + quad - static_cast<double>(d) + log_det2 - log_det1);
}

SamplingKl exact_sampling_kl(const NoiseSchedule& schedule, const GaussianTarget& target, int n) {
    if (n < 1) throw ValidationError("step count n must be >= 1");
    const SamplerConfig config{schedule, Target(target), n, 0.0, 1, 0, 0.0, 1};
    const GaussianChainState state = propagate_gaussian(config);

    SamplingKl out;
    out.kl = kl_gaussians(target.mean(), target.cov(), state.mean, state.cov);

    const double T = schedule.T();
    const MarginalCoeffs end = marginal_coeffs(schedule, T);
    const int d = target.dim();
    const double aT2 = std::exp(2.0 * end.log_alpha);
    const Eigen::MatrixXd fwd_cov =
        aT2 * target.cov() + end.sigma2 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd fwd_mean = end.alpha * target.mean();
    out.init_error = kl_gaussians(fwd_mean, fwd_cov, Eigen::VectorXd::Zero(d),
                                  end.sigma2 * Eigen::MatrixXd::Identity(d, d));
    return out;
}

// ---------------------------------------------------------------------------
// Experiment specs: JSON/TOML parsing and validation.
// ---------------------------------------------------------------------------

namespace {

// Minimal TOML subset: [dotted.tables], dotted bare keys, basic strings,
// booleans, integers, floats, and (nested, possibly multi-line) arrays.
// Anything else is rejected by name. Parsed into JSON for a single spec path.
namespace toml {

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int bracket_balance(const std::string& s) {
    bool in_string = false;
    int depth = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '[') {
            ++depth;
        } else if (c == ']') {
            --depth;
        }
    }
    return depth;
}

struct Cursor {
    const std::string& s;
    std::size_t i = 0;

    void skip_ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool done() {
        skip_ws();
        return i >= s.size();
    }
    char peek() { return i < s.size() ? s[i] : '\0'; }
};

ordered_json parse_value(Cursor& c);

ordered_json parse_string(Cursor& c) {
    ++c.i;  // opening quote
    std::string out;
    while (c.i < c.s.size()) {
        const char ch = c.s[c.i++];
        if (ch == '"') return out;
        if (ch == '\\') {
            if (c.i >= c.s.size()) break;
            const char esc = c.s[c.i++];
            switch (esc) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default:
                    throw ValidationError(std::string("unsupported TOML escape \\") + esc);
            }
        } else {
            out += ch;
        }
    }
    throw ValidationError("unterminated TOML string");
}

ordered_json parse_array(Cursor& c) {
    ++c.i;  // '['
    ordered_json arr = ordered_json::array();
    c.skip_ws();
    if (c.peek() == ']') {
        ++c.i;
        return arr;
    }
    while (true) {
        arr.push_back(parse_value(c));
        c.skip_ws();
        if (c.peek() == ',') {
            ++c.i;
            c.skip_ws();
            if (c.peek() == ']') {  // trailing comma
                ++c.i;
                return arr;
            }
            continue;
        }
        if (c.peek() == ']') {
            ++c.i;
            return arr;
        }
        throw ValidationError("malformed TOML array (expected ',' or ']')");
    }
}

ordered_json parse_value(Cursor& c) {
    c.skip_ws();
    const char c0 = c.peek();
    if (c0 == '"') return parse_string(c);
    if (c0 == '[') return parse_array(c);
    if (c0 == '{') throw ValidationError("inline TOML tables are not supported; use [sections]");
    std::string token;
    while (c.i < c.s.size() && std::string(",]\t\n\r ").find(c.s[c.i]) == std::string::npos) {
        token += c.s[c.i++];
    }
    if (token == "true") return true;
    if (token == "false") return false;
    std::string digits;
    for (char ch : token) {
        if (ch != '_') digits += ch;  // TOML readability underscores
    }
    if (digits.empty()) throw ValidationError("empty TOML value");
    const bool integral = digits.find_first_not_of("+-0123456789") == std::string::npos;
    char* end = nullptr;
    if (integral) {
        errno = 0;
        const long long v = std::strtoll(digits.c_str(), &end, 10);
        if (errno == 0 && end == digits.c_str() + digits.size()) return v;
    }
    const double v = std::strtod(digits.c_str(), &end);
    if (end != digits.c_str() + digits.size() || !std::isfinite(v)) {
        throw ValidationError("invalid TOML value '" + token + "'");
    }
    return v;
}

std::vector<std::string> split_key_path(const std::string& text) {
    std::vector<std::string> parts;
    std::string part;
    std::stringstream ss(text);
    while (std::getline(ss, part, '.')) {
        part = trim(part);
        if (part.empty() ||
            part.find_first_not_of(
                "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-") !=
                std::string::npos) {
            throw ValidationError("invalid TOML key '" + text + "'");
        }
        parts.push_back(part);
    }
    if (parts.empty()) throw ValidationError("empty TOML key");
    return parts;
}

ordered_json* descend(ordered_json& root, const std::vector<std::string>& path,
                      std::size_t upto) {
    ordered_json* cur = &root;
    for (std::size_t i = 0; i < upto; ++i) {
        ordered_json& next = (*cur)[path[i]];
        if (next.is_null()) next = ordered_json::object();
        if (!next.is_object()) {
            throw ValidationError("TOML key '" + path[i] + "' is redefined as a table");
        }
        cur = &next;
    }
    return cur;
}

ordered_json parse_document(const std::string& text) {
    ordered_json root = ordered_json::object();
    ordered_json* table = &root;
    std::istringstream lines(text);
    std::string raw;
    while (std::getline(lines, raw)) {
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.size() >= 2 && line[1] == '[') {
                throw ValidationError("TOML arrays of tables ([[...]]) are not supported");
            }
            if (line.back() != ']') throw ValidationError("malformed TOML table header: " + line);
            const auto path = split_key_path(trim(line.substr(1, line.size() - 2)));
            table = descend(root, path, path.size());
            continue;
        }
        std::size_t eq = std::string::npos;
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (in_string) {
                if (line[i] == '\\') ++i;
                else if (line[i] == '"') in_string = false;
            } else if (line[i] == '"') {
                in_string = true;
            } else if (line[i] == '=') {
                eq = i;
                break;
            }
        }
        if (eq == std::string::npos) throw ValidationError("malformed TOML line: " + line);
        const auto key_path = split_key_path(trim(line.substr(0, eq)));
        std::string value_text = trim(line.substr(eq + 1));
        while (bracket_balance(value_text) > 0 && std::getline(lines, raw)) {
            value_text += "\n" + strip_comment(raw);
        }
        Cursor cursor{value_text, 0};
        ordered_json value = parse_value(cursor);
        if (!cursor.done()) {
            throw ValidationError("trailing characters after TOML value: " + value_text);
        }
        ordered_json* parent = descend(*table, key_path, key_path.size() - 1);
        const std::string& leaf = key_path.back();
        if (parent->contains(leaf)) throw ValidationError("duplicate TOML key '" + leaf + "'");
        (*parent)[leaf] = std::move(value);
    }
    return root;
}

}  // namespace toml

double get_number(const ordered_json& j, const std::string& path) {
    if (!j.is_number()) throw ValidationError(path + " must be a number");
    return j.get<double>();
}

int get_integer(const ordered_json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ValidationError(path + " must be an integer");
    return static_cast<int>(j.get<long long>());
}

bool get_boolean(const ordered_json& j, const std::string& path) {
    if (!j.is_boolean()) throw ValidationError(path + " must be a boolean");
    return j.get<bool>();
}

std::vector<double> expand_sweep(const ordered_json& j) {
    std::vector<double> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(get_number(v, "spec.sweep[]"));
        return out;
    }
    if (j.is_object() && j.size() == 1 && j.contains("log_spaced")) {
        const auto& ls = j.at("log_spaced");
        if (!ls.is_object()) throw ValidationError("spec.sweep.log_spaced must be an object");
        for (const auto& [key, value] : ls.items()) {
            (void)value;
            if (key != "lo" && key != "hi" && key != "points") {
                throw ValidationError("unknown field spec.sweep.log_spaced." + key);
            }
        }
        const double lo = get_number(ls.at("lo"), "spec.sweep.log_spaced.lo");
        const double hi = get_number(ls.at("hi"), "spec.sweep.log_spaced.hi");
        const int points = get_integer(ls.at("points"), "spec.sweep.log_spaced.points");
        if (!(lo > 0.0 && hi > lo)) {
            throw ValidationError("spec.sweep.log_spaced needs 0 < lo < hi");
        }
        if (points < 1) throw ValidationError("spec.sweep.log_spaced.points must be >= 1");
        for (int i = 0; i < points; ++i) {
            const double s = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
            out.push_back(std::exp(std::log(lo) + s * (std::log(hi) - std::log(lo))));
        }
        return out;
    }
    throw ValidationError("spec.sweep must be an array or {\"log_spaced\": {lo, hi, points}}");
}

ExperimentSpec spec_from_value(const ordered_json& j) {
    if (!j.is_object()) throw ValidationError("spec: top level must be an object/table");
    ExperimentSpec spec;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") {
            if (!value.is_string()) throw ValidationError("spec.kind must be a string");
            spec.kind = value.get<std::string>();
        } else if (key == "seed") {
            if (!value.is_number_integer() || value.get<long long>() < 0) {
                throw ValidationError("spec.seed must be a nonnegative integer");
            }
            spec.seed = value.get<std::uint64_t>();
        } else if (key == "jobs") {
            spec.jobs = get_integer(value, "spec.jobs");
        } else if (key == "T") {
            spec.T = get_number(value, "spec.T");
        } else if (key == "n") {
            spec.n = get_integer(value, "spec.n");
        } else if (key == "paths") {
            spec.paths = get_integer(value, "spec.paths");
        } else if (key == "sweep") {
            spec.sweep = expand_sweep(value);
        } else if (key == "n_list") {
            if (!value.is_array()) throw ValidationError("spec.n_list must be an array");
            for (const auto& v : value) spec.n_list.push_back(get_integer(v, "spec.n_list[]"));
        } else if (key == "target") {
            if (!value.is_object()) throw ValidationError("spec.target must be an object");
            spec.target_json = value.dump(2);
            try {
                (void)target_from_json(spec.target_json);
            } catch (const std::exception& e) {
                throw ValidationError(std::string("spec.target: ") + e.what());
            }
        } else if (key == "schedule") {
            if (!value.is_object()) throw ValidationError("spec.schedule must be an object");
            spec.schedule_json = value.dump(2);
            try {
                (void)schedule_from_json(spec.schedule_json);
            } catch (const std::exception& e) {
                throw ValidationError(std::string("spec.schedule: ") + e.what());
            }
        } else if (key == "entries") {
            if (!value.is_array()) throw ValidationError("spec.entries must be an array");
            for (const auto& entry : value) {
                if (!entry.is_object()) throw ValidationError("spec.entries[] must be objects");
                ExperimentSpec::AuditEntry audit;
                for (const auto& [ekey, evalue] : entry.items()) {
                    if (ekey == "schedule") {
                        if (!evalue.is_object()) {
                            throw ValidationError("spec.entries[].schedule must be an object");
                        }
                        audit.schedule_json = evalue.dump(2);
                        try {
                            (void)schedule_from_json(audit.schedule_json);
                        } catch (const std::exception& e) {
                            throw ValidationError(std::string("spec.entries[].schedule: ") +
                                                  e.what());
                        }
                    } else if (ekey == "n") {
                        audit.n = get_integer(evalue, "spec.entries[].n");
                    } else {
                        throw ValidationError("unknown field spec.entries[]." + ekey);
                    }
                }
                if (audit.schedule_json.empty()) {
                    throw ValidationError("spec.entries[] needs a schedule");
                }
                spec.entries.push_back(std::move(audit));
            }
        } else if (key == "family") {
            if (!value.is_object()) throw ValidationError("spec.family must be an object");
            for (const auto& [fkey, fvalue] : value.items()) {
                if (fkey == "K") spec.K = get_number(fvalue, "spec.family.K");
                else if (fkey == "gamma") spec.gamma = get_number(fvalue, "spec.family.gamma");
                else if (fkey == "theta") spec.theta = get_number(fvalue, "spec.family.theta");
                else if (fkey == "rho") spec.rho = get_number(fvalue, "spec.family.rho");
                else if (fkey == "optimal_g") spec.optimal_g = get_boolean(fvalue, "spec.family.optimal_g");
                else throw ValidationError("unknown field spec.family." + fkey);
            }
        } else if (key == "assert") {
            if (!value.is_object()) throw ValidationError("spec.assert must be an object");
            for (const auto& [akey, avalue] : value.items()) {
                if (akey == "enabled") spec.asserted = get_boolean(avalue, "spec.assert.enabled");
                else if (akey == "interior_min_factor") spec.u_interior_factor = get_number(avalue, "spec.assert.interior_min_factor");
                else if (akey == "init_dominated_frac") spec.u_init_frac = get_number(avalue, "spec.assert.init_dominated_frac");
                else if (akey == "slope_lo") spec.slope_lo = get_number(avalue, "spec.assert.slope_lo");
                else if (akey == "slope_hi") spec.slope_hi = get_number(avalue, "spec.assert.slope_hi");
                else if (akey == "weight_tol") spec.weight_tol = get_number(avalue, "spec.assert.weight_tol");
                else if (akey == "mean_sigmas") spec.mean_sigmas = get_number(avalue, "spec.assert.mean_sigmas");
                else throw ValidationError("unknown field spec.assert." + akey);
            }
        } else {
            throw ValidationError("unknown field spec." + key);
        }
    }
    spec.validate();
    return spec;
}

}  // namespace

void ExperimentSpec::validate() const {
    static const char* kKinds[] = {"u-curve", "n-scaling", "bound-audit", "gmm-sanity"};
    if (std::find_if(std::begin(kKinds), std::end(kKinds),
                     [&](const char* k) { return kind == k; }) == std::end(kKinds)) {
        throw ValidationError(
            "spec.kind must be one of u-curve | n-scaling | bound-audit | gmm-sanity (got '" +
            kind + "')");
    }
    if (jobs < 1) throw ValidationError("spec.jobs must be >= 1");
    if (!(std::isfinite(T) && T > 0.0)) throw ValidationError("spec.T must be positive");
    if (n < 0) throw ValidationError("spec.n must be >= 0");
    if (paths < 0) throw ValidationError("spec.paths must be >= 0");
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (!(std::isfinite(sweep[i]) && sweep[i] > 0.0)) {
            throw ValidationError("spec.sweep values must be positive and finite");
        }
        if (i > 0 && !(sweep[i] > sweep[i - 1])) {
            throw ValidationError("spec.sweep must be strictly ascending");
        }
    }
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        if (n_list[i] < 1) throw ValidationError("spec.n_list values must be >= 1");
        if (i > 0 && !(n_list[i] > n_list[i - 1])) {
            throw ValidationError("spec.n_list must be strictly ascending");
        }
    }
    for (const auto& entry : entries) {
        if (entry.n < 1) throw ValidationError("spec.entries[].n must be >= 1");
    }
    if (!(K >= 0.0 && std::isfinite(K))) throw ValidationError("spec.family.K must be nonnegative");
    if (!(gamma >= 0.0 && std::isfinite(gamma))) throw ValidationError("spec.family.gamma must be nonnegative");
    if (!(theta >= 0.0 && std::isfinite(theta))) throw ValidationError("spec.family.theta must be nonnegative");
    if (!(rho >= 0.0 && rho <= 0.99)) throw ValidationError("spec.family.rho must lie in [0, 0.99]");
    if (!(u_interior_factor >= 1.0)) throw ValidationError("spec.assert.interior_min_factor must be >= 1");
    if (!(u_init_frac > 0.0 && u_init_frac <= 1.0)) throw ValidationError("spec.assert.init_dominated_frac must lie in (0, 1]");
    if (!(slope_lo < slope_hi)) throw ValidationError("spec.assert slope window is empty");
    if (!(weight_tol > 0.0)) throw ValidationError("spec.assert.weight_tol must be positive");
    if (!(mean_sigmas > 0.0)) throw ValidationError("spec.assert.mean_sigmas must be positive");
}

ExperimentSpec spec_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("spec is not valid JSON: ") + e.what());
    }
    return spec_from_value(j);
}

ExperimentSpec spec_from_toml(const std::string& text) {
    return spec_from_value(toml::parse_document(text));
}

ExperimentSpec spec_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open spec file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
        return spec_from_json(text);
    }
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".toml") == 0) {
        return spec_from_toml(text);
    }
    throw ValidationError("spec file must end in .json or .toml: " + path);
}

// ---------------------------------------------------------------------------
// Runners.
// ---------------------------------------------------------------------------

namespace {

double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Runs fn(0..count-1), possibly on `jobs` workers. Output slots are indexed,
// so results are identical for every worker count.
template <typename Fn>
void run_indexed(int jobs, std::size_t count, Fn&& fn) {
    const int workers = static_cast<int>(std::min<std::size_t>(std::max(jobs, 1), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void check_rows_finite(const ExperimentResult& result) {
    for (const auto& row : result.rows) {
        for (double v : row) {
            if (!std::isfinite(v)) {
                throw NumericError("experiment produced a non-finite record value");
            }
        }
    }
}

GaussianTarget gaussian_target_or(const std::string& target_json, const GaussianTarget& fallback,
                                  const char* kind) {
    if (target_json.empty()) return fallback;
    Target t = target_from_json(target_json);
    const auto* g = std::get_if<GaussianTarget>(&t);
    if (g == nullptr) {
        throw ValidationError(std::string(kind) + " needs a Gaussian target");
    }
    return *g;
}

double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    double sx = 0.0, sy = 0.0;
    std::vector<double> lx(m), ly(m);
    for (std::size_t i = 0; i < m; ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        sx += lx[i];
        sy += ly[i];
    }
    const double mx = sx / m, my = sy / m;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

}  // namespace

bool ExperimentResult::all_assertions_passed() const {
    for (const auto& a : assertions) {
        if (!a.passed) return false;
    }
    return true;
}

ExperimentResult run_u_curve(const ExperimentSpec& spec) {
    if (spec.kind != "u-curve") throw ValidationError("spec.kind must be u-curve");
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = 0.01;
    cov(1, 1) = 1.0;
    const GaussianTarget target =
        gaussian_target_or(spec.target_json, GaussianTarget(Eigen::VectorXd::Zero(2), cov), "u-curve");
    const int n = spec.n > 0 ? spec.n : 100;
    const double T = spec.T;
    std::vector<double> sweep = spec.sweep;
    if (sweep.empty()) {
        for (int i = 0; i < 20; ++i) {
            sweep.push_back(std::exp(std::log(0.5) + i * (std::log(50.0) - std::log(0.5)) / 19.0));
        }
    }

    ExperimentResult result;
    result.kind = spec.kind;
    result.columns = {"E", "init_error", "disc_proxy", "kl"};
    result.rows.resize(sweep.size());
    result.wall_time_sec.resize(sweep.size());
    run_indexed(spec.jobs, sweep.size(), [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        const double E = sweep[i];
        const NoiseSchedule schedule = make_catalog(ConstantParams{E, 2.0 * E}, T);
        const SamplingKl sk = exact_sampling_kl(schedule, target, n);
        const GirsanovBound gb = girsanov_bound_gaussian(schedule, target, n);
        result.rows[i] = {E, sk.init_error, gb.disc_sum, sk.kl};
        result.wall_time_sec[i] = elapsed_seconds(start);
    });
    check_rows_finite(result);

    ordered_json family;
    family["family"] = "vp-constant";
    family["f"] = "E";
    family["g"] = "2E";
    family["T"] = T;
    family["n"] = n;
    result.schedule_json = family.dump(2);
    result.target_json = target_to_json(target);
    result.seed = spec.seed;
    result.tool_version = kToolVersion;

    if (spec.asserted) {
        const auto kl_of = [&](std::size_t i) { return result.rows[i][3]; };
        if (sweep.size() >= 3) {
            std::size_t imin = 0;
            for (std::size_t i = 1; i < sweep.size(); ++i) {
                if (kl_of(i) < kl_of(imin)) imin = i;
            }
            const bool interior = imin > 0 && imin + 1 < sweep.size();
            result.assertions.push_back(
                {"interior-minimum", interior,
                 fmt("minimum kl = %.6g at rate %.6g (index %.0f)", kl_of(imin), sweep[imin],
                     static_cast<double>(imin))});
            const bool deep = spec.u_interior_factor * kl_of(imin) <=
                              std::min(kl_of(0), kl_of(sweep.size() - 1));
            result.assertions.push_back(
                {"minimum-depth", deep,
                 fmt("endpoints %.6g / %.6g vs %.1fx minimum", kl_of(0), kl_of(sweep.size() - 1),
                     spec.u_interior_factor) +
                     fmt(" = %.6g", spec.u_interior_factor * kl_of(imin))});
        }
        const double init0 = result.rows[0][1];
        const bool dominated = std::abs(kl_of(0) - init0) <= spec.u_init_frac * init0;
        result.assertions.push_back(
            {"init-dominated-at-smallest-rate", dominated,
             fmt("kl %.6g vs init_error %.6g (tolerance %.0f%%)", kl_of(0), init0,
                 100.0 * spec.u_init_frac)});
    }
    return result;
}

ExperimentResult run_n_scaling(const ExperimentSpec& spec) {
    if (spec.kind != "n-scaling") throw ValidationError("spec.kind must be n-scaling");
    const GaussianTarget target =
        gaussian_target_or(spec.target_json, GaussianTarget::isotropic(4, 1.0), "n-scaling");
    if (spec.n_list.size() < 3) {
        throw ValidationError("n-scaling needs at least 3 step budgets in spec.n_list");
    }
    if (!(spec.K > 0.0)) throw ValidationError("spec.family.K must be positive for n-scaling");
    if (!spec.optimal_g) {
        if (!(spec.gamma > 0.0)) throw ValidationError("spec.family.gamma must be positive");
        if (!(spec.theta > 0.0)) throw ValidationError("spec.family.theta must be positive");
    }
    const double T = spec.T;

    ExperimentResult result;
    result.kind = spec.kind;
    result.columns = {"n", "init_error", "disc_proxy", "kl"};
    result.rows.resize(spec.n_list.size());
    result.wall_time_sec.resize(spec.n_list.size());
    run_indexed(spec.jobs, spec.n_list.size(), [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        const int n = spec.n_list[i];
        NoiseSchedule schedule = [&] {
            if (spec.optimal_g) {
                const LambdaSolve ls = lambda_adaptive(spec.K, n, T);
                const double E_n = ls.lambda / 2.0;
                return optimal_g_gaussian(target, [E_n](double) { return E_n; }, ls.lambda, T);
            }
            const HparamSolve hs = adaptive_params(spec.K, spec.gamma, spec.theta, spec.rho, n, T);
            if (!hs.feasible) {
                std::string joined;
                for (const auto& v : hs.violated) joined += (joined.empty() ? "" : "; ") + v;
                throw ValidationError("adaptive hyperparameters infeasible at n = " +
                                      std::to_string(n) + ": " + joined);
            }
            return make_acs(hs.params.acs(), T);
        }();
        const SamplingKl sk = exact_sampling_kl(schedule, target, n);
        const GirsanovBound gb = girsanov_bound_gaussian(schedule, target, n);
        result.rows[i] = {static_cast<double>(n), sk.init_error, gb.disc_sum, sk.kl};
        result.wall_time_sec[i] = elapsed_seconds(start);
    });
    check_rows_finite(result);

    std::vector<double> ns, kls;
    for (const auto& row : result.rows) {
        ns.push_back(row[0]);
        kls.push_back(std::max(row[3], 1e-300));
    }
    const double slope = fit_log_slope(ns, kls);
    result.extras.emplace_back("slope", slope);

    ordered_json family;
    family["family"] = spec.optimal_g ? "optimal-g" : "acs-adaptive";
    family["K"] = spec.K;
    family["gamma"] = spec.gamma;
    family["theta"] = spec.theta;
    family["rho"] = spec.rho;
    family["T"] = T;
    result.schedule_json = family.dump(2);
    result.target_json = target_to_json(target);
    result.seed = spec.seed;
    result.tool_version = kToolVersion;

    if (spec.asserted) {
        const bool in_window = spec.slope_lo <= slope && slope <= spec.slope_hi;
        result.assertions.push_back(
            {"slope-in-window", in_window,
             fmt("fitted slope %.4f, window [%.2f, %.2f]", slope, spec.slope_lo, spec.slope_hi)});
    }
    return result;
}

ExperimentResult run_bound_audit(const ExperimentSpec& spec) {
    if (spec.kind != "bound-audit") throw ValidationError("spec.kind must be bound-audit");
    const GaussianTarget target =
        gaussian_target_or(spec.target_json, GaussianTarget::isotropic(2, 1.0), "bound-audit");
    if (spec.entries.empty()) {
        throw ValidationError("bound-audit needs at least one entry in spec.entries");
    }
    const int d = target.dim();
    const double x2 = target.second_moment();

    ExperimentResult result;
    result.kind = spec.kind;
    result.columns = {"entry",         "init_error", "disc_proxy", "kl",
                      "girsanov_total", "thm1_total", "margin"};
    result.rows.resize(spec.entries.size());
    result.wall_time_sec.resize(spec.entries.size());
    run_indexed(spec.jobs, spec.entries.size(), [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        const auto& entry = spec.entries[i];
        const NoiseSchedule schedule = schedule_from_json(entry.schedule_json);
        const SamplingKl sk = exact_sampling_kl(schedule, target, entry.n);
        const GirsanovBound gb = girsanov_bound_gaussian(schedule, target, entry.n);
        const FisherTrajectory traj =
            fisher_ode_solve(schedule, Target(target), OdeGrid::uniform(0.0, schedule.T(), 401));
        const KlBoundTerms kb = kl_upper_bound(schedule, traj, entry.n, d, x2);
        result.rows[i] = {static_cast<double>(i), sk.init_error,  gb.disc_sum, sk.kl,
                          gb.total(),             kb.total(),     gb.total() - sk.kl};
        result.wall_time_sec[i] = elapsed_seconds(start);
    });
    check_rows_finite(result);

    ordered_json schedules = ordered_json::array();
    for (const auto& entry : spec.entries) {
        ordered_json e;
        e["schedule"] = ordered_json::parse(entry.schedule_json);
        e["n"] = entry.n;
        schedules.push_back(e);
    }
    result.schedule_json = schedules.dump(2);
    result.target_json = target_to_json(target);
    result.seed = spec.seed;
    result.tool_version = kToolVersion;

    if (spec.asserted) {
        bool all_within = true;
        double worst = std::numeric_limits<double>::infinity();
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < result.rows.size(); ++i) {
            const double kl = result.rows[i][3];
            const double margin = result.rows[i][6];
            if (margin < worst) {
                worst = margin;
                worst_i = i;
            }
            if (margin < -1e-9 * std::max(1.0, kl)) all_within = false;
        }
        result.assertions.push_back(
            {"kl-within-girsanov", all_within,
             fmt("smallest margin %.6g at entry %.0f", worst, static_cast<double>(worst_i))});
    }
    return result;
}

ExperimentResult run_gmm_sanity(const ExperimentSpec& spec) {
    if (spec.kind != "gmm-sanity") throw ValidationError("spec.kind must be gmm-sanity");
    GmmTarget target = [&] {
        if (spec.target_json.empty()) {
            std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Constant(1, -2.0),
                                               Eigen::VectorXd::Constant(1, 2.0)};
            return GmmTarget({0.5, 0.5}, means, 0.3);
        }
        Target t = target_from_json(spec.target_json);
        const auto* g = std::get_if<GmmTarget>(&t);
        if (g == nullptr) throw ValidationError("gmm-sanity needs a GMM target");
        return *g;
    }();
    const int d = target.dim();
    if (d > 2) throw ValidationError("gmm-sanity supports 1D or 2D targets only");
    const int paths = spec.paths > 0 ? spec.paths : 100000;
    if (paths < 10000) throw ValidationError("gmm-sanity needs a path budget of at least 10000");
    const int n = spec.n > 0 ? spec.n : 200;
    const NoiseSchedule schedule = spec.schedule_json.empty()
                                       ? make_catalog(ConstantParams{1.0, 2.0}, 5.0)
                                       : schedule_from_json(spec.schedule_json);

    const auto start = std::chrono::steady_clock::now();
    const SamplerConfig config{schedule, Target(target), n,    0.0,
                               paths,    spec.seed,      0.0,  spec.jobs};
    const Eigen::MatrixXd samples = sample_paths(config);

    // Merge components closer than nu into effective modes: closer pairs are
    // not resolvable by nearest-mean assignment.
    const std::size_t m = target.means().size();
    std::vector<int> group(m);
    for (std::size_t i = 0; i < m; ++i) group[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int i) {
        return group[static_cast<std::size_t>(i)] == i
                   ? i
                   : group[static_cast<std::size_t>(i)] = find(group[static_cast<std::size_t>(i)]);
    };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = i + 1; k < m; ++k) {
            if ((target.means()[i] - target.means()[k]).norm() < target.nu()) {
                group[static_cast<std::size_t>(find(static_cast<int>(k)))] =
                    find(static_cast<int>(i));
            }
        }
    }
    std::vector<int> roots;
    for (std::size_t i = 0; i < m; ++i) {
        if (find(static_cast<int>(i)) == static_cast<int>(i)) roots.push_back(static_cast<int>(i));
    }
    const std::size_t modes = roots.size();
    std::vector<double> mode_weight(modes, 0.0);
    std::vector<Eigen::VectorXd> mode_center(modes, Eigen::VectorXd::Zero(d));
    for (std::size_t i = 0; i < m; ++i) {
        const int r = find(static_cast<int>(i));
        const std::size_t slot = static_cast<std::size_t>(
            std::find(roots.begin(), roots.end(), r) - roots.begin());
        mode_weight[slot] += target.weights()[i];
        mode_center[slot] += target.weights()[i] * target.means()[i];
    }
    for (std::size_t s = 0; s < modes; ++s) mode_center[s] /= mode_weight[s];
    const bool merged = modes < m;

    // Nearest-center assignment and per-mode sample moments.
    std::vector<std::int64_t> count(modes, 0);
    std::vector<Eigen::VectorXd> sum(modes, Eigen::VectorXd::Zero(d));
    std::vector<Eigen::VectorXd> sum_sq(modes, Eigen::VectorXd::Zero(d));
    std::vector<int> assign(static_cast<std::size_t>(samples.rows()));
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < modes; ++s) {
            const double dist = (samples.row(r).transpose() - mode_center[s]).norm();
            if (dist < best_d) {
                best_d = dist;
                best = s;
            }
        }
        assign[static_cast<std::size_t>(r)] = static_cast<int>(best);
        ++count[best];
        sum[best] += samples.row(r).transpose();
    }
    std::vector<Eigen::VectorXd> mean(modes, Eigen::VectorXd::Zero(d));
    for (std::size_t s = 0; s < modes; ++s) {
        if (count[s] > 0) mean[s] = sum[s] / static_cast<double>(count[s]);
    }
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        const auto s = static_cast<std::size_t>(assign[static_cast<std::size_t>(r)]);
        const Eigen::VectorXd centered = samples.row(r).transpose() - mean[s];
        sum_sq[s] += centered.cwiseProduct(centered);
    }

    // Exact oracle: the chain's own per-mode mean when the mode is treated as
    // a standalone Gaussian component (bias of the frozen-score chain included,
    // cross-mode commitment effects excluded).
    std::vector<Eigen::VectorXd> oracle(modes);
    for (std::size_t s = 0; s < modes; ++s) {
        const GaussianTarget mode_target(mode_center[s],
                                         target.nu() * target.nu() *
                                             Eigen::MatrixXd::Identity(d, d));
        const SamplerConfig oracle_config{schedule, Target(mode_target), n, 0.0, 1, 0, 0.0, 1};
        oracle[s] = propagate_gaussian(oracle_config).mean;
    }
    const double total_wall = elapsed_seconds(start);

    ExperimentResult result;
    result.kind = spec.kind;
    auto coord_name = [&](const char* base, int j) {
        return d == 1 ? std::string(base) : std::string(base) + std::to_string(j);
    };
    result.columns = {"mode", "weight", "weight_se", "target_weight"};
    for (int j = 0; j < d; ++j) {
        result.columns.push_back(coord_name("mean", j));
        result.columns.push_back(coord_name("mean_se", j));
        result.columns.push_back(coord_name("oracle_mean", j));
        result.columns.push_back(coord_name("target_mean", j));
    }
    for (int j = 0; j < d; ++j) {
        result.columns.push_back(coord_name("var", j));
        result.columns.push_back(coord_name("var_se", j));
    }
    result.columns.push_back("target_var");

    bool weights_ok = true, means_ok = true;
    double worst_weight_dev = 0.0, worst_mean_sigmas = 0.0, worst_mean_dev = 0.0;
    for (std::size_t s = 0; s < modes; ++s) {
        std::vector<double> row;
        const double w_hat = static_cast<double>(count[s]) / paths;
        const double w_se = std::sqrt(std::max(w_hat * (1.0 - w_hat), 0.0) / paths);
        row.push_back(static_cast<double>(s));
        row.push_back(w_hat);
        row.push_back(w_se);
        row.push_back(mode_weight[s]);
        worst_weight_dev = std::max(worst_weight_dev, std::abs(w_hat - mode_weight[s]));
        if (std::abs(w_hat - mode_weight[s]) > spec.weight_tol) weights_ok = false;

        const double c = static_cast<double>(count[s]);
        for (int j = 0; j < d; ++j) {
            const double var = c > 1.0 ? sum_sq[s][j] / (c - 1.0) : 0.0;
            const double mean_se = c > 0.0 ? std::sqrt(var / c) : 0.0;
            row.push_back(mean[s][j]);
            row.push_back(mean_se);
            row.push_back(oracle[s][j]);
            row.push_back(mode_center[s][j]);
            if (c == 0.0) {
                means_ok = false;
            } else {
                const double dev = std::abs(mean[s][j] - oracle[s][j]);
                worst_mean_sigmas = std::max(worst_mean_sigmas, dev / std::max(mean_se, 1e-300));
                worst_mean_dev = std::max(worst_mean_dev,
                                          std::abs(mean[s][j] - mode_center[s][j]));
                if (dev > spec.mean_sigmas * mean_se) means_ok = false;
            }
        }
        for (int j = 0; j < d; ++j) {
            const double var = c > 1.0 ? sum_sq[s][j] / (c - 1.0) : 0.0;
            const double var_se = c > 2.0 ? var * std::sqrt(2.0 / (c - 1.0)) : 0.0;
            row.push_back(var);
            row.push_back(var_se);
        }
        row.push_back(target.nu() * target.nu());
        result.rows.push_back(std::move(row));
        result.wall_time_sec.push_back(total_wall);
    }
    check_rows_finite(result);

    result.schedule_json =
        schedule.kind() == ScheduleKind::Custom ? std::string() : schedule_to_json(schedule);
    result.target_json = target_to_json(target);
    result.seed = spec.seed;
    result.tool_version = kToolVersion;
    result.extras.emplace_back("multimodality_undetected", merged ? 1.0 : 0.0);
    result.extras.emplace_back("paths", static_cast<double>(paths));
    result.extras.emplace_back("n", static_cast<double>(n));

    if (spec.asserted) {
        result.assertions.push_back(
            {"weights-within-tol", weights_ok,
             fmt("largest |weight - target| = %.4g (tolerance %.4g)", worst_weight_dev,
                 spec.weight_tol)});
        result.assertions.push_back(
            {"means-within-se", means_ok,
             fmt("largest deviation from the exact chain mean = %.3g standard errors; "
                 "largest |mean - target| = %.4g",
                 worst_mean_sigmas, worst_mean_dev)});
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind == "u-curve") return run_u_curve(spec);
    if (spec.kind == "n-scaling") return run_n_scaling(spec);
    if (spec.kind == "bound-audit") return run_bound_audit(spec);
    if (spec.kind == "gmm-sanity") return run_gmm_sanity(spec);
    throw ValidationError("unknown experiment kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Export.
// ---------------------------------------------------------------------------

std::string result_to_csv(const ExperimentResult& result) {
    std::string out;
    for (std::size_t i = 0; i < result.columns.size(); ++i) {
        if (i) out += ",";
        out += result.columns[i];
    }
    out += "\n";
    char buf[64];
    for (const auto& row : result.rows) {
        if (row.size() != result.columns.size()) {
            throw ValidationError("record width does not match the column list");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            if (i) out += ",";
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string result_to_json(const ExperimentResult& result) {
    ordered_json j;
    j["kind"] = result.kind;
    j["tool_version"] = result.tool_version;
    j["format_version"] = kFormatVersion;
    j["seed"] = result.seed;
    j["columns"] = result.columns;
    j["rows"] = result.rows;
    j["wall_time_sec"] = result.wall_time_sec;
    j["schedule"] = result.schedule_json.empty() ? ordered_json()
                                                 : ordered_json::parse(result.schedule_json);
    j["target"] = result.target_json.empty() ? ordered_json()
                                             : ordered_json::parse(result.target_json);
    ordered_json asserts = ordered_json::array();
    for (const auto& a : result.assertions) {
        ordered_json item;
        item["name"] = a.name;
        item["passed"] = a.passed;
        item["detail"] = a.detail;
        asserts.push_back(item);
    }
    j["assertions"] = asserts;
    ordered_json extras = ordered_json::object();
    for (const auto& [name, value] : result.extras) extras[name] = value;
    j["extras"] = extras;
    return j.dump(2);
}

ExperimentResult result_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("result is not valid JSON: ") + e.what());
    }
    ExperimentResult result;
    try {
        result.kind = j.at("kind").get<std::string>();
        result.tool_version = j.at("tool_version").get<std::string>();
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw ValidationError("unsupported result format version");
        }
        result.seed = j.at("seed").get<std::uint64_t>();
        result.columns = j.at("columns").get<std::vector<std::string>>();
        result.rows = j.at("rows").get<std::vector<std::vector<double>>>();
        result.wall_time_sec = j.at("wall_time_sec").get<std::vector<double>>();
        result.schedule_json = j.at("schedule").is_null() ? "" : j.at("schedule").dump(2);
        result.target_json = j.at("target").is_null() ? "" : j.at("target").dump(2);
        for (const auto& a : j.at("assertions")) {
            result.assertions.push_back({a.at("name").get<std::string>(),
                                         a.at("passed").get<bool>(),
                                         a.at("detail").get<std::string>()});
        }
        for (const auto& [name, value] : j.at("extras").items()) {
            result.extras.emplace_back(name, value.get<double>());
        }
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("malformed result document: ") + e.what());
    }
    return result;
}

void export_result(const ExperimentResult& result, const std::string& format,
                   const std::string& path) {
    std::string payload;
    if (format == "csv") {
        payload = result_to_csv(result);
    } else if (format == "json") {
        payload = result_to_json(result) + "\n";
    } else {
        throw ValidationError("export format must be csv or json (got '" + format + "')");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << payload;
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace sdesched
