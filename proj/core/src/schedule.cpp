#include "sdesched/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include <json.hpp>

namespace sdesched {

using nlohmann::json;

namespace {

constexpr int kValidationPoints = 200;

double logistic(double x) {
    // Evaluate in the branch that avoids overflow of exp.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::uint64_t time_key(double t) {
    std::uint64_t k;
    std::memcpy(&k, &t, sizeof(k));
    return k;
}

}  // namespace

const char* schedule_kind_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::SigmoidExact: return "sigmoid-exact";
        case ScheduleKind::SigmoidApprox: return "sigmoid-approx";
        case ScheduleKind::VeExponential: return "ve-exponential";
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::Acs: return "acs";
        case ScheduleKind::Custom: return "custom";
    }
    return "custom";
}

void AcsParams::validate() const {
    if (!(theta >= 0.0)) throw ValidationError("AcsParams: theta must be >= 0");
    if (!(omega >= 0.0)) throw ValidationError("AcsParams: omega must be >= 0");
    if (!(lambda_star > 0.0)) throw ValidationError("AcsParams: lambda_star must be > 0");
    if (!(g0 > 0.0)) throw ValidationError("AcsParams: g0 must be > 0");
}

namespace detail {

/// Checkpointed integration of (log alpha, sigma^2) along [0, T]:
/// d(log alpha)/dt = -f, d(sigma^2)/dt = -2 f sigma^2 + g. The horizon is cut
/// into fixed intervals whose endpoint states are computed once (lazily, under
/// a once-flag); point queries integrate from the checkpoint below and are
/// memoized by the exact bit pattern of t, so repeated quadrature abscissae
/// are served from the map. If the integration stops being finite (schedules
/// whose f blows up at the horizon), the tail is marked invalid and queries
/// there raise NumericError naming the last valid time.
class MarginalCache {
public:
    MarginalCache(std::function<double(double)> f, std::function<double(double)> g, double T)
        : f_(std::move(f)), g_(std::move(g)), T_(T) {}

    void query(double t, double& log_alpha, double& sigma2) const {
        std::call_once(build_once_, [this] { build(); });
        if (t == 0.0) {
            log_alpha = 0.0;
            sigma2 = 0.0;
            return;
        }
        {
            std::shared_lock lock(memo_mutex_);
            auto it = memo_.find(time_key(t));
            if (it != memo_.end()) {
                log_alpha = it->second.first;
                sigma2 = it->second.second;
                return;
            }
        }
        const double delta = T_ / kIntervals;
        int i = std::min(static_cast<int>(t / delta), kIntervals - 1);
        // Integrating into interval i needs checkpoint i AND a resolvable
        // interval, so the first invalid interval (index valid_checkpoints_-1)
        // is already out of reach.
        if (i + 1 >= valid_checkpoints_)
            throw NumericError(
                "marginal coefficients unavailable at t = " + std::to_string(t) +
                "; schedule is numerically singular beyond t = " + std::to_string(last_valid_time()));
        double y0 = states_[static_cast<std::size_t>(i)].first;
        double y1 = states_[static_cast<std::size_t>(i)].second;
        advance(i * delta, t, stiffness_[static_cast<std::size_t>(i)], y0, y1);
        if (!std::isfinite(y0) || !std::isfinite(y1))
            throw NumericError(
                "marginal coefficients not finite at t = " + std::to_string(t) +
                "; schedule is numerically singular beyond t = " + std::to_string(last_valid_time()));
        {
            std::unique_lock lock(memo_mutex_);
            memo_.emplace(time_key(t), std::make_pair(y0, y1));
        }
        log_alpha = y0;
        sigma2 = y1;
    }

private:
    static constexpr int kIntervals = 4096;

    void build() const {
        const double delta = T_ / kIntervals;
        states_.resize(kIntervals + 1);
        stiffness_.resize(kIntervals);
        states_[0] = {0.0, 0.0};
        valid_checkpoints_ = kIntervals + 1;
        for (int i = 0; i < kIntervals; ++i) {
            const double t0 = i * delta;
            const double t1 = t0 + delta;
            const double stiff =
                2.0 * std::max({std::abs(f_(t0)), std::abs(f_(0.5 * (t0 + t1))), std::abs(f_(t1))});
            stiffness_[static_cast<std::size_t>(i)] = stiff;
            // An interval whose required substep count exceeds the clamp in
            // advance() cannot be integrated stably: the drift is singular on
            // this scale (cosine/exact-sigmoid endpoints), so the tail is
            // invalid rather than silently wrong.
            if (!(delta * stiff / 0.2 < 4096.0)) {
                valid_checkpoints_ = i + 1;  // checkpoints 0..i remain usable
                break;
            }
            double y0 = states_[static_cast<std::size_t>(i)].first;
            double y1 = states_[static_cast<std::size_t>(i)].second;
            advance(t0, t1, stiff, y0, y1);
            if (!std::isfinite(y0) || !std::isfinite(y1)) {
                valid_checkpoints_ = i + 1;
                break;
            }
            states_[static_cast<std::size_t>(i + 1)] = {y0, y1};
        }
    }

    // RK4 on (log alpha, sigma^2) over [t0, t1], substep count scaled by the
    // interval's stiffness so the variance ODE stays in the stability region.
    void advance(double t0, double t1, double stiff, double& y0, double& y1) const {
        if (t1 <= t0) return;
        const double len = t1 - t0;
        int m = static_cast<int>(std::ceil(len * stiff / 0.2));
        m = std::clamp(m, 8, 4096);
        const double h = len / m;
        for (int s = 0; s < m; ++s) {
            const double t = t0 + h * s;
            double k0[4], k1[4];
            rhs(t, y1, k0[0], k1[0]);
            rhs(t + 0.5 * h, y1 + 0.5 * h * k1[0], k0[1], k1[1]);
            rhs(t + 0.5 * h, y1 + 0.5 * h * k1[1], k0[2], k1[2]);
            rhs(t + h, y1 + h * k1[2], k0[3], k1[3]);
            y0 += (h / 6.0) * (k0[0] + 2.0 * k0[1] + 2.0 * k0[2] + k0[3]);
            y1 += (h / 6.0) * (k1[0] + 2.0 * k1[1] + 2.0 * k1[2] + k1[3]);
        }
    }

    void rhs(double t, double sigma2, double& dlog_alpha, double& dsigma2) const {
        const double ft = f_(t);
        dlog_alpha = -ft;
        dsigma2 = -2.0 * ft * sigma2 + g_(t);
    }

    double last_valid_time() const { return (valid_checkpoints_ - 1) * (T_ / kIntervals); }

    std::function<double(double)> f_;
    std::function<double(double)> g_;
    double T_;

    mutable std::once_flag build_once_;
    mutable std::vector<std::pair<double, double>> states_;
    mutable std::vector<double> stiffness_;
    mutable int valid_checkpoints_ = 0;

    mutable std::shared_mutex memo_mutex_;
    mutable std::unordered_map<std::uint64_t, std::pair<double, double>> memo_;
};

}  // namespace detail

NoiseSchedule::NoiseSchedule(std::function<double(double)> f, std::function<double(double)> g,
                             double T, ScheduleKind kind, std::string params_json)
    : f_(std::move(f)), g_(std::move(g)), T_(T), kind_(kind), params_json_(std::move(params_json)) {
    if (!f_ || !g_) throw ValidationError("NoiseSchedule: f and g evaluators are required");
    if (!(T_ > 0.0) || !std::isfinite(T_)) throw ValidationError("NoiseSchedule: T must be > 0");
    // Spot-check schedule-class membership on an interior grid (interior so
    // that schedules with an integrable singularity at t = T, like the cosine
    // family, are still admitted).
    const double dt = T_ / kValidationPoints;
    const double slope_delta = T_ * 2.5e-5;
    for (int i = 0; i < kValidationPoints; ++i) {
        const double t = (i + 0.5) * dt;
        const double ft = f_(t);
        const double gt = g_(t);
        if (!std::isfinite(ft) || ft < 0.0)
            throw ValidationError("NoiseSchedule: f(t) must be finite and >= 0; f(" +
                                  std::to_string(t) + ") = " + std::to_string(ft));
        if (!std::isfinite(gt) || gt <= 0.0)
            throw ValidationError("NoiseSchedule: g(t) must be finite and > 0; g(" +
                                  std::to_string(t) + ") = " + std::to_string(gt));
        const double slope = (g_(t + slope_delta) - gt) / slope_delta;
        if (!std::isfinite(slope))
            throw ValidationError("NoiseSchedule: g must have finite slope; failed near t = " +
                                  std::to_string(t));
    }
    cache_ = std::make_shared<detail::MarginalCache>(f_, g_, T_);
}

MarginalCoeffs marginal_coeffs(const NoiseSchedule& schedule, double t) {
    const double T = schedule.T();
    if (!(t >= -1e-12 * T) || !(t <= T * (1.0 + 1e-12)))
        throw std::domain_error("marginal_coeffs: t = " + std::to_string(t) +
                                " outside [0, " + std::to_string(T) + "]");
    t = std::clamp(t, 0.0, T);
    MarginalCoeffs mc;
    schedule.cache_->query(t, mc.log_alpha, mc.sigma2);
    mc.alpha = std::exp(mc.log_alpha);
    if (mc.sigma2 < 0.0) mc.sigma2 = 0.0;  // clip integration noise at t ~ 0
    return mc;
}

ExtendedReal snr(const NoiseSchedule& schedule, double t) {
    if (t == 0.0) return ExtendedReal::unbounded();
    const MarginalCoeffs mc = marginal_coeffs(schedule, t);
    if (mc.sigma2 <= 0.0) return ExtendedReal::unbounded();
    return ExtendedReal::finite(std::exp(2.0 * mc.log_alpha) / mc.sigma2);
}

namespace {

NoiseSchedule make_linear(LinearParams p, double T) {
    if (p.beta_min == 0.0 && p.beta_max == 0.0) p = LinearParams::defaults(T);
    if (!(p.beta_min > 0.0))
        throw ValidationError("CatalogParams.linear: beta_min must be > 0");
    if (!(p.beta_max > p.beta_min))
        throw ValidationError("CatalogParams.linear: beta_max must exceed beta_min");
    auto beta = [p, T](double t) { return p.beta_min + (p.beta_max - p.beta_min) * (t / T); };
    auto f = [beta](double t) { return 0.5 * beta(t); };
    auto g = [beta](double t) { return beta(t); };
    const json j{{"beta_min", p.beta_min}, {"beta_max", p.beta_max}};
    return NoiseSchedule(f, g, T, ScheduleKind::Linear, j.dump());
}

NoiseSchedule make_cosine(const CosineParams& p, double T) {
    if (!(p.s > 0.0)) throw ValidationError("CatalogParams.cosine: s must be > 0");
    const double s = p.s;
    auto f = [s, T](double t) {
        const double u = t / T;
        return M_PI / (2.0 * T * (1.0 + s)) * std::tan((u + s) / (1.0 + s) * M_PI / 2.0);
    };
    auto g = [f](double t) { return 2.0 * f(t); };
    const json j{{"s", s}};
    return NoiseSchedule(f, g, T, ScheduleKind::Cosine, j.dump());
}

NoiseSchedule make_sigmoid(const SigmoidParams& p, double T) {
    if (!(p.tau > 0.0)) throw ValidationError("CatalogParams.sigmoid: tau must be > 0");
    if (!(p.theta_max > p.theta_min))
        throw ValidationError("CatalogParams.sigmoid: theta_max must exceed theta_min");
    const double span = p.theta_max - p.theta_min;
    const double theta_min = p.theta_min;
    const double tau = p.tau;
    const double sig_end = logistic((span + theta_min) / tau);  // sigma(h(1))
    std::function<double(double)> f;
    if (p.exact) {
        f = [span, theta_min, tau, sig_end, T](double t) {
            const double h = ((t / T) * span + theta_min) / tau;
            const double sh = logistic(h);
            return span / (2.0 * tau * T) * sh * (1.0 - sh) / (sig_end - sh);
        };
    } else {
        f = [span, theta_min, tau, T](double t) {
            const double h = ((t / T) * span + theta_min) / tau;
            return span / (2.0 * tau * T) * logistic(h);
        };
    }
    auto g = [f](double t) { return 2.0 * f(t); };
    const json j{{"theta_min", p.theta_min}, {"theta_max", p.theta_max}, {"tau", p.tau}};
    return NoiseSchedule(f, g, T, p.exact ? ScheduleKind::SigmoidExact : ScheduleKind::SigmoidApprox,
                         j.dump());
}

NoiseSchedule make_ve_exponential(const VeExponentialParams& p, double T) {
    if (!(p.g0 > 0.0)) throw ValidationError("CatalogParams.ve-exponential: g0 must be > 0");
    if (!std::isfinite(p.lambda))
        throw ValidationError("CatalogParams.ve-exponential: lambda must be finite");
    const double g0 = p.g0;
    const double lam = p.lambda;
    auto f = [](double) { return 0.0; };
    auto g = [g0, lam](double t) { return g0 * std::exp(lam * t); };
    const json j{{"g0", g0}, {"lambda", lam}};
    return NoiseSchedule(f, g, T, ScheduleKind::VeExponential, j.dump());
}

NoiseSchedule make_constant(const ConstantParams& p, double T) {
    if (!(p.f_const >= 0.0)) throw ValidationError("CatalogParams.constant: f_const must be >= 0");
    if (!(p.g_const > 0.0)) throw ValidationError("CatalogParams.constant: g_const must be > 0");
    const double fc = p.f_const;
    const double gc = p.g_const;
    const json j{{"f", fc}, {"g", gc}};
    return NoiseSchedule([fc](double) { return fc; }, [gc](double) { return gc; }, T,
                         ScheduleKind::Constant, j.dump());
}

}  // namespace

NoiseSchedule make_catalog(const CatalogParams& params, double T) {
    if (!(T > 0.0)) throw ValidationError("make_catalog: T must be > 0");
    return std::visit(
        [T](const auto& p) -> NoiseSchedule {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearParams>) return make_linear(p, T);
            else if constexpr (std::is_same_v<P, CosineParams>) return make_cosine(p, T);
            else if constexpr (std::is_same_v<P, SigmoidParams>) return make_sigmoid(p, T);
            else if constexpr (std::is_same_v<P, VeExponentialParams>)
                return make_ve_exponential(p, T);
            else return make_constant(p, T);
        },
        params);
}

NoiseSchedule make_acs(const AcsParams& params, double T) {
    params.validate();
    if (!(T > 0.0)) throw ValidationError("make_acs: T must be > 0");
    constexpr double kBranchTol = 1e-9;
    const double theta = params.theta;
    const double omega = params.omega;
    const double g0 = params.g0;
    const double x = 2.0 * omega - params.lambda_star;

    std::function<double(double)> g;
    if (std::abs(x) <= kBranchTol) {
        // Degenerate branch 2*omega = lambda_star: g = g0 / (1 + 2 theta g0 t).
        g = [theta, g0](double t) { return g0 / (1.0 + 2.0 * theta * g0 * t); };
    } else {
        // General branch: g = g0 x / ((2 theta g0 + x) e^{x t} - 2 theta g0).
        // For theta, omega >= 0, g0 > 0, lambda_star > 0 the denominator never
        // vanishes on t >= 0; the sign scan below is a defensive guard.
        const double c1 = 2.0 * theta * g0 + x;
        const double c2 = 2.0 * theta * g0;
        for (int i = 0; i <= 400; ++i) {
            const double t = T * i / 400.0;
            const double denom = c1 * std::exp(x * t) - c2;
            if (!(std::abs(denom) > 0.0) || std::signbit(denom) != std::signbit(x))
                throw NumericError("make_acs: schedule singular, denominator crosses zero near t = " +
                                   std::to_string(t));
        }
        g = [g0, x, c1, c2](double t) { return g0 * x / (c1 * std::exp(x * t) - c2); };
    }
    auto f = [theta, omega, g](double t) { return theta * g(t) + omega; };
    const json j{{"theta", params.theta},
                 {"omega", params.omega},
                 {"lambda_star", params.lambda_star},
                 {"g0", params.g0}};
    return NoiseSchedule(f, g, T, ScheduleKind::Acs, j.dump());
}

NoiseSchedule make_g_circle(const std::function<double(double)>& f, double lambda_star, double g0,
                            double T) {
    if (!(lambda_star > 0.0)) throw ValidationError("make_g_circle: lambda_star must be > 0");
    if (!(g0 > 0.0)) throw ValidationError("make_g_circle: g0 must be > 0");
    if (!(T > 0.0)) throw ValidationError("make_g_circle: T must be > 0");
    // g(t) = g0 exp(lambda_star t - 2 int_0^t f). The drift integral is
    // memoized per queried time: samplers and quadratures revisit abscissae.
    struct Memo {
        std::shared_mutex mutex;
        std::unordered_map<std::uint64_t, double> values;
    };
    auto memo = std::make_shared<Memo>();
    auto int_f = [f, memo](double t) {
        {
            std::shared_lock lock(memo->mutex);
            auto it = memo->values.find(time_key(t));
            if (it != memo->values.end()) return it->second;
        }
        const double v = integrate(f, 0.0, t);
        std::unique_lock lock(memo->mutex);
        memo->values.emplace(time_key(t), v);
        return v;
    };
    auto g = [g0, lambda_star, int_f](double t) {
        return g0 * std::exp(lambda_star * t - 2.0 * int_f(t));
    };
    return NoiseSchedule(f, g, T, ScheduleKind::Custom, "");
}

NoiseSchedule restrict_horizon(const NoiseSchedule& schedule, double T_new) {
    if (!(T_new > 0.0) || !(T_new < schedule.T()))
        throw ValidationError("restrict_horizon: need 0 < T_new < T");
    auto f = [s = schedule](double t) { return s.f(t); };
    auto g = [s = schedule](double t) { return s.g(t); };
    return NoiseSchedule(f, g, T_new, ScheduleKind::Custom, "");
}

NoiseSchedule reparameterize(const NoiseSchedule& schedule,
                             const std::function<double(double)>& phi,
                             const std::function<double(double)>& phi_prime, double T2) {
    if (!(T2 > 0.0)) throw ValidationError("reparameterize: T2 must be > 0");
    const double T1 = schedule.T();
    const double scale = std::max(1.0, T1);
    if (std::abs(phi(0.0)) > 1e-9 * scale)
        throw ValidationError("reparameterize: phi(0) must be 0");
    if (std::abs(phi(T2) - T1) > 1e-9 * scale)
        throw ValidationError("reparameterize: phi(T2) must equal the source horizon");
    for (int i = 0; i <= 200; ++i) {
        const double tau = T2 * i / 200.0;
        if (!(phi_prime(tau) > 0.0))
            throw ValidationError("reparameterize: phi must be strictly increasing; phi'(" +
                                  std::to_string(tau) + ") <= 0");
    }
    // Forward-time substitution psi(t) = T1 - phi(T2 - t), so that
    // alpha2(t) = alpha1(psi(t)) and snr2(t) = snr1(psi(t)).
    auto psi = [phi, T1, T2](double t) { return std::clamp(T1 - phi(T2 - t), 0.0, T1); };
    auto dpsi = [phi_prime, T2](double t) { return phi_prime(T2 - t); };
    auto f2 = [s = schedule, psi, dpsi](double t) { return s.f(psi(t)) * dpsi(t); };
    auto g2 = [s = schedule, psi, dpsi](double t) { return s.g(psi(t)) * dpsi(t); };
    return NoiseSchedule(f2, g2, T2, ScheduleKind::Custom, "");
}

namespace {

// log SNR at time t > 0; defined for every valid schedule because sigma^2 > 0.
double log_snr_at(const NoiseSchedule& s, double t) {
    const MarginalCoeffs mc = marginal_coeffs(s, t);
    return 2.0 * mc.log_alpha - std::log(mc.sigma2);
}

}  // namespace

double snr_time_map(const NoiseSchedule& a, const NoiseSchedule& b, double t) {
    const ExtendedReal target = snr(b, t);
    if (target.is_unbounded) return 0.0;  // infinite SNR maps to tau = 0 exactly
    const double target_log = std::log(target.value);

    const double Ta = a.T();
    const double terminal_log = log_snr_at(a, Ta);
    if (target_log < terminal_log) {
        throw CoverageError(
            "snr_time_map: requested SNR " + std::to_string(target.value) +
            " below the schedule's achievable range [" + std::to_string(std::exp(terminal_log)) +
            ", inf)");
    }
    // Bracket [lo, Ta]: log SNR -> +inf as tau -> 0, so shrink lo until covered.
    double lo = Ta * 1e-12;
    while (log_snr_at(a, lo) < target_log) {
        lo *= 0.01;
        if (lo < Ta * 1e-290)
            throw CoverageError("snr_time_map: requested SNR too large to bracket");
    }
    double hi = Ta;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double v = log_snr_at(a, mid);
        if (std::abs(v - target_log) <= 1e-12) return mid;
        if (v > target_log)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-16 * Ta) break;
    }
    return 0.5 * (lo + hi);
}

Eigen::VectorXd map_score(const ScoreFn& score_a, const NoiseSchedule& a, const NoiseSchedule& b,
                          double t, const Eigen::VectorXd& x) {
    const double tau = snr_time_map(a, b, t);
    const double sa2 = marginal_coeffs(a, tau).sigma2;
    const double sb2 = marginal_coeffs(b, t).sigma2;
    if (!(sa2 > 0.0) || !(sb2 > 0.0))
        throw NumericError("map_score: degenerate sigma at the mapped times");
    const double r = std::sqrt(sa2 / sb2);
    return r * score_a(tau, (r * x).eval());
}

ScoreFn score_from_noise_pred(const ScoreFn& noise_pred, const NoiseSchedule& schedule) {
    return [noise_pred, schedule](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const double s2 = marginal_coeffs(schedule, t).sigma2;
        if (!(s2 > 0.0))
            throw NumericError("score_from_noise_pred: sigma = 0 at t = " + std::to_string(t));
        return (-1.0 / std::sqrt(s2)) * noise_pred(t, x);
    };
}

std::string schedule_to_json(const NoiseSchedule& schedule) {
    if (schedule.kind() == ScheduleKind::Custom)
        throw ValidationError("schedule_to_json: custom schedules have no parametric form");
    json j;
    j["kind"] = schedule_kind_name(schedule.kind());
    j["T"] = schedule.T();
    j["params"] = json::parse(schedule.params_json());
    return j.dump();
}

NoiseSchedule schedule_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("schedule_from_json: malformed JSON: ") + e.what());
    }
    if (!j.contains("kind") || !j.contains("T"))
        throw ValidationError("schedule_from_json: required fields: kind, T");
    const std::string kind = j.at("kind").get<std::string>();
    const double T = j.at("T").get<double>();
    const json p = j.value("params", json::object());
    auto get = [&p](const char* field, double fallback) { return p.value(field, fallback); };

    // Optional "horizon" clips the schedule to [0, horizon] (0 < horizon < T), the standard
    // way to use endpoint-singular schedules (cosine, exact sigmoid) whose alpha vanishes at T.
    auto finish = [&j](NoiseSchedule s) {
        if (!j.contains("horizon")) return s;
        if (!j.at("horizon").is_number())
            throw ValidationError("schedule_from_json: horizon must be a number");
        return restrict_horizon(s, j.at("horizon").get<double>());
    };

    if (kind == "linear")
        return finish(make_catalog(LinearParams{get("beta_min", 0.0), get("beta_max", 0.0)}, T));
    if (kind == "cosine") return finish(make_catalog(CosineParams{get("s", 0.008)}, T));
    if (kind == "sigmoid-exact" || kind == "sigmoid-approx")
        return finish(make_catalog(SigmoidParams{get("theta_min", -3.0), get("theta_max", 3.0),
                                                 get("tau", 1.0), kind == "sigmoid-exact"},
                                   T));
    if (kind == "ve-exponential")
        return finish(make_catalog(VeExponentialParams{get("g0", 1.0), get("lambda", 0.0)}, T));
    if (kind == "constant") {
        if (!p.contains("f") || !p.contains("g"))
            throw ValidationError("schedule_from_json: constant schedule requires params.f, params.g");
        return finish(
            make_catalog(ConstantParams{p.at("f").get<double>(), p.at("g").get<double>()}, T));
    }
    if (kind == "acs") {
        AcsParams a;
        a.theta = get("theta", 0.0);
        a.omega = get("omega", 0.0);
        if (!p.contains("lambda_star") || !p.contains("g0"))
            throw ValidationError("schedule_from_json: acs requires params.lambda_star, params.g0");
        a.lambda_star = p.at("lambda_star").get<double>();
        a.g0 = p.at("g0").get<double>();
        return finish(make_acs(a, T));
    }
    throw ValidationError("schedule_from_json: unknown kind \"" + kind + "\"");
}

}  // namespace sdesched
