#include "sediff/schedule.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sediff/errors.hpp"

namespace sediff {

namespace {
constexpr double kPi = std::numbers::pi;

void check_time(const ScheduleParams& p, double t, const char* where) {
    if (!std::isfinite(t) || t < 0.0 || t > p.t_end) {
        throw DomainError(std::string(where) + ": t = " + std::to_string(t) +
                          " outside [0, " + std::to_string(p.t_end) + "]");
    }
}
}  // namespace

void ScheduleParams::validate() const {
    if (!std::isfinite(nu)) throw ConfigError("schedule: nu must be finite");
    if (!std::isfinite(lambda_min)) throw ConfigError("schedule: lambda_min must be finite");
    if (!(beta_max > 0.0)) throw ConfigError("schedule: beta_max must be positive");
    if (t_end != 1.0) throw ConfigError("schedule: closed forms require t_end == 1");
    if (!(t_eps > 0.0) || !(t_eps < t_end)) {
        throw ConfigError("schedule: t_eps must lie in (0, t_end)");
    }
    if (lambda_min >= 2.0 * nu) {
        // lambda_raw decreases from +inf through 2*nu at t=1/2; a clamp above
        // that would swallow most of the schedule.
        throw ConfigError("schedule: lambda_min must be below 2*nu");
    }
}

double lambda_raw(const ScheduleParams& p, double t) {
    check_time(p, t, "lambda_raw");
    if (t == 0.0) throw DomainError("lambda_raw: unbounded at t = 0");
    if (t == p.t_end) return -std::numeric_limits<double>::infinity();
    return -2.0 * std::log(std::tan(0.5 * kPi * t)) + 2.0 * p.nu;
}

double beta_raw_tan_form(const ScheduleParams& p, double t) {
    const double u = 0.5 * kPi * t;
    const double tan_u = std::tan(u);
    const double cos_u = std::cos(u);
    return (kPi / (cos_u * cos_u)) * tan_u / (std::exp(2.0 * p.nu) + tan_u * tan_u);
}

double beta_raw_cosecant_form(const ScheduleParams& p, double t) {
    const double tan_u = std::tan(0.5 * kPi * t);
    return 2.0 * kPi / std::sin(kPi * t) / (1.0 + std::exp(2.0 * p.nu) / (tan_u * tan_u));
}

double beta_raw(const ScheduleParams& p, double t) {
    check_time(p, t, "beta_raw");
    if (t == 0.0) return 0.0;
    if (t == p.t_end) return std::numeric_limits<double>::infinity();
    // The cosecant form is best conditioned mid-range; the tan form wins when
    // either cos or sin of (pi t / 2) gets small.
    if (t > 0.25 && t < 0.75) return beta_raw_cosecant_form(p, t);
    return beta_raw_tan_form(p, t);
}

SchedulePoint eval_point(const ScheduleParams& p, double t) {
    check_time(p, t, "eval_point");
    SchedulePoint pt;
    pt.t = t;
    if (t == 0.0) {
        // Clean endpoint: no noise has been added; lambda is unbounded above
        // and deliberately not represented as a float infinity.
        pt.no_noise = true;
        pt.scale = 1.0;
        return pt;
    }

    const double raw = lambda_raw(p, t);
    if (raw <= p.lambda_min) {
        pt.lambda = p.lambda_min;
        pt.lambda_clamped = true;
    } else {
        pt.lambda = raw;
    }
    pt.sigma = std::exp(-0.5 * pt.lambda);
    pt.scale = 1.0 / std::sqrt(1.0 + pt.sigma * pt.sigma);

    const double braw = beta_raw(p, t);
    if (braw >= p.beta_max) {
        pt.beta = p.beta_max;
        pt.beta_clamped = true;
    } else {
        pt.beta = braw;
    }
    pt.drift_coeff = -0.5 * pt.beta;
    pt.diffusion_coeff = std::sqrt(pt.beta);
    return pt;
}

double sigma_max(const ScheduleParams& p) { return std::exp(-0.5 * p.lambda_min); }

double sigma_inverse(const ScheduleParams& p, double sigma) {
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw DomainError("sigma_inverse: sigma must be finite and nonnegative");
    }
    const double cap = sigma_max(p);
    // Tolerate round-off at the cap itself; beyond it the clamped schedule
    // never reaches the requested level.
    if (sigma > cap * (1.0 + 1e-12)) {
        throw DomainError("sigma_inverse: sigma = " + std::to_string(sigma) +
                          " above schedule maximum " + std::to_string(cap));
    }
    if (sigma == 0.0) return 0.0;
    return (2.0 / kPi) * std::atan(std::min(sigma, cap) * std::exp(p.nu));
}

double lambda_clamp_time(const ScheduleParams& p) {
    // lambda_raw(t) == lambda_min  <=>  tan(pi t / 2) == e^{nu - lambda_min/2}.
    return (2.0 / kPi) * std::atan(std::exp(p.nu - 0.5 * p.lambda_min));
}

double beta_clamp_time(const ScheduleParams& p) {
    // beta_raw rises monotonically to +inf as t -> t_end for the parameter
    // ranges validate() admits; bisect the first crossing.
    double lo = 1e-12;
    double hi = p.t_end - 1e-15;
    if (beta_raw(p, hi) < p.beta_max) return p.t_end;
    if (beta_raw(p, lo) >= p.beta_max) return lo;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (beta_raw(p, mid) >= p.beta_max) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace sediff
