#pragma once

#include <cstddef>

namespace sediff {

// Noise schedule on t in [0, t_end]: a shifted-cosine log-SNR curve
//   lambda(t) = -2 ln tan(pi t / 2) + 2 nu,   clamped at lambda_min,
// with sigma = e^{-lambda/2}, variance-preserving scale s = 1/sqrt(1+sigma^2),
// and rate beta(t) = -d lambda_sigma / dt expressed in closed form and clamped
// at beta_max. Drift f = -beta/2 and diffusion g = sqrt(beta) define the
// forward SDE the samplers reverse.
struct ScheduleParams {
    double nu = 1.5;          // log-SNR shift
    double lambda_min = -12.0;
    double beta_max = 10.0;
    double t_end = 1.0;       // the closed forms require t_end == 1
    double t_eps = 0.01;      // earliest training/sampling time

    void validate() const;    // throws ConfigError on bad combinations
};

struct SchedulePoint {
    double t = 0.0;
    double lambda = 0.0;        // log-SNR; meaningless when no_noise is set
    double sigma = 0.0;
    double scale = 1.0;         // s(t)
    double beta = 0.0;
    double drift_coeff = 0.0;      // f(t) = -beta/2
    double diffusion_coeff = 0.0;  // g(t) = sqrt(beta)
    bool no_noise = false;      // t == 0: sigma = 0, lambda unbounded above
    bool lambda_clamped = false;
    bool beta_clamped = false;
};

// Unclamped log-SNR; -inf at t_end. Requires 0 < t <= t_end.
double lambda_raw(const ScheduleParams& p, double t);

// The two algebraically equivalent closed forms of the unclamped rate.
// The evaluator picks by conditioning; both are exposed so tests can compare
// them as independent routes. Require 0 < t < t_end.
double beta_raw_tan_form(const ScheduleParams& p, double t);
double beta_raw_cosecant_form(const ScheduleParams& p, double t);

// Unclamped rate using the better-conditioned form for the given t.
double beta_raw(const ScheduleParams& p, double t);

// Full schedule evaluation at t in [0, t_end]. Throws DomainError outside.
SchedulePoint eval_point(const ScheduleParams& p, double t);

// Largest sigma the clamped schedule reaches: e^{-lambda_min/2}.
double sigma_max(const ScheduleParams& p);

// Inverse of the *unclamped* noise map: t = (2/pi) atan(sigma e^{nu}).
// sigma == sigma_max maps to the lambda-clamp activation time, not t_end.
// Throws DomainError for sigma < 0 or sigma > sigma_max.
double sigma_inverse(const ScheduleParams& p, double sigma);

// Time where the lambda clamp activates (lambda_raw == lambda_min).
double lambda_clamp_time(const ScheduleParams& p);

// Time where the beta clamp activates (beta_raw == beta_max), or t_end if the
// raw rate stays below beta_max on (0, t_end).
double beta_clamp_time(const ScheduleParams& p);

}  // namespace sediff
