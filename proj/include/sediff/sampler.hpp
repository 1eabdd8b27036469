#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "sediff/denoiser.hpp"
#include "sediff/rng.hpp"
#include "sediff/schedule.hpp"
#include "sediff/spectrogram.hpp"

namespace sediff {

enum class SamplerKind { PC, EDM };

struct SamplerConfig {
    SamplerKind kind = SamplerKind::EDM;
    std::size_t n_steps = 16;

    // PC parameters.
    double r = 0.5;                // corrector signal-to-noise ratio
    std::size_t n_corrector = 1;   // corrector iterations per outer step
    bool predictor_noise = true;   // false: deterministic Euler mode (test switch)

    // EDM stochasticity parameters.
    double s_churn = std::numeric_limits<double>::infinity();
    double s_min = 0.0;
    double s_max = std::numeric_limits<double>::infinity();
    double s_noise = 1.0;

    // Integrate down to this time instead of 0 (keeps the final sigma > 0).
    double t_floor = 0.0;

    void validate() const;  // throws ConfigError
};

struct SamplerDiagnostics {
    std::size_t denoiser_evals = 0;
    std::size_t corrector_skips = 0;  // zero-score-norm corrector injections skipped
    std::size_t sigma_clips = 0;      // churned sigma clipped to the schedule maximum
};

struct SampleResult {
    ComplexSpectrogram n0_hat;
    SamplerDiagnostics diagnostics;
};

// Uniform reverse-time grid from t_end down to t_floor: n_steps + 1 points.
std::vector<double> time_grid(const ScheduleParams& schedule, std::size_t n_steps,
                              double t_floor = 0.0);

// Draw from the terminal prior CN(0, s(T)^2 sigma(T)^2 I).
ComplexSpectrogram init_prior(const ScheduleParams& schedule, std::size_t bins,
                              std::size_t frames, Rng& rng);

// Predictor-corrector sampler: per outer step, n_corrector annealed-Langevin
// corrector iterations at t_i followed by one Euler-Maruyama predictor step
// over [t_i, t_{i+1}]. Denoiser evaluations = n_steps * (1 + n_corrector).
SampleResult pc_sample(const DenoiserModel& model, const ComplexSpectrogram& y,
                       const SamplerConfig& config, const ScheduleParams& schedule,
                       Rng& rng);

// Stochastic 2nd-order Heun sampler in the z = n/s variable with per-step
// noise churn. Denoiser evaluations = 2 * n_steps - 1 when the grid reaches
// sigma = 0 (no second-order stage on the final step).
SampleResult edm_sample(const DenoiserModel& model, const ComplexSpectrogram& y,
                        const SamplerConfig& config, const ScheduleParams& schedule,
                        Rng& rng);

// Dispatch on config.kind.
SampleResult run_sampler(const DenoiserModel& model, const ComplexSpectrogram& y,
                         const SamplerConfig& config, const ScheduleParams& schedule,
                         Rng& rng);

// Final enhancement step: x_hat = y - n0_hat.
ComplexSpectrogram enhance(const ComplexSpectrogram& y, const ComplexSpectrogram& n0_hat);

}  // namespace sediff
