#include "sediff/sampler.hpp"

#include <cmath>

#include "sediff/diffusion.hpp"
#include "sediff/errors.hpp"

namespace sediff {

void SamplerConfig::validate() const {
    if (n_steps < 1) throw ConfigError("sampler: n_steps must be >= 1");
    if (!(r > 0.0)) throw ConfigError("sampler: r must be > 0");
    if (!(s_noise > 0.0)) throw ConfigError("sampler: s_noise must be > 0");
    if (!(s_min >= 0.0) || !(s_min <= s_max)) {
        throw ConfigError("sampler: require 0 <= s_min <= s_max");
    }
    if (!(s_churn >= 0.0)) throw ConfigError("sampler: s_churn must be >= 0");
    if (!(t_floor >= 0.0) || !(t_floor < 1.0)) {
        throw ConfigError("sampler: t_floor must lie in [0, t_end)");
    }
}

std::vector<double> time_grid(const ScheduleParams& schedule, std::size_t n_steps,
                              double t_floor) {
    if (n_steps < 1) throw ArgumentError("time_grid: n_steps must be >= 1");
    if (!(t_floor >= 0.0) || !(t_floor < schedule.t_end)) {
        throw ArgumentError("time_grid: t_floor must lie in [0, t_end)");
    }
    std::vector<double> grid(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n_steps);
        grid[i] = schedule.t_end + (t_floor - schedule.t_end) * frac;
    }
    grid.front() = schedule.t_end;
    grid.back() = t_floor;
    return grid;
}

ComplexSpectrogram init_prior(const ScheduleParams& schedule, std::size_t bins,
                              std::size_t frames, Rng& rng) {
    const SchedulePoint terminal = eval_point(schedule, schedule.t_end);
    const double std_dev = terminal.scale * terminal.sigma;
    ComplexSpectrogram out(bins, frames);
    for (auto& c : out.coeffs) c = std_dev * rng.complex_normal();
    return out;
}

namespace {

ComplexSpectrogram scaled_state(const ComplexSpectrogram& n, double scale) {
    ComplexSpectrogram x(n.bins, n.frames);
    const double inv = 1.0 / scale;
    for (std::size_t i = 0; i < n.coeffs.size(); ++i) x.coeffs[i] = n.coeffs[i] * inv;
    return x;
}

ComplexSpectrogram standard_complex_noise(std::size_t bins, std::size_t frames, Rng& rng) {
    ComplexSpectrogram eps(bins, frames);
    for (auto& c : eps.coeffs) c = rng.complex_normal();
    return eps;
}

}  // namespace

SampleResult pc_sample(const DenoiserModel& model, const ComplexSpectrogram& y,
                       const SamplerConfig& config, const ScheduleParams& schedule,
                       Rng& rng) {
    config.validate();
    SampleResult result;
    auto& diag = result.diagnostics;

    const std::vector<double> grid = time_grid(schedule, config.n_steps, config.t_floor);
    ComplexSpectrogram n = init_prior(schedule, y.bins, y.frames, rng);

    for (std::size_t i = 0; i < config.n_steps; ++i) {
        const double t = grid[i];
        const double t_next = grid[i + 1];
        const double h = t - t_next;
        const SchedulePoint point = eval_point(schedule, t);

        // Corrector: annealed Langevin at t_i (sigma > 0 on every grid point
        // the loop visits). Step size adapts to the score/noise norm ratio;
        // the same noise draw enters the step size and the injection.
        for (std::size_t c = 0; c < config.n_corrector; ++c) {
            const ComplexSpectrogram denoised =
                model.denoise(scaled_state(n, point.scale), y, point.sigma);
            diag.denoiser_evals += 1;
            const ComplexSpectrogram score = score_from_denoised(denoised, n, point);
            const ComplexSpectrogram eps = standard_complex_noise(n.bins, n.frames, rng);
            const double score_norm = norm(score);
            if (score_norm == 0.0) {
                diag.corrector_skips += 1;
                continue;
            }
            const double ratio = config.r * norm(eps) / score_norm;
            const double delta = 2.0 * ratio * ratio;
            const double noise_amp = std::sqrt(2.0 * delta);
            for (std::size_t j = 0; j < n.coeffs.size(); ++j) {
                n.coeffs[j] += delta * score.coeffs[j] + noise_amp * eps.coeffs[j];
            }
        }

        // Predictor: one reverse Euler-Maruyama step over [t_i, t_{i+1}].
        const ComplexSpectrogram denoised =
            model.denoise(scaled_state(n, point.scale), y, point.sigma);
        diag.denoiser_evals += 1;
        const ComplexSpectrogram score = score_from_denoised(denoised, n, point);
        const ComplexSpectrogram drift = reverse_drift(n, point, score);
        if (config.predictor_noise) {
            const double noise_amp = point.diffusion_coeff * std::sqrt(h);
            for (std::size_t j = 0; j < n.coeffs.size(); ++j) {
                n.coeffs[j] += -h * drift.coeffs[j] + noise_amp * rng.complex_normal();
            }
        } else {
            for (std::size_t j = 0; j < n.coeffs.size(); ++j) {
                n.coeffs[j] += -h * drift.coeffs[j];
            }
        }
    }

    result.n0_hat = std::move(n);
    return result;
}

SampleResult edm_sample(const DenoiserModel& model, const ComplexSpectrogram& y,
                        const SamplerConfig& config, const ScheduleParams& schedule,
                        Rng& rng) {
    config.validate();
    SampleResult result;
    auto& diag = result.diagnostics;

    const std::vector<double> grid = time_grid(schedule, config.n_steps, config.t_floor);
    std::vector<double> sigmas(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const SchedulePoint pt = eval_point(schedule, grid[i]);
        sigmas[i] = pt.no_noise ? 0.0 : pt.sigma;
    }
    const double sigma_cap = sigma_max(schedule);

    // Work in z = n / s: the variance-exploding view where z_t = n_0 + sigma eps.
    const SchedulePoint terminal = eval_point(schedule, schedule.t_end);
    ComplexSpectrogram z = init_prior(schedule, y.bins, y.frames, rng);
    for (auto& c : z.coeffs) c /= terminal.scale;

    for (std::size_t i = 0; i < config.n_steps; ++i) {
        const double sigma = sigmas[i];
        const double sigma_next = sigmas[i + 1];

        // Churn: raise the noise level before stepping when inside the band.
        double sigma_hat = sigma;
        if (sigma >= config.s_min && sigma <= config.s_max && config.s_churn > 0.0) {
            const double gamma =
                std::min(config.s_churn / static_cast<double>(config.n_steps),
                         std::sqrt(2.0) - 1.0);
            sigma_hat = (1.0 + gamma) * sigma;
            if (sigma_hat > sigma_cap) {
                sigma_hat = sigma_cap;
                diag.sigma_clips += 1;
            }
            if (sigma_hat > sigma) {
                const double noise_amp =
                    config.s_noise * std::sqrt(sigma_hat * sigma_hat - sigma * sigma);
                for (auto& c : z.coeffs) c += noise_amp * rng.complex_normal();
            }
        }

        // Euler stage at sigma_hat.
        const ComplexSpectrogram d0 = model.denoise(z, y, sigma_hat);
        diag.denoiser_evals += 1;
        ComplexSpectrogram slope(z.bins, z.frames);
        const double inv_hat = 1.0 / sigma_hat;
        for (std::size_t j = 0; j < z.coeffs.size(); ++j) {
            slope.coeffs[j] = (z.coeffs[j] - d0.coeffs[j]) * inv_hat;
        }
        const double dh = sigma_next - sigma_hat;
        ComplexSpectrogram z_euler(z.bins, z.frames);
        for (std::size_t j = 0; j < z.coeffs.size(); ++j) {
            z_euler.coeffs[j] = z.coeffs[j] + dh * slope.coeffs[j];
        }

        if (sigma_next > 0.0) {
            // Second-order correction using the slope at the landing point.
            const ComplexSpectrogram d1 = model.denoise(z_euler, y, sigma_next);
            diag.denoiser_evals += 1;
            const double inv_next = 1.0 / sigma_next;
            for (std::size_t j = 0; j < z.coeffs.size(); ++j) {
                const std::complex<double> slope2 =
                    (z_euler.coeffs[j] - d1.coeffs[j]) * inv_next;
                z.coeffs[j] += dh * 0.5 * (slope.coeffs[j] + slope2);
            }
        } else {
            z = std::move(z_euler);
        }
    }

    result.n0_hat = std::move(z);
    return result;
}

SampleResult run_sampler(const DenoiserModel& model, const ComplexSpectrogram& y,
                         const SamplerConfig& config, const ScheduleParams& schedule,
                         Rng& rng) {
    return config.kind == SamplerKind::PC ? pc_sample(model, y, config, schedule, rng)
                                          : edm_sample(model, y, config, schedule, rng);
}

ComplexSpectrogram enhance(const ComplexSpectrogram& y, const ComplexSpectrogram& n0_hat) {
    check_same_shape(y, n0_hat, "enhance");
    ComplexSpectrogram out(y.bins, y.frames);
    for (std::size_t i = 0; i < y.coeffs.size(); ++i) {
        out.coeffs[i] = y.coeffs[i] - n0_hat.coeffs[i];
    }
    return out;
}

}  // namespace sediff
