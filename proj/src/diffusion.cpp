#include "sediff/diffusion.hpp"

#include <cmath>

#include "sediff/errors.hpp"

namespace sediff {

ComplexSpectrogram sample_complex_gaussian(std::size_t bins, std::size_t frames,
                                           double variance, Rng& rng) {
    if (!(variance >= 0.0) || !std::isfinite(variance)) {
        throw DomainError("sample_complex_gaussian: variance must be finite and >= 0");
    }
    ComplexSpectrogram out(bins, frames);
    if (variance == 0.0) return out;
    const double amp = std::sqrt(variance);
    for (auto& c : out.coeffs) c = amp * rng.complex_normal();
    return out;
}

ComplexSpectrogram forward_perturb(const ComplexSpectrogram& n0,
                                   const SchedulePoint& point, Rng& rng) {
    ComplexSpectrogram out(n0.bins, n0.frames);
    if (point.no_noise) {
        out.coeffs = n0.coeffs;  // s(0) = 1, sigma(0) = 0: identity
        return out;
    }
    const double s = point.scale;
    const double noise_amp = s * point.sigma;
    for (std::size_t i = 0; i < n0.coeffs.size(); ++i) {
        out.coeffs[i] = s * n0.coeffs[i] + noise_amp * rng.complex_normal();
    }
    return out;
}

ComplexSpectrogram score_from_denoised(const ComplexSpectrogram& denoised,
                                       const ComplexSpectrogram& n_t,
                                       const SchedulePoint& point) {
    check_same_shape(denoised, n_t, "score_from_denoised");
    if (point.no_noise || point.sigma == 0.0) {
        throw SingularTimeError("score_from_denoised: score is singular where sigma = 0");
    }
    // n_t / s must reproduce the model's input bitwise (reciprocal multiply,
    // like the samplers' state scaling), so an identity denoiser yields an
    // exactly-zero score and downstream zero-score guards stay reliable.
    const double inv_s = 1.0 / point.scale;
    const double inv = inv_s / (point.sigma * point.sigma);
    ComplexSpectrogram out(n_t.bins, n_t.frames);
    for (std::size_t i = 0; i < n_t.coeffs.size(); ++i) {
        out.coeffs[i] = (denoised.coeffs[i] - n_t.coeffs[i] * inv_s) * inv;
    }
    return out;
}

ComplexSpectrogram reverse_drift(const ComplexSpectrogram& n_t,
                                 const SchedulePoint& point,
                                 const ComplexSpectrogram& score) {
    check_same_shape(n_t, score, "reverse_drift");
    const double f = point.drift_coeff;
    const double g2 = point.diffusion_coeff * point.diffusion_coeff;
    ComplexSpectrogram out(n_t.bins, n_t.frames);
    for (std::size_t i = 0; i < n_t.coeffs.size(); ++i) {
        out.coeffs[i] = f * n_t.coeffs[i] - g2 * score.coeffs[i];
    }
    return out;
}

}  // namespace sediff
