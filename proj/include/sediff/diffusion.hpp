#pragma once

#include "sediff/rng.hpp"
#include "sediff/schedule.hpp"
#include "sediff/spectrogram.hpp"

namespace sediff {

// Forward process state: the perturbed spectrogram at diffusion time t.
struct DiffusionState {
    double t = 0.0;
    ComplexSpectrogram n_t;
};

// Circular complex Gaussian draw: each coefficient has E|z|^2 = variance,
// independent real/imag parts with variance/2 each. variance == 0 gives zeros.
ComplexSpectrogram sample_complex_gaussian(std::size_t bins, std::size_t frames,
                                           double variance, Rng& rng);

// Forward perturbation kernel: n_t = s(t) * n_0 + s(t) * sigma(t) * eps.
ComplexSpectrogram forward_perturb(const ComplexSpectrogram& n0,
                                   const SchedulePoint& point, Rng& rng);

// Score of the perturbation kernel from a denoised estimate:
//   score = (denoised - n_t / s) / (s * sigma^2).
// Singular at the no-noise endpoint (throws SingularTimeError).
ComplexSpectrogram score_from_denoised(const ComplexSpectrogram& denoised,
                                       const ComplexSpectrogram& n_t,
                                       const SchedulePoint& point);

// Reverse-time SDE drift: f(t) * n_t - g(t)^2 * score.
ComplexSpectrogram reverse_drift(const ComplexSpectrogram& n_t,
                                 const SchedulePoint& point,
                                 const ComplexSpectrogram& score);

}  // namespace sediff
