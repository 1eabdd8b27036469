#pragma once

#include <cstddef>
#include <vector>

#include "sediff/spectrogram.hpp"

namespace sediff {

// Analysis/synthesis front end: Hann-windowed STFT at 16 kHz with the Nyquist
// bin dropped, and magnitude-compressed complex coefficients
//   compress(c) = A * |c|^alpha * exp(i angle(c)).
struct StftConfig {
    std::size_t sample_rate = 16000;
    std::size_t frame_len = 512;
    std::size_t hop = 128;
    std::size_t kept_bins = 256;  // frame_len / 2: bins 0 .. Nyquist-1
    double amp_scale = 0.15;      // A
    double compress_exp = 0.5;    // alpha

    void validate() const;  // throws ConfigError
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Forward transform. Frames start at multiples of hop; the tail is
// zero-padded so every sample is covered. Signals shorter than one frame are
// an argument error.
ComplexSpectrogram stft(const std::vector<double>& signal, const StftConfig& cfg);

// Weighted overlap-add inverse; reinserts a zero Nyquist bin. The output is
// truncated or zero-padded to out_len samples. Samples with (numerically)
// zero window mass come back as 0.
std::vector<double> istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                          std::size_t out_len);

// Magnitude compression / expansion; exact inverses of each other away from 0.
ComplexSpectrogram compress(const ComplexSpectrogram& spec, const StftConfig& cfg);
ComplexSpectrogram decompress(const ComplexSpectrogram& spec, const StftConfig& cfg);

// Per-coefficient variance (about the complex mean) pooled over a set of
// spectrograms; reported during fitting to sanity-check the configured
// sigma_data against the data actually seen.
double coefficient_variance(const std::vector<const ComplexSpectrogram*>& specs);

}  // namespace sediff
