#include "sediff/spectral.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "sediff/errors.hpp"
#include "sediff/fft.hpp"

namespace sediff {

void StftConfig::validate() const {
    if (sample_rate == 0) throw ConfigError("stft: sample_rate must be positive");
    if (!is_power_of_two(frame_len)) {
        throw ConfigError("stft: frame_len must be a power of two");
    }
    if (hop == 0 || hop > frame_len) throw ConfigError("stft: require 0 < hop <= frame_len");
    if (kept_bins != frame_len / 2) {
        throw ConfigError("stft: kept_bins must equal frame_len / 2 (Nyquist dropped)");
    }
    if (!(amp_scale > 0.0)) throw ConfigError("stft: amp_scale must be > 0");
    if (!(compress_exp > 0.0) || !(compress_exp <= 1.0)) {
        throw ConfigError("stft: compress_exp must lie in (0, 1]");
    }
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n)));
    }
    return w;
}

ComplexSpectrogram stft(const std::vector<double>& signal, const StftConfig& cfg) {
    cfg.validate();
    if (signal.size() < cfg.frame_len) {
        throw ArgumentError("stft: signal shorter than one frame (" +
                            std::to_string(signal.size()) + " < " +
                            std::to_string(cfg.frame_len) + ")");
    }
    const std::size_t n_frames =
        1 + (signal.size() - cfg.frame_len + cfg.hop - 1) / cfg.hop;
    const std::vector<double> window = hann_window(cfg.frame_len);

    ComplexSpectrogram out(cfg.kept_bins, n_frames);
    std::vector<double> frame(cfg.frame_len);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * cfg.hop;
        for (std::size_t i = 0; i < cfg.frame_len; ++i) {
            const std::size_t idx = start + i;
            frame[i] = idx < signal.size() ? signal[idx] * window[i] : 0.0;
        }
        const auto bins = rfft(frame);
        for (std::size_t k = 0; k < cfg.kept_bins; ++k) out.at(k, f) = bins[k];
    }
    return out;
}

std::vector<double> istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                          std::size_t out_len) {
    cfg.validate();
    if (spec.bins != cfg.kept_bins) {
        throw DimensionError("istft: expected " + std::to_string(cfg.kept_bins) +
                             " bins, got " + std::to_string(spec.bins));
    }
    if (spec.frames == 0) throw ArgumentError("istft: empty spectrogram");

    const std::vector<double> window = hann_window(cfg.frame_len);
    const std::size_t synth_len = (spec.frames - 1) * cfg.hop + cfg.frame_len;
    std::vector<double> num(synth_len, 0.0), den(synth_len, 0.0);
    std::vector<std::complex<double>> bins(cfg.frame_len / 2 + 1);

    for (std::size_t f = 0; f < spec.frames; ++f) {
        for (std::size_t k = 0; k < cfg.kept_bins; ++k) bins[k] = spec.at(k, f);
        bins[cfg.frame_len / 2] = 0.0;  // dropped Nyquist comes back as zero
        const std::vector<double> frame = irfft(bins, cfg.frame_len);
        const std::size_t start = f * cfg.hop;
        for (std::size_t i = 0; i < cfg.frame_len; ++i) {
            num[start + i] += frame[i] * window[i];
            den[start + i] += window[i] * window[i];
        }
    }

    std::vector<double> out(out_len, 0.0);
    const std::size_t n = std::min(out_len, synth_len);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
    }
    return out;
}

ComplexSpectrogram compress(const ComplexSpectrogram& spec, const StftConfig& cfg) {
    cfg.validate();
    ComplexSpectrogram out(spec.bins, spec.frames);
    for (std::size_t i = 0; i < spec.coeffs.size(); ++i) {
        const std::complex<double> c = spec.coeffs[i];
        const double mag = std::abs(c);
        out.coeffs[i] = mag == 0.0
                            ? std::complex<double>(0.0, 0.0)
                            : cfg.amp_scale * std::pow(mag, cfg.compress_exp) * (c / mag);
    }
    return out;
}

ComplexSpectrogram decompress(const ComplexSpectrogram& spec, const StftConfig& cfg) {
    cfg.validate();
    ComplexSpectrogram out(spec.bins, spec.frames);
    const double inv_exp = 1.0 / cfg.compress_exp;
    for (std::size_t i = 0; i < spec.coeffs.size(); ++i) {
        const std::complex<double> c = spec.coeffs[i];
        const double mag = std::abs(c);
        out.coeffs[i] = mag == 0.0 ? std::complex<double>(0.0, 0.0)
                                   : std::pow(mag / cfg.amp_scale, inv_exp) * (c / mag);
    }
    return out;
}

double coefficient_variance(const std::vector<const ComplexSpectrogram*>& specs) {
    std::size_t count = 0;
    std::complex<double> mean{0.0, 0.0};
    for (const auto* s : specs) {
        for (const auto& c : s->coeffs) {
            mean += c;
            ++count;
        }
    }
    if (count == 0) throw ArgumentError("coefficient_variance: no coefficients");
    mean /= static_cast<double>(count);
    double acc = 0.0;
    for (const auto* s : specs) {
        for (const auto& c : s->coeffs) acc += std::norm(c - mean);
    }
    return acc / static_cast<double>(count);
}

}  // namespace sediff
