#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace sediff {

// Dense complex spectrogram, frame-major: coeffs[frame * bins + bin].
// This is the state object the diffusion process, denoisers, and samplers
// operate on; "coefficient count" d = bins * frames.
struct ComplexSpectrogram {
    std::size_t bins = 0;
    std::size_t frames = 0;
    std::vector<std::complex<double>> coeffs;

    ComplexSpectrogram() = default;
    ComplexSpectrogram(std::size_t bins_, std::size_t frames_)
        : bins(bins_), frames(frames_), coeffs(bins_ * frames_) {}

    std::size_t size() const { return coeffs.size(); }

    std::complex<double>& at(std::size_t bin, std::size_t frame) {
        return coeffs[frame * bins + bin];
    }
    const std::complex<double>& at(std::size_t bin, std::size_t frame) const {
        return coeffs[frame * bins + bin];
    }

    bool same_shape(const ComplexSpectrogram& other) const {
        return bins == other.bins && frames == other.frames;
    }
};

// Throws DimensionError unless both operands have identical shape.
void check_same_shape(const ComplexSpectrogram& a, const ComplexSpectrogram& b,
                      const char* where);

// sum_i |a_i|^2
double squared_norm(const ComplexSpectrogram& a);
// sqrt(squared_norm)
double norm(const ComplexSpectrogram& a);
// sum_i |a_i - b_i|^2
double squared_distance(const ComplexSpectrogram& a, const ComplexSpectrogram& b);
// sum_i conj(a_i) * b_i
std::complex<double> inner(const ComplexSpectrogram& a, const ComplexSpectrogram& b);
// True iff every coefficient is finite.
bool all_finite(const ComplexSpectrogram& a);

}  // namespace sediff
