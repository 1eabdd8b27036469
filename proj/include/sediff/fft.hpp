#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace sediff {

// Iterative radix-2 FFT, power-of-two sizes only (all transform sizes in this
// project are small fixed powers of two). Thread-safe, no global state.
// inverse=true applies the 1/n normalization.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Real-input DFT: n real samples -> n/2 + 1 complex bins (DC .. Nyquist).
std::vector<std::complex<double>> rfft(const double* x, std::size_t n);
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft: n/2 + 1 bins -> n real samples.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, std::size_t n);

// Full linear convolution via FFT; output length a.size() + b.size() - 1.
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b);

// True iff n is a power of two (and nonzero).
bool is_power_of_two(std::size_t n);

}  // namespace sediff
