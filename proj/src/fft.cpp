#include "sediff/fft.hpp"

#include <cmath>
#include <numbers>

#include "sediff/errors.hpp"

namespace sediff {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) {
        throw ArgumentError("fft: size must be a power of two, got " + std::to_string(n));
    }
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wn(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wn;
            }
        }
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& c : a) c *= inv_n;
    }
}

std::vector<std::complex<double>> rfft(const double* x, std::size_t n) {
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i], 0.0};
    fft_inplace(buf, false);
    buf.resize(n / 2 + 1);
    return buf;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    return rfft(x.data(), x.size());
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, std::size_t n) {
    if (spectrum.size() != n / 2 + 1) {
        throw DimensionError("irfft: expected " + std::to_string(n / 2 + 1) +
                             " bins, got " + std::to_string(spectrum.size()));
    }
    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = spectrum[k];
    for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(spectrum[n - k]);
    fft_inplace(buf, true);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
    return out;
}

std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) {
        throw ArgumentError("fft_convolve: empty operand");
    }
    const std::size_t out_len = a.size() + b.size() - 1;
    std::size_t n = 1;
    while (n < out_len) n <<= 1;
    std::vector<std::complex<double>> fa(n), fb(n);
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = {a[i], 0.0};
    for (std::size_t i = 0; i < b.size(); ++i) fb[i] = {b[i], 0.0};
    fft_inplace(fa, false);
    fft_inplace(fb, false);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fft_inplace(fa, true);
    std::vector<double> out(out_len);
    for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
    return out;
}

}  // namespace sediff
