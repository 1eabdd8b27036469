#include "sediff/spectrogram.hpp"

#include <cmath>
#include <string>

#include "sediff/errors.hpp"

namespace sediff {

void check_same_shape(const ComplexSpectrogram& a, const ComplexSpectrogram& b,
                      const char* where) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(where) + ": shape mismatch (" +
                             std::to_string(a.bins) + "x" + std::to_string(a.frames) +
                             " vs " + std::to_string(b.bins) + "x" +
                             std::to_string(b.frames) + ")");
    }
}

double squared_norm(const ComplexSpectrogram& a) {
    double acc = 0.0;
    for (const auto& c : a.coeffs) acc += std::norm(c);
    return acc;
}

double norm(const ComplexSpectrogram& a) { return std::sqrt(squared_norm(a)); }

double squared_distance(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
    check_same_shape(a, b, "squared_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
        acc += std::norm(a.coeffs[i] - b.coeffs[i]);
    }
    return acc;
}

std::complex<double> inner(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
    check_same_shape(a, b, "inner");
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
        acc += std::conj(a.coeffs[i]) * b.coeffs[i];
    }
    return acc;
}

bool all_finite(const ComplexSpectrogram& a) {
    for (const auto& c : a.coeffs) {
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    }
    return true;
}

}  // namespace sediff
