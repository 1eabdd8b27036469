#include "sediff/rng.hpp"

#include <cmath>
#include <numbers>

namespace sediff {

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
}

std::complex<double> Rng::complex_normal() {
    // Box-Muller in polar form: |z|^2 ~ Exp(1), phase uniform, so E|z|^2 = 1.
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double radius = std::sqrt(-std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view stream, std::uint64_t index) {
    const std::uint64_t named = splitmix64(root_seed ^ fnv1a64(stream));
    return splitmix64(named + 0x9e3779b97f4a7c15ull * (index + 1));
}

Rng derive_rng(std::uint64_t root_seed, std::string_view stream, std::uint64_t index) {
    return Rng(derive_seed(root_seed, stream, index));
}

}  // namespace sediff
