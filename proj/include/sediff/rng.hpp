#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace sediff {

// Deterministic random streams. Every consumer derives its own stream from
// (root seed, stream name, index), so adding consumers or reordering work
// never perturbs the draws seen by existing ones.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller; generates pairs, caches the spare.
    double normal();

    // Circular complex normal with E|z|^2 = 1 (variance 1/2 per component).
    std::complex<double> complex_normal();

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

// Stream derivation: root seed XOR hashed name, mixed with the index.
Rng derive_rng(std::uint64_t root_seed, std::string_view stream, std::uint64_t index = 0);

// Seed (not an Rng) for handing to nested components that derive further.
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view stream, std::uint64_t index = 0);

}  // namespace sediff
