#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "sediff/rng.hpp"

using namespace sediff;

TEST_SUITE("rng") {

TEST_CASE("fnv1a64 matches published reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("splitmix64 matches the reference generator sequence") {
    // splitmix64(k * golden) is the k-th output of the generator seeded with 0.
    const std::uint64_t golden = 0x9e3779b97f4a7c15ull;
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
    CHECK(splitmix64(golden) == 0x6e789e6aa1b965f4ull);
    CHECK(splitmix64(golden * 2) == 0x06c45d188009454full);
}

TEST_CASE("derived streams are reproducible and distinct") {
    Rng a = derive_rng(1234, "fit");
    Rng b = derive_rng(1234, "fit");
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    CHECK(derive_seed(1234, "fit") != derive_seed(1234, "corpus"));
    CHECK(derive_seed(1234, "fit", 0) != derive_seed(1234, "fit", 1));
    CHECK(derive_seed(1234, "fit") != derive_seed(1235, "fit"));

    // Indexed derivation matches the default index 0.
    CHECK(derive_seed(7, "x") == derive_seed(7, "x", 0));
}

TEST_CASE("uniform stays in [0,1) and uniform_pos in (0,1]") {
    Rng rng(42);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);   // the range is actually exercised
    CHECK(hi > 0.99);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform_pos();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform(-3.0, 5.0);
        CHECK(u >= -3.0);
        CHECK(u < 5.0);
    }
}

TEST_CASE("uniform_index is bounded and roughly uniform") {
    Rng rng(7);
    CHECK(rng.uniform_index(1) == 0);

    std::array<std::size_t, 6> counts{};
    const std::size_t n = 600000;
    for (std::size_t i = 0; i < n; ++i) ++counts[rng.uniform_index(6)];
    for (std::size_t c : counts) {
        // Expected 100000 per bucket, SD ~289; +-2000 is ~7 SD.
        CHECK(c > 98000);
        CHECK(c < 102000);
    }
}

TEST_CASE("normal has standard moments") {
    Rng rng(99);
    const std::size_t n = 200000;
    double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
        sum3 += x * x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double skew = sum3 / n;
    CHECK(std::abs(mean) < 0.01);       // SE ~0.0022
    CHECK(std::abs(var - 1.0) < 0.02);  // SE ~0.0032
    CHECK(std::abs(skew) < 0.03);
}

TEST_CASE("complex_normal has unit power split evenly") {
    Rng rng(123);
    const std::size_t n = 100000;
    double power = 0.0, re2 = 0.0, im2 = 0.0;
    std::complex<double> mean{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const std::complex<double> z = rng.complex_normal();
        power += std::norm(z);
        re2 += z.real() * z.real();
        im2 += z.imag() * z.imag();
        mean += z;
    }
    CHECK(std::abs(power / n - 1.0) < 0.02);
    CHECK(std::abs(re2 / n - 0.5) < 0.015);
    CHECK(std::abs(im2 / n - 0.5) < 0.015);
    CHECK(std::abs(mean / static_cast<double>(n)) < 0.01);
}

}  // TEST_SUITE
