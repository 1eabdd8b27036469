#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <vector>

#include "helpers.hpp"
#include "sediff/denoiser.hpp"
#include "sediff/errors.hpp"

using namespace sediff;
using sediff::testing::random_spec;
using sediff::testing::rel_err;
using sediff::testing::TempDir;

namespace {

ComplexSpectrogram one_coeff(std::complex<double> v) {
    ComplexSpectrogram s(1, 1);
    s.coeffs[0] = v;
    return s;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("preconditioning coefficients at sigma = 1, sigma_data = 0.1") {
    const Preconditioning pre;  // sigma_data = 0.1
    const PreconditionCoeffs c = precondition_coeffs(pre, 1.0);
    CHECK(rel_err(c.c_skip, 0.01 / 1.01) < 1e-12);
    CHECK(std::abs(c.c_skip - 0.00990099) < 1e-8);
    CHECK(rel_err(c.c_out, 0.1 / std::sqrt(1.01)) < 1e-12);
    CHECK(std::abs(c.c_out - 0.0995037) < 1e-7);
    CHECK(rel_err(c.c_in, 1.0 / std::sqrt(1.01)) < 1e-12);
    CHECK(rel_err(c.w, 101.0) < 1e-12);
    CHECK(c.c_noise == 0.0);  // ln(1)/4
}

TEST_CASE("preconditioning at sigma = sigma_data") {
    const Preconditioning pre;
    const PreconditionCoeffs c = precondition_coeffs(pre, 0.1);
    CHECK(rel_err(c.c_skip, 0.5) < 1e-12);
    CHECK(rel_err(c.c_out, 0.07071067811865475) < 1e-12);
    CHECK(rel_err(c.c_in, 7.071067811865475) < 1e-12);
    CHECK(rel_err(c.c_noise, 0.25 * std::log(0.1)) < 1e-12);
}

TEST_CASE("weight times squared output gain is one across the sigma range") {
    const Preconditioning pre;
    for (int i = 0; i <= 60; ++i) {
        const double sigma = std::pow(10.0, -3.0 + 0.1 * i);
        const PreconditionCoeffs c = precondition_coeffs(pre, sigma);
        CHECK(rel_err(c.w * c.c_out * c.c_out, 1.0) < 1e-12);
        // Input normalization: c_in^2 (sigma^2 + sigma_data^2) = 1.
        CHECK(rel_err(c.c_in * c.c_in * (sigma * sigma + pre.sigma_data * pre.sigma_data),
                      1.0) < 1e-12);
        CHECK(rel_err(loss_weight(pre, sigma), c.w) < 1e-15);
    }
}

TEST_CASE("preconditioning rejects non-positive sigma") {
    const Preconditioning pre;
    CHECK_THROWS_AS(precondition_coeffs(pre, 0.0), DomainError);
    CHECK_THROWS_AS(precondition_coeffs(pre, -1.0), DomainError);
}

TEST_CASE("two-atom oracle reproduces the tanh closed form") {
    const std::vector<ComplexSpectrogram> atoms{one_coeff({1.0, 0.0}),
                                                one_coeff({-1.0, 0.0})};
    const ComplexSpectrogram out = oracle_denoise(atoms, one_coeff({0.5, 0.0}), 1.0);
    CHECK(std::abs(out.coeffs[0].real() - std::tanh(0.5)) < 1e-12);
    CHECK(std::abs(out.coeffs[0].real() - 0.46211715726000976) < 1e-12);
    CHECK(out.coeffs[0].imag() == 0.0);

    // General antipodal pair: D = a * tanh(Re<a, x> / sigma^2).
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const ComplexSpectrogram a = random_spec(2, 3, rng);
        ComplexSpectrogram neg = a;
        for (auto& c : neg.coeffs) c = -c;
        const ComplexSpectrogram x = random_spec(2, 3, rng);
        const double sigma = 0.5 + rng.uniform();
        const ComplexSpectrogram got = oracle_denoise({a, neg}, x, sigma);
        const double gain = std::tanh(inner(a, x).real() / (sigma * sigma));
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::abs(got.coeffs[i] - gain * a.coeffs[i]) < 1e-12);
        }
    }
}

TEST_CASE("oracle weights match a direct softmax evaluation") {
    Rng rng(29);
    std::vector<ComplexSpectrogram> atoms;
    for (int j = 0; j < 5; ++j) atoms.push_back(random_spec(2, 2, rng));
    const ComplexSpectrogram x = random_spec(2, 2, rng);
    const double sigma = 0.8;

    // Independent route: plain exponentials, no log-sum-exp.
    std::vector<double> w(atoms.size());
    double total = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        w[j] = std::exp(-squared_distance(x, atoms[j]) / (2.0 * sigma * sigma));
        total += w[j];
    }
    ComplexSpectrogram expect(2, 2);
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        for (std::size_t i = 0; i < expect.size(); ++i) {
            expect.coeffs[i] += (w[j] / total) * atoms[j].coeffs[i];
        }
    }

    const ComplexSpectrogram got = oracle_denoise(atoms, x, sigma);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::abs(got.coeffs[i] - expect.coeffs[i]) < 1e-12);
    }
}

TEST_CASE("oracle stays finite and snaps to the nearest atom at tiny sigma") {
    Rng rng(31);
    std::vector<ComplexSpectrogram> atoms;
    for (int j = 0; j < 4; ++j) atoms.push_back(random_spec(3, 3, rng));
    ComplexSpectrogram x = atoms[2];
    for (auto& c : x.coeffs) c += 1e-3 * rng.complex_normal();

    const ComplexSpectrogram out = oracle_denoise(atoms, x, 1e-8);
    CHECK(all_finite(out));
    CHECK(squared_distance(out, atoms[2]) < 1e-24);

    CHECK_THROWS_AS(oracle_denoise({}, x, 1.0), ArgumentError);
    CHECK_THROWS_AS(oracle_denoise(atoms, x, 0.0), DomainError);
}

TEST_CASE("gaussian shrinkage closed form") {
    const ComplexSpectrogram out = gaussian_denoise(0.1, one_coeff({1.0, 0.0}), 0.2);
    CHECK(rel_err(out.coeffs[0].real(), 0.2) < 1e-12);

    // sigma = 0 is the identity.
    Rng rng(5);
    const ComplexSpectrogram x = random_spec(2, 2, rng);
    CHECK(squared_distance(gaussian_denoise(0.5, x, 0.0), x) == 0.0);
    CHECK_THROWS_AS(gaussian_denoise(0.0, x, 0.1), DomainError);
}

TEST_CASE("model wrappers expose identifiers and forward to the closed forms") {
    Rng rng(7);
    const ComplexSpectrogram x = random_spec(2, 2, rng);
    const ComplexSpectrogram y = random_spec(2, 2, rng);

    const GaussianDenoiser g(0.3);
    CHECK(g.identifier() == "gaussian");
    CHECK(g.sigma_prior() == 0.3);
    CHECK(squared_distance(g.denoise(x, y, 0.4), gaussian_denoise(0.3, x, 0.4)) == 0.0);

    const OracleDenoiser o({y});
    CHECK(o.identifier() == "oracle");
    // Single atom: the posterior mean is the atom itself regardless of x.
    CHECK(squared_distance(o.denoise(x, y, 0.7), y) == 0.0);
}

TEST_CASE("oracle over draws from a gaussian prior approaches gaussian shrinkage") {
    // With atoms sampled from CN(0, sigma_prior^2) per coefficient, the finite
    // posterior mean converges to the analytic shrinkage as the atom count
    // grows; the error should fall monotonically over a seeded ladder.
    const double sigma_prior = 0.1;
    const double sigma = 0.05;  // half the prior scale
    Rng rng(404);
    double prev = 1e300;
    for (std::size_t n_atoms : {8, 64, 512}) {
        double err = 0.0;
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<ComplexSpectrogram> atoms;
            for (std::size_t j = 0; j < n_atoms; ++j) {
                atoms.push_back(random_spec(2, 2, rng, sigma_prior));
            }
            const ComplexSpectrogram x = random_spec(2, 2, rng, sigma_prior);
            const ComplexSpectrogram exact = gaussian_denoise(sigma_prior, x, sigma);
            err += std::sqrt(squared_distance(oracle_denoise(atoms, x, sigma), exact));
        }
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("linear denoiser bin lookup and evaluation") {
    const std::vector<double> edges{0.01, 0.1, 1.0, 10.0};
    const std::vector<std::complex<double>> a{{0.9, 0.0}, {0.5, 0.1}, {0.2, 0.0}};
    const std::vector<std::complex<double>> b{{0.1, 0.0}, {0.3, -0.1}, {0.0, 0.0}};
    const LinearDenoiser model(edges, a, b, 0.1);

    CHECK(model.n_bins() == 3);
    CHECK(model.bin_for_sigma(0.05) == 0);
    CHECK(model.bin_for_sigma(0.5) == 1);
    CHECK(model.bin_for_sigma(5.0) == 2);
    CHECK(model.bin_for_sigma(100.0) == 2);  // above the last edge: last bin

    Rng rng(3);
    const ComplexSpectrogram x = random_spec(2, 2, rng);
    const ComplexSpectrogram y = random_spec(2, 2, rng);
    const ComplexSpectrogram out = model.denoise(x, y, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::abs(out.coeffs[i] - (a[1] * x.coeffs[i] + b[1] * y.coeffs[i])) < 1e-15);
    }

    CHECK_THROWS_AS(LinearDenoiser({0.1, 0.01}, {a[0]}, {b[0]}, 0.1), ArgumentError);
}

TEST_CASE("linear denoiser fades to the identity below the fitted range") {
    const std::vector<double> edges{0.01, 0.1};
    const LinearDenoiser model(edges, {{0.5, 0.0}}, {{0.3, 0.0}}, 0.1);
    Rng rng(4);
    const ComplexSpectrogram x = random_spec(3, 2, rng);
    const ComplexSpectrogram y = random_spec(3, 2, rng);

    const ComplexSpectrogram near_zero = model.denoise(x, y, 1e-8);
    CHECK(std::sqrt(squared_distance(near_zero, x)) <= 1e-6 * norm(x));

    // Continuous at the first edge: blend weight is exactly 1 there.
    const ComplexSpectrogram at_edge = model.denoise(x, y, 0.01);
    const ComplexSpectrogram in_bin = model.denoise(x, y, 0.010000001);
    CHECK(std::sqrt(squared_distance(at_edge, in_bin)) < 1e-6);
}

TEST_CASE("linear denoiser save/load round-trips exactly") {
    const std::vector<double> edges{0.0035, 0.07, 1.4, 403.0};
    const std::vector<std::complex<double>> a{{0.9, 0.01}, {0.5, -0.2}, {0.1, 0.0}};
    const std::vector<std::complex<double>> b{{0.05, 0.0}, {0.25, 0.125}, {0.75, -0.5}};
    const LinearDenoiser model(edges, a, b, 0.1);
    CHECK(model.identifier() == "linear-sigma-binned");

    TempDir dir("linmodel");
    const std::string path = dir.file("model.json");
    model.save(path);
    const LinearDenoiser back = LinearDenoiser::load(path);
    CHECK(back.bin_edges() == edges);
    CHECK(back.coeff_a() == a);
    CHECK(back.coeff_b() == b);

    CHECK_THROWS_AS(LinearDenoiser::load(dir.file("missing.json")), DataError);
}

TEST_CASE("fit recovers the conditioner when it equals the target") {
    // y = n0 exactly: the optimal linear combination ignores the noisy input.
    Rng data_rng(100);
    std::vector<DenoisePair> dataset(8);
    for (auto& pair : dataset) {
        pair.n0 = random_spec(4, 4, data_rng, 0.1);
        pair.y = pair.n0;
    }
    const ScheduleParams schedule;
    Rng rng(200);
    const LinearFit fit = fit_linear_denoiser(dataset, schedule, 16, rng, 4096);

    std::size_t checked = 0;
    for (std::size_t j = 0; j < fit.model->n_bins(); ++j) {
        if (fit.diagnostics.bin_draws[j] < 50) continue;
        CHECK(std::abs(fit.model->coeff_b()[j] - 1.0) < 0.05);
        CHECK(std::abs(fit.model->coeff_a()[j]) < 0.05);
        ++checked;
    }
    CHECK(checked >= 4);
    CHECK(fit.diagnostics.mean_weighted_residual >= 0.0);
}

TEST_CASE("fit falls back to shrinkage at the bin center when y is zero") {
    Rng data_rng(300);
    std::vector<DenoisePair> dataset(4);
    for (auto& pair : dataset) {
        pair.n0 = random_spec(4, 4, data_rng, 0.1);
        pair.y = ComplexSpectrogram(4, 4);  // identically zero conditioner
    }
    const ScheduleParams schedule;
    Rng rng(400);
    const LinearFit fit = fit_linear_denoiser(dataset, schedule, 8, rng, 2048);

    const auto& edges = fit.model->bin_edges();
    const double sd2 = 0.1 * 0.1;
    for (std::size_t j = 0; j < fit.model->n_bins(); ++j) {
        if (fit.diagnostics.bin_draws[j] == 0) continue;
        CHECK(fit.diagnostics.wiener_fallback[j]);
        CHECK(fit.model->coeff_b()[j] == std::complex<double>(0.0, 0.0));
        const double center = std::sqrt(edges[j] * edges[j + 1]);
        CHECK(rel_err(fit.model->coeff_a()[j].real(), sd2 / (sd2 + center * center)) <
              1e-9);
    }
}

TEST_CASE("fit approaches the per-bin Wiener gain on uninformative conditioners") {
    // n0 and y independent with the same per-coefficient variance: the fitted
    // input gain should match sigma_data^2 / (sigma_data^2 + sigma_center^2).
    Rng data_rng(500);
    std::vector<DenoisePair> dataset(32);
    for (auto& pair : dataset) {
        pair.n0 = random_spec(8, 8, data_rng, 0.1);
        pair.y = random_spec(8, 8, data_rng, 0.1);
    }
    const ScheduleParams schedule;
    Rng rng(600);
    const LinearFit fit = fit_linear_denoiser(dataset, schedule, 16, rng, 10000);

    const auto& edges = fit.model->bin_edges();
    const double sd2 = 0.1 * 0.1;
    std::size_t checked = 0;
    for (std::size_t j = 0; j < fit.model->n_bins(); ++j) {
        if (fit.diagnostics.bin_draws[j] < 200) continue;
        const double center = std::sqrt(edges[j] * edges[j + 1]);
        const double wiener = sd2 / (sd2 + center * center);
        // The fitted gain pools the continuous law over the whole bin, so it
        // sits near but not exactly at the bin-center value.
        CHECK(std::abs(fit.model->coeff_a()[j].real() - wiener) <=
              0.075 * std::max(wiener, 0.05));
        CHECK(std::abs(fit.model->coeff_a()[j].imag()) < 0.05);
        CHECK(std::abs(fit.model->coeff_b()[j]) < 0.05);
        ++checked;
    }
    CHECK(checked >= 3);
}

TEST_CASE("fit diagnostics account for every draw and empty bins inherit") {
    Rng data_rng(700);
    std::vector<DenoisePair> dataset(2);
    for (auto& pair : dataset) {
        pair.n0 = random_spec(2, 2, data_rng, 0.1);
        pair.y = pair.n0;
    }
    const ScheduleParams schedule;
    Rng rng(800);
    const std::size_t n_samples = 512;
    const LinearFit fit = fit_linear_denoiser(dataset, schedule, 32, rng, n_samples);

    std::size_t total = 0;
    for (std::size_t j = 0; j < fit.model->n_bins(); ++j) {
        total += fit.diagnostics.bin_draws[j];
        if (fit.diagnostics.bin_draws[j] == 0) {
            const int src = fit.diagnostics.inherited_from[j];
            REQUIRE(src >= 0);
            CHECK(fit.diagnostics.bin_draws[static_cast<std::size_t>(src)] > 0);
            CHECK(fit.model->coeff_a()[j] ==
                  fit.model->coeff_a()[static_cast<std::size_t>(src)]);
        } else {
            CHECK(fit.diagnostics.inherited_from[j] == -1);
        }
    }
    CHECK(total == n_samples);
}

TEST_CASE("fit is deterministic and independent of the worker count") {
    Rng data_rng(900);
    std::vector<DenoisePair> dataset(4);
    for (auto& pair : dataset) {
        pair.n0 = random_spec(4, 2, data_rng, 0.1);
        pair.y = random_spec(4, 2, data_rng, 0.1);
    }
    const ScheduleParams schedule;

    setenv("SEDIFF_WORKERS", "1", 1);
    Rng rng1(1000);
    const LinearFit serial = fit_linear_denoiser(dataset, schedule, 12, rng1, 1024);
    setenv("SEDIFF_WORKERS", "8", 1);
    Rng rng2(1000);
    const LinearFit parallel = fit_linear_denoiser(dataset, schedule, 12, rng2, 1024);
    unsetenv("SEDIFF_WORKERS");

    CHECK(serial.model->coeff_a() == parallel.model->coeff_a());
    CHECK(serial.model->coeff_b() == parallel.model->coeff_b());
    CHECK(serial.diagnostics.mean_weighted_residual ==
          parallel.diagnostics.mean_weighted_residual);
}

}  // TEST_SUITE
