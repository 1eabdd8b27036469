#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "sediff/errors.hpp"
#include "sediff/metrics.hpp"
#include "sediff/rng.hpp"
#include "sediff/wav.hpp"

using namespace sediff;
using sediff::testing::TempDir;

namespace {

// Amplitude-modulated multi-sine: fluctuating band envelopes across the
// intelligibility bands, 16 kHz.
std::vector<double> am_speechlike(double seconds, std::uint64_t seed) {
    Rng rng(seed);
    const double freqs[] = {300.0, 500.0, 850.0, 1400.0, 2300.0, 3800.0};
    const double rates[] = {4.0, 5.5, 7.0, 3.2, 8.5, 6.1};
    const std::size_t n = static_cast<std::size_t>(seconds * 16000.0);
    std::vector<double> x(n, 0.0);
    for (int k = 0; k < 6; ++k) {
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        const double am_phase = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / 16000.0;
            const double am =
                1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * rates[k] * t + am_phase);
            x[i] += 0.1 * am * std::sin(2.0 * std::numbers::pi * freqs[k] * t + phase);
        }
    }
    return x;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed, double amp) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = amp * rng.normal();
    return x;
}

void write_mono(const std::string& path, const std::vector<double>& x) {
    Audio a;
    a.sample_rate = 16000;
    a.channels = {x};
    write_wav(path, a);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("snr handles exact, scaled, and degenerate inputs") {
    const std::vector<double> ref = am_speechlike(0.5, 1);
    std::vector<double> est(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) est[i] = 1.1 * ref[i];
    CHECK(std::abs(snr_db(ref, est) - 20.0) < 1e-9);  // error energy = ref/100

    CHECK(snr_db(ref, ref) == kSnrCapDb);

    CHECK_THROWS_AS(snr_db(std::vector<double>(est.size(), 0.0), est), MetricError);
    CHECK_THROWS_AS(snr_db(ref, std::vector<double>(10, 0.0)), DimensionError);
}

TEST_CASE("si-sdr is scale invariant and measures orthogonal noise") {
    const std::vector<double> ref = am_speechlike(0.5, 2);
    const double e_ref = [&] {
        double acc = 0.0;
        for (double v : ref) acc += v * v;
        return acc;
    }();

    // Pure rescaling is a perfect score.
    std::vector<double> scaled(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) scaled[i] = 3.0 * ref[i];
    CHECK(si_sdr_db(ref, scaled) == kSnrCapDb);

    // Add noise orthogonalized against the reference at 1% relative energy.
    std::vector<double> noise = white_noise(ref.size(), 3, 1.0);
    double dot = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) dot += noise[i] * ref[i];
    for (std::size_t i = 0; i < ref.size(); ++i) noise[i] -= (dot / e_ref) * ref[i];
    double e_noise = 0.0;
    for (double v : noise) e_noise += v * v;
    const double want = std::sqrt(0.01 * e_ref / e_noise);
    std::vector<double> est(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + want * noise[i];
    CHECK(std::abs(si_sdr_db(ref, est) - 20.0) < 1e-9);

    // Scaling the estimate leaves the score unchanged.
    std::vector<double> est2(est.size());
    for (std::size_t i = 0; i < est.size(); ++i) est2[i] = 0.25 * est[i];
    CHECK(std::abs(si_sdr_db(ref, est2) - si_sdr_db(ref, est)) < 1e-9);

    CHECK_THROWS_AS(si_sdr_db(std::vector<double>(8, 0.0), std::vector<double>(8, 1.0)),
                    MetricError);
    // An estimate supported only where the reference is zero has no target
    // component at all (exact zero projection).
    std::vector<double> ref2(64, 0.0), orth(64, 0.0);
    for (std::size_t i = 0; i < 64; i += 2) {
        ref2[i] = 1.0;
        orth[i + 1] = 1.0;
    }
    CHECK_THROWS_AS(si_sdr_db(ref2, orth), MetricError);
    CHECK_THROWS_AS(si_sdr_db(ref, std::vector<double>(3, 0.0)), DimensionError);
}

TEST_CASE("resampler preserves duration, dc, and in-band tones") {
    // Output length covers the same duration.
    const std::vector<double> x(1000, 0.5);
    CHECK(resample_poly(x, 5, 8).size() == (1000 * 5 + 7) / 8);
    CHECK(resample_poly(x, 1, 1) == x);
    CHECK_THROWS_AS(resample_poly(x, 0, 2), ArgumentError);

    // DC passes at unit gain away from the edges.
    const std::vector<double> dc = resample_poly(std::vector<double>(500, 1.0), 2, 1);
    for (std::size_t i = 200; i + 200 < dc.size(); ++i) {
        CHECK(std::abs(dc[i] - 1.0) < 2e-3);
    }

    // A 440 Hz tone lands on the analytic waveform at the new rate.
    std::vector<double> tone(16000);
    for (std::size_t i = 0; i < tone.size(); ++i) {
        tone[i] = std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / 16000.0);
    }
    const std::vector<double> at10k = resample_poly(tone, 5, 8);
    for (std::size_t m = 300; m + 300 < at10k.size(); ++m) {
        const double t = static_cast<double>(m) / 10000.0;
        CHECK(std::abs(at10k[m] - std::sin(2.0 * std::numbers::pi * 440.0 * t)) < 2e-3);
    }
}

TEST_CASE("intelligibility score is exact on self and degrades with noise") {
    const std::vector<double> ref = am_speechlike(2.0, 10);
    CHECK(std::abs(estoi(ref, ref, 16000) - 1.0) < 1e-6);

    // Invariant to estimate gain.
    std::vector<double> loud(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) loud[i] = 4.0 * ref[i];
    CHECK(std::abs(estoi(ref, loud, 16000) - 1.0) < 1e-6);

    const std::vector<double> noise = white_noise(ref.size(), 11, 0.25);
    double prev = 2.0;
    for (double eta : {0.0, 0.1, 0.3, 1.0}) {
        std::vector<double> est(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            est[i] = (1.0 - eta) * ref[i] + eta * noise[i];
        }
        const double score = estoi(ref, est, 16000);
        CHECK(score < prev);
        prev = score;
    }
    CHECK(prev < 0.1);  // pure noise shares no envelope structure

    CHECK_THROWS_AS(estoi(am_speechlike(0.3, 12), am_speechlike(0.3, 12), 16000),
                    ArgumentError);
    CHECK_THROWS_AS(estoi(ref, ref, 48000), ArgumentError);
    CHECK_THROWS_AS(estoi(ref, std::vector<double>(5, 0.0), 16000), DimensionError);
}

TEST_CASE("external quality hook parses the last numeric token") {
    PesqHook echo{"echo {ref} {deg} 3.25"};
    const auto v = run_pesq(echo, "/tmp/a.wav", "/tmp/b.wav");
    REQUIRE(v.has_value());
    CHECK(*v == 3.25);

    CHECK(!run_pesq(PesqHook{"false"}, "a", "b").has_value());
    CHECK(!run_pesq(PesqHook{"echo notanumber"}, "a", "b").has_value());
    CHECK(!run_pesq(PesqHook{"echo 3.25trailing"}, "a", "b").has_value());
    CHECK(!run_pesq(PesqHook{}, "a", "b").has_value());
}

TEST_CASE("batch evaluation scores present files and lists absent ones") {
    TempDir dir("batch");
    const std::vector<double> target = am_speechlike(2.0, 20);
    const std::vector<double> big = white_noise(target.size(), 21, 0.05);
    const std::vector<double> small = white_noise(target.size(), 22, 0.01);

    DatasetIndex index;
    index.condition = "matched";
    for (int i = 0; i < 2; ++i) {
        const std::string id = "m0000" + std::to_string(i);
        std::vector<double> y(target.size()), n(target.size());
        for (std::size_t j = 0; j < target.size(); ++j) {
            n[j] = big[j];
            y[j] = target[j] + n[j];
        }
        DatasetIndexRow row;
        row.id = id;
        row.mixture_path = dir.file(id + "_y.wav");
        row.target_path = dir.file(id + "_t.wav");
        row.noise_path = dir.file(id + "_n.wav");
        write_mono(row.mixture_path, y);
        write_mono(row.target_path, target);
        write_mono(row.noise_path, n);
        index.rows.push_back(std::move(row));
    }

    const std::string enhanced_dir = dir.file("enhanced");
    std::filesystem::create_directories(enhanced_dir);
    std::vector<double> enhanced(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) enhanced[j] = target[j] + small[j];
    write_mono(enhanced_dir + "/m00000.wav", enhanced);  // m00001 left absent

    const BatchResult result = evaluate_batch(index, enhanced_dir);
    REQUIRE(result.rows.size() == 1);
    CHECK(result.rows[0].id == "m00000");
    CHECK(result.rows[0].snr_out_db > result.rows[0].snr_in_db);
    CHECK(result.rows[0].snr_delta_db ==
          result.rows[0].snr_out_db - result.rows[0].snr_in_db);
    CHECK(result.rows[0].estoi_in <= 1.0);
    CHECK(!result.rows[0].pesq_in.has_value());
    REQUIRE(result.missing.size() == 1);
    CHECK(result.missing[0] == "m00001");

    // With a hook, the quality columns fill in.
    const BatchResult hooked =
        evaluate_batch(index, enhanced_dir, PesqHook{"echo {ref} {deg} 2.5"});
    REQUIRE(hooked.rows.size() == 1);
    CHECK(hooked.rows[0].pesq_in == 2.5);
    CHECK(hooked.rows[0].pesq_out == 2.5);

    // CSV schema: fixed header, one line per scored row, empty quality cells.
    const std::string csv_path = dir.file("scores.csv");
    write_scores_csv(result, csv_path);
    std::ifstream csv(csv_path);
    std::string header, line;
    REQUIRE(std::getline(csv, header));
    CHECK(header ==
          "id,snr_in_db,snr_out_db,snr_delta_db,si_sdr_in_db,si_sdr_out_db,"
          "estoi_in,estoi_out,pesq_in,pesq_out");
    REQUIRE(std::getline(csv, line));
    CHECK(line.substr(0, 7) == "m00000,");
    CHECK(line.substr(line.size() - 2) == ",,");
    CHECK(!std::getline(csv, line));

    // Unreadable mixture data is fatal, not skipped.
    std::ofstream(index.rows[1].mixture_path, std::ios::binary) << "garbage";
    write_mono(enhanced_dir + "/m00001.wav", enhanced);
    CHECK_THROWS_AS(evaluate_batch(index, enhanced_dir), DataError);
}

}  // TEST_SUITE
