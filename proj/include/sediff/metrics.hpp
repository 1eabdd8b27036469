#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sediff/simulate.hpp"

namespace sediff {

// SNR improvements are reported against this ceiling so that an exact
// reconstruction does not produce an infinite score.
inline constexpr double kSnrCapDb = 100.0;

// 10 log10(sum ref^2 / sum (est-ref)^2), capped at kSnrCapDb. Throws
// MetricError when the reference is identically zero.
double snr_db(const std::vector<double>& ref, const std::vector<double>& est);

// Scale-invariant signal-to-distortion ratio, capped at kSnrCapDb.
double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est);

// Polyphase rational resampler (windowed-sinc lowpass). Output duration
// matches the input duration; both signals of a comparison must pass
// through the same call so group delay cancels.
std::vector<double> resample_poly(const std::vector<double>& x, std::size_t up,
                                  std::size_t down);

// Extended short-time intelligibility score in [-1, 1]. Operates at an
// internal 10 kHz rate; only 16 kHz input is supported. Throws
// ArgumentError when fewer than 30 analysis frames survive silent-frame
// removal.
double estoi(const std::vector<double>& ref, const std::vector<double>& est,
             std::size_t sample_rate);

// Optional external perceptual-quality binary. command_template is run via
// the shell with "{ref}" and "{deg}" replaced by WAV paths; the last token
// of its stdout must parse as a number.
struct PesqHook {
    std::string command_template;
    bool available() const { return !command_template.empty(); }
};

std::optional<double> run_pesq(const PesqHook& hook, const std::string& ref_path,
                               const std::string& deg_path);

struct MixtureScores {
    std::string id;
    double snr_in_db = 0.0;
    double snr_out_db = 0.0;
    double snr_delta_db = 0.0;
    double si_sdr_in_db = 0.0;
    double si_sdr_out_db = 0.0;
    double estoi_in = 0.0;
    double estoi_out = 0.0;
    std::optional<double> pesq_in, pesq_out;
};

struct BatchResult {
    std::vector<MixtureScores> rows;
    std::vector<std::string> missing;  // ids whose enhanced file was absent
};

// Scores every mixture in the index against <enhanced_dir>/<id>.wav.
// Missing enhanced files are recorded and skipped, not fatal.
BatchResult evaluate_batch(const DatasetIndex& index, const std::string& enhanced_dir,
                           const PesqHook& hook = {});

void write_scores_csv(const BatchResult& result, const std::string& path);

}  // namespace sediff
