#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sediff/denoiser.hpp"
#include "sediff/metrics.hpp"
#include "sediff/sampler.hpp"
#include "sediff/schedule.hpp"
#include "sediff/simulate.hpp"
#include "sediff/spectral.hpp"

namespace sediff {

// Resolved experiment configuration. Loaded from a strict JSON document
// (unknown keys are rejected with their path); CLI flags override keys after
// loading. Every random quantity anywhere downstream derives from `seed`
// through named sub-streams, so runs are bit-reproducible from (config,
// seed) regardless of worker count.
struct ExperimentConfig {
    std::uint64_t seed = 1234;
    std::string data_dir = "data";
    std::size_t fold = 1;               // 1..5
    std::size_t n_train_databases = 1;  // 1 or 4
    double hours = 0.05;                // train audio; each test set gets 1/10

    ScheduleParams schedule{};
    StftConfig stft{};
    SamplerConfig sampler{};

    std::string denoiser = "oracle";  // "oracle" | "gaussian" | model file path
    double sigma_data = 0.1;
    std::size_t n_sigma_bins = 32;
    std::size_t fit_samples = 4096;
    std::size_t fit_mixture_cap = 64;

    SimulateParams mix{};
    std::string pesq_command;

    void validate() const;  // throws ConfigError
};

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// FNV-1a of the canonical JSON serialization; embedded in run reports.
std::uint64_t config_hash(const ExperimentConfig& config);

// Sets one dotted key ("sampler.n_steps") from its string form. Throws
// ConfigError for unknown keys or unparsable values.
void apply_override(ExperimentConfig& config, const std::string& key,
                    const std::string& value);

// ---- shared plumbing ---------------------------------------------------------

// Loads the 15 synthetic databases under data_dir, generating any that are
// missing. Deterministic per (seed, data_dir contents).
ManifestSet ensure_corpus(const ExperimentConfig& config);

// Compressed-STFT analysis/synthesis of a mono waveform.
ComplexSpectrogram analysis(const std::vector<double>& x, const StftConfig& cfg);
std::vector<double> synthesis(const ComplexSpectrogram& c, const StftConfig& cfg,
                              std::size_t out_len);

// Training/eval pair in the compressed domain: the generated object is the
// residual n0 = analysis(y) - analysis(target), so that enhancement recovers
// analysis(target) = analysis(y) - n0.
DenoisePair make_pair(const RenderedMixture& mix, const StftConfig& cfg);

struct EnhanceRun {
    std::vector<double> estimate;
    SamplerDiagnostics diagnostics;
};

// One in-memory enhancement: analysis -> conditional sampling -> subtract ->
// synthesis back to y.size() samples.
EnhanceRun enhance_waveform(const std::vector<double>& y, const DenoiserModel& model,
                            const SamplerConfig& sampler, const ScheduleParams& schedule,
                            const StftConfig& stft_cfg, Rng& rng);

// Resolves the configured denoiser. "oracle" requires atoms supplied at the
// call site instead and is rejected here.
std::shared_ptr<const DenoiserModel> load_denoiser(const ExperimentConfig& config);

// ---- commands ------------------------------------------------------------------

// simulate: renders train/matched/mismatched sets for the configured fold
// into out_dir/<condition>/, writes index.json per condition plus a run
// report. Returns the index paths.
std::vector<std::string> run_simulate(const ExperimentConfig& config,
                                      const std::string& out_dir);

struct FitSummary {
    std::string model_path;
    double sigma_data_measured = 0.0;
    double mean_weighted_residual = 0.0;
    std::size_t n_pairs = 0;
};

// fit: builds pairs from the mixtures of a dataset index (capped at
// fit_mixture_cap), fits the sigma-binned linear denoiser, writes the model
// file and a fit report.
FitSummary run_fit(const ExperimentConfig& config, const std::string& index_path,
                   const std::string& model_path, const std::string& report_path);

struct EnhanceSummary {
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    double mean_denoiser_evals = 0.0;
};

// enhance: writes <out_dir>/<id>.wav for every mixture in the index. Oracle
// mode builds a per-mixture single-atom denoiser from the true residual.
// Per-mixture failures are recorded in the report and skipped.
EnhanceSummary run_enhance(const ExperimentConfig& config, const std::string& index_path,
                           const std::string& out_dir, const std::string& report_path);

// evaluate: scores enhanced files against the index; writes CSV + report.
BatchResult run_evaluate(const ExperimentConfig& config, const std::string& index_path,
                         const std::string& enhanced_dir, const std::string& csv_path,
                         const std::string& report_path);

struct SweepRow {
    std::string sampler;
    std::size_t n_steps = 0;
    std::string condition;
    std::size_t n_mixtures = 0;
    double mean_snr_in_db = 0.0;
    double mean_snr_out_db = 0.0;
    double mean_delta_snr_db = 0.0;
    double mean_estoi_in = 0.0;
    double mean_estoi_out = 0.0;
    std::size_t denoiser_evals = 0;  // per mixture, identical across mixtures
};

// sweep: both samplers x n_steps in {4,8,16,32,64} x test conditions, all in
// memory against freshly rendered mixtures; writes sweep.csv + report into
// out_dir and returns the rows.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& out_dir);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

// schedule dump: CSV of the schedule quantities on a uniform time grid.
void run_schedule_dump(const ExperimentConfig& config, std::size_t points,
                       const std::string& out_path);

// selftest: fast internal invariant checks; prints one line per check and
// throws NumericError if any fails.
void run_selftest(const ExperimentConfig& config);

// Writes a run report embedding the resolved config, its hash, and
// command-specific payload.
void write_run_report(const std::string& path, const std::string& command,
                      const ExperimentConfig& config, const nlohmann::json& payload);

}  // namespace sediff
