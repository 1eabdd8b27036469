#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "sediff/rng.hpp"
#include "sediff/wav.hpp"

namespace sediff {

// ---- database manifests -----------------------------------------------------

enum class DatabaseKind { Speech, Noise, Brir };

const char* kind_name(DatabaseKind kind);
DatabaseKind kind_from_name(const std::string& name);

struct ManifestEntry {
    std::string id;
    std::string path;       // resolved to an absolute/openable path at load
    double duration_s = 0.0;
    std::string room;       // BRIR entries only
    double angle_deg = 0.0; // BRIR entries only
};

struct DatabaseManifest {
    std::string name;
    DatabaseKind kind = DatabaseKind::Speech;
    std::vector<ManifestEntry> entries;
};

DatabaseManifest load_manifest(const std::string& path);
void save_manifest(const DatabaseManifest& manifest, const std::string& path);

// The full corpus: exactly five databases per kind.
struct ManifestSet {
    std::vector<DatabaseManifest> speech, noise, brir;

    const std::vector<DatabaseManifest>& of(DatabaseKind kind) const;
    const DatabaseManifest& find(DatabaseKind kind, const std::string& name) const;
};

ManifestSet load_manifest_set(const std::vector<std::string>& paths);

// ---- folds --------------------------------------------------------------------

// Per-database split. Speech/BRIR splits are entry index lists; noise
// databases are split in time instead: each recording's first
// time_split fraction belongs to train, the remainder to test.
struct DbSplit {
    std::string database;
    std::vector<std::size_t> train_entries;
    std::vector<std::size_t> test_entries;
    double time_split = 0.8;
};

struct FoldPlan {
    std::size_t fold_index = 0;        // 1-based
    std::size_t n_train_databases = 1; // 1 or 4
    std::vector<DbSplit> speech, noise, brir;            // one per training database
    std::vector<std::string> heldout_speech, heldout_noise, heldout_brir;
};

// Builds the five rotation folds. n_train_databases must be 1 or 4.
// Within-database splits depend only on (seed, database name), so a database
// splits identically across folds.
std::vector<FoldPlan> build_folds(const ManifestSet& manifests,
                                  std::size_t n_train_databases, std::uint64_t seed);

// ---- BRIR handling --------------------------------------------------------------

// Early/late split at (direct-path peak + boundary_ms). Complementary
// rectangular windows on the full-length impulse response, so
// early + late == original sample-exactly.
struct BrirSplit {
    Audio early;
    Audio late;
    std::size_t boundary_sample = 0;
};

BrirSplit split_brir(const Audio& brir, double boundary_ms);

// ---- mixture specs ----------------------------------------------------------------

struct NoiseSource {
    std::string database;
    std::string recording_id;
    std::string brir_id;
    double offset_s = 0.0;  // segment start within the recording
};

struct MixtureSpec {
    std::string id;
    std::uint64_t seed = 0;  // rng stream for rendering-time draws (none today)
    std::string speech_database, utterance_id;
    std::string brir_database, room, speech_brir_id;
    std::vector<NoiseSource> noise_sources;
    double snr_db = 0.0;
};

enum class Condition { Train, MatchedTest, MismatchedTest };
const char* condition_name(Condition c);

struct SimulateParams {
    double snr_min_db = -5.0;
    double snr_max_db = 10.0;
    std::size_t min_noise_sources = 1;
    std::size_t max_noise_sources = 3;
    double brir_boundary_ms = 50.0;
};

// Draws mixture specs for one fold and condition until the summed utterance
// duration reaches target_seconds. Deterministic given the seed.
std::vector<MixtureSpec> draw_mixture_specs(const ManifestSet& manifests,
                                            const FoldPlan& fold, Condition condition,
                                            const SimulateParams& params,
                                            double target_seconds, std::uint64_t seed);

// ---- rendering ----------------------------------------------------------------------

// Thread-safe path -> decoded audio cache for rendering runs.
class AudioCache {
public:
    const Audio& get(const std::string& path);

private:
    std::mutex mu_;
    std::map<std::string, Audio> items_;
};

struct RenderedMixture {
    std::vector<double> y;       // mixture = target + noise (exact by construction)
    std::vector<double> target;  // speech * early BRIR, downmixed
    std::vector<double> noise;   // late reverb + gamma * external noise, downmixed
    double gamma = 0.0;
    double measured_snr_db = 0.0;  // two-ear SNR actually realized
    bool snr_infeasible = false;   // late reverb alone exceeded the noise budget
};

RenderedMixture render_mixture(const MixtureSpec& spec, const ManifestSet& manifests,
                               const SimulateParams& params, AudioCache& cache);

// ---- dataset index -------------------------------------------------------------------

struct DatasetIndexRow {
    std::string id;
    std::string mixture_path, target_path, noise_path;
    double snr_db = 0.0;
    double measured_snr_db = 0.0;
    double gamma = 0.0;
    bool snr_infeasible = false;
    std::string speech_database, utterance_id, brir_database, room;
};

struct DatasetIndex {
    std::size_t fold = 1;
    std::string condition;
    std::uint64_t seed = 0;
    std::size_t sample_rate = 16000;
    // Databases whose train halves fed this fold, per kind (sorted by name).
    std::vector<std::string> train_speech_databases;
    std::vector<std::string> train_noise_databases;
    std::vector<std::string> train_brir_databases;
    std::vector<DatasetIndexRow> rows;
};

void save_index(const DatasetIndex& index, const std::string& path);
DatasetIndex load_index(const std::string& path);

// ---- synthetic corpus ------------------------------------------------------------------

struct SynthScale {
    std::size_t utterances_per_db = 20;
    double utterance_min_s = 2.5;
    double utterance_max_s = 5.0;
    std::size_t recordings_per_db = 4;
    double recording_s = 30.0;
    std::size_t rooms_per_db = 3;
    std::size_t angles_per_room = 13;  // -90..+90 in 15 degree steps
};

// Generates one synthetic database (WAV files + manifest JSON) into out_dir.
// Byte-identical output for identical (kind, db_index, seed, scale).
DatabaseManifest synth_database(DatabaseKind kind, std::size_t db_index,
                                const std::string& out_dir, std::uint64_t seed,
                                const SynthScale& scale = {});

}  // namespace sediff
