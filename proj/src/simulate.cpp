#include "sediff/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include <json.hpp>

#include "sediff/errors.hpp"
#include "sediff/fft.hpp"

namespace sediff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {
constexpr std::size_t kSampleRate = 16000;
constexpr std::size_t kDatabasesPerKind = 5;
}  // namespace

// ---- manifests ------------------------------------------------------------------

const char* kind_name(DatabaseKind kind) {
    switch (kind) {
        case DatabaseKind::Speech: return "speech";
        case DatabaseKind::Noise: return "noise";
        case DatabaseKind::Brir: return "brir";
    }
    return "?";
}

DatabaseKind kind_from_name(const std::string& name) {
    if (name == "speech") return DatabaseKind::Speech;
    if (name == "noise") return DatabaseKind::Noise;
    if (name == "brir") return DatabaseKind::Brir;
    throw DataError("unknown database kind '" + name + "'");
}

DatabaseManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_manifest: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("load_manifest: bad JSON in " + path + ": " + e.what());
    }
    DatabaseManifest m;
    const fs::path base = fs::path(path).parent_path();
    try {
        m.name = doc.at("name").get<std::string>();
        m.kind = kind_from_name(doc.at("kind").get<std::string>());
        for (const auto& e : doc.at("entries")) {
            ManifestEntry entry;
            entry.id = e.at("id").get<std::string>();
            const fs::path p = e.at("path").get<std::string>();
            entry.path = p.is_absolute() ? p.string() : (base / p).string();
            entry.duration_s = e.at("duration_s").get<double>();
            entry.room = e.value("room", std::string{});
            entry.angle_deg = e.value("angle_deg", 0.0);
            m.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw DataError("load_manifest: missing field in " + path + ": " + e.what());
    }
    if (m.entries.empty()) throw DataError("load_manifest: no entries in " + path);
    return m;
}

void save_manifest(const DatabaseManifest& manifest, const std::string& path) {
    json doc;
    doc["name"] = manifest.name;
    doc["kind"] = kind_name(manifest.kind);
    json entries = json::array();
    const fs::path base = fs::path(path).parent_path();
    for (const auto& e : manifest.entries) {
        json row;
        row["id"] = e.id;
        std::error_code ec;
        const fs::path rel = fs::relative(e.path, base, ec);
        row["path"] = (ec || rel.empty()) ? e.path : rel.string();
        row["duration_s"] = e.duration_s;
        if (manifest.kind == DatabaseKind::Brir) {
            row["room"] = e.room;
            row["angle_deg"] = e.angle_deg;
        }
        entries.push_back(std::move(row));
    }
    doc["entries"] = std::move(entries);
    std::ofstream out(path);
    if (!out) throw DataError("save_manifest: cannot open " + path);
    out << doc.dump(2) << "\n";
}

const std::vector<DatabaseManifest>& ManifestSet::of(DatabaseKind kind) const {
    switch (kind) {
        case DatabaseKind::Speech: return speech;
        case DatabaseKind::Noise: return noise;
        case DatabaseKind::Brir: return brir;
    }
    return speech;
}

const DatabaseManifest& ManifestSet::find(DatabaseKind kind, const std::string& name) const {
    for (const auto& m : of(kind)) {
        if (m.name == name) return m;
    }
    throw DataError(std::string("manifest set: no ") + kind_name(kind) + " database '" +
                    name + "'");
}

ManifestSet load_manifest_set(const std::vector<std::string>& paths) {
    ManifestSet set;
    for (const auto& p : paths) {
        DatabaseManifest m = load_manifest(p);
        switch (m.kind) {
            case DatabaseKind::Speech: set.speech.push_back(std::move(m)); break;
            case DatabaseKind::Noise: set.noise.push_back(std::move(m)); break;
            case DatabaseKind::Brir: set.brir.push_back(std::move(m)); break;
        }
    }
    for (DatabaseKind kind :
         {DatabaseKind::Speech, DatabaseKind::Noise, DatabaseKind::Brir}) {
        if (set.of(kind).size() != kDatabasesPerKind) {
            throw ConfigError(std::string("manifest set: expected ") +
                              std::to_string(kDatabasesPerKind) + " " + kind_name(kind) +
                              " databases, got " + std::to_string(set.of(kind).size()));
        }
    }
    return set;
}

namespace {

const ManifestEntry& find_entry(const DatabaseManifest& m, const std::string& id) {
    for (const auto& e : m.entries) {
        if (e.id == id) return e;
    }
    throw DataError("database '" + m.name + "': no entry '" + id + "'");
}

}  // namespace

// ---- folds ---------------------------------------------------------------------

namespace {

DbSplit split_speech_db(const DatabaseManifest& db, std::uint64_t seed) {
    const std::size_t n = db.entries.size();
    if (n < 2) throw ConfigError("database '" + db.name + "' too small to split");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = derive_rng(seed, "speech-split:" + db.name);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_index(i + 1);
        std::swap(order[i], order[j]);
    }
    std::size_t n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    DbSplit split;
    split.database = db.name;
    split.train_entries.assign(order.begin(), order.begin() + static_cast<long>(n_train));
    split.test_entries.assign(order.begin() + static_cast<long>(n_train), order.end());
    std::sort(split.train_entries.begin(), split.train_entries.end());
    std::sort(split.test_entries.begin(), split.test_entries.end());
    return split;
}

DbSplit split_noise_db(const DatabaseManifest& db) {
    DbSplit split;
    split.database = db.name;
    split.time_split = 0.8;
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        split.train_entries.push_back(i);
        split.test_entries.push_back(i);
    }
    return split;
}

DbSplit split_brir_db(const DatabaseManifest& db) {
    // Within each room, order by angle and alternate train/test.
    std::map<std::string, std::vector<std::size_t>> rooms;
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        rooms[db.entries[i].room].push_back(i);
    }
    DbSplit split;
    split.database = db.name;
    for (auto& [room, idx] : rooms) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return db.entries[a].angle_deg < db.entries[b].angle_deg;
        });
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k % 2 == 0 ? split.train_entries : split.test_entries).push_back(idx[k]);
        }
    }
    std::sort(split.train_entries.begin(), split.train_entries.end());
    std::sort(split.test_entries.begin(), split.test_entries.end());
    return split;
}

}  // namespace

std::vector<FoldPlan> build_folds(const ManifestSet& manifests,
                                  std::size_t n_train_databases, std::uint64_t seed) {
    if (n_train_databases != 1 && n_train_databases != 4) {
        throw ConfigError("build_folds: n_train_databases must be 1 or 4");
    }
    for (DatabaseKind kind :
         {DatabaseKind::Speech, DatabaseKind::Noise, DatabaseKind::Brir}) {
        if (manifests.of(kind).size() != kDatabasesPerKind) {
            throw ConfigError("build_folds: need exactly 5 databases per kind");
        }
    }

    std::vector<FoldPlan> folds;
    for (std::size_t f = 0; f < kDatabasesPerKind; ++f) {
        FoldPlan plan;
        plan.fold_index = f + 1;
        plan.n_train_databases = n_train_databases;
        std::vector<std::size_t> train_idx;
        for (std::size_t j = 0; j < kDatabasesPerKind; ++j) {
            const bool in_train = n_train_databases == 1 ? (j == f) : (j != f);
            if (in_train) train_idx.push_back(j);
        }
        for (std::size_t j = 0; j < kDatabasesPerKind; ++j) {
            const bool in_train =
                std::find(train_idx.begin(), train_idx.end(), j) != train_idx.end();
            if (in_train) {
                plan.speech.push_back(split_speech_db(manifests.speech[j], seed));
                plan.noise.push_back(split_noise_db(manifests.noise[j]));
                plan.brir.push_back(split_brir_db(manifests.brir[j]));
            } else {
                plan.heldout_speech.push_back(manifests.speech[j].name);
                plan.heldout_noise.push_back(manifests.noise[j].name);
                plan.heldout_brir.push_back(manifests.brir[j].name);
            }
        }
        folds.push_back(std::move(plan));
    }
    return folds;
}

// ---- BRIR split ------------------------------------------------------------------

BrirSplit split_brir(const Audio& brir, double boundary_ms) {
    if (brir.channels.empty() || brir.length() == 0) {
        throw DegenerateInputError("split_brir: empty impulse response");
    }
    if (!(boundary_ms > 0.0)) throw ArgumentError("split_brir: boundary must be positive");

    // Direct-path peak: largest magnitude across channels.
    std::size_t peak = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < brir.length(); ++i) {
        double mag = 0.0;
        for (const auto& ch : brir.channels) mag = std::max(mag, std::abs(ch[i]));
        if (mag > best) {
            best = mag;
            peak = i;
        }
    }
    if (best == 0.0) throw DegenerateInputError("split_brir: all-zero impulse response");

    const std::size_t offset = static_cast<std::size_t>(
        std::lround(boundary_ms / 1000.0 * static_cast<double>(brir.sample_rate)));
    const std::size_t boundary = std::min(peak + offset, brir.length());

    BrirSplit split;
    split.boundary_sample = boundary;
    split.early.sample_rate = split.late.sample_rate = brir.sample_rate;
    for (const auto& ch : brir.channels) {
        std::vector<double> early(ch.size(), 0.0), late(ch.size(), 0.0);
        for (std::size_t i = 0; i < boundary; ++i) early[i] = ch[i];
        for (std::size_t i = boundary; i < ch.size(); ++i) late[i] = ch[i];
        split.early.channels.push_back(std::move(early));
        split.late.channels.push_back(std::move(late));
    }
    return split;
}

// ---- mixture drawing ----------------------------------------------------------------

const char* condition_name(Condition c) {
    switch (c) {
        case Condition::Train: return "train";
        case Condition::MatchedTest: return "matched";
        case Condition::MismatchedTest: return "mismatched";
    }
    return "?";
}

namespace {

struct SpeechChoice {
    const DatabaseManifest* db;
    std::size_t entry;
};

struct NoiseChoice {
    const DatabaseManifest* db;
    std::size_t entry;
    double t_lo, t_hi;
};

struct RoomChoice {
    const DatabaseManifest* db;
    std::string room;
    std::vector<std::size_t> brirs;
};

}  // namespace

std::vector<MixtureSpec> draw_mixture_specs(const ManifestSet& manifests,
                                            const FoldPlan& fold, Condition condition,
                                            const SimulateParams& params,
                                            double target_seconds, std::uint64_t seed) {
    if (!(target_seconds > 0.0)) {
        throw ArgumentError("draw_mixture_specs: target_seconds must be positive");
    }
    if (params.min_noise_sources < 1 || params.min_noise_sources > params.max_noise_sources) {
        throw ConfigError("draw_mixture_specs: bad noise source range");
    }
    if (!(params.snr_min_db <= params.snr_max_db)) {
        throw ConfigError("draw_mixture_specs: snr_min_db > snr_max_db");
    }

    // Assemble the pools this condition may draw from.
    std::vector<SpeechChoice> speech_pool;
    std::vector<NoiseChoice> noise_pool;
    std::vector<RoomChoice> room_pool;

    if (condition == Condition::MismatchedTest) {
        for (const auto& name : fold.heldout_speech) {
            const auto& db = manifests.find(DatabaseKind::Speech, name);
            for (std::size_t i = 0; i < db.entries.size(); ++i) {
                speech_pool.push_back({&db, i});
            }
        }
        for (const auto& name : fold.heldout_noise) {
            const auto& db = manifests.find(DatabaseKind::Noise, name);
            for (std::size_t i = 0; i < db.entries.size(); ++i) {
                noise_pool.push_back({&db, i, 0.0, db.entries[i].duration_s});
            }
        }
        for (const auto& name : fold.heldout_brir) {
            const auto& db = manifests.find(DatabaseKind::Brir, name);
            std::map<std::string, std::vector<std::size_t>> rooms;
            for (std::size_t i = 0; i < db.entries.size(); ++i) {
                rooms[db.entries[i].room].push_back(i);
            }
            for (auto& [room, idx] : rooms) room_pool.push_back({&db, room, std::move(idx)});
        }
    } else {
        const bool train = condition == Condition::Train;
        for (const auto& split : fold.speech) {
            const auto& db = manifests.find(DatabaseKind::Speech, split.database);
            for (std::size_t i : (train ? split.train_entries : split.test_entries)) {
                speech_pool.push_back({&db, i});
            }
        }
        for (const auto& split : fold.noise) {
            const auto& db = manifests.find(DatabaseKind::Noise, split.database);
            for (std::size_t i : split.train_entries) {
                const double dur = db.entries[i].duration_s;
                const double cut = split.time_split * dur;
                if (train) {
                    noise_pool.push_back({&db, i, 0.0, cut});
                } else {
                    noise_pool.push_back({&db, i, cut, dur});
                }
            }
        }
        for (const auto& split : fold.brir) {
            const auto& db = manifests.find(DatabaseKind::Brir, split.database);
            std::map<std::string, std::vector<std::size_t>> rooms;
            for (std::size_t i : (train ? split.train_entries : split.test_entries)) {
                rooms[db.entries[i].room].push_back(i);
            }
            for (auto& [room, idx] : rooms) room_pool.push_back({&db, room, std::move(idx)});
        }
    }

    if (speech_pool.empty() || noise_pool.empty() || room_pool.empty()) {
        throw ConfigError("draw_mixture_specs: empty draw pool for condition " +
                          std::string(condition_name(condition)));
    }

    std::vector<MixtureSpec> specs;
    double total = 0.0;
    for (std::size_t k = 0; total < target_seconds; ++k) {
        if (k > 2000000) {
            throw ConfigError("draw_mixture_specs: runaway draw loop (zero durations?)");
        }
        Rng rng = derive_rng(seed, "mixture-draw", k);
        MixtureSpec spec;
        char buf[16];
        std::snprintf(buf, sizeof buf, "m%05zu", k);
        spec.id = buf;
        spec.seed = derive_seed(seed, "mixture-render", k);

        const SpeechChoice& sp = speech_pool[rng.uniform_index(speech_pool.size())];
        spec.speech_database = sp.db->name;
        spec.utterance_id = sp.db->entries[sp.entry].id;
        const double dur = sp.db->entries[sp.entry].duration_s;

        const RoomChoice& room = room_pool[rng.uniform_index(room_pool.size())];
        spec.brir_database = room.db->name;
        spec.room = room.room;
        spec.speech_brir_id = room.db->entries[room.brirs[rng.uniform_index(room.brirs.size())]].id;

        const std::size_t n_src =
            params.min_noise_sources +
            rng.uniform_index(params.max_noise_sources - params.min_noise_sources + 1);
        std::vector<std::size_t> available = room.brirs;
        for (std::size_t s = 0; s < n_src; ++s) {
            NoiseSource src;
            // Prefer unused angles within the room; fall back to reuse.
            if (available.empty()) available = room.brirs;
            const std::size_t pick = rng.uniform_index(available.size());
            src.brir_id = room.db->entries[available[pick]].id;
            available.erase(available.begin() + static_cast<long>(pick));

            const NoiseChoice& nc = noise_pool[rng.uniform_index(noise_pool.size())];
            src.database = nc.db->name;
            src.recording_id = nc.db->entries[nc.entry].id;
            const double hi = std::max(nc.t_lo, nc.t_hi - dur);
            src.offset_s = rng.uniform(nc.t_lo, hi);
            spec.noise_sources.push_back(std::move(src));
        }

        spec.snr_db = rng.uniform(params.snr_min_db, params.snr_max_db);
        specs.push_back(std::move(spec));
        total += dur;
    }
    return specs;
}

// ---- rendering -----------------------------------------------------------------------

const Audio& AudioCache::get(const std::string& path) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = items_.find(path);
    if (it == items_.end()) {
        it = items_.emplace(path, read_wav(path)).first;
    }
    return it->second;
}

namespace {

void require_rate(const Audio& a, const std::string& what) {
    if (a.sample_rate != kSampleRate) {
        throw DataError(what + ": expected " + std::to_string(kSampleRate) + " Hz, got " +
                        std::to_string(a.sample_rate));
    }
}

void add_padded(std::vector<double>& acc, const std::vector<double>& v) {
    if (acc.size() < v.size()) acc.resize(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

double energy2(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    for (double v : b) acc += v * v;
    return acc;
}

}  // namespace

RenderedMixture render_mixture(const MixtureSpec& spec, const ManifestSet& manifests,
                               const SimulateParams& params, AudioCache& cache) {
    const auto& speech_db = manifests.find(DatabaseKind::Speech, spec.speech_database);
    const auto& brir_db = manifests.find(DatabaseKind::Brir, spec.brir_database);

    const Audio& speech = cache.get(find_entry(speech_db, spec.utterance_id).path);
    require_rate(speech, "speech");
    if (!speech.mono()) throw DataError("speech must be mono: " + spec.utterance_id);

    const Audio& speech_brir = cache.get(find_entry(brir_db, spec.speech_brir_id).path);
    require_rate(speech_brir, "brir");
    if (!speech_brir.stereo()) throw DataError("brir must be stereo: " + spec.speech_brir_id);

    const BrirSplit split = split_brir(speech_brir, params.brir_boundary_ms);

    // Two-ear renders. All signals are conformed to a common length below.
    std::vector<double> target[2], late[2], external[2];
    for (int ch = 0; ch < 2; ++ch) {
        target[ch] = fft_convolve(speech.channels[0], split.early.channels[ch]);
        late[ch] = fft_convolve(speech.channels[0], split.late.channels[ch]);
    }

    for (const auto& src : spec.noise_sources) {
        const auto& noise_db = manifests.find(DatabaseKind::Noise, src.database);
        const Audio& recording = cache.get(find_entry(noise_db, src.recording_id).path);
        require_rate(recording, "noise");
        if (!recording.mono()) throw DataError("noise must be mono: " + src.recording_id);
        const Audio& nbrir = cache.get(find_entry(brir_db, src.brir_id).path);
        require_rate(nbrir, "brir");
        if (!nbrir.stereo()) throw DataError("brir must be stereo: " + src.brir_id);

        // Cut a segment as long as the utterance, wrapping around if the
        // allowed region is shorter.
        const std::size_t want = speech.length();
        const std::size_t rec_len = recording.length();
        if (rec_len == 0) throw DegenerateInputError("empty noise recording " + src.recording_id);
        const std::size_t start = static_cast<std::size_t>(std::llround(
                                      src.offset_s * static_cast<double>(kSampleRate))) %
                                  rec_len;
        std::vector<double> segment(want);
        for (std::size_t i = 0; i < want; ++i) {
            segment[i] = recording.channels[0][(start + i) % rec_len];
        }
        for (int ch = 0; ch < 2; ++ch) {
            add_padded(external[ch], fft_convolve(segment, nbrir.channels[ch]));
        }
    }

    std::size_t len = 0;
    for (int ch = 0; ch < 2; ++ch) {
        len = std::max({len, target[ch].size(), late[ch].size(), external[ch].size()});
    }
    for (int ch = 0; ch < 2; ++ch) {
        target[ch].resize(len, 0.0);
        late[ch].resize(len, 0.0);
        external[ch].resize(len, 0.0);
    }

    // Solve for the external-noise gain hitting the requested SNR on the
    // two-ear signals: E_n g^2 + 2 C g + (E_l - B) = 0 with B the noise
    // energy budget. Late reverb is part of the noise and is never scaled.
    const double e_target = energy2(target[0], target[1]);
    if (e_target <= 0.0) {
        throw DegenerateInputError("render_mixture: silent target for " + spec.id);
    }
    const double e_late = energy2(late[0], late[1]);
    const double e_ext = energy2(external[0], external[1]);
    double cross = 0.0;
    for (int ch = 0; ch < 2; ++ch) {
        for (std::size_t i = 0; i < len; ++i) cross += late[ch][i] * external[ch][i];
    }
    const double budget = e_target * std::pow(10.0, -spec.snr_db / 10.0);

    RenderedMixture out;
    if (e_ext <= 0.0) {
        out.gamma = 0.0;
        out.snr_infeasible = e_late > budget;
    } else {
        const double g_min = std::max(0.0, -cross / e_ext);
        const double e_min = e_late + 2.0 * g_min * cross + g_min * g_min * e_ext;
        if (e_min > budget) {
            out.gamma = 0.0;
            out.snr_infeasible = true;
        } else {
            const double disc = cross * cross - e_ext * (e_late - budget);
            out.gamma = (-cross + std::sqrt(std::max(0.0, disc))) / e_ext;
        }
    }

    std::vector<double> noise_st[2];
    for (int ch = 0; ch < 2; ++ch) {
        noise_st[ch].resize(len);
        for (std::size_t i = 0; i < len; ++i) {
            noise_st[ch][i] = late[ch][i] + out.gamma * external[ch][i];
        }
    }
    const double e_noise = energy2(noise_st[0], noise_st[1]);
    out.measured_snr_db = e_noise > 0.0
                              ? 10.0 * std::log10(e_target / e_noise)
                              : std::numeric_limits<double>::infinity();

    // Downmix per component, then form the mixture as an exact sum.
    out.target.resize(len);
    out.noise.resize(len);
    out.y.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
        out.target[i] = 0.5 * (target[0][i] + target[1][i]);
        out.noise[i] = 0.5 * (noise_st[0][i] + noise_st[1][i]);
        out.y[i] = out.target[i] + out.noise[i];
    }
    return out;
}

// ---- dataset index ---------------------------------------------------------------------

void save_index(const DatasetIndex& index, const std::string& path) {
    json doc;
    doc["fold"] = index.fold;
    doc["condition"] = index.condition;
    doc["seed"] = index.seed;
    doc["sample_rate"] = index.sample_rate;
    doc["train_databases"] = {
        {"speech", index.train_speech_databases},
        {"noise", index.train_noise_databases},
        {"brir", index.train_brir_databases},
    };
    json rows = json::array();
    const fs::path base = fs::path(path).parent_path();
    const auto relativize = [&](const std::string& p) -> std::string {
        std::error_code ec;
        const fs::path rel = fs::relative(p, base, ec);
        return (ec || rel.empty()) ? p : rel.string();
    };
    for (const auto& r : index.rows) {
        json row;
        row["id"] = r.id;
        row["mixture"] = relativize(r.mixture_path);
        row["target"] = relativize(r.target_path);
        row["noise"] = relativize(r.noise_path);
        row["snr_db"] = r.snr_db;
        row["measured_snr_db"] = r.measured_snr_db;
        row["gamma"] = r.gamma;
        row["snr_infeasible"] = r.snr_infeasible;
        row["speech_database"] = r.speech_database;
        row["utterance_id"] = r.utterance_id;
        row["brir_database"] = r.brir_database;
        row["room"] = r.room;
        rows.push_back(std::move(row));
    }
    doc["mixtures"] = std::move(rows);
    std::ofstream out(path);
    if (!out) throw DataError("save_index: cannot open " + path);
    out << doc.dump(2) << "\n";
}

DatasetIndex load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_index: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("load_index: bad JSON in " + path + ": " + e.what());
    }
    DatasetIndex index;
    const fs::path base = fs::path(path).parent_path();
    const auto resolve = [&](const std::string& p) -> std::string {
        const fs::path fp(p);
        return fp.is_absolute() ? p : (base / fp).string();
    };
    try {
        index.fold = doc.at("fold").get<std::size_t>();
        index.condition = doc.at("condition").get<std::string>();
        index.seed = doc.at("seed").get<std::uint64_t>();
        index.sample_rate = doc.value("sample_rate", kSampleRate);
        if (doc.contains("train_databases")) {
            const auto& td = doc.at("train_databases");
            index.train_speech_databases = td.value("speech", std::vector<std::string>{});
            index.train_noise_databases = td.value("noise", std::vector<std::string>{});
            index.train_brir_databases = td.value("brir", std::vector<std::string>{});
        }
        for (const auto& r : doc.at("mixtures")) {
            DatasetIndexRow row;
            row.id = r.at("id").get<std::string>();
            row.mixture_path = resolve(r.at("mixture").get<std::string>());
            row.target_path = resolve(r.at("target").get<std::string>());
            row.noise_path = resolve(r.at("noise").get<std::string>());
            row.snr_db = r.at("snr_db").get<double>();
            row.measured_snr_db = r.value("measured_snr_db", 0.0);
            row.gamma = r.value("gamma", 0.0);
            row.snr_infeasible = r.value("snr_infeasible", false);
            row.speech_database = r.value("speech_database", std::string{});
            row.utterance_id = r.value("utterance_id", std::string{});
            row.brir_database = r.value("brir_database", std::string{});
            row.room = r.value("room", std::string{});
            index.rows.push_back(std::move(row));
        }
    } catch (const json::exception& e) {
        throw DataError("load_index: missing field in " + path + ": " + e.what());
    }
    return index;
}

// ---- synthetic corpus ---------------------------------------------------------------------

namespace {

struct SpeechParams {
    double f0;
    double formant;
    double tilt;
};

constexpr SpeechParams kSpeechParams[kDatabasesPerKind] = {
    {110.0, 700.0, 0.8}, {150.0, 900.0, 1.0}, {200.0, 1100.0, 1.2},
    {130.0, 800.0, 0.9}, {175.0, 1000.0, 1.1},
};

// Noise spectral tilt (power ~ f^tilt) and amplitude-modulation depth/rate.
struct NoiseParams {
    double tilt;
    double am_depth;
    double am_rate_hz;
};

constexpr NoiseParams kNoiseParams[kDatabasesPerKind] = {
    {0.0, 0.0, 0.0},   {-1.0, 0.3, 0.4},  {-2.0, 0.2, 0.25},
    {1.0, 0.25, 0.6},  {-0.5, 0.35, 0.3},
};

constexpr double kBrirT60Base[kDatabasesPerKind] = {0.25, 0.35, 0.45, 0.30, 0.55};

std::vector<double> synth_utterance(Rng& rng, double duration_s, const SpeechParams& P) {
    const std::size_t n =
        static_cast<std::size_t>(std::lround(duration_s * static_cast<double>(kSampleRate)));
    std::vector<double> x(n, 0.0);

    std::size_t pos = static_cast<std::size_t>(
        std::lround((0.08 + 0.04 * rng.uniform()) * static_cast<double>(kSampleRate)));
    const std::size_t tail = static_cast<std::size_t>(0.08 * kSampleRate);
    std::size_t syllable = 0;

    while (true) {
        const double burst_s = rng.uniform(0.15, 0.35);
        double gap_s = rng.uniform(0.06, 0.18);
        if (++syllable % 4 == 0) gap_s += rng.uniform(0.20, 0.40);
        const std::size_t burst_n =
            static_cast<std::size_t>(std::lround(burst_s * static_cast<double>(kSampleRate)));
        if (pos + burst_n + tail >= n) break;

        const double f0 = P.f0 * (1.0 + 0.12 * (rng.uniform() - 0.5));
        const double amp = 0.5 + 0.5 * rng.uniform();
        const double vibrato_phase = 2.0 * std::numbers::pi * rng.uniform();

        // Harmonic stack shaped by a single formant-like resonance, band
        // limited well below Nyquist so analysis round trips are clean.
        std::vector<double> h_amp, h_phase;
        for (std::size_t h = 1; h * f0 < 6800.0; ++h) {
            const double f = static_cast<double>(h) * f0;
            const double res = 1.0 / (1.0 + std::pow((f - P.formant) / 280.0, 2.0));
            h_amp.push_back(amp * std::pow(static_cast<double>(h), -P.tilt) * res);
            h_phase.push_back(2.0 * std::numbers::pi * rng.uniform());
        }

        const std::size_t ramp = std::min<std::size_t>(
            static_cast<std::size_t>(0.02 * kSampleRate), burst_n / 4);
        double phase = 0.0;
        for (std::size_t i = 0; i < burst_n; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(kSampleRate);
            const double f_inst =
                f0 * (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * 5.0 * t + vibrato_phase));
            phase += 2.0 * std::numbers::pi * f_inst / static_cast<double>(kSampleRate);
            double v = 0.0;
            for (std::size_t h = 0; h < h_amp.size(); ++h) {
                v += h_amp[h] * std::sin(static_cast<double>(h + 1) * phase + h_phase[h]);
            }
            double env = 1.0;
            if (i < ramp) env = 0.5 * (1.0 - std::cos(std::numbers::pi * i / ramp));
            if (burst_n - 1 - i < ramp) {
                env = 0.5 * (1.0 - std::cos(std::numbers::pi * (burst_n - 1 - i) / ramp));
            }
            x[pos + i] += env * v;
        }
        pos += burst_n + static_cast<std::size_t>(
                             std::lround(gap_s * static_cast<double>(kSampleRate)));
        if (pos + tail >= n) break;
    }

    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (peak > 0.0) {
        for (double& v : x) v *= 0.3 / peak;
    }
    return x;
}

std::vector<double> synth_noise_recording(Rng& rng, double duration_s, const NoiseParams& P) {
    const std::size_t n =
        static_cast<std::size_t>(std::lround(duration_s * static_cast<double>(kSampleRate)));
    std::size_t n2 = 1;
    while (n2 < n) n2 <<= 1;

    // Shape white Gaussian noise in the frequency domain: power ~ f^tilt.
    std::vector<double> white(n2);
    for (auto& v : white) v = rng.normal();
    auto spec = rfft(white);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * static_cast<double>(kSampleRate) /
                         static_cast<double>(n2);
        if (f < 20.0) {
            spec[k] = 0.0;
        } else {
            spec[k] *= std::pow(f / 100.0, 0.5 * P.tilt);
        }
    }
    std::vector<double> shaped = irfft(spec, n2);
    shaped.resize(n);

    if (P.am_depth > 0.0) {
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(kSampleRate);
            shaped[i] *= 1.0 + P.am_depth *
                                   std::sin(2.0 * std::numbers::pi * P.am_rate_hz * t + phase);
        }
    }

    double rms = 0.0;
    for (double v : shaped) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(n));
    if (rms > 0.0) {
        for (double& v : shaped) v *= 0.08 / rms;
    }
    return shaped;
}

Audio synth_brir(Rng& rng, std::size_t db_index, std::size_t room, double angle_deg) {
    const double t60 =
        kBrirT60Base[db_index] * (1.0 + 0.12 * (static_cast<double>(room) - 1.0));
    const double angle = angle_deg * std::numbers::pi / 180.0;
    const std::size_t direct_n = 40 + 8 * room;
    const long itd = std::lround(0.00065 * std::sin(angle) * static_cast<double>(kSampleRate));
    const std::size_t delay_l = direct_n + static_cast<std::size_t>(std::max(0l, itd));
    const std::size_t delay_r = direct_n + static_cast<std::size_t>(std::max(0l, -itd));

    double g_l = 1.0 - 0.25 * std::sin(angle);
    double g_r = 1.0 + 0.25 * std::sin(angle);
    const double norm = std::sqrt(2.0 / (g_l * g_l + g_r * g_r));
    g_l *= norm;
    g_r *= norm;

    const std::size_t late_start =
        direct_n + static_cast<std::size_t>(0.012 * kSampleRate);
    const std::size_t tail_len = static_cast<std::size_t>(
        std::ceil(1.15 * t60 * static_cast<double>(kSampleRate)));
    const std::size_t len = late_start + tail_len;

    Audio ir;
    ir.sample_rate = kSampleRate;
    ir.channels.assign(2, std::vector<double>(len, 0.0));

    // Direct path: main tap plus a small adjacent tap (mild lowpass).
    ir.channels[0][delay_l] += g_l;
    ir.channels[0][delay_l + 1] += 0.3 * g_l;
    ir.channels[1][delay_r] += g_r;
    ir.channels[1][delay_r + 1] += 0.3 * g_r;

    // Sparse early reflections with per-ear jitter.
    const std::size_t n_refl = 5 + room;
    for (std::size_t k = 0; k < n_refl; ++k) {
        const double d_ms = rng.uniform(3.0, 40.0);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double amp = 0.4 * std::exp(-d_ms / 18.0) * rng.uniform(0.7, 1.0) * sign;
        const std::size_t base =
            direct_n + static_cast<std::size_t>(std::lround(d_ms / 1000.0 * kSampleRate));
        for (int ch = 0; ch < 2; ++ch) {
            const long jitter = static_cast<long>(rng.uniform_index(3)) - 1;
            const std::size_t at = static_cast<std::size_t>(
                std::max(1l, static_cast<long>(base) + jitter));
            if (at < len) ir.channels[ch][at] += amp * rng.uniform(0.85, 1.15);
        }
    }

    // Exponential late tail: amplitude envelope -60 dB at t60, independent
    // noise carriers per ear, energy normalized to a drawn direct-to-reverb
    // ratio. The ratio is kept high enough that every requested mixture SNR
    // in [-5, 10] dB stays feasible with the late reverb counted as noise.
    const double drr_db = rng.uniform(12.0, 18.0);
    const double e_direct = g_l * g_l + g_r * g_r;
    const double e_late_target = e_direct * std::pow(10.0, -drr_db / 10.0);
    std::vector<double> env(tail_len);
    for (std::size_t i = 0; i < tail_len; ++i) {
        env[i] = std::pow(10.0, -3.0 * static_cast<double>(i) /
                                    (t60 * static_cast<double>(kSampleRate)));
    }
    for (int ch = 0; ch < 2; ++ch) {
        std::vector<double> tail(tail_len);
        double e = 0.0;
        for (std::size_t i = 0; i < tail_len; ++i) {
            tail[i] = rng.normal() * env[i];
            e += tail[i] * tail[i];
        }
        const double scale = e > 0.0 ? std::sqrt(e_late_target / (2.0 * e)) : 0.0;
        for (std::size_t i = 0; i < tail_len; ++i) {
            ir.channels[ch][late_start + i] += scale * tail[i];
        }
    }
    return ir;
}

}  // namespace

DatabaseManifest synth_database(DatabaseKind kind, std::size_t db_index,
                                const std::string& out_dir, std::uint64_t seed,
                                const SynthScale& scale) {
    if (db_index >= kDatabasesPerKind) {
        throw ArgumentError("synth_database: db_index must be 0..4");
    }
    fs::create_directories(out_dir);

    DatabaseManifest manifest;
    manifest.kind = kind;
    manifest.name = std::string(kind_name(kind)) + "-" + std::to_string(db_index);

    const std::uint64_t db_seed = derive_seed(seed, manifest.name);

    if (kind == DatabaseKind::Speech) {
        for (std::size_t u = 0; u < scale.utterances_per_db; ++u) {
            Rng rng = derive_rng(db_seed, "utterance", u);
            const double dur = rng.uniform(scale.utterance_min_s, scale.utterance_max_s);
            const std::vector<double> x =
                synth_utterance(rng, dur, kSpeechParams[db_index]);
            char name[32];
            std::snprintf(name, sizeof name, "u%03zu.wav", u);
            const std::string path = (fs::path(out_dir) / name).string();
            Audio a;
            a.sample_rate = kSampleRate;
            a.channels.push_back(x);
            write_wav(path, a);
            ManifestEntry e;
            e.id = std::string(name, std::strlen(name) - 4);
            e.path = path;
            e.duration_s = static_cast<double>(x.size()) / static_cast<double>(kSampleRate);
            manifest.entries.push_back(std::move(e));
        }
    } else if (kind == DatabaseKind::Noise) {
        for (std::size_t r = 0; r < scale.recordings_per_db; ++r) {
            Rng rng = derive_rng(db_seed, "recording", r);
            const std::vector<double> x =
                synth_noise_recording(rng, scale.recording_s, kNoiseParams[db_index]);
            char name[32];
            std::snprintf(name, sizeof name, "n%03zu.wav", r);
            const std::string path = (fs::path(out_dir) / name).string();
            Audio a;
            a.sample_rate = kSampleRate;
            a.channels.push_back(x);
            write_wav(path, a);
            ManifestEntry e;
            e.id = std::string(name, std::strlen(name) - 4);
            e.path = path;
            e.duration_s = static_cast<double>(x.size()) / static_cast<double>(kSampleRate);
            manifest.entries.push_back(std::move(e));
        }
    } else {
        for (std::size_t room = 0; room < scale.rooms_per_db; ++room) {
            for (std::size_t a = 0; a < scale.angles_per_room; ++a) {
                const double angle =
                    -90.0 + 180.0 * static_cast<double>(a) /
                                static_cast<double>(scale.angles_per_room - 1);
                Rng rng = derive_rng(db_seed, "brir", room * 1000 + a);
                const Audio ir = synth_brir(rng, db_index, room, angle);
                char name[48];
                std::snprintf(name, sizeof name, "r%zu_a%+04d.wav", room,
                              static_cast<int>(std::lround(angle)));
                const std::string path = (fs::path(out_dir) / name).string();
                write_wav(path, ir);
                ManifestEntry e;
                e.id = std::string(name, std::strlen(name) - 4);
                e.path = path;
                e.duration_s =
                    static_cast<double>(ir.length()) / static_cast<double>(kSampleRate);
                e.room = "r" + std::to_string(room);
                e.angle_deg = angle;
                manifest.entries.push_back(std::move(e));
            }
        }
    }

    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace sediff
