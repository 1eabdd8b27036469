#include "sediff/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

#include "sediff/diffusion.hpp"
#include "sediff/errors.hpp"
#include "sediff/fft.hpp"
#include "sediff/parallel.hpp"
#include "sediff/wav.hpp"

namespace sediff {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- config parsing -----------------------------------------------------------

namespace {

double json_double(const json& v, const std::string& path) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigError("config: " + path + ": expected a number or \"inf\"/\"-inf\"");
    }
    if (!v.is_number()) throw ConfigError("config: " + path + ": expected a number");
    return v.get<double>();
}

std::uint64_t json_u64(const json& v, const std::string& path) {
    if (v.is_number_integer() && v.get<long long>() < 0) {
        throw ConfigError("config: " + path + ": must be non-negative");
    }
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError("config: " + path + ": expected an integer");
    }
    return v.get<std::uint64_t>();
}

std::size_t json_size(const json& v, const std::string& path) {
    return static_cast<std::size_t>(json_u64(v, path));
}

bool json_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError("config: " + path + ": expected a boolean");
    return v.get<bool>();
}

std::string json_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError("config: " + path + ": expected a string");
    return v.get<std::string>();
}

json num_or_inf(double v) {
    if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
    return json(v);
}

const char* sampler_kind_name(SamplerKind kind) {
    return kind == SamplerKind::PC ? "pc" : "edm";
}

SamplerKind sampler_kind_from(const std::string& s, const std::string& path) {
    if (s == "pc") return SamplerKind::PC;
    if (s == "edm") return SamplerKind::EDM;
    throw ConfigError("config: " + path + ": expected \"pc\" or \"edm\"");
}

void parse_schedule(const json& obj, ScheduleParams& p, const std::string& prefix) {
    for (const auto& [key, value] : obj.items()) {
        const std::string path = prefix + key;
        if (key == "nu") p.nu = json_double(value, path);
        else if (key == "lambda_min") p.lambda_min = json_double(value, path);
        else if (key == "beta_max") p.beta_max = json_double(value, path);
        else if (key == "t_end") p.t_end = json_double(value, path);
        else if (key == "t_eps") p.t_eps = json_double(value, path);
        else throw ConfigError("config: unknown key '" + path + "'");
    }
}

void parse_stft(const json& obj, StftConfig& c, const std::string& prefix) {
    for (const auto& [key, value] : obj.items()) {
        const std::string path = prefix + key;
        if (key == "frame_len") {
            c.frame_len = json_size(value, path);
            c.kept_bins = c.frame_len / 2;
        } else if (key == "hop") c.hop = json_size(value, path);
        else if (key == "amp_scale") c.amp_scale = json_double(value, path);
        else if (key == "compress_exp") c.compress_exp = json_double(value, path);
        else throw ConfigError("config: unknown key '" + path + "'");
    }
}

void parse_sampler(const json& obj, SamplerConfig& c, const std::string& prefix) {
    for (const auto& [key, value] : obj.items()) {
        const std::string path = prefix + key;
        if (key == "kind") c.kind = sampler_kind_from(json_string(value, path), path);
        else if (key == "n_steps") c.n_steps = json_size(value, path);
        else if (key == "r") c.r = json_double(value, path);
        else if (key == "n_corrector") c.n_corrector = json_size(value, path);
        else if (key == "predictor_noise") c.predictor_noise = json_bool(value, path);
        else if (key == "s_churn") c.s_churn = json_double(value, path);
        else if (key == "s_min") c.s_min = json_double(value, path);
        else if (key == "s_max") c.s_max = json_double(value, path);
        else if (key == "s_noise") c.s_noise = json_double(value, path);
        else if (key == "t_floor") c.t_floor = json_double(value, path);
        else throw ConfigError("config: unknown key '" + path + "'");
    }
}

void parse_mix(const json& obj, SimulateParams& p, const std::string& prefix) {
    for (const auto& [key, value] : obj.items()) {
        const std::string path = prefix + key;
        if (key == "snr_min_db") p.snr_min_db = json_double(value, path);
        else if (key == "snr_max_db") p.snr_max_db = json_double(value, path);
        else if (key == "min_noise_sources") p.min_noise_sources = json_size(value, path);
        else if (key == "max_noise_sources") p.max_noise_sources = json_size(value, path);
        else if (key == "brir_boundary_ms") p.brir_boundary_ms = json_double(value, path);
        else throw ConfigError("config: unknown key '" + path + "'");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    if (fold < 1 || fold > 5) throw ConfigError("config: fold must be in 1..5");
    if (n_train_databases != 1 && n_train_databases != 4) {
        throw ConfigError("config: n_train_databases must be 1 or 4");
    }
    if (!(hours > 0.0)) throw ConfigError("config: hours must be positive");
    schedule.validate();
    stft.validate();
    sampler.validate();
    if (denoiser.empty()) throw ConfigError("config: denoiser must be set");
    if (!(sigma_data > 0.0)) throw ConfigError("config: sigma_data must be positive");
    if (n_sigma_bins < 2) throw ConfigError("config: n_sigma_bins must be >= 2");
    if (fit_samples < 1) throw ConfigError("config: fit_samples must be >= 1");
    if (fit_mixture_cap < 1) throw ConfigError("config: fit_mixture_cap must be >= 1");
    if (mix.min_noise_sources < 1 || mix.min_noise_sources > mix.max_noise_sources) {
        throw ConfigError("config: bad noise source range");
    }
    if (!(mix.snr_min_db <= mix.snr_max_db)) {
        throw ConfigError("config: mix.snr_min_db > mix.snr_max_db");
    }
    if (!(mix.brir_boundary_ms > 0.0)) {
        throw ConfigError("config: mix.brir_boundary_ms must be positive");
    }
}

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + origin + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: " + origin + ": expected an object");

    ExperimentConfig c;
    for (const auto& [key, value] : doc.items()) {
        if (key == "seed") c.seed = json_u64(value, key);
        else if (key == "data_dir") c.data_dir = json_string(value, key);
        else if (key == "fold") c.fold = json_size(value, key);
        else if (key == "n_train_databases") c.n_train_databases = json_size(value, key);
        else if (key == "hours") c.hours = json_double(value, key);
        else if (key == "schedule") parse_schedule(value, c.schedule, "schedule.");
        else if (key == "stft") parse_stft(value, c.stft, "stft.");
        else if (key == "sampler") parse_sampler(value, c.sampler, "sampler.");
        else if (key == "denoiser") c.denoiser = json_string(value, key);
        else if (key == "sigma_data") c.sigma_data = json_double(value, key);
        else if (key == "n_sigma_bins") c.n_sigma_bins = json_size(value, key);
        else if (key == "fit_samples") c.fit_samples = json_size(value, key);
        else if (key == "fit_mixture_cap") c.fit_mixture_cap = json_size(value, key);
        else if (key == "mix") parse_mix(value, c.mix, "mix.");
        else if (key == "pesq_command") c.pesq_command = json_string(value, key);
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_json(buf.str(), path);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["data_dir"] = c.data_dir;
    j["fold"] = c.fold;
    j["n_train_databases"] = c.n_train_databases;
    j["hours"] = c.hours;
    j["schedule"] = {{"nu", c.schedule.nu},
                     {"lambda_min", c.schedule.lambda_min},
                     {"beta_max", c.schedule.beta_max},
                     {"t_end", c.schedule.t_end},
                     {"t_eps", c.schedule.t_eps}};
    j["stft"] = {{"frame_len", c.stft.frame_len},
                 {"hop", c.stft.hop},
                 {"amp_scale", c.stft.amp_scale},
                 {"compress_exp", c.stft.compress_exp}};
    j["sampler"] = {{"kind", sampler_kind_name(c.sampler.kind)},
                    {"n_steps", c.sampler.n_steps},
                    {"r", c.sampler.r},
                    {"n_corrector", c.sampler.n_corrector},
                    {"predictor_noise", c.sampler.predictor_noise},
                    {"s_churn", num_or_inf(c.sampler.s_churn)},
                    {"s_min", num_or_inf(c.sampler.s_min)},
                    {"s_max", num_or_inf(c.sampler.s_max)},
                    {"s_noise", c.sampler.s_noise},
                    {"t_floor", c.sampler.t_floor}};
    j["denoiser"] = c.denoiser;
    j["sigma_data"] = c.sigma_data;
    j["n_sigma_bins"] = c.n_sigma_bins;
    j["fit_samples"] = c.fit_samples;
    j["fit_mixture_cap"] = c.fit_mixture_cap;
    j["mix"] = {{"snr_min_db", c.mix.snr_min_db},
                {"snr_max_db", c.mix.snr_max_db},
                {"min_noise_sources", c.mix.min_noise_sources},
                {"max_noise_sources", c.mix.max_noise_sources},
                {"brir_boundary_ms", c.mix.brir_boundary_ms}};
    j["pesq_command"] = c.pesq_command;
    return j;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a64(config_to_json(config).dump());
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
    const auto as_double = [&]() -> double {
        if (value == "inf") return std::numeric_limits<double>::infinity();
        if (value == "-inf") return -std::numeric_limits<double>::infinity();
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: override " + key + "=" + value + ": bad number");
        }
    };
    const auto as_size = [&]() -> std::size_t {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw ConfigError("config: override " + key + "=" + value + ": bad integer");
        }
    };
    const auto as_bool = [&]() -> bool {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw ConfigError("config: override " + key + "=" + value + ": bad boolean");
    };

    if (key == "seed") c.seed = as_size();
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "fold") c.fold = as_size();
    else if (key == "n_train_databases") c.n_train_databases = as_size();
    else if (key == "hours") c.hours = as_double();
    else if (key == "schedule.nu") c.schedule.nu = as_double();
    else if (key == "schedule.lambda_min") c.schedule.lambda_min = as_double();
    else if (key == "schedule.beta_max") c.schedule.beta_max = as_double();
    else if (key == "schedule.t_eps") c.schedule.t_eps = as_double();
    else if (key == "stft.frame_len") {
        c.stft.frame_len = as_size();
        c.stft.kept_bins = c.stft.frame_len / 2;
    } else if (key == "stft.hop") c.stft.hop = as_size();
    else if (key == "stft.amp_scale") c.stft.amp_scale = as_double();
    else if (key == "stft.compress_exp") c.stft.compress_exp = as_double();
    else if (key == "sampler.kind") c.sampler.kind = sampler_kind_from(value, key);
    else if (key == "sampler.n_steps") c.sampler.n_steps = as_size();
    else if (key == "sampler.r") c.sampler.r = as_double();
    else if (key == "sampler.n_corrector") c.sampler.n_corrector = as_size();
    else if (key == "sampler.predictor_noise") c.sampler.predictor_noise = as_bool();
    else if (key == "sampler.s_churn") c.sampler.s_churn = as_double();
    else if (key == "sampler.s_min") c.sampler.s_min = as_double();
    else if (key == "sampler.s_max") c.sampler.s_max = as_double();
    else if (key == "sampler.s_noise") c.sampler.s_noise = as_double();
    else if (key == "sampler.t_floor") c.sampler.t_floor = as_double();
    else if (key == "denoiser") c.denoiser = value;
    else if (key == "sigma_data") c.sigma_data = as_double();
    else if (key == "n_sigma_bins") c.n_sigma_bins = as_size();
    else if (key == "fit_samples") c.fit_samples = as_size();
    else if (key == "fit_mixture_cap") c.fit_mixture_cap = as_size();
    else if (key == "mix.snr_min_db") c.mix.snr_min_db = as_double();
    else if (key == "mix.snr_max_db") c.mix.snr_max_db = as_double();
    else if (key == "mix.min_noise_sources") c.mix.min_noise_sources = as_size();
    else if (key == "mix.max_noise_sources") c.mix.max_noise_sources = as_size();
    else if (key == "mix.brir_boundary_ms") c.mix.brir_boundary_ms = as_double();
    else if (key == "pesq_command") c.pesq_command = value;
    else throw ConfigError("config: unknown override key '" + key + "'");
}

// ---- shared plumbing --------------------------------------------------------------

ManifestSet ensure_corpus(const ExperimentConfig& config) {
    const std::uint64_t corpus_seed = derive_seed(config.seed, "corpus");
    std::vector<std::string> paths;
    for (DatabaseKind kind :
         {DatabaseKind::Speech, DatabaseKind::Noise, DatabaseKind::Brir}) {
        for (std::size_t i = 0; i < 5; ++i) {
            const fs::path dir = fs::path(config.data_dir) /
                                 (std::string(kind_name(kind)) + "-" + std::to_string(i));
            const fs::path manifest = dir / "manifest.json";
            if (!fs::exists(manifest)) {
                synth_database(kind, i, dir.string(), corpus_seed);
            }
            paths.push_back(manifest.string());
        }
    }
    return load_manifest_set(paths);
}

ComplexSpectrogram analysis(const std::vector<double>& x, const StftConfig& cfg) {
    return compress(stft(x, cfg), cfg);
}

std::vector<double> synthesis(const ComplexSpectrogram& c, const StftConfig& cfg,
                              std::size_t out_len) {
    return istft(decompress(c, cfg), cfg, out_len);
}

namespace {

ComplexSpectrogram spectrogram_difference(const ComplexSpectrogram& a,
                                          const ComplexSpectrogram& b) {
    check_same_shape(a, b, "spectrogram difference");
    ComplexSpectrogram out = a;
    for (std::size_t i = 0; i < out.coeffs.size(); ++i) out.coeffs[i] -= b.coeffs[i];
    return out;
}

void write_mono_wav(const std::string& path, const std::vector<double>& x) {
    Audio a;
    a.sample_rate = 16000;
    a.channels.push_back(x);
    write_wav(path, a);
}

std::vector<double> read_mono_wav(const std::string& path) {
    const Audio a = read_wav(path);
    if (!a.mono()) throw DataError("expected mono WAV: " + path);
    return a.channels[0];
}

}  // namespace

DenoisePair make_pair(const RenderedMixture& mix, const StftConfig& cfg) {
    const ComplexSpectrogram ys = analysis(mix.y, cfg);
    const ComplexSpectrogram ts = analysis(mix.target, cfg);
    return DenoisePair{spectrogram_difference(ys, ts), ys};
}

EnhanceRun enhance_waveform(const std::vector<double>& y, const DenoiserModel& model,
                            const SamplerConfig& sampler, const ScheduleParams& schedule,
                            const StftConfig& stft_cfg, Rng& rng) {
    const ComplexSpectrogram ys = analysis(y, stft_cfg);
    SampleResult result = run_sampler(model, ys, sampler, schedule, rng);
    const ComplexSpectrogram enhanced = enhance(ys, result.n0_hat);
    EnhanceRun out;
    out.estimate = synthesis(enhanced, stft_cfg, y.size());
    out.diagnostics = result.diagnostics;
    return out;
}

std::shared_ptr<const DenoiserModel> load_denoiser(const ExperimentConfig& config) {
    if (config.denoiser == "oracle") {
        throw ConfigError(
            "denoiser 'oracle' is constructed per mixture; this command resolves it "
            "internally");
    }
    if (config.denoiser == "gaussian") {
        return std::make_shared<GaussianDenoiser>(config.sigma_data);
    }
    if (!fs::exists(config.denoiser)) {
        throw DataError("denoiser model file not found: " + config.denoiser);
    }
    return std::make_shared<LinearDenoiser>(LinearDenoiser::load(config.denoiser));
}

void write_run_report(const std::string& path, const std::string& command,
                      const ExperimentConfig& config, const json& payload) {
    json doc;
    doc["command"] = command;
    doc["config"] = config_to_json(config);
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    doc["config_hash"] = hex;
    doc["payload"] = payload;
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report " + path);
    out << doc.dump(2) << "\n";
}

// ---- simulate ------------------------------------------------------------------------

std::vector<std::string> run_simulate(const ExperimentConfig& config,
                                      const std::string& out_dir) {
    config.validate();
    const ManifestSet set = ensure_corpus(config);
    const auto folds =
        build_folds(set, config.n_train_databases, derive_seed(config.seed, "folds"));
    const FoldPlan& fold = folds.at(config.fold - 1);

    AudioCache cache;
    std::vector<std::string> index_paths;
    json payload;
    for (Condition condition :
         {Condition::Train, Condition::MatchedTest, Condition::MismatchedTest}) {
        const std::string cname = condition_name(condition);
        const double target_seconds = condition == Condition::Train
                                          ? config.hours * 3600.0
                                          : config.hours * 360.0;
        const auto specs = draw_mixture_specs(
            set, fold, condition, config.mix, target_seconds,
            derive_seed(config.seed, "specs-" + cname + "-fold" + std::to_string(config.fold)));

        const fs::path dir = fs::path(out_dir) / cname;
        fs::create_directories(dir);

        DatasetIndex index;
        index.fold = config.fold;
        index.condition = cname;
        index.seed = config.seed;
        const auto names_of = [](const std::vector<DbSplit>& splits) {
            std::vector<std::string> names;
            names.reserve(splits.size());
            for (const auto& s : splits) names.push_back(s.database);
            std::sort(names.begin(), names.end());
            return names;
        };
        index.train_speech_databases = names_of(fold.speech);
        index.train_noise_databases = names_of(fold.noise);
        index.train_brir_databases = names_of(fold.brir);
        index.rows.resize(specs.size());

        std::vector<std::string> errors(specs.size());
        parallel_for_each(specs.size(), [&](std::size_t i) {
            try {
                const MixtureSpec& spec = specs[i];
                const RenderedMixture mix = render_mixture(spec, set, config.mix, cache);
                const std::string y_path = (dir / (spec.id + ".wav")).string();
                const std::string t_path = (dir / (spec.id + "_target.wav")).string();
                const std::string n_path = (dir / (spec.id + "_noise.wav")).string();
                write_mono_wav(y_path, mix.y);
                write_mono_wav(t_path, mix.target);
                write_mono_wav(n_path, mix.noise);
                DatasetIndexRow& row = index.rows[i];
                row.id = spec.id;
                row.mixture_path = y_path;
                row.target_path = t_path;
                row.noise_path = n_path;
                row.snr_db = spec.snr_db;
                row.measured_snr_db = mix.measured_snr_db;
                row.gamma = mix.gamma;
                row.snr_infeasible = mix.snr_infeasible;
                row.speech_database = spec.speech_database;
                row.utterance_id = spec.utterance_id;
                row.brir_database = spec.brir_database;
                row.room = spec.room;
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });
        for (const auto& e : errors) {
            if (!e.empty()) throw DataError("simulate: " + e);
        }

        const std::string index_path = (dir / "index.json").string();
        save_index(index, index_path);
        index_paths.push_back(index_path);

        std::size_t infeasible = 0;
        for (const auto& row : index.rows) {
            if (row.snr_infeasible) ++infeasible;
        }
        json cond;
        cond["n_mixtures"] = index.rows.size();
        cond["n_snr_infeasible"] = infeasible;
        cond["index"] = index_path;
        payload[cname] = std::move(cond);
        std::cout << "simulate: " << cname << ": " << index.rows.size()
                  << " mixtures -> " << index_path << "\n";
    }
    write_run_report((fs::path(out_dir) / "simulate_report.json").string(), "simulate",
                     config, payload);
    return index_paths;
}

// ---- fit -----------------------------------------------------------------------------

namespace {

// Loads mixture/target WAVs for up to `cap` rows and builds compressed-domain
// pairs.
std::vector<DenoisePair> pairs_from_index(const DatasetIndex& index, std::size_t cap,
                                          const StftConfig& cfg) {
    const std::size_t n = std::min(index.rows.size(), cap);
    if (n == 0) throw DataError("dataset index has no mixtures");
    std::vector<DenoisePair> pairs(n);
    std::vector<std::string> errors(n);
    parallel_for_each(n, [&](std::size_t i) {
        try {
            const auto& row = index.rows[i];
            const std::vector<double> y = read_mono_wav(row.mixture_path);
            const std::vector<double> t = read_mono_wav(row.target_path);
            if (y.size() != t.size()) {
                throw DimensionError("mixture/target length mismatch for " + row.id);
            }
            const ComplexSpectrogram ys = analysis(y, cfg);
            const ComplexSpectrogram ts = analysis(t, cfg);
            pairs[i] = DenoisePair{spectrogram_difference(ys, ts), ys};
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) throw DataError(e);
    }
    return pairs;
}

double measured_sigma_data(const std::vector<DenoisePair>& pairs) {
    std::vector<const ComplexSpectrogram*> n0s;
    n0s.reserve(pairs.size());
    for (const auto& p : pairs) n0s.push_back(&p.n0);
    return std::sqrt(coefficient_variance(n0s));
}

}  // namespace

FitSummary run_fit(const ExperimentConfig& config, const std::string& index_path,
                   const std::string& model_path, const std::string& report_path) {
    config.validate();
    const DatasetIndex index = load_index(index_path);
    const std::vector<DenoisePair> pairs =
        pairs_from_index(index, config.fit_mixture_cap, config.stft);

    Rng rng = derive_rng(config.seed, "fit");
    const LinearFit fit =
        fit_linear_denoiser(pairs, config.schedule, config.n_sigma_bins, rng,
                            config.fit_samples, Preconditioning{config.sigma_data});

    const fs::path parent = fs::path(model_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    fit.model->save(model_path);

    FitSummary summary;
    summary.model_path = model_path;
    summary.sigma_data_measured = measured_sigma_data(pairs);
    summary.mean_weighted_residual = fit.diagnostics.mean_weighted_residual;
    summary.n_pairs = pairs.size();

    json payload;
    payload["model"] = model_path;
    payload["index"] = index_path;
    payload["n_pairs"] = summary.n_pairs;
    payload["sigma_data_configured"] = config.sigma_data;
    payload["sigma_data_measured"] = summary.sigma_data_measured;
    payload["mean_weighted_residual"] = summary.mean_weighted_residual;
    payload["bin_draws"] = fit.diagnostics.bin_draws;
    payload["inherited_from"] = fit.diagnostics.inherited_from;
    json fallback = json::array();
    for (bool b : fit.diagnostics.wiener_fallback) fallback.push_back(b);
    payload["wiener_fallback"] = std::move(fallback);
    write_run_report(report_path, "fit", config, payload);

    std::cout << "fit: " << pairs.size() << " pairs, measured sigma_data "
              << summary.sigma_data_measured << " -> " << model_path << "\n";
    return summary;
}

// ---- enhance -------------------------------------------------------------------------

namespace {

std::string enhance_stream_label(const std::string& id, const SamplerConfig& sampler) {
    return "enhance:" + id + ":" + sampler_kind_name(sampler.kind) + ":" +
           std::to_string(sampler.n_steps);
}

}  // namespace

EnhanceSummary run_enhance(const ExperimentConfig& config, const std::string& index_path,
                           const std::string& out_dir, const std::string& report_path) {
    config.validate();
    const DatasetIndex index = load_index(index_path);
    if (index.rows.empty()) throw DataError("enhance: empty dataset index");
    fs::create_directories(out_dir);

    const bool oracle = config.denoiser == "oracle";
    std::shared_ptr<const DenoiserModel> shared_model;
    if (!oracle) shared_model = load_denoiser(config);

    const std::size_t n = index.rows.size();
    std::vector<json> per_mixture(n);
    std::atomic<std::size_t> n_ok{0};
    std::atomic<std::size_t> n_failed{0};
    std::atomic<std::uint64_t> total_evals{0};

    parallel_for_each(n, [&](std::size_t i) {
        const auto& row = index.rows[i];
        json entry;
        entry["id"] = row.id;
        try {
            const std::vector<double> y = read_mono_wav(row.mixture_path);
            std::shared_ptr<const DenoiserModel> model = shared_model;
            if (oracle) {
                const std::vector<double> t = read_mono_wav(row.target_path);
                const ComplexSpectrogram ys = analysis(y, config.stft);
                const ComplexSpectrogram ts = analysis(t, config.stft);
                std::vector<ComplexSpectrogram> atoms{spectrogram_difference(ys, ts)};
                model = std::make_shared<OracleDenoiser>(std::move(atoms));
            }
            Rng rng = derive_rng(config.seed, enhance_stream_label(row.id, config.sampler));
            const EnhanceRun run = enhance_waveform(y, *model, config.sampler,
                                                    config.schedule, config.stft, rng);
            write_mono_wav((fs::path(out_dir) / (row.id + ".wav")).string(), run.estimate);
            entry["denoiser_evals"] = run.diagnostics.denoiser_evals;
            entry["corrector_skips"] = run.diagnostics.corrector_skips;
            entry["sigma_clips"] = run.diagnostics.sigma_clips;
            total_evals += run.diagnostics.denoiser_evals;
            ++n_ok;
        } catch (const Error& e) {
            entry["error"] = e.what();
            ++n_failed;
        }
        per_mixture[i] = std::move(entry);
    });

    EnhanceSummary summary;
    summary.n_ok = n_ok;
    summary.n_failed = n_failed;
    summary.mean_denoiser_evals =
        summary.n_ok == 0 ? 0.0
                          : static_cast<double>(total_evals.load()) /
                                static_cast<double>(summary.n_ok);

    json payload;
    payload["index"] = index_path;
    payload["output_dir"] = out_dir;
    payload["denoiser"] = config.denoiser;
    payload["n_ok"] = summary.n_ok;
    payload["n_failed"] = summary.n_failed;
    payload["mean_denoiser_evals"] = summary.mean_denoiser_evals;
    payload["per_mixture"] = json(per_mixture);
    write_run_report(report_path, "enhance", config, payload);

    std::cout << "enhance: " << summary.n_ok << "/" << n << " mixtures -> " << out_dir
              << " (mean " << summary.mean_denoiser_evals << " denoiser evals)\n";
    return summary;
}

// ---- evaluate ------------------------------------------------------------------------

BatchResult run_evaluate(const ExperimentConfig& config, const std::string& index_path,
                         const std::string& enhanced_dir, const std::string& csv_path,
                         const std::string& report_path) {
    config.validate();
    const DatasetIndex index = load_index(index_path);
    PesqHook hook{config.pesq_command};
    const BatchResult result = evaluate_batch(index, enhanced_dir, hook);
    write_scores_csv(result, csv_path);

    double mean_delta_snr = 0.0, mean_delta_estoi = 0.0;
    for (const auto& r : result.rows) {
        mean_delta_snr += r.snr_delta_db;
        mean_delta_estoi += r.estoi_out - r.estoi_in;
    }
    if (!result.rows.empty()) {
        mean_delta_snr /= static_cast<double>(result.rows.size());
        mean_delta_estoi /= static_cast<double>(result.rows.size());
    }

    json payload;
    payload["index"] = index_path;
    payload["enhanced_dir"] = enhanced_dir;
    payload["csv"] = csv_path;
    payload["n_scored"] = result.rows.size();
    payload["missing"] = result.missing;
    payload["mean_delta_snr_db"] = mean_delta_snr;
    payload["mean_delta_estoi"] = mean_delta_estoi;
    write_run_report(report_path, "evaluate", config, payload);

    std::cout << "evaluate: " << result.rows.size() << " mixtures scored ("
              << result.missing.size() << " missing) -> " << csv_path
              << "; mean dSNR " << mean_delta_snr << " dB, mean dESTOI "
              << mean_delta_estoi << "\n";
    return result;
}

// ---- sweep ---------------------------------------------------------------------------

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "sampler,n_steps,condition,n_mixtures,mean_snr_in_db,mean_snr_out_db,"
           "mean_delta_snr_db,mean_estoi_in,mean_estoi_out,denoiser_evals\n";
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        out << r.sampler << ',' << r.n_steps << ',' << r.condition << ','
            << r.n_mixtures << ',' << num(r.mean_snr_in_db) << ','
            << num(r.mean_snr_out_db) << ',' << num(r.mean_delta_snr_db) << ','
            << num(r.mean_estoi_in) << ',' << num(r.mean_estoi_out) << ','
            << r.denoiser_evals << '\n';
    }
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& out_dir) {
    config.validate();
    fs::create_directories(out_dir);
    const ManifestSet set = ensure_corpus(config);
    const auto folds =
        build_folds(set, config.n_train_databases, derive_seed(config.seed, "folds"));
    const FoldPlan& fold = folds.at(config.fold - 1);
    AudioCache cache;

    // Test mixtures, rendered once and kept in the time domain; spectrograms
    // are recomputed per sampler configuration.
    struct TestMixture {
        std::string id;
        std::vector<double> y, target;
        double snr_in_db = 0.0;
        double estoi_in = 0.0;
    };
    std::vector<std::pair<std::string, std::vector<TestMixture>>> conditions;
    for (Condition condition : {Condition::MatchedTest, Condition::MismatchedTest}) {
        const std::string cname = condition_name(condition);
        const auto specs = draw_mixture_specs(
            set, fold, condition, config.mix, config.hours * 360.0,
            derive_seed(config.seed, "specs-" + cname + "-fold" + std::to_string(config.fold)));
        std::vector<TestMixture> mixtures(specs.size());
        std::vector<std::string> errors(specs.size());
        parallel_for_each(specs.size(), [&](std::size_t i) {
            try {
                RenderedMixture mix = render_mixture(specs[i], set, config.mix, cache);
                TestMixture& tm = mixtures[i];
                tm.id = specs[i].id;
                tm.snr_in_db = snr_db(mix.target, mix.y);
                tm.estoi_in = estoi(mix.target, mix.y, 16000);
                tm.y = std::move(mix.y);
                tm.target = std::move(mix.target);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });
        for (const auto& e : errors) {
            if (!e.empty()) throw DataError("sweep: " + e);
        }
        conditions.emplace_back(cname, std::move(mixtures));
    }

    // Denoiser: "fit" trains the linear model on freshly rendered training
    // mixtures; "oracle" builds one single-atom model per mixture below.
    const bool oracle = config.denoiser == "oracle";
    std::shared_ptr<const DenoiserModel> base_model;
    if (config.denoiser == "fit") {
        const auto train_specs = draw_mixture_specs(
            set, fold, Condition::Train, config.mix, config.hours * 3600.0,
            derive_seed(config.seed, "specs-train-fold" + std::to_string(config.fold)));
        const std::size_t n_train = std::min(train_specs.size(), config.fit_mixture_cap);
        std::vector<DenoisePair> pairs(n_train);
        std::vector<std::string> errors(n_train);
        parallel_for_each(n_train, [&](std::size_t i) {
            try {
                const RenderedMixture mix =
                    render_mixture(train_specs[i], set, config.mix, cache);
                pairs[i] = make_pair(mix, config.stft);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });
        for (const auto& e : errors) {
            if (!e.empty()) throw DataError("sweep fit: " + e);
        }
        Rng rng = derive_rng(config.seed, "fit");
        LinearFit fit =
            fit_linear_denoiser(pairs, config.schedule, config.n_sigma_bins, rng,
                                config.fit_samples, Preconditioning{config.sigma_data});
        base_model = fit.model;
        std::cout << "sweep: fitted linear denoiser on " << n_train << " mixtures\n";
    } else if (!oracle) {
        base_model = load_denoiser(config);
    }

    const std::size_t step_grid[] = {4, 8, 16, 32, 64};
    std::vector<SweepRow> rows;
    for (SamplerKind kind : {SamplerKind::PC, SamplerKind::EDM}) {
        for (std::size_t n_steps : step_grid) {
            SamplerConfig sampler = config.sampler;
            sampler.kind = kind;
            sampler.n_steps = n_steps;
            for (const auto& [cname, mixtures] : conditions) {
                SweepRow row;
                row.sampler = sampler_kind_name(kind);
                row.n_steps = n_steps;
                row.condition = cname;
                row.n_mixtures = mixtures.size();

                std::vector<double> delta(mixtures.size());
                std::vector<double> snr_out(mixtures.size());
                std::vector<double> estoi_out(mixtures.size());
                std::vector<std::size_t> evals(mixtures.size());
                std::vector<std::string> errors(mixtures.size());
                parallel_for_each(mixtures.size(), [&](std::size_t i) {
                    try {
                        const TestMixture& tm = mixtures[i];
                        std::shared_ptr<const DenoiserModel> model = base_model;
                        if (oracle) {
                            const ComplexSpectrogram ys = analysis(tm.y, config.stft);
                            const ComplexSpectrogram ts = analysis(tm.target, config.stft);
                            std::vector<ComplexSpectrogram> atoms{
                                spectrogram_difference(ys, ts)};
                            model = std::make_shared<OracleDenoiser>(std::move(atoms));
                        }
                        Rng rng = derive_rng(config.seed,
                                             enhance_stream_label(tm.id, sampler));
                        const EnhanceRun run = enhance_waveform(
                            tm.y, *model, sampler, config.schedule, config.stft, rng);
                        snr_out[i] = snr_db(tm.target, run.estimate);
                        delta[i] = snr_out[i] - tm.snr_in_db;
                        estoi_out[i] = estoi(tm.target, run.estimate, 16000);
                        evals[i] = run.diagnostics.denoiser_evals;
                    } catch (const Error& e) {
                        errors[i] = e.what();
                    }
                });
                for (const auto& e : errors) {
                    if (!e.empty()) throw DataError("sweep: " + e);
                }

                double sum_in = 0.0, sum_out = 0.0, sum_delta = 0.0;
                double sum_ei = 0.0, sum_eo = 0.0;
                for (std::size_t i = 0; i < mixtures.size(); ++i) {
                    sum_in += mixtures[i].snr_in_db;
                    sum_out += snr_out[i];
                    sum_delta += delta[i];
                    sum_ei += mixtures[i].estoi_in;
                    sum_eo += estoi_out[i];
                }
                const double m = static_cast<double>(mixtures.size());
                row.mean_snr_in_db = sum_in / m;
                row.mean_snr_out_db = sum_out / m;
                row.mean_delta_snr_db = sum_delta / m;
                row.mean_estoi_in = sum_ei / m;
                row.mean_estoi_out = sum_eo / m;
                row.denoiser_evals = evals.empty() ? 0 : evals[0];
                rows.push_back(std::move(row));
                std::cout << "sweep: " << sampler_kind_name(kind) << " n=" << n_steps
                          << " " << cname << ": mean dSNR "
                          << rows.back().mean_delta_snr_db << " dB\n";
            }
        }
    }

    const std::string csv_path = (fs::path(out_dir) / "sweep.csv").string();
    write_sweep_csv(rows, csv_path);
    json payload;
    payload["csv"] = csv_path;
    payload["n_rows"] = rows.size();
    write_run_report((fs::path(out_dir) / "sweep_report.json").string(), "sweep", config,
                     payload);
    return rows;
}

// ---- schedule dump ---------------------------------------------------------------------

void run_schedule_dump(const ExperimentConfig& config, std::size_t points,
                       const std::string& out_path) {
    if (points < 2) throw ArgumentError("schedule dump: need at least 2 points");
    config.schedule.validate();
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write " + out_path);
    out << "t,lambda,sigma,scale,beta,drift_coeff,diffusion_coeff,no_noise,"
           "lambda_clamped,beta_clamped\n";
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < points; ++i) {
        const double t = config.schedule.t_end * static_cast<double>(i) /
                         static_cast<double>(points - 1);
        const SchedulePoint p = eval_point(config.schedule, t);
        // lambda diverges to +inf as t -> 0; print it as such rather than the
        // meaningless stored value.
        out << num(p.t) << ',' << (p.no_noise ? "inf" : num(p.lambda)) << ','
            << num(p.sigma) << ',' << num(p.scale) << ',' << num(p.beta) << ','
            << num(p.drift_coeff) << ',' << num(p.diffusion_coeff) << ','
            << (p.no_noise ? 1 : 0) << ',' << (p.lambda_clamped ? 1 : 0) << ','
            << (p.beta_clamped ? 1 : 0) << '\n';
    }
    std::cout << "schedule dump: " << points << " points -> " << out_path << "\n";
}

// ---- selftest ------------------------------------------------------------------------

namespace {

struct SelftestContext {
    std::size_t passed = 0;
    std::vector<std::string> failures;

    void check(const std::string& name, bool ok) {
        if (ok) {
            ++passed;
            std::cout << "ok - " << name << "\n";
        } else {
            failures.push_back(name);
            std::cout << "FAIL - " << name << "\n";
        }
    }
};

}  // namespace

void run_selftest(const ExperimentConfig&) {
    // Fast invariant checks on default parameters; independent of the loaded
    // config so the command always checks the same contract.
    SelftestContext ctx;
    const ScheduleParams sched{};

    ctx.check("log-snr spot value at t=0.5",
              std::abs(eval_point(sched, 0.5).lambda - 3.0) < 1e-12);

    {
        bool ok = true;
        for (int i = 1; i < 200; ++i) {
            const double t = 0.88 * i / 200.0;
            const double a = beta_raw_tan_form(sched, t);
            const double b = beta_raw_cosecant_form(sched, t);
            if (std::abs(a - b) > 1e-10 * std::max(1.0, std::abs(a))) ok = false;
        }
        ctx.check("rate dual forms agree", ok);
    }

    {
        bool ok = true;
        for (int i = 1; i <= 9; ++i) {
            const double t = i / 10.0;
            const double sigma = eval_point(sched, t).sigma;
            if (std::abs(sigma_inverse(sched, sigma) - t) > 1e-9) ok = false;
        }
        ctx.check("noise level inverse round trip", ok);
    }

    {
        Rng rng(7);
        std::vector<std::complex<double>> v(256);
        for (auto& z : v) z = rng.complex_normal();
        auto w = v;
        fft_inplace(w, false);
        fft_inplace(w, true);
        double err = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(w[i] - v[i]));
        ctx.check("fft round trip", err < 1e-12);
    }

    {
        StftConfig cfg{};
        Rng rng(11);
        std::vector<double> x(16000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = std::sin(2.0 * std::numbers::pi * 441.0 * static_cast<double>(i) / 16000.0) +
                   0.3 * std::sin(2.0 * std::numbers::pi * 1234.5 * static_cast<double>(i) / 16000.0);
        }
        const auto spec = stft(x, cfg);
        const auto back = istft(spec, cfg, x.size());
        double num = 0.0, den = 0.0;
        for (std::size_t i = cfg.frame_len; i + cfg.frame_len < x.size(); ++i) {
            num += (back[i] - x[i]) * (back[i] - x[i]);
            den += x[i] * x[i];
        }
        ctx.check("stft round trip", std::sqrt(num / den) < 1e-6);

        const auto comp = compress(spec, cfg);
        const auto decomp = decompress(comp, cfg);
        double cerr = 0.0;
        for (std::size_t i = 0; i < spec.coeffs.size(); ++i) {
            cerr = std::max(cerr, std::abs(decomp.coeffs[i] - spec.coeffs[i]));
        }
        ctx.check("compression round trip", cerr < 1e-9);
    }

    {
        // Two-atom posterior mean against its closed form a*tanh(Re<a,x>/s^2).
        ComplexSpectrogram plus, minus, x;
        plus.bins = minus.bins = x.bins = 1;
        plus.frames = minus.frames = x.frames = 1;
        plus.coeffs = {{1.0, 0.0}};
        minus.coeffs = {{-1.0, 0.0}};
        x.coeffs = {{0.5, 0.0}};
        const auto d = oracle_denoise({plus, minus}, x, 1.0);
        ctx.check("two-atom posterior mean closed form",
                  std::abs(d.coeffs[0].real() - std::tanh(0.5)) < 1e-12);
    }

    {
        // The final Heun step lands exactly on the denoiser output: a
        // single-atom model must be recovered exactly.
        ComplexSpectrogram atom;
        atom.bins = 2;
        atom.frames = 1;
        atom.coeffs = {{0.3, -0.1}, {-0.2, 0.05}};
        OracleDenoiser model({atom});
        SamplerConfig cfg{};
        cfg.kind = SamplerKind::EDM;
        cfg.n_steps = 8;
        Rng rng = derive_rng(99, "selftest-edm");
        const auto res = edm_sample(model, atom, cfg, sched, rng);
        double err = 0.0;
        for (std::size_t i = 0; i < atom.coeffs.size(); ++i) {
            err = std::max(err, std::abs(res.n0_hat.coeffs[i] - atom.coeffs[i]));
        }
        ctx.check("single-atom recovery", err < 1e-12);
        ctx.check("heun evaluation count",
                  res.diagnostics.denoiser_evals == 2 * cfg.n_steps - 1);

        SamplerConfig pc{};
        pc.kind = SamplerKind::PC;
        pc.n_steps = 8;
        pc.n_corrector = 1;
        Rng rng2 = derive_rng(99, "selftest-pc");
        const auto res2 = pc_sample(model, atom, pc, sched, rng2);
        ctx.check("langevin evaluation count",
                  res2.diagnostics.denoiser_evals == pc.n_steps * (1 + pc.n_corrector));
    }

    {
        Rng a(123), b(123);
        bool ok = true;
        for (int i = 0; i < 100; ++i) {
            if (a.normal() != b.normal()) ok = false;
        }
        ctx.check("rng determinism", ok);
    }

    std::cout << "selftest: " << ctx.passed << "/" << (ctx.passed + ctx.failures.size())
              << " checks passed\n";
    if (!ctx.failures.empty()) {
        std::string what = "selftest failures:";
        for (const auto& f : ctx.failures) what += " " + f;
        throw NumericError(what);
    }
}

}  // namespace sediff
