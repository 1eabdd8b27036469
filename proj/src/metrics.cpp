#include "sediff/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "sediff/errors.hpp"
#include "sediff/fft.hpp"
#include "sediff/parallel.hpp"
#include "sediff/wav.hpp"

namespace sediff {

namespace {

double sum_sq(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

double ratio_db(double num, double den) {
    if (den <= 0.0) return kSnrCapDb;
    return std::min(kSnrCapDb, 10.0 * std::log10(num / den));
}

}  // namespace

double snr_db(const std::vector<double>& ref, const std::vector<double>& est) {
    if (ref.size() != est.size()) throw DimensionError("snr_db: length mismatch");
    const double e_ref = sum_sq(ref);
    if (e_ref <= 0.0) throw MetricError("snr_db: zero reference");
    double e_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = est[i] - ref[i];
        e_err += d * d;
    }
    return ratio_db(e_ref, e_err);
}

double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est) {
    if (ref.size() != est.size()) throw DimensionError("si_sdr_db: length mismatch");
    const double e_ref = sum_sq(ref);
    if (e_ref <= 0.0) throw MetricError("si_sdr_db: zero reference");
    double dot = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) dot += ref[i] * est[i];
    const double alpha = dot / e_ref;
    const double e_target = alpha * alpha * e_ref;
    double e_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = est[i] - alpha * ref[i];
        e_err += d * d;
    }
    if (e_target <= 0.0) throw MetricError("si_sdr_db: estimate orthogonal to reference");
    return ratio_db(e_target, e_err);
}

// ---- resampling -----------------------------------------------------------------

std::vector<double> resample_poly(const std::vector<double>& x, std::size_t up,
                                  std::size_t down) {
    if (up == 0 || down == 0) throw ArgumentError("resample_poly: zero factor");
    if (x.empty()) return {};
    if (up == down) return x;

    // Windowed-sinc lowpass at the tighter of the two Nyquists, gain `up`.
    const std::size_t max_rate = std::max(up, down);
    const std::size_t half = 16 * max_rate;
    const std::size_t taps = 2 * half + 1;
    std::vector<double> h(taps);
    const double fc = 1.0 / static_cast<double>(max_rate);  // cycles/sample at up-rate
    for (std::size_t k = 0; k < taps; ++k) {
        const double m = static_cast<double>(k) - static_cast<double>(half);
        const double sinc =
            m == 0.0 ? 1.0
                     : std::sin(std::numbers::pi * fc * m) / (std::numbers::pi * fc * m);
        // Blackman window
        const double w = 0.42 -
                         0.5 * std::cos(2.0 * std::numbers::pi * k / (taps - 1)) +
                         0.08 * std::cos(4.0 * std::numbers::pi * k / (taps - 1));
        h[k] = static_cast<double>(up) * fc * sinc * w;
    }

    // y[m] = (x_up * h)[half + m*down] where x_up has up-1 zeros inserted.
    const std::size_t n_up = x.size() * up;
    const std::size_t out_len = (n_up + down - 1) / down;
    std::vector<double> y(out_len, 0.0);
    for (std::size_t m = 0; m < out_len; ++m) {
        const std::size_t j = half + m * down;  // index into the virtual convolution
        double acc = 0.0;
        // nonzero upsampled samples: indices i*up <= j with j - i*up < taps
        const std::size_t i_hi = std::min(j / up, x.size() - 1);
        const std::size_t lo = j >= taps - 1 ? j - (taps - 1) : 0;
        const std::size_t i_lo = (lo + up - 1) / up;
        for (std::size_t i = i_lo; i <= i_hi; ++i) {
            acc += x[i] * h[j - i * up];
        }
        y[m] = acc;
    }
    return y;
}

// ---- extended short-time intelligibility ------------------------------------------

namespace {

constexpr std::size_t kStoiRate = 10000;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiHop = 128;
constexpr std::size_t kStoiFft = 512;
constexpr std::size_t kStoiBands = 15;
constexpr std::size_t kStoiSegment = 30;
constexpr double kStoiDynRangeDb = 40.0;
constexpr double kStoiBandLo = 150.0;
constexpr double kTiny = 1e-20;

std::vector<double> stoi_window() {
    std::vector<double> w(kStoiFrame);
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                    static_cast<double>(kStoiFrame));
    }
    return w;
}

// Drops frames whose windowed reference energy is more than 40 dB below the
// loudest frame, then overlap-adds the surviving windowed frames of both
// signals (the mask always comes from the reference).
void remove_silent_frames(std::vector<double>& ref, std::vector<double>& est) {
    if (ref.size() < kStoiFrame) {
        throw ArgumentError("intelligibility metric: signal shorter than one frame");
    }
    const std::vector<double> w = stoi_window();
    const std::size_t n_frames = 1 + (ref.size() - kStoiFrame) / kStoiHop;

    std::vector<double> energy_db(n_frames);
    double max_db = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < n_frames; ++f) {
        double e = 0.0;
        for (std::size_t i = 0; i < kStoiFrame; ++i) {
            const double v = w[i] * ref[f * kStoiHop + i];
            e += v * v;
        }
        energy_db[f] = 10.0 * std::log10(e + kTiny);
        max_db = std::max(max_db, energy_db[f]);
    }

    std::vector<double> ref_out, est_out;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        if (energy_db[f] <= max_db - kStoiDynRangeDb) continue;
        if (ref_out.size() < pos + kStoiFrame) {
            ref_out.resize(pos + kStoiFrame, 0.0);
            est_out.resize(pos + kStoiFrame, 0.0);
        }
        for (std::size_t i = 0; i < kStoiFrame; ++i) {
            ref_out[pos + i] += w[i] * ref[f * kStoiHop + i];
            est_out[pos + i] += w[i] * est[f * kStoiHop + i];
        }
        pos += kStoiHop;
    }
    ref = std::move(ref_out);
    est = std::move(est_out);
}

// Third-octave band envelopes from a zero-padded windowed STFT:
// env[band][frame].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
    const std::vector<double> w = stoi_window();
    const std::size_t n_frames = 1 + (x.size() - kStoiFrame) / kStoiHop;

    // Band edges mapped to the nearest FFT bin.
    std::array<std::size_t, kStoiBands> lo_bin{}, hi_bin{};
    const auto nearest_bin = [](double freq) {
        const double bin = freq * static_cast<double>(kStoiFft) /
                           static_cast<double>(kStoiRate);
        return static_cast<std::size_t>(
            std::clamp(std::lround(bin), 0l, static_cast<long>(kStoiFft / 2)));
    };
    for (std::size_t b = 0; b < kStoiBands; ++b) {
        const double cf = kStoiBandLo * std::pow(2.0, static_cast<double>(b) / 3.0);
        lo_bin[b] = nearest_bin(cf * std::pow(2.0, -1.0 / 6.0));
        hi_bin[b] = nearest_bin(cf * std::pow(2.0, 1.0 / 6.0));
    }

    std::vector<std::vector<double>> env(kStoiBands, std::vector<double>(n_frames));
    std::vector<std::complex<double>> buf(kStoiFft);
    for (std::size_t f = 0; f < n_frames; ++f) {
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (std::size_t i = 0; i < kStoiFrame; ++i) {
            buf[i] = w[i] * x[f * kStoiHop + i];
        }
        fft_inplace(buf, false);
        for (std::size_t b = 0; b < kStoiBands; ++b) {
            double e = 0.0;
            for (std::size_t k = lo_bin[b]; k < hi_bin[b]; ++k) e += std::norm(buf[k]);
            env[b][f] = std::sqrt(e);
        }
    }
    return env;
}

}  // namespace

double estoi(const std::vector<double>& ref, const std::vector<double>& est,
             std::size_t sample_rate) {
    if (ref.size() != est.size()) throw DimensionError("intelligibility: length mismatch");
    if (sample_rate != 16000) {
        throw ArgumentError("intelligibility: only 16 kHz input is supported");
    }

    std::vector<double> r = resample_poly(ref, 5, 8);
    std::vector<double> e = resample_poly(est, 5, 8);
    remove_silent_frames(r, e);
    if (r.size() < kStoiFrame) {
        throw ArgumentError("intelligibility: too little active signal");
    }

    const auto env_r = band_envelopes(r);
    const auto env_e = band_envelopes(e);
    const std::size_t n_frames = env_r[0].size();
    if (n_frames < kStoiSegment) {
        throw ArgumentError("intelligibility: fewer than 30 active frames");
    }

    // Correlation over 30-frame segments: normalize each band's time course,
    // then each frame's band profile, and average the inner products.
    const std::size_t n_segments = n_frames - kStoiSegment + 1;
    double total = 0.0;
    std::array<std::array<double, kStoiSegment>, kStoiBands> xs{}, ys{};
    for (std::size_t s = 0; s < n_segments; ++s) {
        for (std::size_t b = 0; b < kStoiBands; ++b) {
            for (std::size_t t = 0; t < kStoiSegment; ++t) {
                xs[b][t] = env_r[b][s + t];
                ys[b][t] = env_e[b][s + t];
            }
        }
        const auto normalize_rows = [](auto& m) {
            for (std::size_t b = 0; b < kStoiBands; ++b) {
                double mean = 0.0;
                for (double v : m[b]) mean += v;
                mean /= kStoiSegment;
                double nrm = 0.0;
                for (double& v : m[b]) {
                    v -= mean;
                    nrm += v * v;
                }
                nrm = std::max(std::sqrt(nrm), kTiny);
                for (double& v : m[b]) v /= nrm;
            }
        };
        const auto normalize_cols = [](auto& m) {
            for (std::size_t t = 0; t < kStoiSegment; ++t) {
                double mean = 0.0;
                for (std::size_t b = 0; b < kStoiBands; ++b) mean += m[b][t];
                mean /= kStoiBands;
                double nrm = 0.0;
                for (std::size_t b = 0; b < kStoiBands; ++b) {
                    m[b][t] -= mean;
                    nrm += m[b][t] * m[b][t];
                }
                nrm = std::max(std::sqrt(nrm), kTiny);
                for (std::size_t b = 0; b < kStoiBands; ++b) m[b][t] /= nrm;
            }
        };
        normalize_rows(xs);
        normalize_cols(xs);
        normalize_rows(ys);
        normalize_cols(ys);
        double d = 0.0;
        for (std::size_t b = 0; b < kStoiBands; ++b) {
            for (std::size_t t = 0; t < kStoiSegment; ++t) d += xs[b][t] * ys[b][t];
        }
        total += d / static_cast<double>(kStoiSegment);
    }
    return total / static_cast<double>(n_segments);
}

// ---- external quality hook --------------------------------------------------------

std::optional<double> run_pesq(const PesqHook& hook, const std::string& ref_path,
                               const std::string& deg_path) {
    if (!hook.available()) return std::nullopt;
    std::string cmd = hook.command_template;
    const auto substitute = [&cmd](const std::string& key, const std::string& value) {
        std::size_t at;
        while ((at = cmd.find(key)) != std::string::npos) {
            cmd.replace(at, key.size(), value);
        }
    };
    substitute("{ref}", ref_path);
    substitute("{deg}", deg_path);

    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return std::nullopt;
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) output += buf;
    const int status = pclose(pipe);
    if (status != 0) return std::nullopt;

    // Last whitespace-separated token must parse as a number.
    std::istringstream in(output);
    std::string token, last;
    while (in >> token) last = token;
    if (last.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double value = std::stod(last, &used);
        if (used != last.size()) return std::nullopt;
        return value;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// ---- batch evaluation ----------------------------------------------------------------

BatchResult evaluate_batch(const DatasetIndex& index, const std::string& enhanced_dir,
                           const PesqHook& hook) {
    namespace fs = std::filesystem;
    const std::size_t n = index.rows.size();
    std::vector<std::optional<MixtureScores>> scored(n);
    std::vector<char> absent(n, 0);
    std::vector<std::string> errors(n);

    parallel_for_each(n, [&](std::size_t i) {
        const auto& row = index.rows[i];
        try {
            const fs::path enhanced_path = fs::path(enhanced_dir) / (row.id + ".wav");
            if (!fs::exists(enhanced_path)) {
                absent[i] = 1;
                return;
            }
            const Audio mixture = read_wav(row.mixture_path);
            const Audio target = read_wav(row.target_path);
            const Audio enhanced = read_wav(enhanced_path.string());
            if (!mixture.mono() || !target.mono() || !enhanced.mono()) {
                throw DataError("evaluate_batch: expected mono signals for " + row.id);
            }
            const std::size_t len =
                std::min({mixture.length(), target.length(), enhanced.length()});
            std::vector<double> y(mixture.channels[0].begin(),
                                  mixture.channels[0].begin() + static_cast<long>(len));
            std::vector<double> t(target.channels[0].begin(),
                                  target.channels[0].begin() + static_cast<long>(len));
            std::vector<double> x(enhanced.channels[0].begin(),
                                  enhanced.channels[0].begin() + static_cast<long>(len));

            MixtureScores scores;
            scores.id = row.id;
            scores.snr_in_db = snr_db(t, y);
            scores.snr_out_db = snr_db(t, x);
            scores.snr_delta_db = scores.snr_out_db - scores.snr_in_db;
            scores.si_sdr_in_db = si_sdr_db(t, y);
            scores.si_sdr_out_db = si_sdr_db(t, x);
            scores.estoi_in = estoi(t, y, index.sample_rate);
            scores.estoi_out = estoi(t, x, index.sample_rate);
            if (hook.available()) {
                scores.pesq_in = run_pesq(hook, row.target_path, row.mixture_path);
                scores.pesq_out = run_pesq(hook, row.target_path, enhanced_path.string());
            }
            scored[i] = std::move(scores);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });

    for (const auto& e : errors) {
        if (!e.empty()) throw DataError(e);
    }
    BatchResult result;
    for (std::size_t i = 0; i < n; ++i) {
        if (absent[i]) {
            result.missing.push_back(index.rows[i].id);
        } else if (scored[i]) {
            result.rows.push_back(std::move(*scored[i]));
        }
    }
    return result;
}

void write_scores_csv(const BatchResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_scores_csv: cannot open " + path);
    out << "id,snr_in_db,snr_out_db,snr_delta_db,si_sdr_in_db,si_sdr_out_db,"
           "estoi_in,estoi_out,pesq_in,pesq_out\n";
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : result.rows) {
        out << r.id << ',' << num(r.snr_in_db) << ',' << num(r.snr_out_db) << ','
            << num(r.snr_delta_db) << ',' << num(r.si_sdr_in_db) << ','
            << num(r.si_sdr_out_db) << ',' << num(r.estoi_in) << ',' << num(r.estoi_out)
            << ',' << (r.pesq_in ? num(*r.pesq_in) : std::string{}) << ','
            << (r.pesq_out ? num(*r.pesq_out) : std::string{}) << '\n';
    }
}

}  // namespace sediff
