#include "sediff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "sediff/diffusion.hpp"
#include "sediff/errors.hpp"
#include "sediff/parallel.hpp"

namespace sediff {

using json = nlohmann::json;

PreconditionCoeffs precondition_coeffs(const Preconditioning& pre, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("precondition_coeffs: sigma must be finite and > 0");
    }
    const double sd = pre.sigma_data;
    const double sum = sigma * sigma + sd * sd;
    PreconditionCoeffs c;
    c.c_skip = sd * sd / sum;
    c.c_out = sigma * sd / std::sqrt(sum);
    c.c_in = 1.0 / std::sqrt(sum);
    c.c_noise = 0.25 * std::log(sigma);
    c.w = sum / (sigma * sd * sigma * sd);
    return c;
}

double loss_weight(const Preconditioning& pre, double sigma) {
    return precondition_coeffs(pre, sigma).w;
}

// ---- oracle ----------------------------------------------------------------

ComplexSpectrogram oracle_denoise(const std::vector<ComplexSpectrogram>& atoms,
                                  const ComplexSpectrogram& x_scaled, double sigma) {
    if (atoms.empty()) throw ArgumentError("oracle_denoise: empty atom set");
    if (!(sigma > 0.0)) throw DomainError("oracle_denoise: sigma must be > 0");
    for (const auto& a : atoms) check_same_shape(a, x_scaled, "oracle_denoise");

    // Log posterior weights, stabilized by subtracting the max before exp.
    std::vector<double> logw(atoms.size());
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        logw[j] = -squared_distance(x_scaled, atoms[j]) * inv;
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (auto& lw : logw) {
        lw = std::exp(lw - top);
        total += lw;
    }
    ComplexSpectrogram out(x_scaled.bins, x_scaled.frames);
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const double wj = logw[j] / total;
        if (wj == 0.0) continue;
        for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
            out.coeffs[i] += wj * atoms[j].coeffs[i];
        }
    }
    return out;
}

OracleDenoiser::OracleDenoiser(std::vector<ComplexSpectrogram> atoms)
    : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw ArgumentError("OracleDenoiser: empty atom set");
}

ComplexSpectrogram OracleDenoiser::denoise(const ComplexSpectrogram& x_scaled,
                                           const ComplexSpectrogram&, double sigma) const {
    return oracle_denoise(atoms_, x_scaled, sigma);
}

// ---- gaussian ----------------------------------------------------------------

ComplexSpectrogram gaussian_denoise(double sigma_prior,
                                    const ComplexSpectrogram& x_scaled, double sigma) {
    if (!(sigma_prior > 0.0)) throw DomainError("gaussian_denoise: sigma_prior must be > 0");
    if (!(sigma >= 0.0)) throw DomainError("gaussian_denoise: sigma must be >= 0");
    const double p2 = sigma_prior * sigma_prior;
    const double gain = p2 / (p2 + sigma * sigma);
    ComplexSpectrogram out(x_scaled.bins, x_scaled.frames);
    for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
        out.coeffs[i] = gain * x_scaled.coeffs[i];
    }
    return out;
}

GaussianDenoiser::GaussianDenoiser(double sigma_prior) : sigma_prior_(sigma_prior) {
    if (!(sigma_prior > 0.0)) throw DomainError("GaussianDenoiser: sigma_prior must be > 0");
}

ComplexSpectrogram GaussianDenoiser::denoise(const ComplexSpectrogram& x_scaled,
                                             const ComplexSpectrogram&, double sigma) const {
    return gaussian_denoise(sigma_prior_, x_scaled, sigma);
}

// ---- empirical loss ----------------------------------------------------------

namespace {

double weighted_residual(const DenoiserModel& model, const DenoisePair& pair,
                         const ScheduleParams& schedule, double t, Rng& rng,
                         const Preconditioning& pre) {
    const SchedulePoint point = eval_point(schedule, t);
    // Work in the scaled domain directly: n_t / s = n0 + sigma * eps.
    ComplexSpectrogram x(pair.n0.bins, pair.n0.frames);
    for (std::size_t i = 0; i < x.coeffs.size(); ++i) {
        x.coeffs[i] = pair.n0.coeffs[i] + point.sigma * rng.complex_normal();
    }
    const ComplexSpectrogram est = model.denoise(x, pair.y, point.sigma);
    return loss_weight(pre, point.sigma) * squared_distance(est, pair.n0);
}

}  // namespace

double empirical_loss(const DenoiserModel& model, const std::vector<DenoisePair>& dataset,
                      const ScheduleParams& schedule, std::size_t n_time_samples, Rng& rng,
                      const Preconditioning& pre) {
    if (dataset.empty()) throw ArgumentError("empirical_loss: empty dataset");
    if (n_time_samples == 0) throw ArgumentError("empirical_loss: n_time_samples must be >= 1");
    double acc = 0.0;
    for (const auto& pair : dataset) {
        check_same_shape(pair.n0, pair.y, "empirical_loss");
        for (std::size_t j = 0; j < n_time_samples; ++j) {
            const double t = rng.uniform(schedule.t_eps, schedule.t_end);
            acc += weighted_residual(model, pair, schedule, t, rng, pre);
        }
    }
    return acc / (static_cast<double>(dataset.size()) * static_cast<double>(n_time_samples));
}

double empirical_loss_at_time(const DenoiserModel& model,
                              const std::vector<DenoisePair>& dataset,
                              const ScheduleParams& schedule, double t,
                              std::size_t n_draws, Rng& rng,
                              const Preconditioning& pre) {
    if (dataset.empty()) throw ArgumentError("empirical_loss_at_time: empty dataset");
    if (n_draws == 0) throw ArgumentError("empirical_loss_at_time: n_draws must be >= 1");
    double acc = 0.0;
    for (const auto& pair : dataset) {
        for (std::size_t j = 0; j < n_draws; ++j) {
            acc += weighted_residual(model, pair, schedule, t, rng, pre);
        }
    }
    return acc / (static_cast<double>(dataset.size()) * static_cast<double>(n_draws));
}

// ---- linear denoiser -----------------------------------------------------------

LinearDenoiser::LinearDenoiser(std::vector<double> bin_edges,
                               std::vector<std::complex<double>> a,
                               std::vector<std::complex<double>> b, double sigma_data)
    : edges_(std::move(bin_edges)), a_(std::move(a)), b_(std::move(b)), sigma_data_(sigma_data) {
    if (a_.empty() || a_.size() != b_.size() || edges_.size() != a_.size() + 1) {
        throw ArgumentError("LinearDenoiser: inconsistent bin arrays");
    }
    for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
        if (!(edges_[i] < edges_[i + 1])) {
            throw ArgumentError("LinearDenoiser: bin edges must increase");
        }
    }
    if (!(edges_.front() > 0.0)) throw ArgumentError("LinearDenoiser: edges must be positive");
}

std::size_t LinearDenoiser::bin_for_sigma(double sigma) const {
    if (sigma >= edges_.back()) return a_.size() - 1;
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), sigma);
    if (it == edges_.begin()) return 0;
    return static_cast<std::size_t>(it - edges_.begin()) - 1;
}

ComplexSpectrogram LinearDenoiser::denoise(const ComplexSpectrogram& x_scaled,
                                           const ComplexSpectrogram& y, double sigma) const {
    check_same_shape(x_scaled, y, "LinearDenoiser::denoise");
    if (!(sigma >= 0.0)) throw DomainError("LinearDenoiser::denoise: sigma must be >= 0");

    std::complex<double> a, b;
    double identity_mix = 0.0;  // weight on the raw input below the fitted range
    if (sigma < edges_.front()) {
        // Below the fitted range, fade to the identity quadratically in sigma
        // so the zero-noise limit D -> x holds exactly: the residual of the
        // optimal denoiser shrinks like sigma^2 (Tweedie), so the first bin's
        // correction is scaled by (sigma / first_edge)^2.
        const double ratio = sigma / edges_.front();
        const double blend = ratio * ratio;
        a = a_.front();
        b = b_.front();
        identity_mix = 1.0 - blend;
        a *= blend;
        b *= blend;
    } else {
        const std::size_t bin = bin_for_sigma(sigma);
        a = a_[bin];
        b = b_[bin];
    }

    ComplexSpectrogram out(x_scaled.bins, x_scaled.frames);
    for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
        out.coeffs[i] = (a + identity_mix) * x_scaled.coeffs[i] + b * y.coeffs[i];
    }
    return out;
}

void LinearDenoiser::save(const std::string& path) const {
    json doc;
    doc["identifier"] = identifier();
    doc["sigma_data"] = sigma_data_;
    doc["bin_edges"] = edges_;
    json a = json::array(), b = json::array();
    for (const auto& c : a_) a.push_back({c.real(), c.imag()});
    for (const auto& c : b_) b.push_back({c.real(), c.imag()});
    doc["a"] = std::move(a);
    doc["b"] = std::move(b);
    std::ofstream out(path);
    if (!out) throw DataError("LinearDenoiser::save: cannot open " + path);
    out << doc.dump(2) << "\n";
}

LinearDenoiser LinearDenoiser::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("LinearDenoiser::load: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("LinearDenoiser::load: bad JSON in " + path + ": " + e.what());
    }
    try {
        if (doc.at("identifier").get<std::string>() != "linear-sigma-binned") {
            throw DataError("LinearDenoiser::load: unknown model identifier in " + path);
        }
        std::vector<double> edges = doc.at("bin_edges").get<std::vector<double>>();
        std::vector<std::complex<double>> a, b;
        for (const auto& p : doc.at("a")) a.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        for (const auto& p : doc.at("b")) b.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        const double sd = doc.at("sigma_data").get<double>();
        return LinearDenoiser(std::move(edges), std::move(a), std::move(b), sd);
    } catch (const json::exception& e) {
        throw DataError("LinearDenoiser::load: missing field in " + path + ": " + e.what());
    }
}

// ---- fit -----------------------------------------------------------------------

namespace {

struct BinAccumulator {
    double sxx = 0.0, syy = 0.0;
    std::complex<double> sxy{0.0, 0.0};
    std::complex<double> sxn{0.0, 0.0};
    std::complex<double> syn{0.0, 0.0};
    double weight = 0.0;
    std::size_t draws = 0;

    void merge(const BinAccumulator& o) {
        sxx += o.sxx;
        syy += o.syy;
        sxy += o.sxy;
        sxn += o.sxn;
        syn += o.syn;
        weight += o.weight;
        draws += o.draws;
    }
};

}  // namespace

LinearFit fit_linear_denoiser(const std::vector<DenoisePair>& dataset,
                              const ScheduleParams& schedule, std::size_t n_sigma_bins,
                              Rng& rng, std::size_t n_samples, const Preconditioning& pre) {
    if (dataset.empty()) throw ArgumentError("fit_linear_denoiser: empty dataset");
    if (n_sigma_bins == 0) throw ArgumentError("fit_linear_denoiser: n_sigma_bins must be >= 1");
    if (n_samples == 0) throw ArgumentError("fit_linear_denoiser: n_samples must be >= 1");
    for (const auto& pair : dataset) check_same_shape(pair.n0, pair.y, "fit_linear_denoiser");

    // Log-spaced bin edges over the schedule's reachable sigma range.
    const double sigma_lo = eval_point(schedule, schedule.t_eps).sigma;
    const double sigma_hi = sigma_max(schedule);
    std::vector<double> edges(n_sigma_bins + 1);
    const double log_lo = std::log(sigma_lo);
    const double step = (std::log(sigma_hi) - log_lo) / static_cast<double>(n_sigma_bins);
    for (std::size_t i = 0; i <= n_sigma_bins; ++i) {
        edges[i] = std::exp(log_lo + step * static_cast<double>(i));
    }
    edges.front() = sigma_lo;
    edges.back() = sigma_hi;

    const auto bin_of = [&](double sigma) -> std::size_t {
        if (sigma >= edges.back()) return n_sigma_bins - 1;
        const auto it = std::upper_bound(edges.begin(), edges.end(), sigma);
        if (it == edges.begin()) return 0;
        return std::min<std::size_t>(static_cast<std::size_t>(it - edges.begin()) - 1,
                                     n_sigma_bins - 1);
    };

    // One derivation seed for the whole fit; each draw derives its own stream,
    // so chunked accumulation is order-independent.
    const std::uint64_t fit_seed = rng.next_u64();

    const std::size_t n_chunks = 64;
    std::vector<std::vector<BinAccumulator>> partial(
        n_chunks, std::vector<BinAccumulator>(n_sigma_bins));

    parallel_chunks(n_samples, n_chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& bins = partial[chunk];
        for (std::size_t k = begin; k < end; ++k) {
            Rng draw_rng = derive_rng(fit_seed, "fit-draw", k);
            const DenoisePair& pair = dataset[k % dataset.size()];
            const double t = draw_rng.uniform(schedule.t_eps, schedule.t_end);
            const SchedulePoint point = eval_point(schedule, t);
            const double w = loss_weight(pre, point.sigma);
            BinAccumulator& acc = bins[bin_of(point.sigma)];
            double sxx = 0.0, syy = 0.0;
            std::complex<double> sxy{0, 0}, sxn{0, 0}, syn{0, 0};
            for (std::size_t i = 0; i < pair.n0.coeffs.size(); ++i) {
                const std::complex<double> x =
                    pair.n0.coeffs[i] + point.sigma * draw_rng.complex_normal();
                const std::complex<double> y = pair.y.coeffs[i];
                const std::complex<double> n = pair.n0.coeffs[i];
                sxx += std::norm(x);
                syy += std::norm(y);
                sxy += std::conj(x) * y;
                sxn += std::conj(x) * n;
                syn += std::conj(y) * n;
            }
            acc.sxx += w * sxx;
            acc.syy += w * syy;
            acc.sxy += w * sxy;
            acc.sxn += w * sxn;
            acc.syn += w * syn;
            acc.weight += w;
            acc.draws += 1;
        }
    });

    std::vector<BinAccumulator> bins(n_sigma_bins);
    for (std::size_t c = 0; c < n_chunks; ++c) {
        for (std::size_t b = 0; b < n_sigma_bins; ++b) bins[b].merge(partial[c][b]);
    }

    FitDiagnostics diag;
    diag.bin_draws.resize(n_sigma_bins);
    diag.bin_weight.resize(n_sigma_bins);
    diag.inherited_from.assign(n_sigma_bins, -1);
    diag.wiener_fallback.assign(n_sigma_bins, false);

    std::vector<std::complex<double>> a(n_sigma_bins), b(n_sigma_bins);
    std::vector<bool> populated(n_sigma_bins, false);
    for (std::size_t j = 0; j < n_sigma_bins; ++j) {
        diag.bin_draws[j] = bins[j].draws;
        diag.bin_weight[j] = bins[j].weight;
        if (bins[j].draws == 0) continue;
        populated[j] = true;
        const double det = bins[j].sxx * bins[j].syy - std::norm(bins[j].sxy);
        const double scale = bins[j].sxx * bins[j].syy;
        if (bins[j].sxx <= 0.0 || det <= scale * 1e-12) {
            // Singular normal equations (e.g. y identically zero): keep the
            // conditioner out and fall back to Gaussian shrinkage at the bin
            // center.
            const double sigma_c = std::sqrt(edges[j] * edges[j + 1]);
            const double sd2 = pre.sigma_data * pre.sigma_data;
            a[j] = sd2 / (sd2 + sigma_c * sigma_c);
            b[j] = 0.0;
            diag.wiener_fallback[j] = true;
        } else {
            a[j] = (bins[j].syy * bins[j].sxn - bins[j].sxy * bins[j].syn) / det;
            b[j] = (bins[j].sxx * bins[j].syn - std::conj(bins[j].sxy) * bins[j].sxn) / det;
        }
    }

    if (std::none_of(populated.begin(), populated.end(), [](bool v) { return v; })) {
        throw ArgumentError("fit_linear_denoiser: no bin received samples");
    }

    // Empty bins inherit the nearest populated bin (ties resolve downward).
    for (std::size_t j = 0; j < n_sigma_bins; ++j) {
        if (populated[j]) continue;
        std::size_t best = n_sigma_bins;
        std::size_t best_dist = std::numeric_limits<std::size_t>::max();
        for (std::size_t k = 0; k < n_sigma_bins; ++k) {
            if (!populated[k]) continue;
            const std::size_t dist = k > j ? k - j : j - k;
            if (dist < best_dist) {
                best_dist = dist;
                best = k;
            }
        }
        a[j] = a[best];
        b[j] = b[best];
        diag.inherited_from[j] = static_cast<int>(best);
    }

    auto model = std::make_shared<LinearDenoiser>(edges, a, b, pre.sigma_data);

    // Training objective at the fitted coefficients, for diagnostics:
    // mean over draws of w * ||a x + b y - n0||^2, reconstructed from the
    // accumulated moments (plus the nn term computed per chunk).
    // Rebuilding it exactly would need sum w*||n0||^2; cheap second pass:
    double residual = 0.0;
    {
        std::vector<double> partial_res(n_chunks, 0.0);
        parallel_chunks(n_samples, n_chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
            double acc = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                Rng draw_rng = derive_rng(fit_seed, "fit-draw", k);
                const DenoisePair& pair = dataset[k % dataset.size()];
                const double t = draw_rng.uniform(schedule.t_eps, schedule.t_end);
                const SchedulePoint point = eval_point(schedule, t);
                const double w = loss_weight(pre, point.sigma);
                const std::size_t j = bin_of(point.sigma);
                double dist = 0.0;
                for (std::size_t i = 0; i < pair.n0.coeffs.size(); ++i) {
                    const std::complex<double> x =
                        pair.n0.coeffs[i] + point.sigma * draw_rng.complex_normal();
                    const std::complex<double> est = a[j] * x + b[j] * pair.y.coeffs[i];
                    dist += std::norm(est - pair.n0.coeffs[i]);
                }
                acc += w * dist;
            }
            partial_res[chunk] = acc;
        });
        for (double v : partial_res) residual += v;
        residual /= static_cast<double>(n_samples);
    }
    diag.mean_weighted_residual = residual;

    return LinearFit{std::move(model), std::move(diag)};
}

}  // namespace sediff
