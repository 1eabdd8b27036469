#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "sediff/rng.hpp"
#include "sediff/schedule.hpp"
#include "sediff/spectrogram.hpp"

namespace sediff {

// EDM-style preconditioning and loss weighting around a raw model. The
// analytic denoisers below implement the posterior mean directly and bypass
// these coefficients; the weight w drives loss evaluation and fitting.
struct Preconditioning {
    double sigma_data = 0.1;
};

struct PreconditionCoeffs {
    double c_skip = 0.0;
    double c_out = 0.0;
    double c_in = 0.0;
    double c_noise = 0.0;
    double w = 0.0;
};

// Throws DomainError for sigma <= 0.
PreconditionCoeffs precondition_coeffs(const Preconditioning& pre, double sigma);

// Loss weight w(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
double loss_weight(const Preconditioning& pre, double sigma);

// A denoiser consumes the scaled state x = n_t / s(t), the conditioner y, and
// the noise level sigma, and estimates n_0. Implementations are immutable
// after construction and safe to call concurrently.
class DenoiserModel {
public:
    virtual ~DenoiserModel() = default;
    virtual ComplexSpectrogram denoise(const ComplexSpectrogram& x_scaled,
                                       const ComplexSpectrogram& y,
                                       double sigma) const = 0;
    virtual std::string identifier() const = 0;
};

// Exact posterior mean for an empirical prior over a finite atom set:
// softmax weights exp(-||x - a_j||^2 / (2 sigma^2)), log-sum-exp stabilized.
ComplexSpectrogram oracle_denoise(const std::vector<ComplexSpectrogram>& atoms,
                                  const ComplexSpectrogram& x_scaled, double sigma);

class OracleDenoiser : public DenoiserModel {
public:
    explicit OracleDenoiser(std::vector<ComplexSpectrogram> atoms);
    ComplexSpectrogram denoise(const ComplexSpectrogram& x_scaled,
                               const ComplexSpectrogram& y, double sigma) const override;
    std::string identifier() const override { return "oracle"; }

private:
    std::vector<ComplexSpectrogram> atoms_;
};

// Analytic posterior mean for a centered circular Gaussian prior of
// per-coefficient variance sigma_prior^2: linear shrinkage.
ComplexSpectrogram gaussian_denoise(double sigma_prior,
                                    const ComplexSpectrogram& x_scaled, double sigma);

class GaussianDenoiser : public DenoiserModel {
public:
    explicit GaussianDenoiser(double sigma_prior);
    ComplexSpectrogram denoise(const ComplexSpectrogram& x_scaled,
                               const ComplexSpectrogram& y, double sigma) const override;
    std::string identifier() const override { return "gaussian"; }
    double sigma_prior() const { return sigma_prior_; }

private:
    double sigma_prior_;
};

struct DenoisePair {
    ComplexSpectrogram n0;
    ComplexSpectrogram y;
};

// Monte-Carlo estimate of E[w(t) * ||D(n_t/s, y, sigma(t)) - n0||^2] with
// t ~ Uniform(t_eps, t_end); deterministic given the rng state.
double empirical_loss(const DenoiserModel& model, const std::vector<DenoisePair>& dataset,
                      const ScheduleParams& schedule, std::size_t n_time_samples, Rng& rng,
                      const Preconditioning& pre = {});

// Same estimate at one fixed time; used by tests with analytic expectations.
double empirical_loss_at_time(const DenoiserModel& model,
                              const std::vector<DenoisePair>& dataset,
                              const ScheduleParams& schedule, double t,
                              std::size_t n_draws, Rng& rng,
                              const Preconditioning& pre = {});

// Per-sigma-bin linear map D = a(sigma) * x_scaled + b(sigma) * y with
// piecewise-constant coefficients over log-spaced bins.
class LinearDenoiser : public DenoiserModel {
public:
    LinearDenoiser(std::vector<double> bin_edges,
                   std::vector<std::complex<double>> a,
                   std::vector<std::complex<double>> b,
                   double sigma_data);

    ComplexSpectrogram denoise(const ComplexSpectrogram& x_scaled,
                               const ComplexSpectrogram& y, double sigma) const override;
    std::string identifier() const override { return "linear-sigma-binned"; }

    std::size_t n_bins() const { return a_.size(); }
    std::size_t bin_for_sigma(double sigma) const;
    const std::vector<double>& bin_edges() const { return edges_; }
    const std::vector<std::complex<double>>& coeff_a() const { return a_; }
    const std::vector<std::complex<double>>& coeff_b() const { return b_; }

    void save(const std::string& path) const;
    static LinearDenoiser load(const std::string& path);

private:
    std::vector<double> edges_;  // n_bins + 1, increasing
    std::vector<std::complex<double>> a_, b_;
    double sigma_data_;
};

struct FitDiagnostics {
    std::vector<std::size_t> bin_draws;      // draws landing in each bin
    std::vector<double> bin_weight;          // total loss weight per bin
    std::vector<int> inherited_from;         // -1, or source bin for empty bins
    std::vector<bool> wiener_fallback;       // singular normal equations
    double mean_weighted_residual = 0.0;     // training objective at the fit
};

struct LinearFit {
    std::shared_ptr<LinearDenoiser> model;
    FitDiagnostics diagnostics;
};

// Least-squares fit of the per-bin linear denoiser. Draws n_samples
// perturbations (pair index round-robin, t ~ U(t_eps, t_end)); each draw
// contributes every coefficient to its sigma bin's 2x2 complex normal
// equations with weight w(sigma). Deterministic given the rng state and
// independent of worker count.
LinearFit fit_linear_denoiser(const std::vector<DenoisePair>& dataset,
                              const ScheduleParams& schedule, std::size_t n_sigma_bins,
                              Rng& rng, std::size_t n_samples = 4096,
                              const Preconditioning& pre = {});

}  // namespace sediff
