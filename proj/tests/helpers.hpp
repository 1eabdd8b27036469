#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "sediff/rng.hpp"
#include "sediff/spectrogram.hpp"

namespace sediff::testing {

inline double rel_err(double value, double reference) {
    const double denom = std::max(std::abs(reference), 1e-300);
    return std::abs(value - reference) / denom;
}

inline ComplexSpectrogram random_spec(std::size_t bins, std::size_t frames, Rng& rng,
                                      double scale = 1.0) {
    ComplexSpectrogram s(bins, frames);
    for (auto& c : s.coeffs) c = scale * rng.complex_normal();
    return s;
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path() /
                    ("sediff-test-" + tag + "-XXXXXX");
        std::string tmpl = base.string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace sediff::testing
