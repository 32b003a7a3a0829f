#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "domkl/error.hpp"
#include "domkl/random.hpp"

namespace domkl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Shift-invariant kernel families. Only Gaussian has a sampler; the enum
/// leaves room for Laplacian/Cauchy spectra.
enum class KernelFamily { gaussian };

inline std::string to_string(KernelFamily family) {
    switch (family) {
    case KernelFamily::gaussian:
        return "gaussian";
    }
    return "unknown";
}

/// Gaussian kernel exp(-||x1 - x2||^2 / (2 variance)).
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double variance = 1.0;

    void validate() const {
        if (!(variance > 0.0) || !std::isfinite(variance)) {
            throw ConfigError("kernel variance must be a positive finite number, got " +
                              std::to_string(variance));
        }
    }

    /// Exact kernel value. Used by the synthetic generator and as a test oracle.
    double evaluate(std::span<const double> x1, std::span<const double> x2) const {
        if (x1.size() != x2.size()) {
            throw InputError("kernel evaluation: dimension mismatch");
        }
        double sq = 0.0;
        for (std::size_t i = 0; i < x1.size(); ++i) {
            const double diff = x1[i] - x2[i];
            sq += diff * diff;
        }
        return std::exp(-sq / (2.0 * variance));
    }
};

/// Random Fourier feature map for one kernel.
///
/// Holds D spectral samples v_1..v_D (rows of `spectral_samples`) drawn from
/// the kernel's Fourier density, and maps x to
///
///     z(x) = D^{-1/2} [sin(v_1'x), ..., sin(v_D'x), cos(v_1'x), ..., cos(v_D'x)]
///
/// so that z(x1)'z(x2) approximates the kernel and ||z(x)||^2 == 1.
/// Immutable once built; every learner in a network shares the same map.
class RFFeatureMap {
public:
    RFFeatureMap(KernelSpec spec, Matrix spectral_samples)
        : spec_(spec), samples_(std::move(spectral_samples)),
          scale_(1.0 / std::sqrt(static_cast<double>(samples_.rows()))) {
        spec_.validate();
        if (samples_.rows() < 1 || samples_.cols() < 1) {
            throw ConfigError("feature map needs at least one spectral sample of dimension >= 1");
        }
    }

    const KernelSpec& spec() const noexcept { return spec_; }
    /// D x d matrix, one spectral sample per row.
    const Matrix& spectral_samples() const noexcept { return samples_; }
    std::size_t dim_input() const noexcept { return static_cast<std::size_t>(samples_.cols()); }
    std::size_t num_samples() const noexcept { return static_cast<std::size_t>(samples_.rows()); }
    std::size_t dim_features() const noexcept { return 2 * num_samples(); }

    Vector features(std::span<const double> x) const {
        Vector z(dim_features());
        features_into(x, z);
        return z;
    }

    void features_into(std::span<const double> x, Vector& out) const {
        if (x.size() != dim_input()) {
            throw InputError("features: input has dimension " + std::to_string(x.size()) +
                             ", map expects " + std::to_string(dim_input()));
        }
        const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        const Vector proj = samples_ * xv;
        const auto D = samples_.rows();
        out.resize(2 * D);
        for (Eigen::Index i = 0; i < D; ++i) {
            out[i] = scale_ * std::sin(proj[i]);
            out[D + i] = scale_ * std::cos(proj[i]);
        }
    }

    double approx_kernel(std::span<const double> x1, std::span<const double> x2) const {
        if (x1.size() != x2.size()) {
            throw InputError("approx_kernel: dimension mismatch");
        }
        return features(x1).dot(features(x2));
    }

private:
    KernelSpec spec_;
    Matrix samples_;
    double scale_;
};

/// Draws D i.i.d. spectral samples from N(0, variance^{-1} I) in dimension d.
inline RFFeatureMap sample_feature_map(const KernelSpec& spec, std::size_t d, std::size_t D,
                                       std::uint64_t seed) {
    spec.validate();
    if (d < 1) {
        throw ConfigError("sample_feature_map: input dimension must be >= 1");
    }
    if (D < 1) {
        throw ConfigError("sample_feature_map: number of random features must be >= 1");
    }
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(spec.variance);
    Matrix samples(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index k = 0; k < samples.cols(); ++k) {
            samples(i, k) = stddev * rng.normal();
        }
    }
    return RFFeatureMap(spec, std::move(samples));
}

/// Ordered list of kernels with their feature maps. Entries share input and
/// feature dimensions.
class KernelDictionary {
public:
    explicit KernelDictionary(std::vector<std::shared_ptr<const RFFeatureMap>> maps)
        : maps_(std::move(maps)) {
        if (maps_.empty()) {
            throw ConfigError("kernel dictionary must contain at least one kernel");
        }
        for (const auto& m : maps_) {
            if (m->dim_input() != maps_.front()->dim_input() ||
                m->dim_features() != maps_.front()->dim_features()) {
                throw ConfigError("kernel dictionary entries must share input and feature dimensions");
            }
        }
    }

    std::size_t size() const noexcept { return maps_.size(); }
    const RFFeatureMap& operator[](std::size_t p) const { return *maps_.at(p); }
    std::size_t dim_input() const noexcept { return maps_.front()->dim_input(); }
    std::size_t dim_features() const noexcept { return maps_.front()->dim_features(); }

    /// Dictionary holding only entry p. Shares the feature map, so a
    /// single-kernel learner sees exactly the z_p of the full dictionary.
    KernelDictionary single(std::size_t p) const {
        if (p >= size()) {
            throw ConfigError("kernel index " + std::to_string(p + 1) + " out of range 1.." +
                              std::to_string(size()));
        }
        return KernelDictionary({maps_[p]});
    }

    std::vector<double> variances() const {
        std::vector<double> out;
        out.reserve(size());
        for (const auto& m : maps_) {
            out.push_back(m->spec().variance);
        }
        return out;
    }

private:
    std::vector<std::shared_ptr<const RFFeatureMap>> maps_;
};

/// Variances 10^((p-9)/2) for p = 1..17, i.e. 1e-4 ... 1e4 in half-decades.
inline std::vector<double> default_variances() {
    std::vector<double> out;
    for (int p = 1; p <= 17; ++p) {
        out.push_back(std::pow(10.0, (p - 9) / 2.0));
    }
    return out;
}

/// Builds one Gaussian feature map per variance. The map for entry p is
/// seeded from (seed, p), so it does not depend on the other entries.
inline KernelDictionary make_dictionary(std::span<const double> variances, std::size_t d,
                                        std::size_t D, std::uint64_t seed) {
    std::vector<std::shared_ptr<const RFFeatureMap>> maps;
    maps.reserve(variances.size());
    for (std::size_t p = 0; p < variances.size(); ++p) {
        const KernelSpec spec{KernelFamily::gaussian, variances[p]};
        maps.push_back(
            std::make_shared<const RFFeatureMap>(sample_feature_map(spec, d, D, mix_seed(seed, p))));
    }
    return KernelDictionary(std::move(maps));
}

inline KernelDictionary default_dictionary(std::size_t d, std::size_t D, std::uint64_t seed) {
    const auto variances = default_variances();
    return make_dictionary(variances, d, D, seed);
}

} // namespace domkl
