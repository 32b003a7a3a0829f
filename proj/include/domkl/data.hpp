#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "domkl/error.hpp"
#include "domkl/kernels.hpp"
#include "domkl/random.hpp"

namespace domkl {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Normalization { none, minmax, zscore };

inline std::optional<Normalization> parse_normalization(std::string_view s) {
    if (s == "none") return Normalization::none;
    if (s == "minmax") return Normalization::minmax;
    if (s == "zscore") return Normalization::zscore;
    return std::nullopt;
}

inline std::string to_string(Normalization n) {
    switch (n) {
    case Normalization::none: return "none";
    case Normalization::minmax: return "minmax";
    case Normalization::zscore: return "zscore";
    }
    return "unknown";
}

/// Affine map v -> (v - offset) / scale applied to one column.
struct ColumnTransform {
    double offset = 0.0;
    double scale = 1.0;
};

struct DatasetMetadata {
    std::string name;
    Normalization normalization = Normalization::none;
    std::vector<ColumnTransform> feature_transforms;
    ColumnTransform label_transform;
    std::size_t dropped_rows = 0;
    std::vector<std::string> warnings;
};

/// N samples of d features plus a label. Immutable by convention once built.
struct Dataset {
    FeatureMatrix features;
    Vector labels;
    DatasetMetadata metadata;

    Dataset() = default;
    Dataset(FeatureMatrix x, Vector y, DatasetMetadata meta = {})
        : features(std::move(x)), labels(std::move(y)), metadata(std::move(meta)) {
        if (features.rows() != labels.size()) {
            throw InputError("dataset: feature rows (" + std::to_string(features.rows()) +
                             ") and labels (" + std::to_string(labels.size()) + ") differ");
        }
        if (!features.allFinite() || !labels.allFinite()) {
            throw IngestionError("dataset contains non-finite values");
        }
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(labels.size()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

    std::span<const double> row(std::size_t k) const {
        return {features.data() + k * dim(), dim()};
    }
};

/// Label selection for CSV ingestion: a header name, a 0-based column
/// index, or (when empty) the last column.
using LabelColumn = std::variant<std::monostate, std::string, std::size_t>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) {
        return std::nullopt;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

} // namespace detail

/// Reads a numeric CSV. Features are all non-label columns in file order.
/// Rows with a missing, non-numeric or non-finite cell (or the wrong number
/// of fields) are dropped; the count and a warning go into the metadata.
inline Dataset load_csv(const std::string& path, const LabelColumn& label = {}, bool header = true) {
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open dataset file '" + path + "'");
    }
    std::string line;
    std::vector<std::string> names;
    std::size_t width = 0;
    if (header) {
        if (!std::getline(in, line)) {
            throw IngestionError("dataset file '" + path + "' is empty");
        }
        for (auto f : detail::split_commas(line)) {
            names.emplace_back(f);
        }
        width = names.size();
    }

    std::vector<std::vector<double>> rows;
    std::size_t dropped = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split_commas(line);
        if (width == 0) {
            width = fields.size();
        }
        if (fields.size() != width) {
            ++dropped;
            continue;
        }
        std::vector<double> values;
        values.reserve(width);
        bool ok = true;
        for (auto f : fields) {
            const auto v = detail::parse_double(f);
            if (!v) {
                ok = false;
                break;
            }
            values.push_back(*v);
        }
        if (ok) {
            rows.push_back(std::move(values));
        } else {
            ++dropped;
        }
    }
    if (width < 2) {
        throw IngestionError("dataset '" + path + "' needs at least one feature column and a label column");
    }

    std::size_t label_index = width - 1;
    if (const auto* name = std::get_if<std::string>(&label)) {
        if (!header) {
            throw ConfigError("label column given by name but the file has no header");
        }
        const auto it = std::find(names.begin(), names.end(), *name);
        if (it == names.end()) {
            throw IngestionError("label column '" + *name + "' not found in '" + path + "'");
        }
        label_index = static_cast<std::size_t>(it - names.begin());
    } else if (const auto* idx = std::get_if<std::size_t>(&label)) {
        if (*idx >= width) {
            throw IngestionError("label column index " + std::to_string(*idx) + " out of range in '" +
                                 path + "'");
        }
        label_index = *idx;
    }

    if (rows.empty()) {
        throw IngestionError("dataset '" + path + "' has no usable numeric rows");
    }

    FeatureMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        Eigen::Index c = 0;
        for (std::size_t k = 0; k < width; ++k) {
            if (k == label_index) {
                y[static_cast<Eigen::Index>(r)] = rows[r][k];
            } else {
                x(static_cast<Eigen::Index>(r), c++) = rows[r][k];
            }
        }
    }

    DatasetMetadata meta;
    meta.name = path;
    meta.dropped_rows = dropped;
    if (dropped > 0) {
        meta.warnings.push_back("dropped " + std::to_string(dropped) +
                                " row(s) with missing or non-numeric cells from '" + path + "'");
    }
    return Dataset(std::move(x), std::move(y), std::move(meta));
}

/// Reads one numeric column of a CSV as a series (for AR windowing).
inline std::vector<double> load_series(const std::string& path, const LabelColumn& column = {},
                                       bool header = true, std::size_t* dropped = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open series file '" + path + "'");
    }
    std::string line;
    std::optional<std::size_t> index;
    if (const auto* idx = std::get_if<std::size_t>(&column)) {
        index = *idx;
    }
    if (header) {
        if (!std::getline(in, line)) {
            throw IngestionError("series file '" + path + "' is empty");
        }
        if (const auto* name = std::get_if<std::string>(&column)) {
            const auto names = detail::split_commas(line);
            const auto it = std::find(names.begin(), names.end(), std::string_view(*name));
            if (it == names.end()) {
                throw IngestionError("series column '" + *name + "' not found in '" + path + "'");
            }
            index = static_cast<std::size_t>(it - names.begin());
        }
    } else if (std::holds_alternative<std::string>(column)) {
        throw ConfigError("series column given by name but the file has no header");
    }
    std::vector<double> out;
    std::size_t bad = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split_commas(line);
        const std::size_t k = index.value_or(fields.size() - 1);
        const auto v = k < fields.size() ? detail::parse_double(fields[k]) : std::nullopt;
        if (v) {
            out.push_back(*v);
        } else {
            ++bad;
        }
    }
    if (dropped != nullptr) {
        *dropped = bad;
    }
    if (out.empty()) {
        throw IngestionError("series '" + path + "' has no usable numeric values");
    }
    return out;
}

/// Per-column normalization of features and label. Parameters are computed
/// over the whole stream and recorded in the metadata. Constant columns map
/// to 0 with a warning.
inline Dataset normalize(const Dataset& ds, Normalization mode) {
    Dataset out = ds;
    out.metadata.normalization = mode;
    out.metadata.feature_transforms.assign(ds.dim(), ColumnTransform{});
    out.metadata.label_transform = ColumnTransform{};
    if (mode == Normalization::none) {
        return out;
    }
    if (mode == Normalization::zscore && ds.size() < 2) {
        throw ConfigError("zscore normalization needs at least 2 samples");
    }
    if (ds.size() == 0) {
        throw ConfigError("cannot normalize an empty dataset");
    }

    auto fit = [&](const auto& column, const std::string& what) {
        ColumnTransform t;
        if (mode == Normalization::minmax) {
            const double lo = column.minCoeff();
            const double hi = column.maxCoeff();
            t.offset = lo;
            t.scale = hi - lo;
        } else {
            const double n = static_cast<double>(column.size());
            const double mean = column.sum() / n;
            const double var = (column.array() - mean).square().sum() / n;
            t.offset = mean;
            t.scale = std::sqrt(var);
        }
        if (!(t.scale > 0.0)) {
            out.metadata.warnings.push_back(what + " is constant; mapped to 0");
            t.scale = 0.0;
        }
        return t;
    };
    auto apply = [](auto column, const ColumnTransform& t) {
        if (t.scale == 0.0) {
            column.setZero();
        } else {
            column = (column.array() - t.offset) / t.scale;
        }
    };

    for (std::size_t c = 0; c < ds.dim(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        const auto t = fit(ds.features.col(col), "feature column " + std::to_string(c));
        out.metadata.feature_transforms[c] = t;
        apply(out.features.col(col), t);
    }
    out.metadata.label_transform = fit(ds.labels, "label");
    apply(out.labels.col(0), out.metadata.label_transform);
    return out;
}

/// AR(p) windowing: row k has features (s[k+p-1], ..., s[k]) and label s[k+p].
inline Dataset ar_window(std::span<const double> series, std::size_t p) {
    if (p < 1) {
        throw ConfigError("AR order must be >= 1");
    }
    if (series.size() <= p) {
        throw ConfigError("series of length " + std::to_string(series.size()) +
                          " is too short for AR order " + std::to_string(p));
    }
    const std::size_t rows = series.size() - p;
    FeatureMatrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
    Vector y(static_cast<Eigen::Index>(rows));
    for (std::size_t k = 0; k < rows; ++k) {
        for (std::size_t lag = 0; lag < p; ++lag) {
            x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(lag)) = series[k + p - 1 - lag];
        }
        y[static_cast<Eigen::Index>(k)] = series[k + p];
    }
    DatasetMetadata meta;
    meta.name = "ar" + std::to_string(p);
    return Dataset(std::move(x), std::move(y), std::move(meta));
}

struct SyntheticSpec {
    std::size_t dim = 5;
    std::size_t samples = 1000;
    KernelSpec kernel{};
    std::size_t num_centers = 10;
    double noise_std = 0.0;
    std::uint64_t seed = 1;
    /// When set, every expansion coefficient takes this value instead of
    /// being drawn uniformly from [-1, 1].
    std::optional<double> fixed_coefficient;
};

/// Dataset drawn from a known kernel expansion y = sum_k a_k k(x, c_k) + noise,
/// with inputs and centers uniform on [0,1]^d.
struct SyntheticData {
    Dataset dataset;
    FeatureMatrix centers;
    std::vector<double> coefficients;
    KernelSpec kernel;

    /// Noise-free value of the generating function.
    double evaluate(std::span<const double> x) const {
        double out = 0.0;
        for (std::size_t k = 0; k < coefficients.size(); ++k) {
            const std::span<const double> c(centers.data() + k * static_cast<std::size_t>(centers.cols()),
                                            static_cast<std::size_t>(centers.cols()));
            out += coefficients[k] * kernel.evaluate(x, c);
        }
        return out;
    }
};

inline SyntheticData synth_rkhs(const SyntheticSpec& spec) {
    spec.kernel.validate();
    if (spec.dim < 1 || spec.samples < 1 || spec.num_centers < 1) {
        throw ConfigError("synthetic data needs positive dimension, sample and center counts");
    }
    if (!(spec.noise_std >= 0.0)) {
        throw ConfigError("synthetic noise_std must be >= 0");
    }
    Rng rng(spec.seed);
    SyntheticData out;
    out.kernel = spec.kernel;
    out.centers.resize(static_cast<Eigen::Index>(spec.num_centers), static_cast<Eigen::Index>(spec.dim));
    for (Eigen::Index k = 0; k < out.centers.size(); ++k) {
        out.centers.data()[k] = rng.uniform();
    }
    for (std::size_t k = 0; k < spec.num_centers; ++k) {
        out.coefficients.push_back(spec.fixed_coefficient ? *spec.fixed_coefficient : rng.uniform(-1.0, 1.0));
    }
    FeatureMatrix x(static_cast<Eigen::Index>(spec.samples), static_cast<Eigen::Index>(spec.dim));
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        x.data()[k] = rng.uniform();
    }
    Vector y(static_cast<Eigen::Index>(spec.samples));
    for (std::size_t r = 0; r < spec.samples; ++r) {
        const std::span<const double> row(x.data() + r * spec.dim, spec.dim);
        y[static_cast<Eigen::Index>(r)] = out.evaluate(row) + spec.noise_std * rng.normal();
    }
    DatasetMetadata meta;
    meta.name = "synthetic";
    out.dataset = Dataset(std::move(x), std::move(y), std::move(meta));
    return out;
}

} // namespace domkl
