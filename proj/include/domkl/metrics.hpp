#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "domkl/data.hpp"
#include "domkl/error.hpp"
#include "domkl/kernels.hpp"
#include "domkl/simulator.hpp"

namespace domkl {

/// Version of the on-disk report layout written by write_report.
inline constexpr int kReportSchemaVersion = 1;

/// (1/T) sum (prediction - label)^2.
inline double mse(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.size() != labels.size()) {
        throw InputError("mse: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) {
        throw InputError("mse: empty input");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < predictions.size(); ++t) {
        const double e = predictions[t] - labels[t];
        sum += e * e;
    }
    return sum / static_cast<double>(predictions.size());
}

inline double mse(const RunLog& log, std::size_t j) {
    std::vector<double> pred;
    std::vector<double> lab;
    pred.reserve(log.num_rounds());
    lab.reserve(log.num_rounds());
    for (const auto& r : log.rounds) {
        pred.push_back(r.learners.at(j).prediction);
        lab.push_back(r.learners.at(j).label);
    }
    return mse(pred, lab);
}

/// Per-round |sum_{i in N_j} (f_j(x_{j,t}) - f_i(x_{j,t}))|^2.
inline std::vector<double> consensus_contributions(const RunLog& log, std::size_t j) {
    if (j >= log.num_learners()) {
        throw InputError("learner index " + std::to_string(j) + " out of range");
    }
    std::vector<double> out;
    out.reserve(log.num_rounds());
    for (const auto& r : log.rounds) {
        const auto& rec = r.learners.at(j);
        if (rec.neighbor_values.size() != log.neighbors[j].size()) {
            throw ProtocolError("round " + std::to_string(r.t + 1) + ": learner " + std::to_string(j + 1) +
                                " is missing neighbor evaluations");
        }
        double diff = 0.0;
        for (double v : rec.neighbor_values) {
            diff += rec.prediction - v;
        }
        out.push_back(diff * diff);
    }
    return out;
}

/// Partial sums of the values.
inline std::vector<double> cumulative(std::span<const double> values) {
    std::vector<double> out(values.size());
    std::partial_sum(values.begin(), values.end(), out.begin());
    return out;
}

/// Cumulative consensus discrepancy regret_d(t), t = 1..T.
inline std::vector<double> regret_discrepancy(const RunLog& log, std::size_t j) {
    return cumulative(consensus_contributions(log, j));
}

/// CV_j = regret_d(T) / T, sharing the summation with regret_discrepancy.
inline double consensus_violation(const RunLog& log, std::size_t j) {
    const auto curve = regret_discrepancy(log, j);
    if (curve.empty()) {
        throw InputError("consensus_violation: empty log");
    }
    return curve.back() / static_cast<double>(curve.size());
}

/// Partial sums of learner_loss[t] - comparator_loss[t].
inline std::vector<double> regret_accuracy(std::span<const double> learner_losses,
                                           std::span<const double> comparator_losses) {
    if (learner_losses.size() != comparator_losses.size()) {
        throw InputError("regret_accuracy: " + std::to_string(learner_losses.size()) + " learner losses vs " +
                         std::to_string(comparator_losses.size()) + " comparator losses");
    }
    std::vector<double> out(learner_losses.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        acc += learner_losses[t] - comparator_losses[t];
        out[t] = acc;
    }
    return out;
}

/// Best fixed parameter vector in hindsight for one kernel.
struct Comparator {
    Vector theta;
    /// Squared prediction error of theta on each round.
    std::vector<double> losses;
    /// Ridge actually added to the normal equations (T * reg + jitter).
    double ridge = 0.0;
    /// True when reg == 0, so only the jitter keeps the system nonsingular.
    bool jitter_only = false;
    double total() const { return std::accumulate(losses.begin(), losses.end(), 0.0); }
};

inline constexpr double kComparatorJitter = 1e-9;

/// Batch ridge regression in random-feature space over the first `rounds`
/// samples of the stream:
///
///     min_theta  sum_t (y_t - theta' z(x_t))^2 + reg ||theta||^2
///
/// i.e. (Z'Z + (T reg + jitter) I) theta = Z'y. When T < 2D the equivalent
/// dual form theta = Z' (ZZ' + ridge I)^{-1} y is solved instead; it is
/// better conditioned in the underdetermined regime.
inline Comparator hindsight_comparator(const Dataset& stream, const RFFeatureMap& map, double reg,
                                       std::size_t rounds = 0) {
    if (!(reg >= 0.0)) {
        throw ConfigError("hindsight_comparator: reg must be >= 0");
    }
    const std::size_t T = rounds == 0 ? stream.size() : rounds;
    if (T < 1 || T > stream.size()) {
        throw InputError("hindsight_comparator: stream has " + std::to_string(stream.size()) +
                         " samples, need " + std::to_string(T));
    }
    const auto n = static_cast<Eigen::Index>(T);
    const auto m = static_cast<Eigen::Index>(map.dim_features());
    Matrix Z(n, m);
    Vector z;
    for (Eigen::Index t = 0; t < n; ++t) {
        map.features_into(stream.row(static_cast<std::size_t>(t)), z);
        Z.row(t) = z.transpose();
    }
    const Vector y = stream.labels.head(n);

    Comparator out;
    out.ridge = static_cast<double>(T) * reg + kComparatorJitter;
    out.jitter_only = reg == 0.0;
    if (n >= m) {
        Matrix gram = Z.transpose() * Z;
        gram.diagonal().array() += out.ridge;
        out.theta = gram.ldlt().solve(Z.transpose() * y);
    } else {
        Matrix gram = Z * Z.transpose();
        gram.diagonal().array() += out.ridge;
        out.theta = Z.transpose() * gram.ldlt().solve(y);
    }
    if (!out.theta.allFinite()) {
        throw NumericError("hindsight_comparator: solution is not finite");
    }
    const Vector residual = y - Z * out.theta;
    out.losses.resize(T);
    for (Eigen::Index t = 0; t < n; ++t) {
        out.losses[static_cast<std::size_t>(t)] = residual[t] * residual[t];
    }
    return out;
}

/// Comparator of the dictionary entry with the smallest total hindsight loss.
struct BestComparator {
    Comparator comparator;
    std::size_t kernel = 0;
};

inline BestComparator best_hindsight_comparator(const Dataset& stream, const KernelDictionary& dictionary,
                                                double reg, std::size_t rounds = 0) {
    BestComparator best;
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < dictionary.size(); ++p) {
        auto c = hindsight_comparator(stream, dictionary[p], reg, rounds);
        const double total = c.total();
        if (total < best_total) {
            best_total = total;
            best.comparator = std::move(c);
            best.kernel = p;
        }
    }
    return best;
}

/// Per-round squared errors of learner j.
inline std::vector<double> learner_losses(const RunLog& log, std::size_t j) {
    std::vector<double> out;
    out.reserve(log.num_rounds());
    for (const auto& r : log.rounds) {
        out.push_back(r.learners.at(j).loss);
    }
    return out;
}

inline std::vector<double> epsilon_curve(const RunLog& log, std::size_t j) {
    std::vector<double> out;
    out.reserve(log.num_rounds());
    for (const auto& r : log.rounds) {
        out.push_back(r.learners.at(j).epsilon);
    }
    return out;
}

/// A named per-round curve for one learner. Written as (t, value) rows
/// with t starting at 1.
struct Curve {
    std::string name;
    std::size_t learner = 0;
    std::vector<double> values;
};

/// Aggregated per-learner results of one method across trials.
struct MethodSummary {
    std::string name;
    std::vector<double> mse_mean;
    std::vector<double> mse_std;
    std::vector<double> cv_mean;
    std::vector<double> cv_std;
    bool self_checks_passed = true;
};

struct MetricsReport {
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::uint64_t> seeds;
    std::vector<MethodSummary> methods;
    std::vector<Curve> curves;
    /// Free-form extra results (comparison ratios, best kernel, ...).
    nlohmann::json extra = nlohmann::json::object();
    /// Not part of the deterministic payload; written to run_info.json.
    double wall_clock_seconds = 0.0;
};

enum class ReportFormat { csv, json };

inline std::string to_string(ReportFormat f) { return f == ReportFormat::csv ? "csv" : "json"; }

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(std::span<const double> values) {
    if (values.empty()) {
        return {0.0, 0.0};
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return {mean, std::sqrt(ss / (n - 1.0))};
}

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw IoError("could not format number");
    }
    return std::string(buf, ptr);
}

inline nlohmann::json summary_json(const MetricsReport& report) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : report.methods) {
        methods.push_back({{"name", m.name},
                           {"mse_mean", m.mse_mean},
                           {"mse_std", m.mse_std},
                           {"cv_mean", m.cv_mean},
                           {"cv_std", m.cv_std},
                           {"self_checks_passed", m.self_checks_passed}});
    }
    return {{"schema_version", kReportSchemaVersion},
            {"config", report.config},
            {"seeds", report.seeds},
            {"methods", methods},
            {"extra", report.extra}};
}

inline std::string curve_file_stem(const Curve& c) {
    return c.name + "_learner" + std::to_string(c.learner + 1);
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    out.flush();
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
} // namespace detail

/// Writes the report under `dir`:
///
///   summary.{json,csv}    per-method, per-learner MSE/CV mean and std
///   config.json           fully resolved configuration (re-runnable)
///   curves/<name>_learner<j>.{csv,json}   per-round curves, columns t,value
///   run_info.json         wall-clock time; excluded from the payload
///
/// Everything except run_info.json is a deterministic function of the
/// report contents.
inline void write_report(const MetricsReport& report, const std::filesystem::path& dir, ReportFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "curves", ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    if (format == ReportFormat::json) {
        detail::write_text(dir / "summary.json", summary_json(report).dump(2) + "\n");
    } else {
        std::string csv = "method,learner,mse_mean,mse_std,cv_mean,cv_std,self_checks_passed\n";
        for (const auto& m : report.methods) {
            for (std::size_t j = 0; j < m.mse_mean.size(); ++j) {
                csv += m.name + "," + std::to_string(j + 1) + "," + format_double(m.mse_mean[j]) + "," +
                       format_double(m.mse_std[j]) + "," + format_double(m.cv_mean[j]) + "," +
                       format_double(m.cv_std[j]) + "," + (m.self_checks_passed ? "true" : "false") + "\n";
            }
        }
        detail::write_text(dir / "summary.csv", csv);
    }
    detail::write_text(dir / "config.json", report.config.dump(2) + "\n");
    for (const auto& c : report.curves) {
        const auto stem = curve_file_stem(c);
        if (format == ReportFormat::json) {
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t t = 0; t < c.values.size(); ++t) {
                rows.push_back({{"t", t + 1}, {"value", c.values[t]}});
            }
            detail::write_text(dir / "curves" / (stem + ".json"), rows.dump() + "\n");
        } else {
            std::string csv = "t,value\n";
            for (std::size_t t = 0; t < c.values.size(); ++t) {
                csv += std::to_string(t + 1) + "," + format_double(c.values[t]) + "\n";
            }
            detail::write_text(dir / "curves" / (stem + ".csv"), csv);
        }
    }
    const nlohmann::json info{{"schema_version", kReportSchemaVersion},
                              {"wall_clock_seconds", report.wall_clock_seconds}};
    detail::write_text(dir / "run_info.json", info.dump(2) + "\n");
}

/// Reads a curve file written by write_report (either format).
inline std::vector<double> read_curve(const std::filesystem::path& path) {
    const std::string text = detail::read_text(path);
    std::vector<double> out;
    if (path.extension() == ".json") {
        const auto rows = nlohmann::json::parse(text);
        for (const auto& r : rows) {
            out.push_back(r.at("value").get<double>());
        }
        return out;
    }
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line != "t,value") {
        throw IngestionError("'" + path.string() + "' is not a curve file");
    }
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        const auto v = detail::parse_double(std::string_view(line).substr(comma + 1));
        if (comma == std::string::npos || !v) {
            throw IngestionError("malformed curve row in '" + path.string() + "'");
        }
        out.push_back(*v);
    }
    return out;
}

/// Reads summary.{json,csv} back into method summaries.
inline std::vector<MethodSummary> read_summary(const std::filesystem::path& path) {
    const std::string text = detail::read_text(path);
    std::vector<MethodSummary> out;
    if (path.extension() == ".json") {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& m : doc.at("methods")) {
            MethodSummary s;
            s.name = m.at("name").get<std::string>();
            s.mse_mean = m.at("mse_mean").get<std::vector<double>>();
            s.mse_std = m.at("mse_std").get<std::vector<double>>();
            s.cv_mean = m.at("cv_mean").get<std::vector<double>>();
            s.cv_std = m.at("cv_std").get<std::vector<double>>();
            s.self_checks_passed = m.at("self_checks_passed").get<bool>();
            out.push_back(std::move(s));
        }
        return out;
    }
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto fields = detail::split_commas(line);
        if (fields.size() != 7) {
            throw IngestionError("malformed summary row in '" + path.string() + "'");
        }
        if (out.empty() || out.back().name != fields[0]) {
            out.push_back(MethodSummary{std::string(fields[0]), {}, {}, {}, {}, true});
        }
        auto& s = out.back();
        s.mse_mean.push_back(detail::parse_double(fields[2]).value());
        s.mse_std.push_back(detail::parse_double(fields[3]).value());
        s.cv_mean.push_back(detail::parse_double(fields[4]).value());
        s.cv_std.push_back(detail::parse_double(fields[5]).value());
        s.self_checks_passed = s.self_checks_passed && fields[6] == "true";
    }
    return out;
}

} // namespace domkl
