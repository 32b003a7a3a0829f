#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "domkl/data.hpp"
#include "domkl/error.hpp"
#include "domkl/kernels.hpp"
#include "domkl/metrics.hpp"
#include "domkl/random.hpp"
#include "domkl/simulator.hpp"
#include "domkl/topology.hpp"

namespace domkl {

/// Version of the experiment config schema accepted by parse_config.
inline constexpr int kConfigSchemaVersion = 1;

/// Environment variables named DOMKL_<KEY> override config file keys, where
/// <KEY> is the dotted key path upper-cased with '.' replaced by '_'
/// (hyper.rho -> DOMKL_HYPER_RHO).
inline constexpr const char* kEnvPrefix = "DOMKL_";

enum class DatasetSource { csv, series, synthetic };

inline std::string to_string(DatasetSource s) {
    switch (s) {
    case DatasetSource::csv: return "csv";
    case DatasetSource::series: return "series";
    case DatasetSource::synthetic: return "synthetic";
    }
    return "unknown";
}

struct DatasetSpec {
    DatasetSource source = DatasetSource::synthetic;
    std::string path;
    LabelColumn label;
    bool header = true;
    std::size_t ar_order = 5;
    Normalization normalization = Normalization::minmax;
    SyntheticSpec synthetic{};
};

struct TopologySpec {
    std::optional<TopologyPreset> preset;
    std::size_t learners = 0;
    /// 0-based; only used without a preset.
    std::vector<Topology::Edge> edges;

    Topology build() const {
        if (preset) {
            return make_topology(*preset, learners);
        }
        return Topology(learners, edges);
    }
};

struct OutputSpec {
    std::filesystem::path dir = "results";
    ReportFormat format = ReportFormat::json;
};

/// A complete, validated, runnable experiment.
struct ExperimentPreset {
    std::string name = "experiment";
    DatasetSpec dataset;
    TopologySpec topology;
    std::vector<double> variances = default_variances();
    std::size_t features = 50;
    SimulationConfig sim;
    std::size_t trials = 10;
    std::uint64_t seed = 42;
    std::optional<double> omkl_step;
    OutputSpec output;
    /// Precedence notes gathered while parsing (flag over file, env over file).
    std::vector<std::string> notes;
};

namespace detail {

/// Every accepted leaf key of the config schema.
inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "schema_version",
        "name",
        "dataset.source",
        "dataset.path",
        "dataset.label",
        "dataset.header",
        "dataset.ar_order",
        "dataset.normalization",
        "dataset.synthetic.dim",
        "dataset.synthetic.samples",
        "dataset.synthetic.kernel_variance",
        "dataset.synthetic.num_centers",
        "dataset.synthetic.noise_std",
        "dataset.synthetic.seed",
        "topology.preset",
        "topology.learners",
        "topology.edges",
        "dictionary.variances",
        "dictionary.features",
        "mode",
        "kernel_index",
        "hyper.rho",
        "hyper.eta",
        "hyper.eta_g",
        "hyper.reg",
        "hyper.sqrt_t",
        "rounds",
        "weight_mode",
        "allow_cyclic_message_passing",
        "solver",
        "self_checks",
        "threads",
        "trials",
        "seed",
        "omkl_step",
        "output.dir",
        "output.format",
    };
    return keys;
}

inline bool is_key_prefix(const std::string& prefix) {
    const auto& keys = config_keys();
    const std::string dotted = prefix + ".";
    return std::any_of(keys.begin(), keys.end(), [&](const std::string& k) { return k.rfind(dotted, 0) == 0; });
}

inline void flatten(const nlohmann::json& node, const std::string& prefix,
                    std::map<std::string, nlohmann::json>& out) {
    if (node.is_object() && (prefix.empty() || is_key_prefix(prefix))) {
        for (const auto& [key, value] : node.items()) {
            flatten(value, prefix.empty() ? key : prefix + "." + key, out);
        }
        return;
    }
    if (!config_keys().contains(prefix)) {
        throw ConfigError("unknown config key '" + prefix + "'");
    }
    out[prefix] = node;
}

inline std::string env_name(const std::string& key) {
    std::string out = kEnvPrefix;
    for (char c : key) {
        out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

inline nlohmann::json parse_scalar(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        return text;
    }
}

/// Typed access to the merged key map with key-path error messages.
class KeyReader {
public:
    explicit KeyReader(const std::map<std::string, nlohmann::json>& values) : values_(values) {}

    bool has(const std::string& key) const { return values_.contains(key); }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError("config key '" + key + "' must be finite");
        return d;
    }

    double positive(const std::string& key, double fallback) const {
        const double d = number(key, fallback);
        if (!(d > 0.0)) throw ConfigError("config key '" + key + "' must be > 0, got " + format_double(d));
        return d;
    }

    double nonnegative(const std::string& key, double fallback) const {
        const double d = number(key, fallback);
        if (!(d >= 0.0)) throw ConfigError("config key '" + key + "' must be >= 0, got " + format_double(d));
        return d;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ConfigError("config key '" + key + "' must be a non-negative integer");
        }
        const auto n = v.get<std::uint64_t>();
        if (n < min) throw ConfigError("config key '" + key + "' must be >= " + std::to_string(min));
        return n;
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
        return v.get<std::string>();
    }

    const nlohmann::json& raw(const std::string& key) const { return values_.at(key); }

private:
    const std::map<std::string, nlohmann::json>& values_;
};

} // namespace detail

/// Sources merged by parse_config, lowest precedence first: config file,
/// environment, command-line flags. Flags are keyed by config key path;
/// `flag_names` maps a key path back to the flag spelling for log notes.
struct ConfigSources {
    nlohmann::json file = nlohmann::json::object();
    std::map<std::string, nlohmann::json> flags;
    std::map<std::string, std::string> flag_names;
    std::function<std::optional<std::string>(const std::string&)> env = [](const std::string& name) {
        const char* v = std::getenv(name.c_str());
        return v ? std::optional<std::string>(v) : std::nullopt;
    };
};

inline ExperimentPreset parse_config(const ConfigSources& sources) {
    std::map<std::string, nlohmann::json> merged;
    ExperimentPreset preset;
    if (!sources.file.is_null()) {
        if (!sources.file.is_object()) {
            throw ConfigError("config file must contain a JSON object");
        }
        detail::flatten(sources.file, "", merged);
    }
    for (const auto& key : detail::config_keys()) {
        if (!sources.env) break;
        if (auto value = sources.env(detail::env_name(key))) {
            const auto parsed = detail::parse_scalar(*value);
            if (merged.contains(key) && merged[key] != parsed) {
                preset.notes.push_back("environment " + detail::env_name(key) + " overrides config key '" + key + "'");
            }
            merged[key] = parsed;
        }
    }
    for (const auto& [key, value] : sources.flags) {
        if (!detail::config_keys().contains(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (merged.contains(key) && merged[key] != value) {
            const auto it = sources.flag_names.find(key);
            const std::string flag = it != sources.flag_names.end() ? it->second : key;
            preset.notes.push_back("flag " + flag + " overrides config key '" + key + "' (" + merged[key].dump() +
                                   " -> " + value.dump() + ")");
        }
        merged[key] = value;
    }

    const detail::KeyReader r(merged);
    if (r.has("schema_version") && r.integer("schema_version", 0) != kConfigSchemaVersion) {
        throw ConfigError("config key 'schema_version' must be " + std::to_string(kConfigSchemaVersion));
    }
    preset.name = r.string("name", preset.name);

    // dataset
    auto& ds = preset.dataset;
    if (!r.has("dataset.source") && !r.has("dataset.path")) {
        throw ConfigError("missing required config key 'dataset.path' (or 'dataset.source': \"synthetic\")");
    }
    if (r.has("dataset.source")) {
        const auto s = r.string("dataset.source", "");
        if (s == "csv") ds.source = DatasetSource::csv;
        else if (s == "series") ds.source = DatasetSource::series;
        else if (s == "synthetic") ds.source = DatasetSource::synthetic;
        else throw ConfigError("config key 'dataset.source' must be csv, series or synthetic");
    } else {
        ds.source = r.has("dataset.ar_order") ? DatasetSource::series : DatasetSource::csv;
    }
    ds.path = r.string("dataset.path", "");
    if (ds.source != DatasetSource::synthetic && ds.path.empty()) {
        throw ConfigError("missing required config key 'dataset.path'");
    }
    if (r.has("dataset.label")) {
        const auto& v = r.raw("dataset.label");
        if (v.is_string()) ds.label = v.get<std::string>();
        else if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) ds.label = v.get<std::size_t>();
        else throw ConfigError("config key 'dataset.label' must be a column name or a 0-based index");
    }
    ds.header = r.boolean("dataset.header", true);
    ds.ar_order = r.integer("dataset.ar_order", 5, 1);
    {
        const auto n = parse_normalization(r.string("dataset.normalization", "minmax"));
        if (!n) throw ConfigError("config key 'dataset.normalization' must be none, minmax or zscore");
        ds.normalization = *n;
    }
    ds.synthetic.dim = r.integer("dataset.synthetic.dim", 5, 1);
    ds.synthetic.samples = r.integer("dataset.synthetic.samples", 1500, 1);
    ds.synthetic.kernel.variance = r.positive("dataset.synthetic.kernel_variance", 1.0);
    ds.synthetic.num_centers = r.integer("dataset.synthetic.num_centers", 20, 1);
    ds.synthetic.noise_std = r.nonnegative("dataset.synthetic.noise_std", 0.01);
    ds.synthetic.seed = r.integer("dataset.synthetic.seed", 1);

    // topology
    if (!r.has("topology.learners")) {
        throw ConfigError("missing required config key 'topology.learners'");
    }
    preset.topology.learners = r.integer("topology.learners", 0, 1);
    if (r.has("topology.preset") && r.has("topology.edges")) {
        throw ConfigError("config keys 'topology.preset' and 'topology.edges' are mutually exclusive");
    }
    if (r.has("topology.preset")) {
        const auto p = parse_topology_preset(r.string("topology.preset", ""));
        if (!p) throw ConfigError("config key 'topology.preset' must be complete, ring, path or star");
        preset.topology.preset = *p;
    } else if (r.has("topology.edges")) {
        const auto& edges = r.raw("topology.edges");
        if (!edges.is_array()) throw ConfigError("config key 'topology.edges' must be a list of [i, j] pairs");
        for (const auto& e : edges) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
                e[0].get<std::int64_t>() < 1 || e[1].get<std::int64_t>() < 1) {
                throw ConfigError("config key 'topology.edges' entries must be 1-based [i, j] pairs");
            }
            preset.topology.edges.emplace_back(e[0].get<std::size_t>() - 1, e[1].get<std::size_t>() - 1);
        }
    } else {
        throw ConfigError("missing required config key 'topology.preset' (or 'topology.edges')");
    }
    preset.topology.build();

    // dictionary
    if (r.has("dictionary.variances")) {
        const auto& v = r.raw("dictionary.variances");
        if (!v.is_array() || v.empty()) throw ConfigError("config key 'dictionary.variances' must be a non-empty list");
        preset.variances.clear();
        for (const auto& x : v) {
            if (!x.is_number() || !(x.get<double>() > 0.0)) {
                throw ConfigError("config key 'dictionary.variances' entries must be positive numbers");
            }
            preset.variances.push_back(x.get<double>());
        }
    }
    preset.features = r.integer("dictionary.features", 50, 1);

    // algorithm
    auto& sim = preset.sim;
    const auto mode = r.string("mode", "domkl");
    if (mode == "domkl") sim.mode = Mode::domkl;
    else if (mode == "dokl") sim.mode = Mode::dokl;
    else throw ConfigError("config key 'mode' must be domkl or dokl");
    if (sim.mode == Mode::dokl && !r.has("kernel_index")) {
        throw ConfigError("missing required config key 'kernel_index' for mode dokl");
    }
    const auto kernel_index = r.integer("kernel_index", 1, 1);
    if (kernel_index > preset.variances.size()) {
        throw ConfigError("config key 'kernel_index' is " + std::to_string(kernel_index) + " but the dictionary has " +
                          std::to_string(preset.variances.size()) + " kernels");
    }
    sim.kernel_index = kernel_index - 1;
    sim.rho = r.positive("hyper.rho", 1.0);
    sim.eta = r.positive("hyper.eta", 1.0);
    sim.eta_g = r.positive("hyper.eta_g", 1.0);
    sim.reg = r.nonnegative("hyper.reg", 0.01);
    const bool explicit_hypers = r.has("hyper.rho") || r.has("hyper.eta") || r.has("hyper.eta_g");
    sim.sqrt_t_hypers = r.boolean("hyper.sqrt_t", !explicit_hypers);
    sim.rounds = r.integer("rounds", 0);
    const auto wm = r.string("weight_mode", "neighbor");
    if (wm == "neighbor") sim.weight_mode = WeightMode::neighbor;
    else if (wm == "message_passing") sim.weight_mode = WeightMode::message_passing;
    else throw ConfigError("config key 'weight_mode' must be neighbor or message_passing");
    sim.allow_cyclic_message_passing = r.boolean("allow_cyclic_message_passing", false);
    const auto solver = r.string("solver", "closed_form");
    if (solver == "closed_form") sim.solver = LocalSolver::closed_form;
    else if (solver == "iterative") sim.solver = LocalSolver::iterative;
    else throw ConfigError("config key 'solver' must be closed_form or iterative");
    sim.self_checks = r.boolean("self_checks", true);
    sim.threads = r.integer("threads", 1, 1);
    if (sim.weight_mode == WeightMode::message_passing && !preset.topology.build().is_acyclic()) {
        if (!sim.allow_cyclic_message_passing) {
            throw ConfigError("config key 'weight_mode' is message_passing but the topology has a cycle "
                              "(set 'allow_cyclic_message_passing' to override)");
        }
        preset.notes.push_back("warning: message passing on a cyclic topology double-counts losses once T exceeds the girth");
    }

    preset.trials = r.integer("trials", 10, 1);
    preset.seed = r.integer("seed", 42);
    if (r.has("omkl_step")) {
        preset.omkl_step = r.positive("omkl_step", 1.0);
    }
    preset.output.dir = r.string("output.dir", "results");
    const auto fmt = r.string("output.format", "json");
    if (fmt == "json") preset.output.format = ReportFormat::json;
    else if (fmt == "csv") preset.output.format = ReportFormat::csv;
    else throw ConfigError("config key 'output.format' must be json or csv");
    return preset;
}

/// Fully materialized config. Feeding it back to parse_config reproduces
/// the preset. Execution-only settings (threads, output location) are
/// left out so that reports do not depend on them.
inline nlohmann::json to_json(const ExperimentPreset& p) {
    nlohmann::json ds{{"source", to_string(p.dataset.source)},
                      {"header", p.dataset.header},
                      {"ar_order", p.dataset.ar_order},
                      {"normalization", to_string(p.dataset.normalization)},
                      {"synthetic",
                       {{"dim", p.dataset.synthetic.dim},
                        {"samples", p.dataset.synthetic.samples},
                        {"kernel_variance", p.dataset.synthetic.kernel.variance},
                        {"num_centers", p.dataset.synthetic.num_centers},
                        {"noise_std", p.dataset.synthetic.noise_std},
                        {"seed", p.dataset.synthetic.seed}}}};
    if (!p.dataset.path.empty()) {
        ds["path"] = p.dataset.path;
    }
    if (const auto* name = std::get_if<std::string>(&p.dataset.label)) {
        ds["label"] = *name;
    } else if (const auto* idx = std::get_if<std::size_t>(&p.dataset.label)) {
        ds["label"] = *idx;
    }
    nlohmann::json topo{{"learners", p.topology.learners}};
    if (p.topology.preset) {
        topo["preset"] = to_string(*p.topology.preset);
    } else {
        nlohmann::json edges = nlohmann::json::array();
        for (auto [a, b] : p.topology.edges) {
            edges.push_back({a + 1, b + 1});
        }
        topo["edges"] = edges;
    }
    nlohmann::json out{{"schema_version", kConfigSchemaVersion},
                       {"name", p.name},
                       {"dataset", ds},
                       {"topology", topo},
                       {"dictionary", {{"variances", p.variances}, {"features", p.features}}},
                       {"mode", to_string(p.sim.mode)},
                       {"kernel_index", p.sim.kernel_index + 1},
                       {"hyper",
                        {{"rho", p.sim.rho},
                         {"eta", p.sim.eta},
                         {"eta_g", p.sim.eta_g},
                         {"reg", p.sim.reg},
                         {"sqrt_t", p.sim.sqrt_t_hypers}}},
                       {"rounds", p.sim.rounds},
                       {"weight_mode", to_string(p.sim.weight_mode)},
                       {"allow_cyclic_message_passing", p.sim.allow_cyclic_message_passing},
                       {"solver", to_string(p.sim.solver)},
                       {"self_checks", p.sim.self_checks},
                       {"trials", p.trials},
                       {"seed", p.seed}};
    if (p.omkl_step) {
        out["omkl_step"] = *p.omkl_step;
    }
    return out;
}

/// Loads and normalizes the dataset named by the spec. Ingestion warnings
/// are kept in the dataset metadata.
inline Dataset load_dataset(const DatasetSpec& spec) {
    Dataset raw;
    switch (spec.source) {
    case DatasetSource::csv:
        raw = load_csv(spec.path, spec.label, spec.header);
        break;
    case DatasetSource::series: {
        std::size_t dropped = 0;
        const auto series = load_series(spec.path, spec.label, spec.header, &dropped);
        raw = ar_window(series, spec.ar_order);
        raw.metadata.name = spec.path;
        raw.metadata.dropped_rows = dropped;
        if (dropped > 0) {
            raw.metadata.warnings.push_back("dropped " + std::to_string(dropped) + " non-numeric value(s) from '" +
                                            spec.path + "'");
        }
        break;
    }
    case DatasetSource::synthetic:
        raw = synth_rkhs(spec.synthetic).dataset;
        break;
    }
    auto warnings = raw.metadata.warnings;
    Dataset out = normalize(raw, spec.normalization);
    out.metadata.warnings.insert(out.metadata.warnings.begin(), warnings.begin(), warnings.end());
    out.metadata.warnings.erase(std::unique(out.metadata.warnings.begin(), out.metadata.warnings.end()),
                                out.metadata.warnings.end());
    return out;
}

/// Per-trial seed and the seeds derived from it.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) { return mix_seed(master, trial); }
inline std::uint64_t partition_seed(std::uint64_t trial) { return mix_seed(trial, 0); }
inline std::uint64_t dictionary_seed(std::uint64_t trial) { return mix_seed(trial, 1); }

/// Metrics of one learner from one run.
struct LearnerEvaluation {
    double mse = 0.0;
    double cv = 0.0;
    std::vector<double> regret_a;
    std::vector<double> regret_d;
    std::vector<double> epsilon;
    std::size_t comparator_kernel = 0;
};

/// Evaluates a distributed run against per-learner hindsight comparators
/// drawn from `dictionary` (the dictionary the run actually used).
inline std::vector<LearnerEvaluation> evaluate_run(const RunLog& log, std::span<const Dataset> streams,
                                                   const KernelDictionary& dictionary, double reg) {
    std::vector<LearnerEvaluation> out(log.num_learners());
    for (std::size_t j = 0; j < out.size(); ++j) {
        auto& e = out[j];
        e.mse = mse(log, j);
        e.regret_d = regret_discrepancy(log, j);
        e.cv = e.regret_d.back() / static_cast<double>(e.regret_d.size());
        const auto best = best_hindsight_comparator(streams[j], dictionary, reg, log.num_rounds());
        e.comparator_kernel = best.kernel;
        e.regret_a = regret_accuracy(learner_losses(log, j), best.comparator.losses);
        e.epsilon = epsilon_curve(log, j);
    }
    return out;
}

struct ExperimentOutcome {
    MetricsReport report;
    bool ok = true;
};

namespace detail {

inline void add_mean_curve(MetricsReport& report, const std::string& name, std::size_t learner,
                           const std::vector<std::vector<double>>& per_trial) {
    Curve c{name, learner, std::vector<double>(per_trial.front().size(), 0.0)};
    for (const auto& v : per_trial) {
        for (std::size_t t = 0; t < v.size(); ++t) {
            c.values[t] += v[t];
        }
    }
    for (auto& v : c.values) {
        v /= static_cast<double>(per_trial.size());
    }
    report.curves.push_back(std::move(c));
}

inline MethodSummary summarize(const std::string& name, const std::vector<std::vector<double>>& mse_trials,
                               const std::vector<std::vector<double>>& cv_trials, bool checks) {
    MethodSummary s;
    s.name = name;
    s.self_checks_passed = checks;
    const std::size_t J = mse_trials.front().size();
    for (std::size_t j = 0; j < J; ++j) {
        std::vector<double> m;
        std::vector<double> c;
        for (std::size_t k = 0; k < mse_trials.size(); ++k) {
            m.push_back(mse_trials[k][j]);
            c.push_back(cv_trials[k][j]);
        }
        const auto [mm, ms] = mean_std(m);
        const auto [cm, cs] = mean_std(c);
        s.mse_mean.push_back(mm);
        s.mse_std.push_back(ms);
        s.cv_mean.push_back(cm);
        s.cv_std.push_back(cs);
    }
    return s;
}

inline std::string method_name(const ExperimentPreset& preset) {
    if (preset.sim.mode == Mode::domkl) {
        return "DOMKL";
    }
    return "DOKL" + std::to_string(preset.sim.kernel_index + 1);
}

inline void print_notes(const ExperimentPreset& preset, const Dataset& ds, std::ostream* log) {
    if (log == nullptr) return;
    for (const auto& n : preset.notes) *log << "note: " << n << "\n";
    for (const auto& w : ds.metadata.warnings) *log << "warning: " << w << "\n";
}

} // namespace detail

/// Runs `trials` seeded trials of the configured algorithm and aggregates
/// MSE/CV (mean, std) and trial-averaged regret/epsilon curves.
inline ExperimentOutcome run_experiment(const ExperimentPreset& preset, std::ostream* log = nullptr) {
    const auto started = std::chrono::steady_clock::now();
    const Dataset ds = load_dataset(preset.dataset);
    detail::print_notes(preset, ds, log);
    const Topology topology = preset.topology.build();
    const std::size_t J = topology.num_learners();

    ExperimentOutcome outcome;
    auto& report = outcome.report;
    report.config = to_json(preset);
    std::vector<std::vector<double>> mse_trials;
    std::vector<std::vector<double>> cv_trials;
    std::vector<std::vector<std::vector<double>>> ra(J), rd(J), eps(J);
    std::vector<std::size_t> comparator_kernels;
    ResolvedHypers hypers;
    bool checks = true;
    for (std::size_t k = 0; k < preset.trials; ++k) {
        const auto seed = trial_seed(preset.seed, k);
        report.seeds.push_back(seed);
        const auto streams = partition_data(ds, J, partition_seed(seed));
        const auto dictionary = make_dictionary(preset.variances, ds.dim(), preset.features, dictionary_seed(seed));
        const auto run_log = run(topology, dictionary, preset.sim, streams);
        hypers = run_log.hypers;
        checks = checks && run_log.checks.passed();
        const auto used = preset.sim.mode == Mode::dokl ? dictionary.single(preset.sim.kernel_index) : dictionary;
        const auto eval = evaluate_run(run_log, streams, used, run_log.hypers.reg);
        std::vector<double> m;
        std::vector<double> c;
        for (std::size_t j = 0; j < J; ++j) {
            m.push_back(eval[j].mse);
            c.push_back(eval[j].cv);
            ra[j].push_back(eval[j].regret_a);
            rd[j].push_back(eval[j].regret_d);
            eps[j].push_back(eval[j].epsilon);
            comparator_kernels.push_back(preset.sim.mode == Mode::dokl ? preset.sim.kernel_index : eval[j].comparator_kernel);
        }
        mse_trials.push_back(std::move(m));
        cv_trials.push_back(std::move(c));
        if (!run_log.checks.passed() && log != nullptr) {
            *log << "error: trial " << k + 1 << " failed runtime self-checks (first at round "
                 << run_log.checks.first_violation_round.value_or(0) << ")\n";
        }
    }
    report.methods.push_back(detail::summarize(detail::method_name(preset), mse_trials, cv_trials, checks));
    for (std::size_t j = 0; j < J; ++j) {
        detail::add_mean_curve(report, "regret_a", j, ra[j]);
        detail::add_mean_curve(report, "regret_d", j, rd[j]);
        detail::add_mean_curve(report, "epsilon", j, eps[j]);
    }
    for (auto& kidx : comparator_kernels) {
        ++kidx;
    }
    report.extra = {{"rounds", hypers.rounds},
                    {"resolved_hyper", {{"rho", hypers.rho}, {"eta", hypers.eta}, {"eta_g", hypers.eta_g}, {"reg", hypers.reg}}},
                    {"samples", ds.size()},
                    {"dimension", ds.dim()},
                    {"dropped_rows", ds.metadata.dropped_rows},
                    {"comparator_kernels", comparator_kernels},
                    {"comparator", "batch ridge regression in random-feature space (best dictionary entry)"}};
    outcome.ok = checks;
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return outcome;
}

struct ComparisonOutcome {
    MetricsReport report;
    /// 0-based dictionary entry of the best single-kernel DOKL, per trial.
    std::vector<std::size_t> best_kernel_per_trial;
    /// Most frequent best kernel (ties to the lower index).
    std::size_t best_kernel = 0;
    double domkl_mse = 0.0;
    double best_dokl_mse = 0.0;
    double median_dokl_mse = 0.0;
    double omkl_mse = 0.0;
    bool ok = true;
};

inline double network_mean(std::span<const double> per_learner) {
    return std::accumulate(per_learner.begin(), per_learner.end(), 0.0) / static_cast<double>(per_learner.size());
}

/// DOMKL vs every single-kernel DOKL vs centralized OMKL on identical
/// partitions and feature maps. Method rows: DOMKL, DOKL1..DOKLP, OMKL.
inline ComparisonOutcome run_comparison(const ExperimentPreset& preset, std::ostream* log = nullptr) {
    const auto started = std::chrono::steady_clock::now();
    const Dataset ds = load_dataset(preset.dataset);
    detail::print_notes(preset, ds, log);
    const Topology topology = preset.topology.build();
    const std::size_t J = topology.num_learners();
    const std::size_t P = preset.variances.size();

    ComparisonOutcome outcome;
    auto& report = outcome.report;
    report.config = to_json(preset);
    // [method][trial][learner]
    std::vector<std::vector<std::vector<double>>> mse_t(P + 2), cv_t(P + 2);
    std::vector<bool> checks(P + 2, true);
    ResolvedHypers hypers;
    double omkl_step = 0.0;
    for (std::size_t k = 0; k < preset.trials; ++k) {
        const auto seed = trial_seed(preset.seed, k);
        report.seeds.push_back(seed);
        const auto streams = partition_data(ds, J, partition_seed(seed));
        const auto dictionary = make_dictionary(preset.variances, ds.dim(), preset.features, dictionary_seed(seed));

        auto record = [&](std::size_t row, const RunLog& run_log) {
            std::vector<double> m;
            std::vector<double> c;
            for (std::size_t j = 0; j < J; ++j) {
                m.push_back(mse(run_log, j));
                c.push_back(consensus_violation(run_log, j));
            }
            mse_t[row].push_back(std::move(m));
            cv_t[row].push_back(std::move(c));
            checks[row] = checks[row] && run_log.checks.passed();
        };

        SimulationConfig cfg = preset.sim;
        cfg.mode = Mode::domkl;
        const auto domkl_log = run(topology, dictionary, cfg, streams);
        hypers = domkl_log.hypers;
        record(0, domkl_log);

        double best = std::numeric_limits<double>::infinity();
        std::size_t best_p = 0;
        cfg.mode = Mode::dokl;
        for (std::size_t p = 0; p < P; ++p) {
            cfg.kernel_index = p;
            const auto dokl_log = run(topology, dictionary, cfg, streams);
            record(1 + p, dokl_log);
            const double avg = network_mean(mse_t[1 + p].back());
            if (avg < best) {
                best = avg;
                best_p = p;
            }
        }
        outcome.best_kernel_per_trial.push_back(best_p);

        const auto merged = merge_streams(streams, hypers.rounds);
        const auto central = run_centralized_omkl(dictionary, hypers.reg, hypers.eta_g, merged, preset.omkl_step);
        omkl_step = central.step;
        std::vector<double> m(J, 0.0);
        std::vector<double> n(J, 0.0);
        for (std::size_t s = 0; s < central.predictions.size(); ++s) {
            const double e = central.predictions[s] - central.labels[s];
            m[central.origin[s]] += e * e;
            n[central.origin[s]] += 1.0;
        }
        for (std::size_t j = 0; j < J; ++j) {
            m[j] /= n[j];
        }
        mse_t[P + 1].push_back(m);
        cv_t[P + 1].push_back(std::vector<double>(J, 0.0));
    }

    report.methods.push_back(detail::summarize("DOMKL", mse_t[0], cv_t[0], checks[0]));
    for (std::size_t p = 0; p < P; ++p) {
        report.methods.push_back(detail::summarize("DOKL" + std::to_string(p + 1), mse_t[1 + p], cv_t[1 + p], checks[1 + p]));
    }
    report.methods.push_back(detail::summarize("OMKL", mse_t[P + 1], cv_t[P + 1], true));

    std::vector<std::size_t> votes(P, 0);
    for (auto b : outcome.best_kernel_per_trial) {
        ++votes[b];
    }
    outcome.best_kernel = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    outcome.domkl_mse = network_mean(report.methods[0].mse_mean);
    std::vector<double> dokl;
    for (std::size_t p = 0; p < P; ++p) {
        dokl.push_back(network_mean(report.methods[1 + p].mse_mean));
    }
    outcome.best_dokl_mse = *std::min_element(dokl.begin(), dokl.end());
    {
        auto sorted = dokl;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        outcome.median_dokl_mse = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    }
    outcome.omkl_mse = network_mean(report.methods[P + 1].mse_mean);
    outcome.ok = std::all_of(checks.begin(), checks.end(), [](bool b) { return b; });

    std::vector<std::size_t> best_one_based;
    for (auto b : outcome.best_kernel_per_trial) {
        best_one_based.push_back(b + 1);
    }
    report.extra = {{"rounds", hypers.rounds},
                    {"resolved_hyper", {{"rho", hypers.rho}, {"eta", hypers.eta}, {"eta_g", hypers.eta_g}, {"reg", hypers.reg}}},
                    {"omkl_step", omkl_step},
                    {"best_kernel", outcome.best_kernel + 1},
                    {"best_kernel_variance", preset.variances[outcome.best_kernel]},
                    {"best_kernel_per_trial", best_one_based},
                    {"domkl_mse", outcome.domkl_mse},
                    {"best_dokl_mse", outcome.best_dokl_mse},
                    {"median_dokl_mse", outcome.median_dokl_mse},
                    {"omkl_mse", outcome.omkl_mse},
                    {"ratio_domkl_over_best_dokl", outcome.domkl_mse / outcome.best_dokl_mse},
                    {"ratio_domkl_over_omkl", outcome.domkl_mse / outcome.omkl_mse}};
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return outcome;
}

/// Per-learner MSE x 10^2 and CV table, one row per method.
inline void print_summary_table(const MetricsReport& report, const std::vector<double>& variances, std::ostream& out) {
    if (report.methods.empty()) {
        return;
    }
    const std::size_t J = report.methods.front().mse_mean.size();
    auto label = [&](const std::string& name) {
        if (name.rfind("DOKL", 0) == 0) {
            const auto p = std::stoul(name.substr(4));
            if (p >= 1 && p <= variances.size()) {
                std::ostringstream s;
                s << name << " (s2=" << std::setprecision(3) << variances[p - 1] << ")";
                return s.str();
            }
        }
        return name;
    };
    auto table = [&](const char* title, double scale, bool scientific, auto field) {
        out << title << "\n" << std::left << std::setw(24) << "method";
        for (std::size_t j = 0; j < J; ++j) {
            out << std::right << std::setw(12) << ("learner " + std::to_string(j + 1));
        }
        out << "\n";
        for (const auto& m : report.methods) {
            out << std::left << std::setw(24) << label(m.name);
            for (std::size_t j = 0; j < J; ++j) {
                out << std::right << std::setw(12) << (scientific ? std::scientific : std::fixed)
                    << std::setprecision(scientific ? 3 : 4) << scale * field(m)[j];
            }
            out << "\n";
        }
        out.unsetf(std::ios::floatfield);
    };
    table("MSE (x 10^2)", 100.0, false, [](const MethodSummary& m) -> const std::vector<double>& { return m.mse_mean; });
    table("CV", 1.0, true, [](const MethodSummary& m) -> const std::vector<double>& { return m.cv_mean; });
}

} // namespace domkl
