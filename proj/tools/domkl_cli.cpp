// Command-line front end: `domkl run`, `domkl compare`, `domkl resolve`.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "domkl/domkl.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> dataset;
    std::optional<std::string> label;
    bool no_header = false;
    std::optional<std::string> normalization;
    std::optional<std::size_t> ar_order;
    std::optional<std::string> topology;
    std::optional<std::size_t> learners;
    std::optional<std::string> mode;
    std::optional<std::size_t> kernel_index;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<double> rho;
    std::optional<double> eta;
    std::optional<double> eta_g;
    std::optional<double> reg;
    std::optional<std::size_t> features;
    std::optional<std::size_t> rounds;
    bool sqrt_t = false;
    std::optional<std::string> weight_mode;
    bool allow_cyclic = false;
    std::optional<std::string> solver;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
    std::optional<std::size_t> threads;
    bool no_self_checks = false;
};

void add_options(CLI::App& app, Flags& f) {
    app.add_option("--config", f.config, "JSON config file (schema_version 1)");
    app.add_option("--dataset", f.dataset, "CSV path, or 'synthetic'");
    app.add_option("--label", f.label, "label column name (or 0-based index with --no-header)");
    app.add_flag("--no-header", f.no_header, "CSV has no header row");
    app.add_option("--normalization", f.normalization, "none | minmax | zscore");
    app.add_option("--ar-order", f.ar_order, "treat the dataset as a series and window it into AR(p) rows");
    app.add_option("--topology", f.topology, "complete | ring | path | star");
    app.add_option("--learners,-J", f.learners, "number of learners");
    app.add_option("--mode", f.mode, "domkl | dokl");
    app.add_option("--kernel-index", f.kernel_index, "1-based dictionary entry for dokl");
    app.add_option("--trials", f.trials, "number of seeded trials");
    app.add_option("--seed", f.seed, "master seed");
    app.add_option("--rho", f.rho, "OADMM penalty");
    app.add_option("--eta", f.eta, "OADMM proximal weight");
    app.add_option("--eta-g", f.eta_g, "Hedge temperature");
    app.add_option("--reg", f.reg, "ridge regularization weight");
    app.add_option("--features", f.features, "random features D per kernel");
    app.add_option("--rounds", f.rounds, "rounds T (0 = per-learner stream length)");
    app.add_flag("--sqrt-t-hypers", f.sqrt_t, "set rho = eta = eta_g = sqrt(T)");
    app.add_option("--weight-mode", f.weight_mode, "neighbor | message_passing");
    app.add_flag("--allow-cyclic-message-passing", f.allow_cyclic, "permit message passing on cyclic graphs");
    app.add_option("--solver", f.solver, "closed_form | iterative");
    app.add_option("--out-dir", f.out_dir, "report directory");
    app.add_option("--format", f.format, "json | csv");
    app.add_option("--threads", f.threads, "worker threads for per-learner phases");
    app.add_flag("--no-self-checks", f.no_self_checks, "skip the per-round invariant checks");
}

domkl::ConfigSources collect(const Flags& f) {
    domkl::ConfigSources src;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) {
            throw domkl::ConfigError("cannot open config file '" + f.config + "'");
        }
        try {
            src.file = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw domkl::ConfigError("config file '" + f.config + "' is not valid JSON: " + e.what());
        }
    }
    auto set = [&](const std::string& key, const std::string& flag, nlohmann::json value) {
        src.flags[key] = std::move(value);
        src.flag_names[key] = flag;
    };
    if (f.dataset) {
        if (*f.dataset == "synthetic") set("dataset.source", "--dataset", "synthetic");
        else set("dataset.path", "--dataset", *f.dataset);
    }
    if (f.label) {
        if (f.no_header) {
            try {
                set("dataset.label", "--label", std::stoul(*f.label));
            } catch (const std::exception&) {
                throw domkl::ConfigError("--label must be a 0-based column index when --no-header is set");
            }
        } else {
            set("dataset.label", "--label", *f.label);
        }
    }
    if (f.no_header) set("dataset.header", "--no-header", false);
    if (f.normalization) set("dataset.normalization", "--normalization", *f.normalization);
    if (f.ar_order) {
        set("dataset.ar_order", "--ar-order", *f.ar_order);
        set("dataset.source", "--ar-order", "series");
    }
    if (f.topology) set("topology.preset", "--topology", *f.topology);
    if (f.learners) set("topology.learners", "--learners", *f.learners);
    if (f.mode) set("mode", "--mode", *f.mode);
    if (f.kernel_index) set("kernel_index", "--kernel-index", *f.kernel_index);
    if (f.trials) set("trials", "--trials", *f.trials);
    if (f.seed) set("seed", "--seed", *f.seed);
    if (f.rho) set("hyper.rho", "--rho", *f.rho);
    if (f.eta) set("hyper.eta", "--eta", *f.eta);
    if (f.eta_g) set("hyper.eta_g", "--eta-g", *f.eta_g);
    if (f.reg) set("hyper.reg", "--reg", *f.reg);
    if (f.features) set("dictionary.features", "--features", *f.features);
    if (f.rounds) set("rounds", "--rounds", *f.rounds);
    if (f.sqrt_t) set("hyper.sqrt_t", "--sqrt-t-hypers", true);
    if (f.weight_mode) set("weight_mode", "--weight-mode", *f.weight_mode);
    if (f.allow_cyclic) set("allow_cyclic_message_passing", "--allow-cyclic-message-passing", true);
    if (f.solver) set("solver", "--solver", *f.solver);
    if (f.out_dir) set("output.dir", "--out-dir", *f.out_dir);
    if (f.format) set("output.format", "--format", *f.format);
    if (f.threads) set("threads", "--threads", *f.threads);
    if (f.no_self_checks) set("self_checks", "--no-self-checks", false);
    return src;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed online multiple-kernel learning simulator"};
    app.require_subcommand(1);
    Flags flags;
    auto* run_cmd = app.add_subcommand("run", "run the configured algorithm for all trials and write a report");
    auto* compare_cmd = app.add_subcommand("compare", "DOMKL vs every single-kernel DOKL vs centralized OMKL");
    auto* resolve_cmd = app.add_subcommand("resolve", "print the fully resolved config and exit");
    add_options(*run_cmd, flags);
    add_options(*compare_cmd, flags);
    add_options(*resolve_cmd, flags);
    CLI11_PARSE(app, argc, argv);

    try {
        const auto preset = domkl::parse_config(collect(flags));
        if (resolve_cmd->parsed()) {
            for (const auto& n : preset.notes) std::cerr << "note: " << n << "\n";
            std::cout << domkl::to_json(preset).dump(2) << "\n";
            return 0;
        }
        if (compare_cmd->parsed()) {
            const auto outcome = domkl::run_comparison(preset, &std::cerr);
            domkl::write_report(outcome.report, preset.output.dir, preset.output.format);
            domkl::print_summary_table(outcome.report, preset.variances, std::cout);
            std::cout << "best single kernel: DOKL" << outcome.best_kernel + 1
                      << " (s2=" << preset.variances[outcome.best_kernel] << ")\n"
                      << "DOMKL / best DOKL MSE: " << outcome.domkl_mse / outcome.best_dokl_mse << "\n"
                      << "DOMKL / OMKL MSE: " << outcome.domkl_mse / outcome.omkl_mse << "\n"
                      << "report: " << preset.output.dir.string() << "\n";
            return outcome.ok ? 0 : 2;
        }
        const auto outcome = domkl::run_experiment(preset, &std::cerr);
        domkl::write_report(outcome.report, preset.output.dir, preset.output.format);
        domkl::print_summary_table(outcome.report, preset.variances, std::cout);
        std::cout << "report: " << preset.output.dir.string() << "\n";
        return outcome.ok ? 0 : 2;
    } catch (const domkl::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const domkl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
