#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "domkl/experiment.hpp"

using namespace domkl;
using nlohmann::json;

namespace {

ConfigSources sources(json file, std::map<std::string, std::string> env = {}) {
    ConfigSources s;
    s.file = std::move(file);
    s.env = [env](const std::string& name) -> std::optional<std::string> {
        const auto it = env.find(name);
        return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
    return s;
}

json minimal() {
    return {{"dataset", {{"source", "synthetic"}}}, {"topology", {{"preset", "complete"}, {"learners", 3}}}};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentPreset small_preset() {
    auto p = parse_config(sources(minimal()));
    p.dataset.synthetic.samples = 150;
    p.dataset.synthetic.dim = 3;
    p.trials = 2;
    p.features = 10;
    return p;
}

} // namespace

TEST_CASE("minimal config fills defaults") {
    const auto p = parse_config(sources(minimal()));
    CHECK(p.features == 50);
    CHECK(p.variances == default_variances());
    CHECK(p.sim.sqrt_t_hypers);
    CHECK(p.sim.reg == 0.01);
    CHECK(p.trials == 10);
    CHECK(p.sim.mode == Mode::domkl);
    CHECK(p.topology.build().num_edges() == 3);
    CHECK(p.notes.empty());
}

TEST_CASE("explicit hyperparameters switch off the sqrt rule") {
    auto cfg = minimal();
    cfg["hyper"] = {{"rho", 2.0}};
    CHECK_FALSE(parse_config(sources(cfg)).sim.sqrt_t_hypers);
    cfg["hyper"]["sqrt_t"] = true;
    CHECK(parse_config(sources(cfg)).sim.sqrt_t_hypers);
}

TEST_CASE("flags beat environment beats file") {
    auto cfg = minimal();
    cfg["trials"] = 4;
    cfg["seed"] = 1;
    auto src = sources(cfg, {{"DOMKL_TRIALS", "6"}, {"DOMKL_HYPER_REG", "0.5"}});
    src.flags["trials"] = 8;
    src.flag_names["trials"] = "--trials";
    const auto p = parse_config(src);
    CHECK(p.trials == 8);
    CHECK(p.sim.reg == 0.5);
    CHECK(p.seed == 1);
    bool noted = false;
    for (const auto& n : p.notes) noted = noted || n.find("--trials") != std::string::npos;
    CHECK(noted);
}

TEST_CASE("config errors name the key") {
    auto expect_error = [](const json& cfg, const std::string& key) {
        try {
            parse_config(sources(cfg));
            FAIL("expected a configuration error for " << key);
        } catch (const ConfigError& e) {
            CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring(key));
        }
    };
    auto cfg = minimal();
    cfg["hyper"] = {{"rho", -1.0}};
    expect_error(cfg, "hyper.rho");

    cfg = minimal();
    cfg["mode"] = "dokl";
    cfg["kernel_index"] = 18;
    expect_error(cfg, "kernel_index");

    cfg = minimal();
    cfg["learning_rate"] = 0.1;
    expect_error(cfg, "learning_rate");

    cfg = minimal();
    cfg["dataset"]["synthetic"]["colour"] = 1;
    expect_error(cfg, "dataset.synthetic.colour");

    cfg = minimal();
    cfg["topology"].erase("learners");
    expect_error(cfg, "topology.learners");

    cfg = minimal();
    cfg["output"] = {{"format", "xml"}};
    expect_error(cfg, "output.format");

    cfg = minimal();
    cfg["schema_version"] = 2;
    expect_error(cfg, "schema_version");

    cfg = minimal();
    cfg["topology"] = {{"learners", 3}, {"edges", {{1, 2}, {2, 3}}}};
    cfg["weight_mode"] = "message_passing";
    CHECK_NOTHROW(parse_config(sources(cfg)));
    cfg["topology"]["edges"] = {{1, 2}, {2, 3}, {3, 1}};
    expect_error(cfg, "weight_mode");
}

TEST_CASE("resolved config round trips") {
    auto cfg = minimal();
    cfg["topology"] = {{"learners", 4}, {"edges", {{1, 2}, {2, 3}, {3, 4}}}};
    cfg["mode"] = "dokl";
    cfg["kernel_index"] = 3;
    cfg["hyper"] = {{"rho", 2.0}, {"eta", 3.0}};
    cfg["dictionary"] = {{"variances", {0.5, 1.0, 2.0}}, {"features", 7}};
    const auto p = parse_config(sources(cfg));
    CHECK(p.sim.kernel_index == 2);
    CHECK(p.topology.edges.front() == Topology::Edge{0, 1});
    const auto echo = to_json(p);
    const auto again = parse_config(sources(echo));
    CHECK(to_json(again) == echo);
}

TEST_CASE("seed derivation is stable") {
    CHECK(trial_seed(42, 0) != trial_seed(42, 1));
    CHECK(partition_seed(7) != dictionary_seed(7));
    CHECK(trial_seed(42, 3) == mix_seed(42, 3));
}

TEST_CASE("experiment reports are deterministic") {
    auto p = small_preset();
    const auto a = run_experiment(p);
    p.sim.threads = 3;
    const auto b = run_experiment(p);
    CHECK(a.ok);
    const auto root = std::filesystem::temp_directory_path() / "domkl_experiment_det";
    std::filesystem::remove_all(root);
    write_report(a.report, root / "a", ReportFormat::json);
    write_report(b.report, root / "b", ReportFormat::json);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file() || entry.path().filename() == "run_info.json") continue;
        const auto rel = std::filesystem::relative(entry.path(), root / "a");
        CHECK(slurp(entry.path()) == slurp(root / "b" / rel));
    }
    REQUIRE(a.report.methods.size() == 1);
    CHECK(a.report.methods[0].name == "DOMKL");
    CHECK(a.report.curves.size() == 9);
    CHECK(a.report.seeds.size() == 2);
}

TEST_CASE("comparison has one row per kernel plus DOMKL and OMKL") {
    auto p = small_preset();
    p.trials = 1;
    const auto out = run_comparison(p);
    REQUIRE(out.report.methods.size() == 19);
    CHECK(out.report.methods.front().name == "DOMKL");
    CHECK(out.report.methods[1].name == "DOKL1");
    CHECK(out.report.methods.back().name == "OMKL");
    CHECK(out.report.extra.contains("ratio_domkl_over_best_dokl"));
    CHECK(out.ok);
}

TEST_CASE("with one kernel the DOMKL row equals the DOKL row") {
    auto p = small_preset();
    p.variances = {1.0};
    const auto out = run_comparison(p);
    REQUIRE(out.report.methods.size() == 3);
    CHECK(out.report.methods[0].mse_mean == out.report.methods[1].mse_mean);
    CHECK(out.report.methods[0].cv_mean == out.report.methods[1].cv_mean);
}

// Known-generator check. At the default horizon the online learners favour a
// neighbouring bandwidth, so this is expected to fail; see the README.
TEST_CASE("best single kernel matches the generating kernel", "[!mayfail]") {
    auto p = parse_config(sources(minimal()));
    p.topology.preset = TopologyPreset::ring;
    p.topology.learners = 5;
    p.dataset.normalization = Normalization::none;
    p.dataset.synthetic.samples = 2500;
    p.dataset.synthetic.kernel.variance = default_variances()[8];
    const auto out = run_comparison(p);
    INFO("best kernel " << out.best_kernel + 1);
    CHECK(out.best_kernel == 8);
}

TEST_CASE("dataset loading from config") {
    const auto path = std::filesystem::temp_directory_path() / "domkl_experiment_series.csv";
    {
        std::ofstream out(path);
        out << "v\n";
        for (int k = 0; k < 30; ++k) out << k % 7 << "\n";
    }
    auto cfg = minimal();
    cfg["dataset"] = {{"path", path.string()}, {"ar_order", 3}, {"normalization", "none"}};
    const auto p = parse_config(sources(cfg));
    CHECK(p.dataset.source == DatasetSource::series);
    const auto ds = load_dataset(p.dataset);
    CHECK(ds.size() == 27);
    CHECK(ds.dim() == 3);
    CHECK(ds.labels[0] == 3.0);
}
