#include "catch_amalgamated.hpp"

#include <functional>
#include <vector>

#include "domkl/topology.hpp"

using namespace domkl;

namespace {

// Independent cycle check: DFS that reports a back edge.
bool has_cycle(const Topology& g) {
    const std::size_t n = g.num_learners();
    std::vector<int> parent(n, -1);
    std::vector<bool> seen(n, false);
    std::function<bool(std::size_t, int)> dfs = [&](std::size_t u, int from) {
        seen[u] = true;
        for (auto v : g.neighbors(u)) {
            if (static_cast<int>(v) == from) continue;
            if (seen[v] || dfs(v, static_cast<int>(u))) return true;
        }
        return false;
    };
    return dfs(0, -1);
}

} // namespace

TEST_CASE("five learner example graph") {
    // Edges {1,2},{1,3},{2,3},{3,4},{4,5} in 1-based numbering.
    const Topology g(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}});
    CHECK(g.neighbors(2) == std::vector<std::size_t>{0, 1, 3});
    CHECK(g.neighbors(4) == std::vector<std::size_t>{3});
    CHECK(g.degree(2) == 3);
    CHECK_FALSE(g.is_acyclic());
    CHECK(has_cycle(g));
}

TEST_CASE("invalid graphs are rejected") {
    CHECK_THROWS_AS(Topology(3, {{0, 0}, {0, 1}, {1, 2}}), ConfigError);
    CHECK_THROWS_AS(Topology(3, {{0, 1}, {1, 0}, {1, 2}}), ConfigError);
    CHECK_THROWS_AS(Topology(3, {{0, 1}, {1, 3}}), ConfigError);
    CHECK_THROWS_AS(Topology(4, {{0, 1}, {2, 3}}), ConfigError);
    const Topology ok(2, {{0, 1}});
    CHECK_THROWS_AS(ok.neighbors(2), InputError);
}

TEST_CASE("edges are normalized and sorted") {
    const Topology g(4, {{3, 2}, {1, 0}, {2, 1}});
    const std::vector<Topology::Edge> expected{{0, 1}, {1, 2}, {2, 3}};
    CHECK(g.edges() == expected);
}

TEST_CASE("presets") {
    const std::size_t J = 6;
    const auto complete = make_topology(TopologyPreset::complete, J);
    CHECK(complete.num_edges() == J * (J - 1) / 2);
    for (std::size_t j = 0; j < J; ++j) CHECK(complete.degree(j) == J - 1);

    const auto ring = make_topology(TopologyPreset::ring, J);
    CHECK(ring.num_edges() == J);
    for (std::size_t j = 0; j < J; ++j) CHECK(ring.degree(j) == 2);
    CHECK(ring.neighbors(0) == std::vector<std::size_t>{1, 5});

    const auto path = make_topology(TopologyPreset::path, J);
    CHECK(path.num_edges() == J - 1);
    CHECK(path.degree(0) == 1);
    CHECK(path.degree(3) == 2);

    const auto star = make_topology(TopologyPreset::star, J);
    CHECK(star.degree(0) == J - 1);
    for (std::size_t j = 1; j < J; ++j) CHECK(star.neighbors(j) == std::vector<std::size_t>{0});

    CHECK(make_topology(TopologyPreset::ring, 2).num_edges() == 1);
    CHECK_THROWS_AS(make_topology(TopologyPreset::ring, 1), ConfigError);
}

TEST_CASE("acyclicity agrees with a DFS oracle") {
    for (auto preset : {TopologyPreset::complete, TopologyPreset::ring, TopologyPreset::path, TopologyPreset::star}) {
        for (std::size_t J = 2; J <= 7; ++J) {
            const auto g = make_topology(preset, J);
            CHECK(g.is_acyclic() == !has_cycle(g));
        }
    }
}

TEST_CASE("preset names round trip") {
    for (auto preset : {TopologyPreset::complete, TopologyPreset::ring, TopologyPreset::path, TopologyPreset::star}) {
        CHECK(parse_topology_preset(to_string(preset)) == preset);
    }
    CHECK_FALSE(parse_topology_preset("torus").has_value());
}
