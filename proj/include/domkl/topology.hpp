#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "domkl/error.hpp"

namespace domkl {

/// Undirected learner graph. Learners are indexed 0..J-1 in the library;
/// config files and the CLI use 1-based indices.
///
/// Construction rejects self-loops, duplicate edges, out-of-range endpoints
/// and disconnected graphs.
class Topology {
public:
    using Edge = std::pair<std::size_t, std::size_t>;

    Topology(std::size_t num_learners, std::span<const Edge> edges)
        : adjacency_(num_learners) {
        if (num_learners < 1) {
            throw ConfigError("topology needs at least one learner");
        }
        for (auto [a, b] : edges) {
            if (a >= num_learners || b >= num_learners) {
                throw ConfigError("edge {" + std::to_string(a + 1) + "," + std::to_string(b + 1) +
                                  "} references a learner outside 1.." +
                                  std::to_string(num_learners));
            }
            if (a == b) {
                throw ConfigError("self-loop on learner " + std::to_string(a + 1));
            }
            auto& na = adjacency_[a];
            if (std::find(na.begin(), na.end(), b) != na.end()) {
                throw ConfigError("duplicate edge {" + std::to_string(a + 1) + "," +
                                  std::to_string(b + 1) + "}");
            }
            na.push_back(b);
            adjacency_[b].push_back(a);
            edges_.emplace_back(std::min(a, b), std::max(a, b));
        }
        for (auto& n : adjacency_) {
            std::sort(n.begin(), n.end());
        }
        std::sort(edges_.begin(), edges_.end());
        if (!connected()) {
            throw ConfigError("topology is disconnected; every learner must be reachable");
        }
    }

    Topology(std::size_t num_learners, std::initializer_list<Edge> edges)
        : Topology(num_learners, std::span<const Edge>(edges.begin(), edges.size())) {}

    std::size_t num_learners() const noexcept { return adjacency_.size(); }
    std::size_t num_edges() const noexcept { return edges_.size(); }
    /// Normalized (min, max) pairs in sorted order.
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Sorted neighbor indices of learner j.
    const std::vector<std::size_t>& neighbors(std::size_t j) const {
        if (j >= num_learners()) {
            throw InputError("learner index " + std::to_string(j) + " out of range");
        }
        return adjacency_[j];
    }

    std::size_t degree(std::size_t j) const { return neighbors(j).size(); }

    /// Connected graphs only, so a tree iff |E| = J - 1.
    bool is_acyclic() const noexcept { return edges_.size() + 1 == num_learners(); }

private:
    bool connected() const {
        std::vector<bool> seen(num_learners(), false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        std::size_t count = 1;
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (auto w : adjacency_[v]) {
                if (!seen[w]) {
                    seen[w] = true;
                    ++count;
                    stack.push_back(w);
                }
            }
        }
        return count == num_learners();
    }

    std::vector<std::vector<std::size_t>> adjacency_;
    std::vector<Edge> edges_;
};

enum class TopologyPreset { complete, ring, path, star };

inline std::optional<TopologyPreset> parse_topology_preset(std::string_view name) {
    if (name == "complete") return TopologyPreset::complete;
    if (name == "ring") return TopologyPreset::ring;
    if (name == "path") return TopologyPreset::path;
    if (name == "star") return TopologyPreset::star;
    return std::nullopt;
}

inline std::string to_string(TopologyPreset preset) {
    switch (preset) {
    case TopologyPreset::complete: return "complete";
    case TopologyPreset::ring: return "ring";
    case TopologyPreset::path: return "path";
    case TopologyPreset::star: return "star";
    }
    return "unknown";
}

/// Standard graphs on J learners. The star is centered on learner 0; a ring
/// on two learners degenerates to the single edge.
inline Topology make_topology(TopologyPreset preset, std::size_t J) {
    if (J < 2) {
        throw ConfigError("topology presets need at least 2 learners, got " + std::to_string(J));
    }
    std::vector<Topology::Edge> edges;
    switch (preset) {
    case TopologyPreset::complete:
        for (std::size_t a = 0; a < J; ++a) {
            for (std::size_t b = a + 1; b < J; ++b) {
                edges.emplace_back(a, b);
            }
        }
        break;
    case TopologyPreset::ring:
        for (std::size_t a = 0; a + 1 < J; ++a) {
            edges.emplace_back(a, a + 1);
        }
        if (J > 2) {
            edges.emplace_back(J - 1, 0);
        }
        break;
    case TopologyPreset::path:
        for (std::size_t a = 0; a + 1 < J; ++a) {
            edges.emplace_back(a, a + 1);
        }
        break;
    case TopologyPreset::star:
        for (std::size_t b = 1; b < J; ++b) {
            edges.emplace_back(0, b);
        }
        break;
    }
    return Topology(J, edges);
}

} // namespace domkl
