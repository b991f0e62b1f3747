#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/graph.hpp"

namespace goodd {

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Graph erdos_renyi(std::size_t n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(p);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            if (coin(rng)) edges.emplace_back(i, j);
    return Graph(n, std::move(edges));
}

/// Preferential attachment: star on m+1 nodes, then each new node links to m
/// distinct existing nodes drawn proportionally to degree.
inline Graph preferential_attachment(std::size_t n, std::size_t m, std::mt19937_64& rng) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<std::uint32_t> stubs;  // node repeated once per incident edge end
    for (std::uint32_t leaf = 1; leaf <= m && leaf < n; ++leaf) {
        edges.emplace_back(0, leaf);
        stubs.push_back(0);
        stubs.push_back(leaf);
    }
    for (auto v = static_cast<std::uint32_t>(m + 1); v < n; ++v) {
        std::vector<std::uint32_t> targets;
        while (targets.size() < m) {
            const auto t = stubs[uniform_index(rng, 0, stubs.size() - 1)];
            if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
        }
        for (auto t : targets) {
            edges.emplace_back(t, v);
            stubs.push_back(t);
            stubs.push_back(v);
        }
    }
    return Graph(n, std::move(edges));
}

}  // namespace detail

/// Structure-only ID/OOD pair: Erdős–Rényi graphs (p = 0.15) as ID and
/// preferential-attachment graphs (2 links per new node) as OOD, node counts
/// uniform in [20, 40], constant features.
inline std::pair<GraphDataset, GraphDataset> generate_synthetic_pair(std::size_t n_graphs, std::uint64_t seed) {
    if (n_graphs < 2) throw ArgumentError("synthetic pair needs at least 2 graphs, got " + std::to_string(n_graphs));
    std::mt19937_64 rng(seed);
    std::vector<Graph> id, ood;
    id.reserve(n_graphs);
    ood.reserve(n_graphs);
    for (std::size_t i = 0; i < n_graphs; ++i) id.push_back(detail::erdos_renyi(detail::uniform_index(rng, 20, 40), 0.15, rng));
    for (std::size_t i = 0; i < n_graphs; ++i) ood.push_back(detail::preferential_attachment(detail::uniform_index(rng, 20, 40), 2, rng));
    return {GraphDataset("ER", std::move(id)), GraphDataset("BA", std::move(ood))};
}

}  // namespace goodd
