#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/graph.hpp"

namespace goodd {

enum class SplitMode { ood_pair, anomaly };

struct SplitSpec {
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
    SplitMode mode = SplitMode::ood_pair;
};

struct Split {
    GraphDataset train;
    GraphDataset test;
    std::vector<int> test_labels;  // 0 = ID/normal, 1 = OOD/anomaly
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

inline std::size_t train_count(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ArgumentError("train_fraction must lie in (0, 1], got " + std::to_string(fraction));
    }
    return std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

/// Builds the test set from (dataset, index, label) triples in a seeded
/// order so inference batches mix both classes.
inline Split assemble(GraphDataset train, const std::string& name,
                      std::vector<std::pair<const Graph*, int>> members, std::mt19937_64& rng) {
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<Graph> graphs;
    std::vector<int> labels;
    for (auto& [g, l] : members) {
        graphs.push_back(*g);
        labels.push_back(l);
    }
    GraphDataset test(name, std::move(graphs));
    return {std::move(train), std::move(test), std::move(labels)};
}

}  // namespace detail

/// Train on `train_fraction` of ID; test on the held-out ID plus as many OOD
/// graphs sampled without replacement.
inline Split split_ood(const GraphDataset& id_ds, const GraphDataset& ood_ds, const SplitSpec& spec) {
    if (spec.mode != SplitMode::ood_pair) throw ArgumentError("split_ood requires mode ood_pair");
    if (id_ds.feature_dim() != ood_ds.feature_dim() && !ood_ds.empty()) {
        throw ArgumentError("ID and OOD feature widths differ; align them first");
    }
    std::mt19937_64 rng(spec.seed);
    const auto id_order = detail::shuffled_indices(id_ds.size(), rng);
    const std::size_t n_train = detail::train_count(id_ds.size(), spec.train_fraction);
    const std::size_t n_test = id_ds.size() - n_train;
    if (ood_ds.size() < n_test || n_test == 0) {
        throw ArgumentError("need " + std::to_string(n_test) + " OOD graphs for the test set, have " +
                            std::to_string(ood_ds.size()));
    }
    const auto ood_order = detail::shuffled_indices(ood_ds.size(), rng);

    std::vector<std::size_t> train_idx(id_order.begin(), id_order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::pair<const Graph*, int>> members;
    for (std::size_t i = n_train; i < id_order.size(); ++i) members.emplace_back(&id_ds[id_order[i]], 0);
    for (std::size_t i = 0; i < n_test; ++i) members.emplace_back(&ood_ds[ood_order[i]], 1);
    return detail::assemble(id_ds.subset(id_ds.name() + "_train", train_idx),
                            id_ds.name() + "+" + ood_ds.name() + "_test", std::move(members), rng);
}

/// Index of the anomalous class: smallest count, ties to the larger label id.
inline int minority_label(const GraphDataset& ds) {
    if (!ds.has_labels()) throw ArgumentError("anomaly split needs graph labels on '" + ds.name() + "'");
    std::map<int, std::size_t> counts;
    for (const auto& g : ds.graphs()) ++counts[*g.label()];
    if (counts.size() < 2) throw ArgumentError("anomaly split needs at least two classes in '" + ds.name() + "'");
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second <= best->second) best = it;
    return best->first;
}

/// Minority class is anomalous. Train on `train_fraction` of normals only;
/// test on the remaining normals plus every anomaly.
inline Split split_anomaly(const GraphDataset& ds, const SplitSpec& spec) {
    if (spec.mode != SplitMode::anomaly) throw ArgumentError("split_anomaly requires mode anomaly");
    const int anomalous = minority_label(ds);
    std::vector<std::size_t> normal, anomalies;
    for (std::size_t i = 0; i < ds.size(); ++i) (*ds[i].label() == anomalous ? anomalies : normal).push_back(i);

    std::mt19937_64 rng(spec.seed);
    std::shuffle(normal.begin(), normal.end(), rng);
    const std::size_t n_train = detail::train_count(normal.size(), spec.train_fraction);
    std::vector<std::size_t> train_idx(normal.begin(), normal.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::pair<const Graph*, int>> members;
    for (std::size_t i = n_train; i < normal.size(); ++i) members.emplace_back(&ds[normal[i]], 0);
    for (auto i : anomalies) members.emplace_back(&ds[i], 1);
    return detail::assemble(ds.subset(ds.name() + "_train", train_idx), ds.name() + "_test", std::move(members), rng);
}

}  // namespace goodd
