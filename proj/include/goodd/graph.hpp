#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/matrix.hpp"

namespace goodd {

/// Undirected edge stored once with u < v.
struct Edge {
    std::uint32_t u = 0;
    std::uint32_t v = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Counts of entries removed while normalizing a raw edge list.
struct EdgeCleanup {
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
};

/// Canonicalizes a raw edge list: orients u < v, drops self-loops and
/// duplicates (including the reverse orientation), sorts.
inline std::vector<Edge> normalize_edges(std::vector<std::pair<std::uint32_t, std::uint32_t>> raw,
                                         EdgeCleanup* cleanup = nullptr) {
    std::vector<Edge> edges;
    edges.reserve(raw.size());
    std::size_t loops = 0;
    for (auto [a, b] : raw) {
        if (a == b) {
            ++loops;
            continue;
        }
        edges.push_back(a < b ? Edge{a, b} : Edge{b, a});
    }
    std::sort(edges.begin(), edges.end());
    const std::size_t before = edges.size();
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    if (cleanup) {
        cleanup->self_loops += loops;
        cleanup->duplicates += before - edges.size();
    }
    return edges;
}

/// Compressed sparse rows of a symmetric 0/1 adjacency (both orientations).
struct Adjacency {
    std::size_t node_count = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> col;

    static Adjacency from_edges(std::size_t n, const std::vector<Edge>& edges) {
        Adjacency adj;
        adj.node_count = n;
        std::vector<std::size_t> deg(n, 0);
        for (const auto& e : edges) {
            ++deg[e.u];
            ++deg[e.v];
        }
        adj.row_ptr.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) adj.row_ptr[i + 1] = adj.row_ptr[i] + deg[i];
        adj.col.assign(adj.row_ptr[n], 0);
        std::vector<std::size_t> fill(adj.row_ptr.begin(), adj.row_ptr.end() - 1);
        for (const auto& e : edges) {
            adj.col[fill[e.u]++] = e.v;
            adj.col[fill[e.v]++] = e.u;
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::sort(adj.col.begin() + static_cast<std::ptrdiff_t>(adj.row_ptr[i]),
                      adj.col.begin() + static_cast<std::ptrdiff_t>(adj.row_ptr[i + 1]));
        }
        return adj;
    }

    std::size_t degree(std::size_t i) const { return row_ptr[i + 1] - row_ptr[i]; }

    std::span<const std::uint32_t> neighbors(std::size_t i) const {
        return {col.data() + row_ptr[i], degree(i)};
    }
};

/// A simple undirected graph with dense node features.
class Graph {
public:
    Graph() : features_(0, 1) {}

    /// `edges` may be raw; it is normalized here. An empty feature matrix is
    /// replaced with a constant 1.0 column.
    Graph(std::size_t node_count, std::vector<std::pair<std::uint32_t, std::uint32_t>> raw_edges,
          Matrix features = {}, std::optional<int> label = std::nullopt, EdgeCleanup* cleanup = nullptr)
        : node_count_(node_count), label_(label) {
        for (auto [a, b] : raw_edges) {
            if (a >= node_count || b >= node_count) {
                throw ArgumentError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                    ") out of range for graph with " + std::to_string(node_count) +
                                    " nodes");
            }
        }
        edges_ = normalize_edges(std::move(raw_edges), cleanup);
        set_features(std::move(features));
        adjacency_ = Adjacency::from_edges(node_count_, edges_);
    }

    std::size_t node_count() const noexcept { return node_count_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Matrix& features() const noexcept { return features_; }
    std::size_t feature_dim() const noexcept { return features_.cols(); }
    const std::optional<int>& label() const noexcept { return label_; }
    const Adjacency& adjacency() const noexcept { return adjacency_; }
    std::size_t degree(std::size_t i) const { return adjacency_.degree(i); }

    /// Returns a copy with features zero-padded on the right to `width`.
    Graph with_feature_width(std::size_t width) const {
        if (width < feature_dim()) throw ArgumentError("cannot shrink feature width");
        Graph g = *this;
        if (width == feature_dim()) return g;
        Matrix padded(node_count_, width);
        for (std::size_t i = 0; i < node_count_; ++i)
            std::copy(features_.row(i).begin(), features_.row(i).end(), padded.row(i).begin());
        g.features_ = std::move(padded);
        return g;
    }

    Graph with_label(std::optional<int> label) const {
        Graph g = *this;
        g.label_ = label;
        return g;
    }

    /// Relabels node i as perm[i].
    Graph permuted(const std::vector<std::size_t>& perm) const {
        if (perm.size() != node_count_) throw ArgumentError("permutation length mismatch");
        std::vector<std::pair<std::uint32_t, std::uint32_t>> raw;
        raw.reserve(edges_.size());
        for (const auto& e : edges_)
            raw.emplace_back(static_cast<std::uint32_t>(perm[e.u]), static_cast<std::uint32_t>(perm[e.v]));
        Matrix x(node_count_, feature_dim());
        for (std::size_t i = 0; i < node_count_; ++i)
            std::copy(features_.row(i).begin(), features_.row(i).end(), x.row(perm[i]).begin());
        return Graph(node_count_, std::move(raw), std::move(x), label_);
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.node_count_ == b.node_count_ && a.edges_ == b.edges_ && a.features_ == b.features_ &&
               a.label_ == b.label_;
    }

private:
    void set_features(Matrix features) {
        if (features.empty() && features.cols() == 0) {
            features_ = Matrix(node_count_, 1, 1.0);
            return;
        }
        if (features.rows() != node_count_) {
            throw ArgumentError("feature matrix has " + std::to_string(features.rows()) + " rows for " +
                                std::to_string(node_count_) + " nodes");
        }
        if (features.cols() == 0) throw ArgumentError("feature width must be at least 1");
        features_ = std::move(features);
    }

    std::size_t node_count_ = 0;
    std::vector<Edge> edges_;
    Matrix features_;
    std::optional<int> label_;
    Adjacency adjacency_;
};

/// Ordered collection of graphs sharing a feature width.
class GraphDataset {
public:
    GraphDataset() = default;
    GraphDataset(std::string name, std::vector<Graph> graphs) : name_(std::move(name)), graphs_(std::move(graphs)) {
        if (!graphs_.empty()) {
            feature_dim_ = graphs_.front().feature_dim();
            for (const auto& g : graphs_) {
                if (g.feature_dim() != feature_dim_) {
                    throw ArgumentError("dataset '" + name_ + "' mixes feature widths " +
                                        std::to_string(feature_dim_) + " and " + std::to_string(g.feature_dim()));
                }
            }
        }
    }

    const std::string& name() const noexcept { return name_; }
    const std::vector<Graph>& graphs() const noexcept { return graphs_; }
    std::size_t size() const noexcept { return graphs_.size(); }
    bool empty() const noexcept { return graphs_.empty(); }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    const Graph& operator[](std::size_t i) const { return graphs_[i]; }

    bool has_labels() const {
        return !graphs_.empty() &&
               std::all_of(graphs_.begin(), graphs_.end(), [](const Graph& g) { return g.label().has_value(); });
    }

    GraphDataset subset(std::string name, const std::vector<std::size_t>& indices) const {
        std::vector<Graph> out;
        out.reserve(indices.size());
        for (auto i : indices) out.push_back(graphs_.at(i));
        GraphDataset ds(std::move(name), std::move(out));
        if (ds.empty()) ds.feature_dim_ = feature_dim_;
        return ds;
    }

    GraphDataset with_feature_width(std::size_t width) const {
        std::vector<Graph> out;
        out.reserve(graphs_.size());
        for (const auto& g : graphs_) out.push_back(g.with_feature_width(width));
        GraphDataset ds(name_, std::move(out));
        if (ds.empty()) ds.feature_dim_ = width;
        return ds;
    }

    friend bool operator==(const GraphDataset& a, const GraphDataset& b) {
        return a.name_ == b.name_ && a.feature_dim_ == b.feature_dim_ && a.graphs_ == b.graphs_;
    }

private:
    std::string name_;
    std::vector<Graph> graphs_;
    std::size_t feature_dim_ = 0;
};

/// Zero-pads the narrower dataset so an ID/OOD pair shares one feature width.
inline std::pair<GraphDataset, GraphDataset> align_feature_width(const GraphDataset& a, const GraphDataset& b) {
    const std::size_t width = std::max(a.feature_dim(), b.feature_dim());
    return {a.with_feature_width(width), b.with_feature_width(width)};
}

/// Disjoint union of several graphs.
struct BatchedGraph {
    Adjacency adjacency;
    std::vector<Edge> edges;  // global node ids
    Matrix features;
    std::vector<std::size_t> segment_ids;
    std::vector<std::size_t> node_offsets;  // graph_count + 1 entries
    std::vector<std::optional<int>> labels;
    std::size_t graph_count = 0;

    std::size_t node_count() const noexcept { return segment_ids.size(); }
    std::size_t graph_size(std::size_t g) const { return node_offsets[g + 1] - node_offsets[g]; }
};

/// Stacks row blocks of per-graph matrices in order.
inline Matrix stack_rows(const std::vector<const Matrix*>& blocks) {
    if (blocks.empty()) return {};
    const std::size_t cols = blocks.front()->cols();
    std::size_t rows = 0;
    for (const auto* b : blocks) {
        if (b->cols() != cols) throw ShapeError("cannot stack " + b->shape() + " under width " + std::to_string(cols));
        rows += b->rows();
    }
    Matrix out(rows, cols);
    auto it = out.data().begin();
    for (const auto* b : blocks) it = std::copy(b->data().begin(), b->data().end(), it);
    return out;
}

inline BatchedGraph batch_graphs(const std::vector<const Graph*>& graphs) {
    if (graphs.empty()) throw ArgumentError("cannot batch an empty list of graphs");
    const std::size_t width = graphs.front()->feature_dim();
    BatchedGraph b;
    b.graph_count = graphs.size();
    b.node_offsets.assign(1, 0);
    std::vector<const Matrix*> feats;
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const Graph& gr = *graphs[g];
        if (gr.feature_dim() != width) {
            throw ArgumentError("batch mixes feature widths " + std::to_string(width) + " and " +
                                std::to_string(gr.feature_dim()));
        }
        const auto offset = static_cast<std::uint32_t>(b.node_offsets.back());
        for (const auto& e : gr.edges()) b.edges.push_back({e.u + offset, e.v + offset});
        b.segment_ids.insert(b.segment_ids.end(), gr.node_count(), g);
        b.node_offsets.push_back(b.node_offsets.back() + gr.node_count());
        b.labels.push_back(gr.label());
        feats.push_back(&gr.features());
    }
    b.features = stack_rows(feats);
    b.adjacency = Adjacency::from_edges(b.node_count(), b.edges);
    return b;
}

inline BatchedGraph batch_graphs(const std::vector<Graph>& graphs) {
    std::vector<const Graph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const auto& g : graphs) ptrs.push_back(&g);
    return batch_graphs(ptrs);
}

/// Inverse of batch_graphs.
inline std::vector<Graph> unbatch(const BatchedGraph& b) {
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> edges(b.graph_count);
    for (const auto& e : b.edges) {
        const std::size_t g = b.segment_ids[e.u];
        const auto off = static_cast<std::uint32_t>(b.node_offsets[g]);
        edges[g].emplace_back(e.u - off, e.v - off);
    }
    std::vector<Graph> out;
    out.reserve(b.graph_count);
    for (std::size_t g = 0; g < b.graph_count; ++g) {
        out.emplace_back(b.graph_size(g), std::move(edges[g]),
                         slice_rows(b.features, b.node_offsets[g], b.node_offsets[g + 1]), b.labels[g]);
    }
    return out;
}

}  // namespace goodd
