#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/graph.hpp"
#include "goodd/matrix.hpp"

namespace goodd {

/// Diagonals of the first `d_rw` powers of T = A D^-1. Column i of T^k is
/// T^k e_i, so each node costs d_rw sparse products against one n-vector.
/// Isolated nodes have a zero transition column.
inline Matrix random_walk_encoding(const Graph& g, std::size_t d_rw) {
    if (d_rw < 1) throw ArgumentError("random-walk encoding width must be >= 1");
    const std::size_t n = g.node_count();
    const auto& adj = g.adjacency();
    std::vector<double> inv_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (adj.degree(i) > 0) inv_deg[i] = 1.0 / static_cast<double>(adj.degree(i));

    Matrix out(n, d_rw);
    std::vector<double> cur(n), next(n);
    for (std::size_t src = 0; src < n; ++src) {
        std::fill(cur.begin(), cur.end(), 0.0);
        cur[src] = 1.0;
        for (std::size_t k = 0; k < d_rw; ++k) {
            // next = T cur; T_ij = A_ij / deg(j)
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (auto j : adj.neighbors(i)) s += cur[j] * inv_deg[j];
                next[i] = s;
            }
            std::swap(cur, next);
            out(src, k) = cur[src];
        }
    }
    return out;
}

/// One-hot degree with positions k = 1..d_dg; degrees >= d_dg land in the
/// last slot, degree 0 gives an all-zero row.
inline Matrix degree_encoding(const Graph& g, std::size_t d_dg) {
    if (d_dg < 1) throw ArgumentError("degree encoding width must be >= 1");
    Matrix out(g.node_count(), d_dg);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const std::size_t deg = g.degree(i);
        if (deg == 0) continue;
        out(i, std::min(deg, d_dg) - 1) = 1.0;
    }
    return out;
}

inline Matrix structural_encoding(const Graph& g, std::size_t d_rw, std::size_t d_dg) {
    return concat_columns(random_walk_encoding(g, d_rw), degree_encoding(g, d_dg));
}

/// Feature view (A, X) and structure view (A, S) over one shared graph.
class ViewPair {
public:
    ViewPair(std::shared_ptr<const Graph> graph, Matrix structure)
        : graph_(std::move(graph)), structure_(std::move(structure)) {}

    const Graph& graph() const noexcept { return *graph_; }
    const Adjacency& adjacency() const noexcept { return graph_->adjacency(); }
    const Matrix& features() const noexcept { return graph_->features(); }
    const Matrix& structure() const noexcept { return structure_; }
    std::shared_ptr<const Graph> shared_graph() const noexcept { return graph_; }

private:
    std::shared_ptr<const Graph> graph_;
    Matrix structure_;
};

inline ViewPair build_views(std::shared_ptr<const Graph> g, std::size_t d_rw, std::size_t d_dg) {
    Matrix s = structural_encoding(*g, d_rw, d_dg);
    return ViewPair(std::move(g), std::move(s));
}

inline ViewPair build_views(const Graph& g, std::size_t d_rw, std::size_t d_dg) {
    return build_views(std::make_shared<const Graph>(g), d_rw, d_dg);
}

inline std::vector<ViewPair> build_views(const GraphDataset& ds, std::size_t d_rw, std::size_t d_dg) {
    std::vector<ViewPair> out;
    out.reserve(ds.size());
    for (const auto& g : ds.graphs()) out.push_back(build_views(g, d_rw, d_dg));
    return out;
}

/// Per-batch inputs for both encoders.
struct BatchedViews {
    BatchedGraph batch;  // adjacency, X, segment ids
    Matrix structure;    // S rows aligned with batch nodes
};

inline BatchedViews batch_views(const std::vector<const ViewPair*>& views) {
    std::vector<const Graph*> graphs;
    std::vector<const Matrix*> enc;
    graphs.reserve(views.size());
    enc.reserve(views.size());
    for (const auto* v : views) {
        graphs.push_back(&v->graph());
        enc.push_back(&v->structure());
    }
    return {batch_graphs(graphs), stack_rows(enc)};
}

// Encoding cache: a text table, header "GOODD-SENC 1 d_rw d_dg graphs
// fingerprint", then per graph "graph <index> <rows> <cols>" followed by
// hex-float rows.

/// FNV-1a over node counts and edges; ties a cache to its dataset.
inline std::uint64_t structure_fingerprint(const GraphDataset& ds) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& g : ds.graphs()) {
        mix(g.node_count());
        for (const auto& e : g.edges()) mix((std::uint64_t{e.u} << 32) | e.v);
    }
    return h;
}

inline void save_encoding_cache(const std::filesystem::path& file, const GraphDataset& ds,
                                const std::vector<ViewPair>& views, std::size_t d_rw, std::size_t d_dg) {
    std::ofstream out(file);
    out << "GOODD-SENC 1 " << d_rw << ' ' << d_dg << ' ' << views.size() << ' ' << structure_fingerprint(ds) << '\n';
    char buf[64];
    for (std::size_t g = 0; g < views.size(); ++g) {
        const auto& s = views[g].structure();
        out << "graph " << g << ' ' << s.rows() << ' ' << s.cols() << '\n';
        for (std::size_t i = 0; i < s.rows(); ++i) {
            for (std::size_t j = 0; j < s.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%a", s(i, j));
                out << (j ? " " : "") << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw Error("failed writing encoding cache " + file.string());
}

/// Returns nullopt when the file is absent or its header does not match.
inline std::optional<std::vector<ViewPair>> load_encoding_cache(const std::filesystem::path& file,
                                                               const GraphDataset& ds, std::size_t d_rw,
                                                               std::size_t d_dg) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    std::string magic;
    int version = 0;
    std::size_t rw = 0, dg = 0, count = 0;
    std::uint64_t fp = 0;
    if (!(in >> magic >> version >> rw >> dg >> count >> fp)) return std::nullopt;
    if (magic != "GOODD-SENC" || version != 1 || rw != d_rw || dg != d_dg || count != ds.size() ||
        fp != structure_fingerprint(ds)) {
        return std::nullopt;
    }
    std::vector<ViewPair> views;
    views.reserve(count);
    for (std::size_t g = 0; g < count; ++g) {
        std::string tag;
        std::size_t idx = 0, rows = 0, cols = 0;
        if (!(in >> tag >> idx >> rows >> cols) || tag != "graph" || idx != g) return std::nullopt;
        Matrix s(rows, cols);
        std::string tok;
        for (auto& v : s.data()) {
            if (!(in >> tok)) return std::nullopt;
            v = std::strtod(tok.c_str(), nullptr);
        }
        views.emplace_back(std::make_shared<const Graph>(ds[g]), std::move(s));
    }
    return views;
}

}  // namespace goodd
