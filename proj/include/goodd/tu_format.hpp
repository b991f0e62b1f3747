#pragma once

// Reader and writer for the TU benchmark text layout:
//   NAME_A.txt                 "i, j" per line, 1-indexed global node ids
//   NAME_graph_indicator.txt   graph id (1-indexed) of every node
//   NAME_node_attributes.txt   comma-separated reals per node (optional)
//   NAME_node_labels.txt       integer per node (optional)
//   NAME_graph_labels.txt      integer per graph (optional)

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "goodd/error.hpp"
#include "goodd/graph.hpp"

namespace goodd::tu {

struct ParseSummary {
    std::size_t graphs = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;  // undirected, after cleanup
    EdgeCleanup dropped;
    std::string feature_source;  // "attributes", "labels" or "constant"
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string where(const std::filesystem::path& file, std::size_t line) {
    return file.filename().string() + ":" + std::to_string(line);
}

template <typename T>
T parse_number(std::string_view tok, const std::filesystem::path& file, std::size_t line) {
    tok = trim(tok);
    T value{};
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, value);
    if (ec != std::errc{} || ptr != end || tok.empty()) {
        throw ParseError(where(file, line) + ": cannot parse '" + std::string(tok) + "'");
    }
    return value;
}

template <typename T>
std::vector<T> split_numbers(std::string_view line, const std::filesystem::path& file, std::size_t lineno) {
    std::vector<T> out;
    while (true) {
        const auto comma = line.find(',');
        out.push_back(parse_number<T>(line.substr(0, comma), file, lineno));
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return out;
}

/// Calls fn(line_number, content) for every non-blank line.
template <typename Fn>
void for_each_line(const std::filesystem::path& file, Fn&& fn) {
    std::ifstream in(file);
    if (!in) throw ParseError("cannot open " + file.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        fn(lineno, t);
    }
}

inline std::filesystem::path file_for(const std::filesystem::path& dir, const std::string& name,
                                      std::string_view suffix) {
    return dir / (name + "_" + std::string(suffix) + ".txt");
}

inline std::string format_real(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Loads `root_dir/NAME/NAME_*.txt`, or `root_dir/NAME_*.txt` when the files
/// sit directly in root_dir.
inline GraphDataset parse_tu_dataset(const std::filesystem::path& root_dir, const std::string& name,
                                     ParseSummary* summary = nullptr) {
    namespace fs = std::filesystem;
    fs::path dir = root_dir / name;
    if (!fs::exists(detail::file_for(dir, name, "A"))) dir = root_dir;

    const auto a_file = detail::file_for(dir, name, "A");
    const auto ind_file = detail::file_for(dir, name, "graph_indicator");
    for (const auto& f : {a_file, ind_file}) {
        if (!fs::exists(f)) throw ParseError("missing mandatory file " + f.string());
    }

    std::vector<std::size_t> indicator;  // 0-based graph id per node
    detail::for_each_line(ind_file, [&](std::size_t ln, std::string_view t) {
        const auto gid = detail::parse_number<long long>(t, ind_file, ln);
        if (gid < 1) throw ParseError(detail::where(ind_file, ln) + ": graph id must be >= 1");
        indicator.push_back(static_cast<std::size_t>(gid - 1));
    });
    const std::size_t total_nodes = indicator.size();
    std::size_t graph_count = 0;
    for (std::size_t i = 0; i < total_nodes; ++i) {
        if (i > 0 && indicator[i] < indicator[i - 1]) {
            throw ParseError(detail::where(ind_file, i + 1) + ": graph indicator must be nondecreasing");
        }
        graph_count = std::max(graph_count, indicator[i] + 1);
    }

    std::vector<std::size_t> offset(graph_count + 1, 0);
    for (auto g : indicator) ++offset[g + 1];
    for (std::size_t g = 0; g < graph_count; ++g) offset[g + 1] += offset[g];

    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> edges(graph_count);
    detail::for_each_line(a_file, [&](std::size_t ln, std::string_view t) {
        const auto ends = detail::split_numbers<long long>(t, a_file, ln);
        if (ends.size() != 2) throw ParseError(detail::where(a_file, ln) + ": expected 'i, j'");
        for (auto v : ends) {
            if (v < 1 || static_cast<std::size_t>(v) > total_nodes) {
                throw ParseError(detail::where(a_file, ln) + ": node index " + std::to_string(v) +
                                 " outside indicator range [1, " + std::to_string(total_nodes) + "]");
            }
        }
        const auto i = static_cast<std::size_t>(ends[0] - 1);
        const auto j = static_cast<std::size_t>(ends[1] - 1);
        const auto g = indicator[i];
        if (indicator[j] != g) throw ParseError(detail::where(a_file, ln) + ": edge joins two different graphs");
        edges[g].emplace_back(static_cast<std::uint32_t>(i - offset[g]), static_cast<std::uint32_t>(j - offset[g]));
    });

    // Node features: attributes win, then one-hot labels, then constant.
    Matrix features;
    std::string source = "constant";
    const auto attr_file = detail::file_for(dir, name, "node_attributes");
    const auto nlab_file = detail::file_for(dir, name, "node_labels");
    if (fs::exists(attr_file)) {
        std::vector<double> data;
        std::size_t width = 0, rows = 0;
        detail::for_each_line(attr_file, [&](std::size_t ln, std::string_view t) {
            auto row = detail::split_numbers<double>(t, attr_file, ln);
            if (rows == 0) width = row.size();
            if (row.size() != width) {
                throw ParseError(detail::where(attr_file, ln) + ": ragged attribute row (" +
                                 std::to_string(row.size()) + " values, expected " + std::to_string(width) + ")");
            }
            data.insert(data.end(), row.begin(), row.end());
            ++rows;
        });
        if (rows != total_nodes) {
            throw ParseError(attr_file.filename().string() + ": " + std::to_string(rows) + " rows for " +
                             std::to_string(total_nodes) + " nodes");
        }
        features = Matrix(rows, width, std::move(data));
        source = "attributes";
    } else if (fs::exists(nlab_file)) {
        std::vector<long long> labels;
        detail::for_each_line(nlab_file, [&](std::size_t ln, std::string_view t) {
            labels.push_back(detail::parse_number<long long>(t, nlab_file, ln));
        });
        if (labels.size() != total_nodes) {
            throw ParseError(nlab_file.filename().string() + ": " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(total_nodes) + " nodes");
        }
        const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
        const long long base = labels.empty() ? 0 : *lo;
        const std::size_t width = labels.empty() ? 1 : static_cast<std::size_t>(*hi - *lo + 1);
        features = Matrix(total_nodes, width);
        for (std::size_t i = 0; i < total_nodes; ++i) features(i, static_cast<std::size_t>(labels[i] - base)) = 1.0;
        source = "labels";
    }

    std::vector<std::optional<int>> graph_labels(graph_count);
    const auto glab_file = detail::file_for(dir, name, "graph_labels");
    if (fs::exists(glab_file)) {
        std::size_t g = 0;
        detail::for_each_line(glab_file, [&](std::size_t ln, std::string_view t) {
            if (g >= graph_count) throw ParseError(detail::where(glab_file, ln) + ": more labels than graphs");
            graph_labels[g++] = detail::parse_number<int>(t, glab_file, ln);
        });
        if (g != graph_count) {
            throw ParseError(glab_file.filename().string() + ": " + std::to_string(g) + " labels for " +
                             std::to_string(graph_count) + " graphs");
        }
    }

    ParseSummary sum;
    sum.feature_source = source;
    std::vector<Graph> graphs;
    graphs.reserve(graph_count);
    for (std::size_t g = 0; g < graph_count; ++g) {
        const std::size_t n = offset[g + 1] - offset[g];
        Matrix x = features.empty() ? Matrix{} : slice_rows(features, offset[g], offset[g + 1]);
        graphs.emplace_back(n, std::move(edges[g]), std::move(x), graph_labels[g], &sum.dropped);
        sum.edges += graphs.back().edges().size();
    }
    sum.graphs = graph_count;
    sum.nodes = total_nodes;
    if (summary) *summary = sum;
    return GraphDataset(name, std::move(graphs));
}

/// Writes `dir/NAME_*.txt`. Features always go to node_attributes, with
/// shortest round-trip decimal formatting.
inline void write_tu_dataset(const std::filesystem::path& dir, const GraphDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& name = ds.name();
    std::ofstream a(detail::file_for(dir, name, "A"));
    std::ofstream ind(detail::file_for(dir, name, "graph_indicator"));
    std::ofstream attr(detail::file_for(dir, name, "node_attributes"));
    std::size_t base = 1;
    for (std::size_t g = 0; g < ds.size(); ++g) {
        const Graph& gr = ds[g];
        for (const auto& e : gr.edges()) {
            a << base + e.u << ", " << base + e.v << '\n';
            a << base + e.v << ", " << base + e.u << '\n';
        }
        for (std::size_t i = 0; i < gr.node_count(); ++i) {
            ind << g + 1 << '\n';
            const auto row = gr.features().row(i);
            for (std::size_t c = 0; c < row.size(); ++c) attr << (c ? ", " : "") << detail::format_real(row[c]);
            attr << '\n';
        }
        base += gr.node_count();
    }
    if (ds.has_labels()) {
        std::ofstream gl(detail::file_for(dir, name, "graph_labels"));
        for (const auto& g : ds.graphs()) gl << *g.label() << '\n';
    }
    if (!a || !ind || !attr) throw Error("failed writing TU dataset to " + dir.string());
}

}  // namespace goodd::tu
