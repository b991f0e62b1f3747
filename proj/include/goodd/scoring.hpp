#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "goodd/contrast.hpp"
#include "goodd/encoder.hpp"
#include "goodd/error.hpp"
#include "goodd/trainer.hpp"

namespace goodd {

enum class GraphNegatives { batch, bank };
enum class GroupScore { loss, similarity };

struct ScoreOptions {
    std::size_t batch_size = 64;
    GraphNegatives graph_negatives = GraphNegatives::batch;
    GroupScore group_score = GroupScore::similarity;

    friend bool operator==(const ScoreOptions&, const ScoreOptions&) = default;
};

struct ScoreRecord {
    std::size_t graph_id = 0;
    double s_node = 0.0;
    double s_graph = 0.0;
    double s_group = 0.0;
    double score = 0.0;
    std::optional<int> label;
};

struct NearestPrototype {
    std::size_t index = 0;
    double similarity = 0.0;
};

/// Cosine-nearest prototype; ties resolve to the smallest index.
inline NearestPrototype nearest_prototype(std::span<const double> z, const PrototypeState& state) {
    if (state.centers.rows() == 0) throw StateError("no prototypes to match against");
    NearestPrototype best{0, cosine_similarity(z, state.centers.row(0))};
    for (std::size_t j = 1; j < state.centers.rows(); ++j) {
        const double s = cosine_similarity(z, state.centers.row(j));
        if (s > best.similarity) best = {j, s};
    }
    return best;
}

namespace detail {

/// ½[ℓ(f_i, s_i) + ℓ(s_i, f_i)] with negatives from fixed bank rows.
inline std::vector<double> graph_errors_against_bank(const Matrix& zf, const Matrix& zs, const Matrix& bank_f,
                                                     const Matrix& bank_s, double tau) {
    if (bank_f.rows() == 0) throw StateError("model has no reference bank");
    auto lse = [tau](std::span<const double> q, const Matrix& bank) {
        double m = -std::numeric_limits<double>::infinity();
        std::vector<double> s(bank.rows());
        for (std::size_t k = 0; k < bank.rows(); ++k) {
            s[k] = cosine_similarity(q, bank.row(k)) / tau;
            m = std::max(m, s[k]);
        }
        double acc = 0.0;
        for (double v : s) acc += std::exp(v - m);
        return m + std::log(acc);
    };
    std::vector<double> out(zf.rows());
    for (std::size_t i = 0; i < zf.rows(); ++i) {
        const double pos = cosine_similarity(zf.row(i), zs.row(i)) / tau;
        out[i] = 0.5 * ((lse(zf.row(i), bank_s) - pos) + (lse(zs.row(i), bank_f) - pos));
    }
    return out;
}

}  // namespace detail

/// Error terms of each graph at every enabled level, in input order. Graphs
/// are processed in consecutive batches of `batch_size`; disabled levels
/// are left at 0.
inline LevelErrors per_sample_errors(const ModelParams& model, const std::vector<ViewPair>& views,
                                     const ScoreOptions& opt = {}, std::size_t* fallbacks = nullptr) {
    if (!model.trained()) throw StateError("model is not trained (missing prototypes or error statistics)");
    const auto& cfg = model.config;
    const bool incl = cfg.include_positive_in_denominator;
    LevelErrors out;
    for (std::size_t l = 0; l < 3; ++l) out.at(static_cast<Level>(l)).assign(views.size(), 0.0);
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t fb = 0;
    for (const auto& idx : make_batches(order, std::max<std::size_t>(opt.batch_size, 1))) {
        ad::Tape tape;
        ParameterBinding bind(tape, false);
        const BatchedViews bv = batch_of(views, idx);
        const Embeddings e = forward_all(bv, model, bind);
        if (model.levels[0]) {
            const auto r = node_loss(e.z_node_f, e.z_node_s, bv.batch.segment_ids, cfg.temperature, incl);
            for (std::size_t j = 0; j < idx.size(); ++j) out.node[idx[j]] = r.errors[j];
            fb += r.fallbacks;
        }
        if (model.levels[1]) {
            std::vector<double> g;
            if (opt.graph_negatives == GraphNegatives::bank) {
                g = detail::graph_errors_against_bank(e.z_graph_f.value(), e.z_graph_s.value(), model.bank_f,
                                                      model.bank_s, cfg.temperature);
            } else {
                const auto r = graph_loss(e.z_graph_f, e.z_graph_s, cfg.temperature, incl);
                g = r.errors;
                fb += r.fallbacks;
            }
            for (std::size_t j = 0; j < idx.size(); ++j) out.graph[idx[j]] = g[j];
        }
        if (model.levels[2]) {
            const Matrix& z = e.z_group.value();
            std::vector<std::size_t> assign(idx.size());
            std::vector<double> sims(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const auto np = nearest_prototype(z.row(j), model.prototypes);
                assign[j] = np.index;
                sims[j] = np.similarity;
            }
            if (opt.group_score == GroupScore::similarity) {
                for (std::size_t j = 0; j < idx.size(); ++j) out.group[idx[j]] = -sims[j];
            } else {
                const auto r = group_loss(e.z_group, model.prototypes.centers, model.prototypes.temps, assign, incl);
                for (std::size_t j = 0; j < idx.size(); ++j) out.group[idx[j]] = r.errors[j];
                fb += r.fallbacks;
            }
        }
    }
    if (fallbacks) *fallbacks = fb;
    return out;
}

/// Statistics matching the group error produced under `mode`: the training
/// loss moments for GroupScore::loss, the similarity moments otherwise.
inline ErrorStats scoring_stats(const ErrorStats& stats, GroupScore mode) {
    ErrorStats out = stats;
    if (mode == GroupScore::similarity) {
        out.mean[2] = stats.similarity_mean;
        out.sigma[2] = stats.similarity_sigma;
    }
    return out;
}

/// Plain sum over the enabled levels.
inline std::vector<double> ood_score_simple(const LevelErrors& e, const std::array<bool, 3>& levels = {true, true, true}) {
    std::vector<double> s(e.node.size(), 0.0);
    for (std::size_t l = 0; l < 3; ++l) {
        if (!levels[l]) continue;
        const auto& v = e.at(static_cast<Level>(l));
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += v[i];
    }
    return s;
}

/// Σ_level (s_level − μ_level)/σ_level over enabled levels; a level with
/// σ = 0 contributes 0 and is counted in `degenerate_levels`.
inline std::vector<double> ood_score_adaptive(const LevelErrors& e, const ErrorStats& stats,
                                              const std::array<bool, 3>& levels = {true, true, true},
                                              std::size_t* degenerate_levels = nullptr) {
    std::vector<double> s(e.node.size(), 0.0);
    std::size_t degenerate = 0;
    for (std::size_t l = 0; l < 3; ++l) {
        if (!levels[l]) continue;
        if (!(stats.sigma[l] > 0.0)) {
            ++degenerate;
            continue;
        }
        const auto& v = e.at(static_cast<Level>(l));
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += (v[i] - stats.mean[l]) / stats.sigma[l];
    }
    if (degenerate_levels) *degenerate_levels = degenerate;
    return s;
}

/// Mann–Whitney AUC with midranks for ties: P(s_OOD > s_ID) + ½ P(equal).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) rank_sum += mid;
        i = j;
    }
    for (int l : labels) {
        if (l != 0 && l != 1) throw ArgumentError("auc labels must be 0 or 1");
        pos += static_cast<std::size_t>(l);
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) throw ArgumentError("auc needs both classes present");
    const double p = static_cast<double>(pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

inline std::vector<ScoreRecord> make_records(const LevelErrors& e, const std::vector<double>& scores,
                                             const std::vector<int>& labels) {
    std::vector<ScoreRecord> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = {i, e.node[i], e.graph[i], e.group[i], scores[i], std::nullopt};
        if (i < labels.size()) out[i].label = labels[i];
    }
    return out;
}

inline std::string format_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Header `graph_id,label,s_node,s_graph,s_group,score`; reals at 9
/// significant digits, empty label when unknown.
inline void write_score_csv(const std::string& path, const std::vector<ScoreRecord>& records) {
    std::ofstream out(path);
    out << "graph_id,label,s_node,s_graph,s_group,score\n";
    for (const auto& r : records) {
        out << r.graph_id << ',' << (r.label ? std::to_string(*r.label) : std::string{}) << ',' << format_sig9(r.s_node)
            << ',' << format_sig9(r.s_graph) << ',' << format_sig9(r.s_group) << ',' << format_sig9(r.score) << '\n';
    }
    if (!out) throw Error("failed writing " + path);
}

/// Per-class score counts over `bins` equal-width bins spanning all scores.
inline void write_score_histogram(const std::string& path, const std::vector<ScoreRecord>& records,
                                  std::size_t bins = 20) {
    if (records.empty() || bins == 0) throw ArgumentError("histogram needs records and at least one bin");
    double lo = records.front().score, hi = lo;
    for (const auto& r : records) {
        lo = std::min(lo, r.score);
        hi = std::max(hi, r.score);
    }
    if (hi == lo) hi = lo + 1.0;
    const double w = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> id(bins, 0), ood(bins, 0);
    for (const auto& r : records) {
        const auto b = std::min(bins - 1, static_cast<std::size_t>((r.score - lo) / w));
        (r.label.value_or(0) == 1 ? ood : id)[b]++;
    }
    std::ofstream out(path);
    out << "bin_lo,bin_hi,id_count,ood_count\n";
    for (std::size_t b = 0; b < bins; ++b) {
        out << format_sig9(lo + w * static_cast<double>(b)) << ',' << format_sig9(lo + w * static_cast<double>(b + 1))
            << ',' << id[b] << ',' << ood[b] << '\n';
    }
}

/// Writes one CSV matrix per embedding space (node f/s, graph f/s, group)
/// with a leading graph_id column (and node index for node spaces).
inline void write_embeddings(const std::string& dir, const ModelParams& model, const std::vector<ViewPair>& views,
                             const std::vector<int>& labels, std::size_t batch_size) {
    struct Space {
        const char* name;
        ad::Var Embeddings::*pick;
        bool per_node;
    };
    const Space spaces[] = {{"node_f", &Embeddings::z_node_f, true},
                            {"node_s", &Embeddings::z_node_s, true},
                            {"graph_f", &Embeddings::z_graph_f, false},
                            {"graph_s", &Embeddings::z_graph_s, false},
                            {"group", &Embeddings::z_group, false}};
    for (const auto& sp : spaces) {
        const Matrix m = embed_all(model, views, batch_size, sp.pick);
        std::ofstream out(dir + "/embeddings_" + sp.name + ".csv");
        out << "graph_id," << (sp.per_node ? "node," : "") << "label";
        for (std::size_t c = 0; c < m.cols(); ++c) out << ",d" << c;
        out << '\n';
        std::size_t row = 0;
        for (std::size_t g = 0; g < views.size(); ++g) {
            const std::size_t count = sp.per_node ? views[g].graph().node_count() : 1;
            for (std::size_t k = 0; k < count; ++k, ++row) {
                out << g << ',';
                if (sp.per_node) out << k << ',';
                out << (g < labels.size() ? std::to_string(labels[g]) : std::string{});
                for (double v : m.row(row)) out << ',' << format_sig9(v);
                out << '\n';
            }
        }
    }
}

}  // namespace goodd
