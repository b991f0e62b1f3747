#pragma once

// Experiment drivers shared by the command-line tool and the acceptance
// suite: dataset loading, one train/score run per seed, and the repeated-seed
// evaluation, ablation and sensitivity tables built from it.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "goodd/checkpoint.hpp"
#include "goodd/config.hpp"
#include "goodd/scoring.hpp"
#include "goodd/split.hpp"
#include "goodd/structenc.hpp"
#include "goodd/synthetic.hpp"
#include "goodd/trainer.hpp"
#include "goodd/tu_format.hpp"

namespace goodd {

/// ID and OOD datasets for an ood split, or the labeled dataset (in `id`)
/// for an anomaly split.
struct ExperimentData {
    GraphDataset id;
    GraphDataset ood;
};

inline std::filesystem::path resolve_data_root(const DataConfig& d) {
    if (!d.root.empty()) return d.root;
    if (const char* env = std::getenv("GOODD_DATA_DIR"); env != nullptr && *env != '\0') return env;
    throw ParseError("no dataset root: set data.root or GOODD_DATA_DIR");
}

inline ExperimentData load_experiment_data(const RunConfig& c) {
    const auto& d = c.data;
    if (d.source == DataSource::synthetic) {
        auto [er, ba] = generate_synthetic_pair(d.synthetic_graphs, d.synthetic_seed);
        if (d.split == SplitMode::ood_pair) return {std::move(er), std::move(ba)};
        // Anomaly variant: ER graphs are the normal class (label 0), one BA
        // graph per nine ER graphs forms the anomalous class (label 1).
        std::vector<Graph> mixed;
        for (const auto& g : er.graphs()) mixed.push_back(g.with_label(0));
        const std::size_t n_anom = std::max<std::size_t>(2, er.size() / 9);
        for (std::size_t i = 0; i < n_anom && i < ba.size(); ++i) mixed.push_back(ba[i].with_label(1));
        return {GraphDataset("ER+BA", std::move(mixed)), GraphDataset{}};
    }
    const auto root = resolve_data_root(d);
    if (d.split == SplitMode::anomaly) return {tu::parse_tu_dataset(root, d.dataset), GraphDataset{}};
    auto [a, b] = align_feature_width(tu::parse_tu_dataset(root, d.id_dataset), tu::parse_tu_dataset(root, d.ood_dataset));
    return {std::move(a), std::move(b)};
}

/// Structural views for `ds`, read from or written to the encoding cache
/// directory when one is configured.
inline std::vector<ViewPair> views_for(const GraphDataset& ds, const RunConfig& c) {
    const std::size_t rw = c.model.rw_dim, dg = c.model.degree_dim;
    if (c.data.encoding_cache.empty()) return build_views(ds, rw, dg);
    std::filesystem::create_directories(c.data.encoding_cache);
    const auto file = std::filesystem::path(c.data.encoding_cache) /
                      (ds.name() + "_" + std::to_string(rw) + "_" + std::to_string(dg) + ".senc");
    if (auto cached = load_encoding_cache(file, ds, rw, dg)) return std::move(*cached);
    auto views = build_views(ds, rw, dg);
    save_encoding_cache(file, ds, views, rw, dg);
    return views;
}

inline Split make_split(const ExperimentData& data, const SplitSpec& spec) {
    return spec.mode == SplitMode::ood_pair ? split_ood(data.id, data.ood, spec) : split_anomaly(data.id, spec);
}

/// Plain sum of level errors for the simp variant, z-score sum otherwise.
inline std::vector<double> aggregate_scores(const LevelErrors& e, const ModelParams& m, Variant variant,
                                            const ScoreOptions& opt, std::size_t* degenerate_levels = nullptr) {
    if (variant == Variant::simp) return ood_score_simple(e, m.levels);
    return ood_score_adaptive(e, scoring_stats(m.stats, opt.group_score), m.levels, degenerate_levels);
}

struct SeedResult {
    std::uint64_t seed = 0;
    double auc = 0.0;
    ModelParams model;
    TrainStats train_stats;
    LevelErrors errors;
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<ViewPair> test_views;
    std::size_t degenerate_levels = 0;
};

/// Splits, trains and scores repeat `i` of `c` (seed = c.seed + i).
inline SeedResult run_seed(const RunConfig& c, const ExperimentData& data, std::size_t i,
                           const TrainHooks& hooks = {}) {
    const Split split = make_split(data, c.split_for(i));
    const auto train_views = views_for(split.train, c);
    SeedResult r;
    r.seed = c.seed + i;
    std::tie(r.model, r.train_stats) = train(train_views, c.model_for(i), c.train_for(i), hooks);
    r.test_views = views_for(split.test, c);
    r.errors = per_sample_errors(r.model, r.test_views, c.score);
    r.scores = aggregate_scores(r.errors, r.model, c.train.variant, c.score, &r.degenerate_levels);
    r.labels = split.test_labels;
    r.auc = auc(r.scores, r.labels);
    return r;
}

inline std::string format_fixed(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// One `key=value` line per epoch. Wall-clock time is left out so logs of
/// identical runs are byte-identical.
inline std::string format_epoch_line(const EpochStats& e) {
    std::ostringstream s;
    s << "epoch=" << e.epoch << " loss=" << format_sig9(e.loss);
    for (std::size_t l = 0; l < 3; ++l) s << " err_" << kLevelNames[l] << '=' << format_sig9(e.mean_error[l]);
    for (std::size_t l = 0; l < 3; ++l) s << " sigma_" << kLevelNames[l] << '=' << format_sig9(e.sigma[l]);
    for (std::size_t l = 0; l < 3; ++l) s << " w_" << kLevelNames[l] << '=' << format_sig9(e.weights[l]);
    s << " fallbacks=" << e.fallbacks;
    return s.str();
}

struct EvalReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> aucs;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)

    std::string text() const {
        std::ostringstream s;
        for (std::size_t i = 0; i < seeds.size(); ++i) s << "seed=" << seeds[i] << " auc=" << format_fixed(aucs[i]) << '\n';
        s << "AUC mean=" << format_fixed(mean) << " std=" << format_fixed(std) << " seeds=" << seeds.size() << '\n';
        return s.str();
    }
};

inline EvalReport summarize(std::vector<std::uint64_t> seeds, std::vector<double> aucs) {
    EvalReport r;
    r.seeds = std::move(seeds);
    r.aucs = std::move(aucs);
    const double n = static_cast<double>(r.aucs.size());
    r.mean = std::accumulate(r.aucs.begin(), r.aucs.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : r.aucs) ss += (a - r.mean) * (a - r.mean);
    r.std = r.aucs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return r;
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    out << text;
    if (!out) throw Error("failed writing " + file.string());
}

/// The repeated-seed protocol. With a non-empty `out_dir`, writes
/// seed_<s>/scores.csv and seed_<s>/histogram.csv plus report.txt there.
inline EvalReport run_eval(const RunConfig& c, const ExperimentData& data, const std::filesystem::path& out_dir = {},
                           std::ostream* log = nullptr) {
    std::vector<std::uint64_t> seeds;
    std::vector<double> aucs;
    for (std::size_t i = 0; i < c.repeats; ++i) {
        const SeedResult r = run_seed(c, data, i);
        seeds.push_back(r.seed);
        aucs.push_back(r.auc);
        if (log) *log << "seed=" << r.seed << " auc=" << format_fixed(r.auc) << std::endl;
        if (!out_dir.empty()) {
            const auto dir = out_dir / ("seed_" + std::to_string(r.seed));
            std::filesystem::create_directories(dir);
            const auto records = make_records(r.errors, r.scores, r.labels);
            write_score_csv((dir / "scores.csv").string(), records);
            write_score_histogram((dir / "histogram.csv").string(), records);
        }
    }
    EvalReport report = summarize(std::move(seeds), std::move(aucs));
    if (!out_dir.empty()) write_text(out_dir / "report.txt", report.text());
    return report;
}

struct TableRow {
    std::string label;
    EvalReport report;
};

/// Tab-separated table: one row per configuration with mean, std and the
/// per-seed AUCs.
inline std::string format_table(const std::string& first_column, const std::vector<TableRow>& rows) {
    std::ostringstream s;
    s << first_column << "\tauc_mean\tauc_std\tseed_aucs\n";
    for (const auto& r : rows) {
        s << r.label << '\t' << format_fixed(r.report.mean) << '\t' << format_fixed(r.report.std) << '\t';
        for (std::size_t i = 0; i < r.report.aucs.size(); ++i) s << (i ? "," : "") << format_fixed(r.report.aucs[i]);
        s << '\n';
    }
    return s.str();
}

/// The seven nonempty subsets of {node, graph, group}: singles, pairs, all.
inline const std::vector<std::array<bool, 3>>& ablation_subsets() {
    static const std::vector<std::array<bool, 3>> subsets{
        {true, false, false}, {false, true, false}, {false, false, true}, {true, true, false},
        {true, false, true},  {false, true, true},  {true, true, true}};
    return subsets;
}

/// Every loss subset, trained and scored on the simp variant.
inline std::vector<TableRow> run_ablation(const RunConfig& c, const ExperimentData& data, std::ostream* log = nullptr) {
    std::vector<TableRow> rows;
    for (const auto& levels : ablation_subsets()) {
        RunConfig rc = c;
        rc.train.variant = Variant::simp;
        rc.train.levels = levels;
        const std::string label = config_detail::levels_text(levels);
        if (log) *log << "levels=" << label << std::endl;
        rows.push_back({label, run_eval(rc, data, {}, log)});
    }
    return rows;
}

enum class SweepParam { clusters, alpha };

/// One evaluation per value of K or alpha, all on the same seeds.
inline std::vector<TableRow> run_sweep(const RunConfig& c, const ExperimentData& data, SweepParam param,
                                       const std::vector<double>& values, std::ostream* log = nullptr) {
    std::vector<TableRow> rows;
    for (double v : values) {
        RunConfig rc = c;
        std::string label;
        if (param == SweepParam::clusters) {
            if (!(v >= 2.0) || v != std::floor(v)) throw ConfigError("K sweep values must be integers >= 2");
            rc.model.clusters = static_cast<std::size_t>(v);
            label = std::to_string(rc.model.clusters);
        } else {
            if (!(v >= 0.0)) throw ConfigError("alpha sweep values must be >= 0");
            rc.model.alpha = v;
            label = config_detail::real_text(v);
        }
        if (log) *log << (param == SweepParam::clusters ? "K=" : "alpha=") << label << std::endl;
        rows.push_back({label, run_eval(rc, data, {}, log)});
    }
    return rows;
}

}  // namespace goodd
