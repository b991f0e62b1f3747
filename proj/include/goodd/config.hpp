#pragma once

// Run configuration: `[section]` headers and `key = value` lines, `#` starts
// a comment. Unknown sections or keys are rejected. to_text() writes every
// key, so a saved config reproduces the run on its own.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "goodd/encoder.hpp"
#include "goodd/error.hpp"
#include "goodd/scoring.hpp"
#include "goodd/split.hpp"
#include "goodd/trainer.hpp"

namespace goodd {

enum class DataSource { synthetic, tu };

struct DataConfig {
    DataSource source = DataSource::synthetic;
    std::string root;         // TU root; empty falls back to $GOODD_DATA_DIR
    std::string id_dataset;   // ood split
    std::string ood_dataset;  // ood split
    std::string dataset;      // anomaly split
    std::size_t synthetic_graphs = 120;
    std::uint64_t synthetic_seed = 7;
    SplitMode split = SplitMode::ood_pair;
    double train_fraction = 0.9;
    std::string encoding_cache;  // directory for cached structural encodings

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    ScoreOptions score;
    std::size_t checkpoint_every = 0;
    std::string out = "runs/goodd";
    std::size_t repeats = 5;
    std::uint64_t seed = 0;

    /// Model and training settings for repeat `i` (seed = base + i).
    ModelConfig model_for(std::size_t i) const {
        ModelConfig m = model;
        m.seed = seed + i;
        return m;
    }
    TrainConfig train_for(std::size_t i) const {
        TrainConfig t = train;
        t.seed = seed + i;
        return t;
    }
    SplitSpec split_for(std::size_t i) const { return {data.train_fraction, seed + i, data.split}; }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    void validate() const {
        try {
            model.validate();
            train.validate();
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
        if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0))
            throw ConfigError("data.train_fraction must be in (0, 1]");
        if (repeats < 1) throw ConfigError("run.repeats must be >= 1");
        if (score.batch_size < 2) throw ConfigError("score.batch_size must be >= 2");
        if (data.source == DataSource::tu) {
            if (data.split == SplitMode::ood_pair && (data.id_dataset.empty() || data.ood_dataset.empty()))
                throw ConfigError("data.id_dataset and data.ood_dataset are required for TU ood splits");
            if (data.split == SplitMode::anomaly && data.dataset.empty())
                throw ConfigError("data.dataset is required for TU anomaly splits");
        }
    }
};

namespace config_detail {

inline std::string real_text(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, const char* what) {
    T out{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
        throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) + ": expected " + what);
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) + ": expected true or false");
}

template <typename E>
E parse_enum(std::string_view key, std::string_view v, const std::vector<std::pair<std::string_view, E>>& names) {
    std::string allowed;
    for (const auto& [n, e] : names) {
        if (n == v) return e;
        allowed += (allowed.empty() ? "" : "|") + std::string(n);
    }
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) + ": expected " + allowed);
}

template <typename E>
std::string enum_text(E e, const std::vector<std::pair<std::string_view, E>>& names) {
    for (const auto& [n, x] : names)
        if (x == e) return std::string(n);
    return "?";
}

inline const std::vector<std::pair<std::string_view, DataSource>> kSources{{"synthetic", DataSource::synthetic},
                                                                          {"tu", DataSource::tu}};
inline const std::vector<std::pair<std::string_view, SplitMode>> kSplits{{"ood", SplitMode::ood_pair},
                                                                        {"anomaly", SplitMode::anomaly}};
inline const std::vector<std::pair<std::string_view, Variant>> kVariants{{"adaptive", Variant::adaptive},
                                                                        {"simp", Variant::simp}};
inline const std::vector<std::pair<std::string_view, GraphNegatives>> kNegatives{{"batch", GraphNegatives::batch},
                                                                                {"bank", GraphNegatives::bank}};
inline const std::vector<std::pair<std::string_view, GroupScore>> kGroupScores{{"similarity", GroupScore::similarity},
                                                                              {"loss", GroupScore::loss}};

inline std::array<bool, 3> parse_levels(std::string_view key, std::string_view v) {
    std::array<bool, 3> out{false, false, false};
    std::size_t start = 0;
    while (start <= v.size()) {
        const std::size_t comma = std::min(v.find(',', start), v.size());
        std::string_view item = v.substr(start, comma - start);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        bool known = false;
        for (std::size_t l = 0; l < 3; ++l) {
            if (item == kLevelNames[l]) {
                out[l] = true;
                known = true;
            }
        }
        if (!known)
            throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key) +
                              ": expected a comma list of node, graph, group");
        start = comma + 1;
    }
    return out;
}

inline std::string levels_text(const std::array<bool, 3>& lv) {
    std::string s;
    for (std::size_t l = 0; l < 3; ++l)
        if (lv[l]) s += (s.empty() ? "" : ",") + std::string(kLevelNames[l]);
    return s;
}

struct Field {
    std::string key;  // section.name
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Field>& fields() {
    using C = RunConfig;
    using V = std::string_view;
    auto size_field = [](std::string key, std::size_t C::*outer) {
        return Field{key, [key, outer](C& c, V v) { c.*outer = parse_number<std::size_t>(key, v, "unsigned integer"); },
                     [outer](const C& c) { return std::to_string(c.*outer); }};
    };
    static const std::vector<Field> table{
        {"data.source", [](C& c, V v) { c.data.source = parse_enum("data.source", v, kSources); },
         [](const C& c) { return enum_text(c.data.source, kSources); }},
        {"data.root", [](C& c, V v) { c.data.root = v; }, [](const C& c) { return c.data.root; }},
        {"data.id_dataset", [](C& c, V v) { c.data.id_dataset = v; }, [](const C& c) { return c.data.id_dataset; }},
        {"data.ood_dataset", [](C& c, V v) { c.data.ood_dataset = v; }, [](const C& c) { return c.data.ood_dataset; }},
        {"data.dataset", [](C& c, V v) { c.data.dataset = v; }, [](const C& c) { return c.data.dataset; }},
        {"data.synthetic_graphs",
         [](C& c, V v) { c.data.synthetic_graphs = parse_number<std::size_t>("data.synthetic_graphs", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.data.synthetic_graphs); }},
        {"data.synthetic_seed",
         [](C& c, V v) { c.data.synthetic_seed = parse_number<std::uint64_t>("data.synthetic_seed", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.data.synthetic_seed); }},
        {"data.split", [](C& c, V v) { c.data.split = parse_enum("data.split", v, kSplits); },
         [](const C& c) { return enum_text(c.data.split, kSplits); }},
        {"data.train_fraction",
         [](C& c, V v) { c.data.train_fraction = parse_number<double>("data.train_fraction", v, "real"); },
         [](const C& c) { return real_text(c.data.train_fraction); }},
        {"data.encoding_cache", [](C& c, V v) { c.data.encoding_cache = v; },
         [](const C& c) { return c.data.encoding_cache; }},

        {"model.layers", [](C& c, V v) { c.model.layers = parse_number<std::size_t>("model.layers", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.layers); }},
        {"model.hidden_dim",
         [](C& c, V v) { c.model.hidden_dim = parse_number<std::size_t>("model.hidden_dim", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.hidden_dim); }},
        {"model.proj_dim",
         [](C& c, V v) { c.model.proj_dim = parse_number<std::size_t>("model.proj_dim", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.proj_dim); }},
        {"model.proj_layers",
         [](C& c, V v) { c.model.proj_layers = parse_number<std::size_t>("model.proj_layers", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.proj_layers); }},
        {"model.temperature",
         [](C& c, V v) { c.model.temperature = parse_number<double>("model.temperature", v, "real"); },
         [](const C& c) { return real_text(c.model.temperature); }},
        {"model.clusters",
         [](C& c, V v) { c.model.clusters = parse_number<std::size_t>("model.clusters", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.clusters); }},
        {"model.alpha", [](C& c, V v) { c.model.alpha = parse_number<double>("model.alpha", v, "real"); },
         [](const C& c) { return real_text(c.model.alpha); }},
        {"model.rw_dim", [](C& c, V v) { c.model.rw_dim = parse_number<std::size_t>("model.rw_dim", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.rw_dim); }},
        {"model.degree_dim",
         [](C& c, V v) { c.model.degree_dim = parse_number<std::size_t>("model.degree_dim", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.model.degree_dim); }},
        {"model.include_positive_in_denominator",
         [](C& c, V v) { c.model.include_positive_in_denominator = parse_bool("model.include_positive_in_denominator", v); },
         [](const C& c) { return std::string(c.model.include_positive_in_denominator ? "true" : "false"); }},

        {"train.epochs", [](C& c, V v) { c.train.epochs = parse_number<std::size_t>("train.epochs", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.train.epochs); }},
        {"train.batch_size",
         [](C& c, V v) { c.train.batch_size = parse_number<std::size_t>("train.batch_size", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.train.batch_size); }},
        {"train.learning_rate",
         [](C& c, V v) { c.train.learning_rate = parse_number<double>("train.learning_rate", v, "real"); },
         [](const C& c) { return real_text(c.train.learning_rate); }},
        {"train.beta1", [](C& c, V v) { c.train.beta1 = parse_number<double>("train.beta1", v, "real"); },
         [](const C& c) { return real_text(c.train.beta1); }},
        {"train.beta2", [](C& c, V v) { c.train.beta2 = parse_number<double>("train.beta2", v, "real"); },
         [](const C& c) { return real_text(c.train.beta2); }},
        {"train.epsilon", [](C& c, V v) { c.train.epsilon = parse_number<double>("train.epsilon", v, "real"); },
         [](const C& c) { return real_text(c.train.epsilon); }},
        {"train.variant", [](C& c, V v) { c.train.variant = parse_enum("train.variant", v, kVariants); },
         [](const C& c) { return enum_text(c.train.variant, kVariants); }},
        {"train.levels", [](C& c, V v) { c.train.levels = parse_levels("train.levels", v); },
         [](const C& c) { return levels_text(c.train.levels); }},
        size_field("train.checkpoint_every", &C::checkpoint_every),

        {"score.graph_negatives",
         [](C& c, V v) { c.score.graph_negatives = parse_enum("score.graph_negatives", v, kNegatives); },
         [](const C& c) { return enum_text(c.score.graph_negatives, kNegatives); }},
        {"score.group_score", [](C& c, V v) { c.score.group_score = parse_enum("score.group_score", v, kGroupScores); },
         [](const C& c) { return enum_text(c.score.group_score, kGroupScores); }},
        {"score.batch_size",
         [](C& c, V v) { c.score.batch_size = parse_number<std::size_t>("score.batch_size", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.score.batch_size); }},

        {"run.out", [](C& c, V v) { c.out = v; }, [](const C& c) { return c.out; }},
        size_field("run.repeats", &C::repeats),
        {"run.seed", [](C& c, V v) { c.seed = parse_number<std::uint64_t>("run.seed", v, "unsigned integer"); },
         [](const C& c) { return std::to_string(c.seed); }},
    };
    return table;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace config_detail

/// Sets one `section.key`; throws ConfigError naming the key when it is
/// unknown or the value does not parse.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
    for (const auto& f : config_detail::fields()) {
        if (f.key == key) {
            f.set(c, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline RunConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
    RunConfig c;
    std::string section, raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = config_detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        const std::string_view name = config_detail::trim(line.substr(0, eq));
        const std::string_view value = config_detail::trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(where + "key '" + std::string(name) + "' outside any section");
        try {
            set_config_value(c, section + "." + std::string(name), value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    return parse_config(in, file.string());
}

/// Every key, grouped by section, in table order.
inline std::string to_text(const RunConfig& c) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : config_detail::fields()) {
        const auto dot = f.key.find('.');
        const std::string s = f.key.substr(0, dot);
        if (s != section) {
            out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
            section = s;
        }
        out << f.key.substr(dot + 1) << " = " << f.get(c) << '\n';
    }
    return out.str();
}

inline void save_config(const std::filesystem::path& file, const RunConfig& c) {
    std::ofstream out(file, std::ios::binary);
    out << to_text(c);
    if (!out) throw Error("failed writing " + file.string());
}

}  // namespace goodd
