#pragma once

// Checkpoint container: a versioned text file of named numeric arrays.
//
//   GOODD-CHECKPOINT 1
//   config <key> <value>          (one per ModelConfig field)
//   meta <key> <values...>        (input widths, levels, stats, prototypes)
//   array <name> <rows> <cols>    followed by rows of hex-float values
//   end
//
// Reals are written as C99 hex floats, so load(save(p)) is bit-exact.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "goodd/encoder.hpp"
#include "goodd/error.hpp"

namespace goodd {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double unhex(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw ParseError("checkpoint: bad real '" + s + "'");
    return v;
}

inline void write_array(std::ostream& out, const std::string& name, const Matrix& m) {
    out << "array " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << hex(m(i, j));
        out << '\n';
    }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& file, const ModelParams& p) {
    std::ostringstream out;
    const auto& c = p.config;
    out << "GOODD-CHECKPOINT " << kCheckpointVersion << '\n';
    out << "config layers " << c.layers << '\n'
        << "config hidden_dim " << c.hidden_dim << '\n'
        << "config proj_dim " << c.proj_dim << '\n'
        << "config proj_layers " << c.proj_layers << '\n'
        << "config temperature " << detail::hex(c.temperature) << '\n'
        << "config clusters " << c.clusters << '\n'
        << "config alpha " << detail::hex(c.alpha) << '\n'
        << "config rw_dim " << c.rw_dim << '\n'
        << "config degree_dim " << c.degree_dim << '\n'
        << "config include_positive_in_denominator " << (c.include_positive_in_denominator ? 1 : 0) << '\n'
        << "config seed " << c.seed << '\n';
    out << "meta feature_dim " << p.feature_dim << '\n' << "meta structure_dim " << p.structure_dim << '\n';
    out << "meta levels " << p.levels[0] << ' ' << p.levels[1] << ' ' << p.levels[2] << '\n';
    out << "meta stats_populated " << (p.stats.populated ? 1 : 0) << '\n';
    out << "meta stats_mean";
    for (double v : p.stats.mean) out << ' ' << detail::hex(v);
    out << "\nmeta stats_sigma";
    for (double v : p.stats.sigma) out << ' ' << detail::hex(v);
    out << "\nmeta stats_similarity " << detail::hex(p.stats.similarity_mean) << ' '
        << detail::hex(p.stats.similarity_sigma);
    out << "\nmeta prototype_epoch " << p.prototypes.epoch << '\n';
    out << "meta prototype_temps " << p.prototypes.temps.size();
    for (double v : p.prototypes.temps) out << ' ' << detail::hex(v);
    out << "\nmeta prototype_assignments " << p.prototypes.assignments.size();
    for (auto a : p.prototypes.assignments) out << ' ' << a;
    out << '\n';
    for (const auto& [name, m] : p.trainable()) detail::write_array(out, name, *m);
    detail::write_array(out, "prototypes.centers", p.prototypes.centers);
    detail::write_array(out, "bank.f", p.bank_f);
    detail::write_array(out, "bank.s", p.bank_s);
    out << "end\n";

    std::ofstream f(file, std::ios::binary);
    f << out.str();
    if (!f) throw Error("failed writing checkpoint " + file.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ParseError("cannot open checkpoint " + file.string());
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "GOODD-CHECKPOINT") throw ParseError(file.string() + " is not a checkpoint");
    if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    std::map<std::string, std::vector<std::string>> meta;
    std::map<std::string, Matrix> arrays;
    std::string kind;
    while (in >> kind && kind != "end") {
        if (kind == "config") {
            std::string key, value;
            in >> key >> value;
            if (key == "layers") cfg.layers = std::stoul(value);
            else if (key == "hidden_dim") cfg.hidden_dim = std::stoul(value);
            else if (key == "proj_dim") cfg.proj_dim = std::stoul(value);
            else if (key == "proj_layers") cfg.proj_layers = std::stoul(value);
            else if (key == "temperature") cfg.temperature = detail::unhex(value);
            else if (key == "clusters") cfg.clusters = std::stoul(value);
            else if (key == "alpha") cfg.alpha = detail::unhex(value);
            else if (key == "rw_dim") cfg.rw_dim = std::stoul(value);
            else if (key == "degree_dim") cfg.degree_dim = std::stoul(value);
            else if (key == "include_positive_in_denominator") cfg.include_positive_in_denominator = value == "1";
            else if (key == "seed") cfg.seed = std::stoull(value);
            else throw ParseError("checkpoint: unknown config key '" + key + "'");
        } else if (kind == "meta") {
            std::string key, line;
            in >> key;
            std::getline(in, line);
            std::istringstream ls(line);
            std::vector<std::string> vals;
            for (std::string v; ls >> v;) vals.push_back(v);
            meta[key] = std::move(vals);
        } else if (kind == "array") {
            std::string name;
            std::size_t rows = 0, cols = 0;
            in >> name >> rows >> cols;
            Matrix m(rows, cols);
            std::string tok;
            for (auto& v : m.data()) {
                if (!(in >> tok)) throw ParseError("checkpoint: truncated array " + name);
                v = detail::unhex(tok);
            }
            arrays[name] = std::move(m);
        } else {
            throw ParseError("checkpoint: unexpected record '" + kind + "'");
        }
    }
    if (kind != "end") throw ParseError("checkpoint: missing end marker");

    auto need = [&meta](const std::string& k) -> const std::vector<std::string>& {
        auto it = meta.find(k);
        if (it == meta.end()) throw ParseError("checkpoint: missing meta '" + k + "'");
        return it->second;
    };
    ModelParams p = init_params(cfg, std::stoul(need("feature_dim").at(0)), std::stoul(need("structure_dim").at(0)));
    const auto& lv = need("levels");
    for (std::size_t l = 0; l < 3; ++l) p.levels[l] = lv.at(l) == "1";
    p.stats.populated = need("stats_populated").at(0) == "1";
    for (std::size_t l = 0; l < 3; ++l) {
        p.stats.mean[l] = detail::unhex(need("stats_mean").at(l));
        p.stats.sigma[l] = detail::unhex(need("stats_sigma").at(l));
    }
    p.stats.similarity_mean = detail::unhex(need("stats_similarity").at(0));
    p.stats.similarity_sigma = detail::unhex(need("stats_similarity").at(1));
    p.prototypes.epoch = std::stoul(need("prototype_epoch").at(0));
    const auto& temps = need("prototype_temps");
    for (std::size_t i = 1; i < temps.size(); ++i) p.prototypes.temps.push_back(detail::unhex(temps[i]));
    const auto& assign = need("prototype_assignments");
    for (std::size_t i = 1; i < assign.size(); ++i) p.prototypes.assignments.push_back(std::stoul(assign[i]));

    auto take = [&arrays](const std::string& name, Matrix& dst, bool check_shape) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw ParseError("checkpoint: missing array '" + name + "'");
        if (check_shape && !it->second.same_shape(dst)) {
            throw ParseError("checkpoint: array '" + name + "' has shape " + it->second.shape() + ", expected " + dst.shape());
        }
        dst = std::move(it->second);
    };
    for (auto& [name, m] : p.trainable()) take(name, *m, true);
    take("prototypes.centers", p.prototypes.centers, false);
    take("bank.f", p.bank_f, false);
    take("bank.s", p.bank_s, false);
    return p;
}

}  // namespace goodd
