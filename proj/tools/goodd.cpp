#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "goodd/goodd.hpp"

namespace fs = std::filesystem;
using namespace goodd;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Flags shared by the experiment commands; each overrides the matching
// config key when given.
struct CommonFlags {
    std::string config;
    std::vector<std::string> set;
    std::optional<std::string> variant, mode, score_neg, out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "run config file (defaults apply without one)");
    cmd->add_option("--set", f.set, "override a config key, e.g. --set train.epochs=50")->take_all();
    cmd->add_option("--variant", f.variant, "scoring/training variant")->check(CLI::IsMember({"adaptive", "simp"}));
    cmd->add_option("--mode", f.mode, "split mode")->check(CLI::IsMember({"ood", "anomaly"}));
    cmd->add_option("--score-neg", f.score_neg, "graph-level negatives at scoring time")
        ->check(CLI::IsMember({"batch", "bank"}));
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "base seed");
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig c;
    if (!f.config.empty()) c = load_config(f.config);
    for (const auto& kv : f.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.variant) set_config_value(c, "train.variant", *f.variant);
    if (f.mode) set_config_value(c, "data.split", *f.mode);
    if (f.score_neg) set_config_value(c, "score.graph_negatives", *f.score_neg);
    if (f.out) c.out = *f.out;
    if (f.seed) c.seed = *f.seed;
    c.validate();
    return c;
}

fs::path prepare_out(const RunConfig& c) {
    const fs::path out = c.out;
    fs::create_directories(out);
    save_config(out / "resolved.cfg", c);
    return out;
}

int cmd_train(const CommonFlags& f) {
    const RunConfig c = resolve(f);
    const fs::path out = prepare_out(c);
    const ExperimentData data = load_experiment_data(c);
    const Split split = make_split(data, c.split_for(0));
    const auto views = views_for(split.train, c);

    std::ofstream log(out / "train.log", std::ios::binary);
    TrainHooks hooks;
    hooks.on_epoch = [&log](const EpochStats& e) {
        const std::string line = format_epoch_line(e);
        log << line << '\n';
        std::cerr << line << '\n';
    };
    hooks.checkpoint_every = c.checkpoint_every;
    hooks.on_checkpoint = [&out](std::size_t epoch, const ModelParams& p) {
        save_checkpoint(out / ("checkpoint_epoch" + std::to_string(epoch) + ".ckpt"), p);
    };
    const auto [model, stats] = train(views, c.model_for(0), c.train_for(0), hooks);
    save_checkpoint(out / "checkpoint.ckpt", model);
    log.flush();
    if (!log) throw Error("failed writing " + (out / "train.log").string());
    std::cout << "trained " << stats.epochs.size() << " epochs on " << views.size() << " graphs; checkpoint "
              << (out / "checkpoint.ckpt").string() << '\n';
    return kOk;
}

int cmd_score(const CommonFlags& f, const std::string& checkpoint, bool embeddings) {
    const RunConfig c = resolve(f);
    const fs::path out = prepare_out(c);
    const fs::path ckpt = checkpoint.empty() ? out / "checkpoint.ckpt" : fs::path(checkpoint);
    const ModelParams model = load_checkpoint(ckpt);
    if (model.config.rw_dim != c.model.rw_dim || model.config.degree_dim != c.model.degree_dim)
        throw ConfigError("checkpoint structural widths differ from model.rw_dim/model.degree_dim in the config");
    const ExperimentData data = load_experiment_data(c);
    const Split split = make_split(data, c.split_for(0));
    const auto views = views_for(split.test, c);
    const LevelErrors e = per_sample_errors(model, views, c.score);
    std::size_t degenerate = 0;
    const auto scores = aggregate_scores(e, model, c.train.variant, c.score, &degenerate);
    if (degenerate > 0) std::cerr << "warning: " << degenerate << " level(s) had zero training deviation\n";
    const auto records = make_records(e, scores, split.test_labels);
    write_score_csv((out / "scores.csv").string(), records);
    write_score_histogram((out / "histogram.csv").string(), records);
    if (embeddings) write_embeddings(out.string(), model, views, split.test_labels, c.score.batch_size);
    std::cout << "AUC " << format_fixed(auc(scores, split.test_labels)) << " graphs=" << records.size() << '\n';
    return kOk;
}

int cmd_eval(const CommonFlags& f) {
    const RunConfig c = resolve(f);
    const fs::path out = prepare_out(c);
    const EvalReport r = run_eval(c, load_experiment_data(c), out, &std::cerr);
    std::cout << r.text();
    return kOk;
}

int cmd_ablate(const CommonFlags& f) {
    const RunConfig c = resolve(f);
    const fs::path out = prepare_out(c);
    const std::string table = format_table("levels", run_ablation(c, load_experiment_data(c), &std::cerr));
    write_text(out / "ablation.tsv", table);
    std::cout << table;
    return kOk;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> values;
    std::stringstream s(text);
    for (std::string item; std::getline(s, item, ',');) {
        const auto v = config_detail::trim(item);
        values.push_back(config_detail::parse_number<double>("--values", v, "real"));
    }
    if (values.empty()) throw ConfigError("--values is empty");
    return values;
}

int cmd_sweep(const CommonFlags& f, const std::string& param, const std::string& values_text) {
    const RunConfig c = resolve(f);
    const fs::path out = prepare_out(c);
    const SweepParam p = param == "K" ? SweepParam::clusters : SweepParam::alpha;
    const auto values = parse_values(values_text);
    const std::string table = format_table(param, run_sweep(c, load_experiment_data(c), p, values, &std::cerr));
    write_text(out / ("sweep_" + param + ".tsv"), table);
    std::cout << table;
    return kOk;
}

int cmd_gradcheck(const GradCheckSuiteOptions& opt) {
    const auto entries = run_gradcheck_suite(opt);
    std::vector<std::string> failing;
    std::printf("%-22s %9s %8s %6s %6s %13s  %s\n", "check", "instances", "checked", "kinks", "noise", "max_rel_err",
                "result");
    for (const auto& e : entries) {
        std::printf("%-22s %9zu %8zu %6zu %6zu %13.3e  %s\n", e.name.c_str(), e.instances, e.checked, e.excluded,
                    e.noise_limited, e.max_relative_error, e.passed ? "ok" : "FAIL");
        if (!e.passed) failing.push_back(e.name);
    }
    if (failing.empty()) {
        std::printf("all %zu checks passed\n", entries.size());
        return kOk;
    }
    std::string names;
    for (const auto& n : failing) names += (names.empty() ? "" : ", ") + n;
    std::printf("FAILED: %s\n", names.c_str());
    return kNumerical;
}

int cmd_export_synthetic(const std::string& dir, std::size_t graphs, std::uint64_t seed) {
    const auto [er, ba] = generate_synthetic_pair(graphs, seed);
    tu::write_tu_dataset(fs::path(dir) / er.name(), er);
    tu::write_tu_dataset(fs::path(dir) / ba.name(), ba);
    std::cout << "wrote " << er.size() << " ER and " << ba.size() << " BA graphs under " << dir << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised graph-level OOD detection: train, score and evaluate"};
    app.require_subcommand(1);

    CommonFlags train_f, score_f, eval_f, ablate_f, sweep_f;
    auto* train_cmd = app.add_subcommand("train", "train one model and write a checkpoint");
    add_common(train_cmd, train_f);

    auto* score_cmd = app.add_subcommand("score", "score the test split with a checkpoint");
    add_common(score_cmd, score_f);
    std::string checkpoint;
    bool embeddings = false;
    score_cmd->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/checkpoint.ckpt)");
    score_cmd->add_flag("--embeddings", embeddings, "also write per-space embedding CSVs");

    auto* eval_cmd = app.add_subcommand("eval", "train and score over run.repeats seeds, report mean/std AUC");
    add_common(eval_cmd, eval_f);

    auto* ablate_cmd = app.add_subcommand("ablate", "evaluate every nonempty loss subset on the simp variant");
    add_common(ablate_cmd, ablate_f);

    auto* sweep_cmd = app.add_subcommand("sweep", "evaluate over a list of K or alpha values");
    add_common(sweep_cmd, sweep_f);
    std::string param, values;
    sweep_cmd->add_option("--param", param, "swept parameter")->required()->check(CLI::IsMember({"K", "alpha"}));
    sweep_cmd->add_option("--values", values, "comma-separated values")->required();

    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and loss");
    GradCheckSuiteOptions gc;
    gc_cmd->add_option("--instances", gc.instances, "random instances per check")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--seed", gc.seed, "instance seed");
    gc_cmd->add_option("--inject-fault", gc.inject_fault, "corrupt one op's backward")
        ->group("")
        ->check(CLI::IsMember(ad::op_catalog()));

    auto* synth_cmd = app.add_subcommand("export-synthetic", "write the ER/BA pair as TU-format datasets");
    std::string synth_dir;
    std::size_t synth_graphs = 120;
    std::uint64_t synth_seed = 7;
    synth_cmd->add_option("--out", synth_dir, "root directory")->required();
    synth_cmd->add_option("--graphs", synth_graphs, "graphs per class");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_f);
        if (score_cmd->parsed()) return cmd_score(score_f, checkpoint, embeddings);
        if (eval_cmd->parsed()) return cmd_eval(eval_f);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_f);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_f, param, values);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc);
        if (synth_cmd->parsed()) return cmd_export_synthetic(synth_dir, synth_graphs, synth_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
