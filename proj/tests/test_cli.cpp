#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "goodd/config.hpp"
#include "goodd/experiment.hpp"
#include "test_support.hpp"

using namespace goodd;

namespace {

const char* const kTiny =
    "[data]\n"
    "synthetic_graphs = 40\n"
    "train_fraction = 0.8\n"
    "\n"
    "[model]\n"
    "hidden_dim = 6   # small for speed\n"
    "rw_dim = 4\n"
    "degree_dim = 6\n"
    "clusters = 3\n"
    "\n"
    "[train]\n"
    "epochs = 2\n"
    "batch_size = 8\n"
    "\n"
    "[run]\n"
    "repeats = 2\n"
    "seed = 3\n";

RunConfig tiny() {
    std::istringstream in(kTiny);
    return parse_config(in, "tiny");
}

std::filesystem::path tiny_file(const std::string& name) {
    const auto p = support::scratch_dir(name) / "tiny.cfg";
    std::ofstream(p) << kTiny;
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code;
    std::string output;
};

CliResult cli(const std::string& args, const std::filesystem::path& dir) {
    const auto log = dir / "cli_output.txt";
    const std::string cmd = std::string(GOODD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

}  // namespace

TEST(Config, ParsesSectionsAndComments) {
    const RunConfig c = tiny();
    EXPECT_EQ(c.data.synthetic_graphs, 40u);
    EXPECT_EQ(c.model.hidden_dim, 6u);
    EXPECT_EQ(c.train.epochs, 2u);
    EXPECT_EQ(c.repeats, 2u);
    EXPECT_EQ(c.model.temperature, 0.2);
}

TEST(Config, UnknownKeyNamesKeyAndLine) {
    std::istringstream in("[model]\nhidden_dim = 4\nhiden = 3\n");
    try {
        parse_config(in, "x.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("model.hiden"), std::string::npos) << msg;
        EXPECT_NE(msg.find("x.cfg:3"), std::string::npos) << msg;
    }
    RunConfig c;
    EXPECT_THROW(set_config_value(c, "train.epochs", "ten"), ConfigError);
    EXPECT_THROW(set_config_value(c, "train.variant", "fancy"), ConfigError);
}

TEST(Config, TextRoundTrip) {
    RunConfig c = tiny();
    c.model.alpha = 0.1;
    c.train.learning_rate = 3e-4;
    c.data.train_fraction = 100.0 / 120.0;
    c.train.levels = {true, false, true};
    c.score.graph_negatives = GraphNegatives::bank;
    std::istringstream in(to_text(c));
    const RunConfig back = parse_config(in);
    EXPECT_EQ(to_text(back), to_text(c));
    EXPECT_EQ(back.data.train_fraction, c.data.train_fraction);
    EXPECT_EQ(back.train, c.train);
    EXPECT_EQ(back.model, c.model);
    EXPECT_EQ(back.score, c.score);
}

TEST(Ablation, SevenDistinctNonemptySubsets) {
    const auto& s = ablation_subsets();
    ASSERT_EQ(s.size(), 7u);
    std::set<std::array<bool, 3>> seen(s.begin(), s.end());
    EXPECT_EQ(seen.size(), 7u);
    EXPECT_EQ(seen.count({false, false, false}), 0u);
    EXPECT_EQ(s.back(), (std::array<bool, 3>{true, true, true}));
}

TEST(Report, SampleStdAndFormat) {
    const EvalReport r = summarize({0, 1, 2}, {0.8, 0.9, 1.0});
    EXPECT_NEAR(r.mean, 0.9, 1e-15);
    EXPECT_NEAR(r.std, 0.1, 1e-15);
    EXPECT_EQ(r.text(), "seed=0 auc=0.8000\nseed=1 auc=0.9000\nseed=2 auc=1.0000\nAUC mean=0.9000 std=0.1000 seeds=3\n");
    EXPECT_EQ(format_table("levels", {{"node", r}}), "levels\tauc_mean\tauc_std\tseed_aucs\nnode\t0.9000\t0.1000\t0.8000,0.9000,1.0000\n");
}

TEST(Experiment, AblationFullRowEqualsSimpEval) {
    const RunConfig c = tiny();
    const ExperimentData data = load_experiment_data(c);
    const auto rows = run_ablation(c, data);
    ASSERT_EQ(rows.size(), 7u);
    RunConfig simp = c;
    simp.train.variant = Variant::simp;
    const EvalReport direct = run_eval(simp, data);
    EXPECT_EQ(rows.back().label, "node,graph,group");
    EXPECT_EQ(rows.back().report.aucs, direct.aucs);
}

TEST(Experiment, SweepIsDeterministic) {
    RunConfig c = tiny();
    c.repeats = 1;
    const ExperimentData data = load_experiment_data(c);
    const auto a = run_sweep(c, data, SweepParam::alpha, {0.0, 1.0});
    const auto b = run_sweep(c, data, SweepParam::alpha, {0.0, 1.0});
    EXPECT_EQ(format_table("alpha", a), format_table("alpha", b));
    EXPECT_THROW(run_sweep(c, data, SweepParam::clusters, {1.0}), ConfigError);
    EXPECT_THROW(run_sweep(c, data, SweepParam::clusters, {2.5}), ConfigError);
}

TEST(Experiment, SyntheticAnomalyVariantHasBothClasses) {
    RunConfig c = tiny();
    c.data.split = SplitMode::anomaly;
    const ExperimentData data = load_experiment_data(c);
    std::size_t anomalies = 0;
    for (const auto& g : data.id.graphs()) anomalies += g.label().value() == 1;
    EXPECT_EQ(anomalies, 4u);  // 40 / 9
    EXPECT_EQ(data.id.size(), 44u);
}

TEST(Cli, TrainWritesCheckpointAndLog) {
    const auto cfg = tiny_file("cli_train");
    const auto out = cfg.parent_path() / "out";
    const CliResult r = cli("train --config " + cfg.string() + " --out " + out.string(), cfg.parent_path());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(std::filesystem::exists(out / "checkpoint.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(out / "resolved.cfg"));
    EXPECT_NE(slurp(out / "train.log").find("epoch=2 "), std::string::npos);

    const CliResult s = cli("score --config " + cfg.string() + " --out " + out.string(), cfg.parent_path());
    ASSERT_EQ(s.code, 0) << s.output;
    EXPECT_NE(s.output.find("AUC "), std::string::npos) << s.output;
    EXPECT_EQ(slurp(out / "scores.csv").rfind("graph_id,label,s_node,s_graph,s_group,score\n", 0), 0u);
}

TEST(Cli, RerunsAreByteIdentical) {
    const auto cfg = tiny_file("cli_rerun");
    const auto dir = cfg.parent_path();
    for (const char* sub : {"a", "b"}) {
        const CliResult r = cli("train --config " + cfg.string() + " --out " + (dir / sub).string(), dir);
        ASSERT_EQ(r.code, 0) << r.output;
        ASSERT_EQ(cli("score --config " + cfg.string() + " --out " + (dir / sub).string(), dir).code, 0);
    }
    for (const char* f : {"train.log", "checkpoint.ckpt", "scores.csv", "resolved.cfg"}) {
        const std::string a = slurp(dir / "a" / f);
        EXPECT_FALSE(a.empty()) << f;
        // resolved.cfg records the output directory itself
        if (std::string(f) != "resolved.cfg") {
            EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
        }
    }
}

TEST(Cli, UnknownConfigKeyExitsOne) {
    const auto dir = support::scratch_dir("cli_badkey");
    const CliResult r = cli("train --set model.hiden=3 --out " + (dir / "o").string(), dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("model.hiden"), std::string::npos) << r.output;
}

TEST(Cli, MissingDataExitsTwo) {
    const auto dir = support::scratch_dir("cli_nodata");
    const CliResult r = cli("train --set data.source=tu --set data.root=" + (dir / "none").string() +
                          " --set data.id_dataset=AAA --set data.ood_dataset=BBB --out " + (dir / "o").string(),
                      dir);
    EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, GradcheckFaultInjection) {
    const auto dir = support::scratch_dir("cli_gc");
    const CliResult ok = cli("gradcheck --instances 2", dir);
    EXPECT_EQ(ok.code, 0) << ok.output;
    EXPECT_NE(ok.output.find("checks passed"), std::string::npos);
    const CliResult bad = cli("gradcheck --instances 2 --inject-fault matmul", dir);
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.output.find("FAILED"), std::string::npos) << bad.output;
    EXPECT_NE(bad.output.find("matmul"), std::string::npos);
}

TEST(Configs, ShippedFilesParse) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(GOODD_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".cfg") continue;
        EXPECT_NO_THROW(load_config(e.path())) << e.path();
        ++n;
    }
    EXPECT_GE(n, 4u);
    const RunConfig c = load_config(std::filesystem::path(GOODD_SOURCE_DIR) / "configs" / "synthetic.cfg");
    const Split s = make_split(load_experiment_data(c), c.split_for(0));
    EXPECT_EQ(s.train.size(), 100u);
    EXPECT_EQ(s.test.size(), 40u);
}
