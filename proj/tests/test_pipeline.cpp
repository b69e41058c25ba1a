#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "qlemap/pipeline.hpp"

using namespace qlemap;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("qlemap_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.n_nodes = 8;
    c.p_in = 0.9;
    c.p_out = 0.05;
    c.d = 2;
    c.restarts = 1;
    c.max_iter = 300;
    c.graph_seed = 3;
    c.sweep_seeds = {3};
    c.sweep_p_in = {0.9};
    c.sweep_p_out = {0.05};
    c.sweep_thresholds = {0.1};
    return c;
}

void run_all_stages(const ExperimentConfig& c, const fs::path& dir) {
    cmd_generate(c, dir);
    cmd_decompose(c, dir);
    cmd_embed(c, dir);
    cmd_classify(c, dir);
    cmd_baseline(c, dir);
}

int run_cli(const std::string& cmd, const fs::path& config, const fs::path& out, const std::string& extra = "") {
    const std::string line = std::string(QLEMAP_CLI_PATH) + " " + cmd + " --config " + config.string() + " --out " +
                             out.string() + " " + extra + " > /dev/null 2>&1";
    const int status = std::system(line.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split_csv_line(line));
    return rows;
}

}  // namespace

TEST(Config, JsonRoundTripAndValidation) {
    auto c = small_config();
    c.lambda.reset();
    const auto back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_FALSE(back.lambda.has_value());

    EXPECT_THROW(config_from_json(json{{"bogus", 1}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json{{"n_nodes", 12}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json{{"threshold", -0.1}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json{{"sweep_seeds", {1, 1}}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json{{"lambda", "big"}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json{{"d", 8}}), std::invalid_argument);
    EXPECT_THROW(config_from_json(json::array()), std::invalid_argument);
    EXPECT_EQ(config_from_json(json{{"graph_seed", 7}}).effective_seed(), 7u);
}

TEST(Stages, MissingInputsAreReported) {
    TempDir tmp;
    const auto c = small_config();
    EXPECT_THROW(cmd_decompose(c, tmp.path()), std::runtime_error);
    cmd_generate(c, tmp.path());
    EXPECT_THROW(cmd_embed(c, tmp.path()), std::runtime_error);
    EXPECT_THROW(cmd_embedviz(c, tmp.path()), std::runtime_error);
}

TEST(Stages, DecomposeWithZeroThresholdReconstructsLaplacian) {
    TempDir tmp;
    auto c = small_config();
    c.n_nodes = 16;
    c.threshold = 0.0;
    cmd_generate(c, tmp.path());
    cmd_decompose(c, tmp.path());
    const Graph g = load_graph(tmp.path());
    const auto dec = load_decomposition(tmp.path(), 4);
    EXPECT_LT(max_abs_diff(reconstruct(dec), laplacian(g)), 1e-10);
    const auto report = json::parse(slurp(tmp.path() / artifact::kDecompositionReport));
    EXPECT_EQ(report.at("alpha").get<double>(), 1.0);
}

TEST(Stages, SplitFileMatchesGenerator) {
    TempDir tmp;
    const auto c = small_config();
    cmd_generate(c, tmp.path());
    const auto split = load_split(tmp.path());
    const auto direct = train_test_split(load_graph(tmp.path()), c.test_fraction, c.effective_split_seed());
    EXPECT_EQ(std::set<std::size_t>(split.test_nodes.begin(), split.test_nodes.end()),
              std::set<std::size_t>(direct.test_nodes.begin(), direct.test_nodes.end()));
    EXPECT_EQ(split.test_nodes.size(), 2u);
}

TEST(Stages, FullChainIsByteIdenticalOnRerun) {
    TempDir a, b;
    const auto c = small_config();
    run_all_stages(c, a.path());
    cmd_embedviz(c, a.path());
    run_all_stages(c, b.path());
    cmd_embedviz(c, b.path());
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path())) {
        const auto name = entry.path().filename();
        EXPECT_EQ(slurp(entry.path()), slurp(b.path() / name)) << name;
        ++files;
    }
    EXPECT_GE(files, 16u);
    const auto metrics = json::parse(slurp(a.path() / artifact::kMetrics));
    EXPECT_GE(metrics.at("test_accuracy").get<double>(), 0.0);
    EXPECT_EQ(metrics.at("wall_time").get<double>(), 0.0);
}

TEST(Stages, AutoLambdaRecordsTrials) {
    TempDir tmp;
    auto c = small_config();
    c.lambda.reset();
    cmd_generate(c, tmp.path());
    cmd_decompose(c, tmp.path());
    cmd_embed(c, tmp.path());
    const auto m = json::parse(slurp(tmp.path() / artifact::kManifest));
    EXPECT_EQ(m.at("inputs").at("lambda"), "auto");
    const auto& trials = m.at("outputs").at("lambda_trials");
    ASSERT_GE(trials.size(), 1u);
    EXPECT_EQ(trials[0].at("lambda").get<double>(), 100.0);
    bool found = false;
    for (const auto& t : trials) found |= t.at("lambda") == m.at("outputs").at("lambda");
    EXPECT_TRUE(found);
}

TEST(Embedviz, RowsAndCommunities) {
    TempDir tmp;
    auto c = small_config();
    c.n_nodes = 32;
    c.n_communities = 4;
    c.max_iter = 100;
    cmd_generate(c, tmp.path());
    cmd_decompose(c, tmp.path());
    cmd_embed(c, tmp.path());
    cmd_embedviz(c, tmp.path());
    for (const char* f : {artifact::kVizClassical, artifact::kVizQuantum}) {
        const auto rows = read_csv(tmp.path() / f);
        EXPECT_EQ(rows.size(), 32u);
        std::set<std::string> communities;
        for (const auto& r : rows) {
            ASSERT_EQ(r.size(), 4u);
            communities.insert(r[1]);
        }
        EXPECT_EQ(communities.size(), 4u);
    }
    EXPECT_THROW(cmd_classify(c, tmp.path()), std::runtime_error);  // no binary labels
}

TEST(Cli, StagesViaCommandLine) {
    TempDir tmp;
    const auto cfg_path = tmp.path() / "config.json";
    {
        std::ofstream os(cfg_path);
        os << config_to_json(small_config()).dump(2);
    }
    const auto out = tmp.path() / "run";
    for (const char* cmd : {"generate", "decompose", "embed", "classify", "baseline", "embedviz"})
        EXPECT_EQ(run_cli(cmd, cfg_path, out), 0) << cmd;
    for (const char* f : {artifact::kGraph, artifact::kDecomposition, artifact::kManifest, artifact::kEmbedding,
                          artifact::kPredictions, artifact::kMetrics, artifact::kBaselineMetrics, artifact::kVizQuantum})
        EXPECT_TRUE(fs::exists(out / f)) << f;

    // The library stages produce the same bytes.
    TempDir lib;
    run_all_stages(small_config(), lib.path());
    for (const char* f : {artifact::kManifest, artifact::kMetrics, artifact::kBaselineMetrics})
        EXPECT_EQ(slurp(out / f), slurp(lib.path() / f)) << f;

    EXPECT_EQ(run_cli("decompose", cfg_path, out, "--threshold 0.5"), 0);
    const auto report = json::parse(slurp(out / artifact::kDecompositionReport));
    EXPECT_EQ(report.at("threshold").get<double>(), 0.5);

    EXPECT_NE(run_cli("embed", cfg_path, tmp.path() / "empty"), 0);
    EXPECT_NE(run_cli("generate", cfg_path, out, "--n_nodes 12"), 0);
}

TEST(Sweep, SingleCellMatchesIndividualStages) {
    TempDir sweep_dir, single;
    const auto c = small_config();
    const auto records = cmd_sweep(c, sweep_dir.path());
    ASSERT_EQ(records.size(), 1u);
    const auto& r = records[0];
    ASSERT_TRUE(r.error.empty()) << r.error;

    const auto rc = sweep_record_config(c, 0.9, 0.05, 0.1, 3);
    run_all_stages(rc, single.path());
    cmd_random_baseline(rc, single.path());
    const auto metrics = json::parse(slurp(single.path() / artifact::kMetrics));
    const auto base = json::parse(slurp(single.path() / artifact::kBaselineMetrics));
    const auto rand = json::parse(slurp(single.path() / artifact::kRandomMetrics));
    const auto man = json::parse(slurp(single.path() / artifact::kManifest)).at("outputs");
    EXPECT_EQ(r.quantum_accuracy, metrics.at("test_accuracy").get<double>());
    EXPECT_EQ(r.classical_accuracy, base.at("test_accuracy").get<double>());
    EXPECT_EQ(r.random_param_accuracy, rand.at("test_accuracy").get<double>());
    EXPECT_EQ(r.final_cost, man.at("final_cost").get<double>());

    // alpha agrees with apply_threshold on the same graph.
    const auto g = sbm_generate(8, 0.9, 0.05, 2, 3);
    EXPECT_EQ(r.alpha, apply_threshold(decompose(laplacian(g)), 0.1).second.alpha);
    EXPECT_TRUE(fs::exists(sweep_dir.path() / "cells" / cell_name(0.9, 0.05, 0.1) / "seed3" / artifact::kMetrics));
}

TEST(Sweep, AggregateIsMeanOfLongRowsAndFailuresAreRecorded) {
    TempDir tmp;
    auto c = small_config();
    c.max_iter = 100;
    c.sweep_seeds = {0, 1, 2};
    c.sweep_thresholds = {0.0, 0.5};
    const auto records = cmd_sweep(c, tmp.path(), 2);
    ASSERT_EQ(records.size(), 6u);

    const auto long_rows = read_csv(tmp.path() / artifact::kSweepLong);
    const auto agg_rows = read_csv(tmp.path() / artifact::kSweepAggregate);
    ASSERT_EQ(long_rows.size(), 6u);
    ASSERT_EQ(agg_rows.size(), 2u);
    for (const auto& agg : agg_rows) {
        double alpha = 0.0, qacc = 0.0, cacc = 0.0;
        int count = 0;
        for (const auto& row : long_rows) {
            if (row[2] != agg[2]) continue;
            alpha += std::stod(row[4]);
            qacc += std::stod(row[6]);
            cacc += std::stod(row[7]);
            ++count;
        }
        ASSERT_EQ(count, 3);
        EXPECT_EQ(std::stoi(agg[3]), 3);
        EXPECT_NEAR(std::stod(agg[5]), alpha / 3, 1e-15);
        EXPECT_NEAR(std::stod(agg[7]), qacc / 3, 1e-15);
        EXPECT_NEAR(std::stod(agg[8]), cacc / 3, 1e-15);
    }
    EXPECT_EQ(std::stod(agg_rows[0][5]), 1.0);  // t = 0 keeps everything

    // A four-community grid has no binary labels: every record fails, the sweep finishes.
    TempDir bad;
    auto b = small_config();
    b.n_communities = 4;
    b.max_iter = 50;
    const auto failed = cmd_sweep(b, bad.path());
    ASSERT_EQ(failed.size(), 1u);
    EXPECT_FALSE(failed[0].error.empty());
    EXPECT_EQ(aggregate_sweep(failed)[0].n_failed, 1u);
    EXPECT_TRUE(fs::exists(bad.path() / artifact::kSweepAggregate));
}

TEST(Sweep, WorkersFromEnvironment) {
    ::unsetenv("QLEMAP_WORKERS");
    EXPECT_EQ(workers_from_env(), 1u);
    ::setenv("QLEMAP_WORKERS", "3", 1);
    EXPECT_EQ(workers_from_env(), 3u);
    ::setenv("QLEMAP_WORKERS", "zero", 1);
    EXPECT_THROW(workers_from_env(), std::invalid_argument);
    ::unsetenv("QLEMAP_WORKERS");
}
