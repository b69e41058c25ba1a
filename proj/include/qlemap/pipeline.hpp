#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qlemap/baseline.hpp"
#include "qlemap/classifier.hpp"
#include "qlemap/embedding.hpp"
#include "qlemap/graph.hpp"
#include "qlemap/parallel.hpp"
#include "qlemap/pauli.hpp"

namespace qlemap {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Flat experiment configuration; JSON keys match the field names.
struct ExperimentConfig {
    // graph
    std::size_t n_nodes = 32;
    double p_in = 0.7;
    double p_out = 0.02;
    std::size_t n_communities = 2;
    std::uint64_t graph_seed = 0;
    double test_fraction = 0.25;
    std::optional<std::uint64_t> split_seed;  // defaults to graph_seed
    // pipeline
    std::size_t d = 4;
    std::size_t k = 1;
    std::optional<double> lambda = 100.0;  // nullopt = "auto"
    double threshold = 0.1;
    std::string mode = "exact";  // exact | shots
    std::size_t shots = 1024;
    std::size_t restarts = 5;
    std::size_t max_iter = 2000;
    double initial_step = 0.5;
    double tolerance = 1e-4;
    std::string optimizer = "cobyla";  // cobyla | nelder-mead
    std::optional<std::uint64_t> seed;  // defaults to graph_seed
    // sweep grid
    std::vector<double> sweep_p_in{0.7};
    std::vector<double> sweep_p_out{0.02};
    std::vector<double> sweep_thresholds{0.1};
    std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4, 5, 6, 7, 8};
    bool record_timing = false;
    std::string out = "out";

    std::uint64_t effective_split_seed() const { return split_seed.value_or(graph_seed); }
    std::uint64_t effective_seed() const { return seed.value_or(graph_seed); }
    std::size_t ancillas() const { return log2_floor(d); }
    EvalMode eval_mode() const { return mode == "shots" ? EvalMode::Shots : EvalMode::Exact; }

    OptimizeConfig optimize_config() const {
        OptimizeConfig c;
        c.method = optimizer == "nelder-mead" ? OptimizeMethod::NelderMead : OptimizeMethod::LinearTrustRegion;
        c.max_iter = max_iter;
        c.initial_step = initial_step;
        c.tolerance = tolerance;
        c.seed = effective_seed();
        return c;
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
        if (!is_power_of_two(n_nodes) || n_nodes < 2) fail("n_nodes must be a power of 2 and >= 2");
        if (!(p_in >= 0 && p_in <= 1) || !(p_out >= 0 && p_out <= 1)) fail("p_in and p_out must lie in [0, 1]");
        if (n_communities == 0 || n_nodes % n_communities != 0) fail("n_communities must divide n_nodes");
        if (!(test_fraction > 0 && test_fraction < 1)) fail("test_fraction must lie in (0, 1)");
        if (d != 2 && d != 4) fail("d must be 2 or 4");
        if (k < 1) fail("k must be >= 1");
        if (lambda && !(*lambda >= 0)) fail("lambda must be >= 0 or \"auto\"");
        if (!(threshold >= 0)) fail("threshold must be >= 0");
        if (mode != "exact" && mode != "shots") fail("mode must be \"exact\" or \"shots\"");
        if (shots == 0) fail("shots must be >= 1");
        if (restarts == 0) fail("restarts must be >= 1");
        if (max_iter == 0) fail("max_iter must be >= 1");
        if (!(initial_step > 0) || !(tolerance > 0)) fail("initial_step and tolerance must be > 0");
        if (optimizer != "cobyla" && optimizer != "nelder-mead") fail("optimizer must be \"cobyla\" or \"nelder-mead\"");
        if (sweep_seeds.empty()) fail("sweep_seeds must not be empty");
        if (std::set(sweep_seeds.begin(), sweep_seeds.end()).size() != sweep_seeds.size())
            fail("sweep_seeds must be distinct");
        for (double t : sweep_thresholds)
            if (!(t >= 0)) fail("sweep thresholds must be >= 0");
        for (double p : sweep_p_in)
            if (!(p >= 0 && p <= 1)) fail("sweep_p_in values must lie in [0, 1]");
        for (double p : sweep_p_out)
            if (!(p >= 0 && p <= 1)) fail("sweep_p_out values must lie in [0, 1]");
    }
};

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "n_nodes", "p_in",         "p_out",     "n_communities", "graph_seed",       "test_fraction",
        "split_seed", "d",         "k",         "lambda",        "threshold",        "mode",
        "shots",   "restarts",     "max_iter",  "initial_step",  "tolerance",        "optimizer",
        "seed",    "sweep_p_in",   "sweep_p_out", "sweep_thresholds", "sweep_seeds", "record_timing",
        "out"};
    return keys;
}

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& [key, _] : j.items())
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw std::invalid_argument("config: unknown key '" + key + "'");

    ExperimentConfig c;
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(field);
        } catch (const json::exception&) {
            throw std::invalid_argument(std::string("config: bad value for '") + key + "'");
        }
    };
    auto get_opt = [&](const char* key, std::optional<std::uint64_t>& field) {
        if (!j.contains(key) || j.at(key).is_null()) return;
        std::uint64_t v = 0;
        get(key, v);
        field = v;
    };
    get("n_nodes", c.n_nodes);
    get("p_in", c.p_in);
    get("p_out", c.p_out);
    get("n_communities", c.n_communities);
    get("graph_seed", c.graph_seed);
    get("test_fraction", c.test_fraction);
    get_opt("split_seed", c.split_seed);
    get("d", c.d);
    get("k", c.k);
    if (j.contains("lambda")) {
        const auto& l = j.at("lambda");
        if (l.is_string() && l.get<std::string>() == "auto") c.lambda.reset();
        else if (l.is_number()) c.lambda = l.get<double>();
        else throw std::invalid_argument("config: lambda must be a number or \"auto\"");
    }
    get("threshold", c.threshold);
    get("mode", c.mode);
    get("shots", c.shots);
    get("restarts", c.restarts);
    get("max_iter", c.max_iter);
    get("initial_step", c.initial_step);
    get("tolerance", c.tolerance);
    get("optimizer", c.optimizer);
    get_opt("seed", c.seed);
    get("sweep_p_in", c.sweep_p_in);
    get("sweep_p_out", c.sweep_p_out);
    get("sweep_thresholds", c.sweep_thresholds);
    get("sweep_seeds", c.sweep_seeds);
    get("record_timing", c.record_timing);
    get("out", c.out);
    c.validate();
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["n_nodes"] = c.n_nodes;
    j["p_in"] = c.p_in;
    j["p_out"] = c.p_out;
    j["n_communities"] = c.n_communities;
    j["graph_seed"] = c.graph_seed;
    j["test_fraction"] = c.test_fraction;
    j["split_seed"] = c.effective_split_seed();
    j["d"] = c.d;
    j["k"] = c.k;
    j["lambda"] = c.lambda ? json(*c.lambda) : json("auto");
    j["threshold"] = c.threshold;
    j["mode"] = c.mode;
    j["shots"] = c.shots;
    j["restarts"] = c.restarts;
    j["max_iter"] = c.max_iter;
    j["initial_step"] = c.initial_step;
    j["tolerance"] = c.tolerance;
    j["optimizer"] = c.optimizer;
    j["seed"] = c.effective_seed();
    j["sweep_p_in"] = c.sweep_p_in;
    j["sweep_p_out"] = c.sweep_p_out;
    j["sweep_thresholds"] = c.sweep_thresholds;
    j["sweep_seeds"] = c.sweep_seeds;
    j["record_timing"] = c.record_timing;
    j["out"] = c.out;
    return j;
}

// Artifact names inside an output directory.
namespace artifact {
inline constexpr const char* kGraph = "graph.edges";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kCommunities = "communities.csv";
inline constexpr const char* kSplit = "split.csv";
inline constexpr const char* kGenerateReport = "generate.json";
inline constexpr const char* kDecomposition = "decomposition.csv";
inline constexpr const char* kDecompositionReport = "decomposition.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kEmbedding = "embedding.csv";
inline constexpr const char* kPredictions = "predictions.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kClassifier = "classifier.json";
inline constexpr const char* kBaselineEmbedding = "baseline_embedding.csv";
inline constexpr const char* kBaselinePredictions = "baseline_predictions.csv";
inline constexpr const char* kBaselineMetrics = "baseline_metrics.json";
inline constexpr const char* kRandomMetrics = "random_metrics.json";
inline constexpr const char* kVizClassical = "embedviz_classical.csv";
inline constexpr const char* kVizQuantum = "embedviz_quantum.csv";
inline constexpr const char* kVizReport = "embedviz.json";
inline constexpr const char* kSweepLong = "sweep_long.csv";
inline constexpr const char* kSweepAggregate = "sweep_aggregate.csv";
inline constexpr const char* kSweepManifest = "sweep_manifest.json";
}  // namespace artifact

// Substreams of the run seed.
namespace stream {
inline constexpr std::uint64_t kEmbed = 1;
inline constexpr std::uint64_t kEmbedShots = 2;
inline constexpr std::uint64_t kClassify = 3;
inline constexpr std::uint64_t kClassifyShots = 4;
inline constexpr std::uint64_t kLogistic = 5;
inline constexpr std::uint64_t kRandomEmbedding = 6;
}  // namespace stream

namespace detail {

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing input artifact: " + path.string());
    return in;
}

inline json read_json(const fs::path& path) {
    auto in = open_input(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    writer(os);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const json& j) {
    write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

class StageTimer {
public:
    explicit StageTimer(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        if (!enabled_) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

inline json trace_json(const std::vector<std::pair<std::size_t, double>>& trace) {
    json arr = json::array();
    for (const auto& [i, f] : trace) arr.push_back({i, f});
    return arr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Artifact loaders

inline Graph load_graph(const fs::path& dir) {
    auto in = detail::open_input(dir / artifact::kGraph);
    Graph g = read_edge_list(in);
    auto lin = detail::open_input(dir / artifact::kLabels);
    g = g.with_labels(read_node_column_csv(lin, g.num_nodes()));
    auto cin = detail::open_input(dir / artifact::kCommunities);
    return g.with_communities(read_node_column_csv(cin, g.num_nodes()));
}

inline void write_split_csv(std::ostream& os, const DataSplit& split) {
    std::map<std::size_t, const char*> rows;
    for (auto v : split.train_nodes) rows[v] = "train";
    for (auto v : split.test_nodes) rows[v] = "test";
    os << "node,set\n";
    for (const auto& [v, set] : rows) os << v << ',' << set << '\n';
}

inline DataSplit read_split_csv(std::istream& is) {
    DataSplit split;
    std::string line;
    if (!std::getline(is, line) || line != "node,set") throw std::runtime_error("split csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("split csv: malformed row '" + line + "'");
        const auto v = static_cast<std::size_t>(std::stoul(line.substr(0, comma)));
        const auto set = line.substr(comma + 1);
        if (set == "train") split.train_nodes.push_back(v);
        else if (set == "test") split.test_nodes.push_back(v);
        else throw std::runtime_error("split csv: unknown set '" + set + "'");
    }
    return split;
}

inline DataSplit load_split(const fs::path& dir) {
    auto in = detail::open_input(dir / artifact::kSplit);
    return read_split_csv(in);
}

inline PauliDecomposition load_decomposition(const fs::path& dir, std::size_t n_qubits) {
    auto in = detail::open_input(dir / artifact::kDecomposition);
    auto dec = read_decomposition_csv(in, n_qubits);
    const auto report = detail::read_json(dir / artifact::kDecompositionReport);
    dec.source_norm = report.at("source_norm").get<double>();
    return dec;
}

// ---------------------------------------------------------------------------
// Stages. Each reads its predecessors' artifacts from `dir` and writes its own.

inline void cmd_generate(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = sbm_generate(cfg.n_nodes, cfg.p_in, cfg.p_out, cfg.n_communities, cfg.graph_seed);
    fs::create_directories(dir);
    detail::write_file(dir / artifact::kGraph, [&](std::ostream& os) { write_edge_list(os, g); });
    detail::write_file(dir / artifact::kLabels, [&](std::ostream& os) { write_labels_csv(os, g); });
    detail::write_file(dir / artifact::kCommunities,
                       [&](std::ostream& os) { write_node_column_csv(os, "community", g.communities()); });
    DataSplit split;
    if (g.has_labels()) split = train_test_split(g, cfg.test_fraction, cfg.effective_split_seed());
    detail::write_file(dir / artifact::kSplit, [&](std::ostream& os) { write_split_csv(os, split); });
    detail::write_json(dir / artifact::kGenerateReport,
                       {{"n_nodes", g.num_nodes()},
                        {"n_edges", g.num_edges()},
                        {"density", g.density()},
                        {"p_in", cfg.p_in},
                        {"p_out", cfg.p_out},
                        {"n_communities", cfg.n_communities},
                        {"graph_seed", cfg.graph_seed},
                        {"split_seed", cfg.effective_split_seed()},
                        {"test_fraction", cfg.test_fraction},
                        {"n_train", split.train_nodes.size()},
                        {"n_test", split.test_nodes.size()},
                        {"wall_time", timer.seconds()}});
}

inline void cmd_decompose(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = load_graph(dir);
    const auto full = decompose(laplacian(g));
    const auto [dec, report] = apply_threshold(full, cfg.threshold);
    detail::write_file(dir / artifact::kDecomposition, [&](std::ostream& os) { write_decomposition_csv(os, dec); });
    detail::write_json(dir / artifact::kDecompositionReport,
                       {{"n_qubits", dec.n_qubits},
                        {"threshold", report.threshold},
                        {"terms_total", full.terms.size()},
                        {"kept", report.kept},
                        {"dropped", report.dropped},
                        {"alpha", report.alpha},
                        {"source_norm", full.source_norm},
                        {"wall_time", timer.seconds()}});
}

namespace detail {

inline EmbeddingProblem make_problem(const ExperimentConfig& cfg, PauliDecomposition dec, double lambda) {
    EmbeddingProblem prob;
    prob.n = dec.n_qubits;
    prob.decomposition = std::move(dec);
    prob.p = cfg.ancillas();
    prob.k = cfg.k;
    prob.lambda = lambda;
    prob.mode = cfg.eval_mode();
    prob.shots = cfg.shots;
    prob.shot_seed = derive_seed(cfg.effective_seed(), stream::kEmbedShots);
    return prob;
}

inline ClassifierEval classifier_eval(const ExperimentConfig& cfg) {
    return {cfg.eval_mode(), cfg.shots, derive_seed(cfg.effective_seed(), stream::kClassifyShots)};
}

struct ClassifierRun {
    ClassifierModel model;
    std::vector<NodePrediction> predictions;
    double test_accuracy = 0.0;
    double train_accuracy = 0.0;
};

inline ClassifierRun run_classifier(const ExperimentConfig& cfg, const Statevector& sv, std::size_t n,
                                    const Graph& g, const DataSplit& split) {
    if (split.train_nodes.empty() || split.test_nodes.empty())
        throw std::runtime_error("classify: graph has no train/test split (labels missing)");
    const ClassifierAnsatzSpec spec{cfg.ancillas(), 8};
    const auto eval = classifier_eval(cfg);
    ClassifierRun out;
    out.model = train_classifier(sv, n, g.labels(), split.train_nodes, spec, cfg.restarts, cfg.optimize_config(),
                                 derive_seed(cfg.effective_seed(), stream::kClassify), eval);
    out.predictions = predict(sv, n, spec, out.model.gamma_opt, eval);
    out.test_accuracy = accuracy_of(out.predictions, g.labels(), split.test_nodes);
    out.train_accuracy = accuracy_of(out.predictions, g.labels(), split.train_nodes);
    return out;
}

inline void write_predictions_csv(std::ostream& os, const std::vector<NodePrediction>& preds,
                                  const std::vector<int>& labels) {
    os << "node,label,p1,predicted\n";
    for (const auto& p : preds) {
        if (p.node >= labels.size() || labels[p.node] == kUnlabeled) continue;
        const auto guess = p.degenerate ? std::nullopt : decide(p.p1);
        os << p.node << ',' << labels[p.node] << ',' << format_double(p.p1) << ',' << (guess ? *guess : -1) << '\n';
    }
}

}  // namespace detail

inline void cmd_embed(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = load_graph(dir);
    const std::size_t n = log2_floor(g.num_nodes());
    const auto dec = load_decomposition(dir, n);
    const auto opt = cfg.optimize_config();
    const auto embed_seed = derive_seed(cfg.effective_seed(), stream::kEmbed);

    auto train = [&](double lambda) {
        return train_embedding(detail::make_problem(cfg, dec, lambda), cfg.restarts, opt, embed_seed);
    };

    EmbeddingResult result;
    double lambda = 0.0;
    json trials = json::array();
    const double minimum = theoretical_minimum(detail::make_problem(cfg, dec, 0.0));
    if (cfg.lambda) {
        lambda = *cfg.lambda;
        result = train(lambda);
    } else {
        const DataSplit split = load_split(dir);
        std::map<double, EmbeddingResult> runs;
        const auto selection = select_lambda(
            [&](double l) {
                auto r = train(l);
                const auto sv = run(build_embedding_circuit(detail::make_problem(cfg, dec, l).ansatz(), r.theta_opt));
                LambdaTrial t;
                t.accuracy = detail::run_classifier(cfg, sv, n, g, split).test_accuracy;
                t.final_cost = r.final_cost;
                runs[l] = std::move(r);
                return t;
            },
            minimum);
        for (const auto& t : selection.trials)
            trials.push_back({{"lambda", t.lambda}, {"accuracy", t.accuracy}, {"final_cost", t.final_cost}});
        lambda = selection.lambda;
        result = runs.at(lambda);
    }

    detail::write_file(dir / artifact::kEmbedding, [&](std::ostream& os) { write_embedding_csv(os, result.Y); });
    json manifest;
    manifest["inputs"] = {{"graph_file", artifact::kGraph},
                          {"decomposition_file", artifact::kDecomposition},
                          {"threshold", cfg.threshold},
                          {"lambda", cfg.lambda ? json(*cfg.lambda) : json("auto")},
                          {"d", cfg.d},
                          {"k", cfg.k},
                          {"n_qubits", n},
                          {"mode", cfg.mode},
                          {"shots", cfg.shots},
                          {"restarts", cfg.restarts},
                          {"max_iter", cfg.max_iter},
                          {"optimizer", cfg.optimizer},
                          {"seed", cfg.effective_seed()},
                          {"graph_seed", cfg.graph_seed},
                          {"split_seed", cfg.effective_split_seed()}};
    manifest["outputs"] = {{"lambda", lambda},
                           {"lambda_trials", trials},
                           {"theta_opt", result.theta_opt},
                           {"final_cost", result.final_cost},
                           {"expectation_term", result.expectation_term},
                           {"penalty_term", result.penalty_term},
                           {"theoretical_minimum", minimum},
                           {"weights", result.weights},
                           {"restart_costs", result.restart_costs},
                           {"evaluations", result.evaluations},
                           {"cost_trace", detail::trace_json(result.cost_trace)},
                           {"embedding_file", artifact::kEmbedding},
                           {"wall_time", timer.seconds()}};
    detail::write_json(dir / artifact::kManifest, manifest);
}

/// Embedding state rebuilt from the manifest's trained parameters.
inline Statevector load_embedding_state(const fs::path& dir) {
    const auto manifest = detail::read_json(dir / artifact::kManifest);
    const auto& in = manifest.at("inputs");
    const EmbeddingAnsatzSpec spec{in.at("n_qubits").get<std::size_t>(), log2_floor(in.at("d").get<std::size_t>()),
                                   in.at("k").get<std::size_t>()};
    const auto theta = manifest.at("outputs").at("theta_opt").get<std::vector<double>>();
    return run(build_embedding_circuit(spec, theta));
}

inline void cmd_classify(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = load_graph(dir);
    const DataSplit split = load_split(dir);
    const auto sv = load_embedding_state(dir);
    const std::size_t n = log2_floor(g.num_nodes());
    if (sv.n_qubits() != n + cfg.ancillas()) throw std::runtime_error("classify: manifest d does not match config d");
    const auto res = detail::run_classifier(cfg, sv, n, g, split);

    detail::write_file(dir / artifact::kPredictions,
                       [&](std::ostream& os) { detail::write_predictions_csv(os, res.predictions, g.labels()); });
    detail::write_json(dir / artifact::kMetrics, {{"train_loss", res.model.train_loss},
                                                  {"test_accuracy", res.test_accuracy},
                                                  {"train_accuracy", res.train_accuracy},
                                                  {"restarts_used", cfg.restarts},
                                                  {"wall_time", timer.seconds()}});
    detail::write_json(dir / artifact::kClassifier, {{"q", res.model.spec.q},
                                                     {"layers", res.model.spec.layers},
                                                     {"gamma_opt", res.model.gamma_opt},
                                                     {"restart_losses", res.model.restart_losses},
                                                     {"loss_trace", detail::trace_json(res.model.loss_trace)}});
}

/// Classical eigenmap of the thresholded Laplacian + logistic regression.
inline void cmd_baseline(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = load_graph(dir);
    const DataSplit split = load_split(dir);
    if (split.train_nodes.empty() || split.test_nodes.empty())
        throw std::runtime_error("baseline: graph has no train/test split (labels missing)");
    const auto dec = load_decomposition(dir, log2_floor(g.num_nodes()));
    const Matrix y = classical_eigenmap(reconstruct(dec), cfg.d);
    const auto model = logistic_train(y, g.labels(), split.train_nodes, 5000, 0.1,
                                      derive_seed(cfg.effective_seed(), stream::kLogistic));
    std::vector<NodePrediction> preds(y.rows());
    for (std::size_t v = 0; v < y.rows(); ++v) {
        preds[v].node = v;
        preds[v].p1 = logistic_predict(model, y.row(v));
        preds[v].p0 = 1.0 - preds[v].p1;
        preds[v].row_mass = 1.0;
    }
    const double test_acc = accuracy_of(preds, g.labels(), split.test_nodes);
    const double train_acc = accuracy_of(preds, g.labels(), split.train_nodes);

    detail::write_file(dir / artifact::kBaselineEmbedding, [&](std::ostream& os) { write_embedding_csv(os, y); });
    detail::write_file(dir / artifact::kBaselinePredictions,
                       [&](std::ostream& os) { detail::write_predictions_csv(os, preds, g.labels()); });
    detail::write_json(dir / artifact::kBaselineMetrics, {{"test_accuracy", test_acc},
                                                          {"train_accuracy", train_acc},
                                                          {"weights", model.weights},
                                                          {"bias", model.bias},
                                                          {"degenerate", model.degenerate},
                                                          {"epochs_run", model.epochs_run},
                                                          {"wall_time", timer.seconds()}});
}

/// Classifier trained on an untrained embedding (uniform random angles).
inline void cmd_random_baseline(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const detail::StageTimer timer(cfg.record_timing);
    const Graph g = load_graph(dir);
    const DataSplit split = load_split(dir);
    const std::size_t n = log2_floor(g.num_nodes());
    const EmbeddingAnsatzSpec spec{n, cfg.ancillas(), cfg.k};
    const auto theta =
        random_angles(spec.num_parameters(), derive_seed(cfg.effective_seed(), stream::kRandomEmbedding));
    const auto sv = run(build_embedding_circuit(spec, theta));
    const auto res = detail::run_classifier(cfg, sv, n, g, split);
    detail::write_json(dir / artifact::kRandomMetrics, {{"test_accuracy", res.test_accuracy},
                                                        {"train_loss", res.model.train_loss},
                                                        {"theta", theta},
                                                        {"wall_time", timer.seconds()}});
}

namespace detail {

// Two highest-weight columns that vary over the real nodes; constant or
// empty columns only fill in when fewer than two qualify.
inline std::pair<std::size_t, std::size_t> pick_viz_columns(const Matrix& y, const std::vector<double>& weights,
                                                            const std::vector<std::size_t>& nodes) {
    std::vector<std::size_t> order(y.cols());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto varies = [&](std::size_t c) {
        if (weights[c] < 1e-12 || nodes.empty()) return false;
        double lo = y(nodes[0], c), hi = lo;
        for (auto v : nodes) {
            lo = std::min(lo, y(v, c));
            hi = std::max(hi, y(v, c));
        }
        return hi - lo > 1e-6;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const bool va = varies(a), vb = varies(b);
        if (va != vb) return va;
        return weights[a] > weights[b];
    });
    return {order[0], order.size() > 1 ? order[1] : order[0]};
}

inline void write_viz_csv(std::ostream& os, const Matrix& y, std::size_t cx, std::size_t cy,
                          const std::vector<std::size_t>& nodes, const std::vector<int>& communities) {
    os << "node,community,x,y\n";
    for (auto v : nodes)
        os << v << ',' << communities[v] << ',' << format_double(y(v, cx)) << ',' << format_double(y(v, cy)) << '\n';
}

}  // namespace detail

inline void cmd_embedviz(const ExperimentConfig& cfg, const fs::path& dir) {
    cfg.validate();
    const Graph g = load_graph(dir);
    std::vector<std::size_t> nodes;
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
        if (g.communities()[v] != kUnlabeled) nodes.push_back(v);

    const auto dec = load_decomposition(dir, log2_floor(g.num_nodes()));
    const Matrix classical = classical_eigenmap(reconstruct(dec), std::min<std::size_t>(2, g.num_nodes() - 1));

    auto ein = detail::open_input(dir / artifact::kEmbedding);
    const Matrix quantum = read_embedding_csv(ein);
    const auto manifest = detail::read_json(dir / artifact::kManifest);
    const auto weights = manifest.at("outputs").at("weights").get<std::vector<double>>();
    const auto [qx, qy] = detail::pick_viz_columns(quantum, weights, nodes);

    detail::write_file(dir / artifact::kVizClassical, [&](std::ostream& os) {
        detail::write_viz_csv(os, classical, 0, classical.cols() > 1 ? 1 : 0, nodes, g.communities());
    });
    detail::write_file(dir / artifact::kVizQuantum,
                       [&](std::ostream& os) { detail::write_viz_csv(os, quantum, qx, qy, nodes, g.communities()); });
    detail::write_json(dir / artifact::kVizReport, {{"classical_columns", {1, 2}},
                                                    {"quantum_columns", {qx, qy}},
                                                    {"quantum_weights", weights},
                                                    {"rows", nodes.size()}});
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRecord {
    double p_in = 0.0, p_out = 0.0, threshold = 0.0;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    std::size_t n_terms = 0;
    double quantum_accuracy = 0.0;
    double classical_accuracy = 0.0;
    double random_param_accuracy = 0.0;
    double final_cost = 0.0;
    double penalty_residual = 0.0;
    double lambda = 0.0;
    double wall_time = 0.0;
    std::string error;  // empty on success
};

inline std::string cell_name(double p_in, double p_out, double threshold) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "pin%g_pout%g_t%g", p_in, p_out, threshold);
    return buf;
}

/// Config of one sweep record: the base config with the cell's grid values,
/// and graph, split and run seeds all set to the record seed.
inline ExperimentConfig sweep_record_config(const ExperimentConfig& base, double p_in, double p_out, double threshold,
                                            std::uint64_t seed) {
    ExperimentConfig c = base;
    c.p_in = p_in;
    c.p_out = p_out;
    c.threshold = threshold;
    c.graph_seed = seed;
    c.split_seed = seed;
    c.seed = seed;
    return c;
}

/// Full pipeline for one record in its own directory; failures are captured
/// in the record rather than thrown.
inline SweepRecord run_sweep_record(const ExperimentConfig& c, const fs::path& dir) {
    SweepRecord r;
    r.p_in = c.p_in;
    r.p_out = c.p_out;
    r.threshold = c.threshold;
    r.seed = c.graph_seed;
    const detail::StageTimer timer(c.record_timing);
    try {
        cmd_generate(c, dir);
        cmd_decompose(c, dir);
        cmd_embed(c, dir);
        cmd_classify(c, dir);
        cmd_baseline(c, dir);
        cmd_random_baseline(c, dir);
        const auto dec = detail::read_json(dir / artifact::kDecompositionReport);
        const auto man = detail::read_json(dir / artifact::kManifest).at("outputs");
        r.alpha = dec.at("alpha").get<double>();
        r.n_terms = dec.at("kept").get<std::size_t>();
        r.final_cost = man.at("final_cost").get<double>();
        r.penalty_residual = man.at("penalty_term").get<double>();
        r.lambda = man.at("lambda").get<double>();
        r.quantum_accuracy = detail::read_json(dir / artifact::kMetrics).at("test_accuracy").get<double>();
        r.classical_accuracy = detail::read_json(dir / artifact::kBaselineMetrics).at("test_accuracy").get<double>();
        r.random_param_accuracy = detail::read_json(dir / artifact::kRandomMetrics).at("test_accuracy").get<double>();
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.wall_time = timer.seconds();
    return r;
}

inline std::size_t workers_from_env() {
    const char* env = std::getenv("QLEMAP_WORKERS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const auto v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) throw std::invalid_argument("QLEMAP_WORKERS must be a positive integer");
    return v;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + '"';
}

}  // namespace detail

inline void write_sweep_long_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
    os << "p_in,p_out,threshold,seed,alpha,n_terms,quantum_accuracy,classical_accuracy,random_param_accuracy,"
          "final_cost,penalty_residual,lambda,wall_time,error\n";
    for (const auto& r : records)
        os << format_double(r.p_in) << ',' << format_double(r.p_out) << ',' << format_double(r.threshold) << ','
           << r.seed << ',' << format_double(r.alpha) << ',' << r.n_terms << ',' << format_double(r.quantum_accuracy)
           << ',' << format_double(r.classical_accuracy) << ',' << format_double(r.random_param_accuracy) << ','
           << format_double(r.final_cost) << ',' << format_double(r.penalty_residual) << ','
           << format_double(r.lambda) << ',' << format_double(r.wall_time) << ',' << detail::csv_field(r.error)
           << '\n';
}

struct SweepAggregate {
    double p_in = 0.0, p_out = 0.0, threshold = 0.0;
    std::size_t n_ok = 0, n_failed = 0;
    double alpha = 0.0, n_terms = 0.0, quantum_accuracy = 0.0, classical_accuracy = 0.0,
           random_param_accuracy = 0.0, final_cost = 0.0, penalty_residual = 0.0, wall_time = 0.0;
};

/// Means over the successful seeds of each cell, cells in first-seen order.
inline std::vector<SweepAggregate> aggregate_sweep(const std::vector<SweepRecord>& records) {
    std::vector<SweepAggregate> cells;
    for (const auto& r : records) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const SweepAggregate& a) {
            return a.p_in == r.p_in && a.p_out == r.p_out && a.threshold == r.threshold;
        });
        if (it == cells.end()) {
            cells.push_back({r.p_in, r.p_out, r.threshold});
            it = cells.end() - 1;
        }
        if (!r.error.empty()) {
            ++it->n_failed;
            continue;
        }
        ++it->n_ok;
        it->alpha += r.alpha;
        it->n_terms += static_cast<double>(r.n_terms);
        it->quantum_accuracy += r.quantum_accuracy;
        it->classical_accuracy += r.classical_accuracy;
        it->random_param_accuracy += r.random_param_accuracy;
        it->final_cost += r.final_cost;
        it->penalty_residual += r.penalty_residual;
        it->wall_time += r.wall_time;
    }
    for (auto& a : cells) {
        if (a.n_ok == 0) continue;
        const double k = static_cast<double>(a.n_ok);
        for (double* f : {&a.alpha, &a.n_terms, &a.quantum_accuracy, &a.classical_accuracy, &a.random_param_accuracy,
                          &a.final_cost, &a.penalty_residual, &a.wall_time})
            *f /= k;
    }
    return cells;
}

inline void write_sweep_aggregate_csv(std::ostream& os, const std::vector<SweepAggregate>& cells) {
    os << "p_in,p_out,threshold,n_ok,n_failed,alpha,n_terms,quantum_accuracy,classical_accuracy,"
          "random_param_accuracy,final_cost,penalty_residual,wall_time\n";
    for (const auto& a : cells)
        os << format_double(a.p_in) << ',' << format_double(a.p_out) << ',' << format_double(a.threshold) << ','
           << a.n_ok << ',' << a.n_failed << ',' << format_double(a.alpha) << ',' << format_double(a.n_terms) << ','
           << format_double(a.quantum_accuracy) << ',' << format_double(a.classical_accuracy) << ','
           << format_double(a.random_param_accuracy) << ',' << format_double(a.final_cost) << ','
           << format_double(a.penalty_residual) << ',' << format_double(a.wall_time) << '\n';
}

/// Runs every (p_in, p_out, threshold) cell for every sweep seed, each record
/// in dir/cells/<cell>/seed<s>, on up to `workers` threads.
inline std::vector<SweepRecord> cmd_sweep(const ExperimentConfig& cfg, const fs::path& dir, std::size_t workers = 1) {
    cfg.validate();
    struct Job {
        ExperimentConfig config;
        fs::path dir;
    };
    std::vector<Job> jobs;
    for (double p_in : cfg.sweep_p_in)
        for (double p_out : cfg.sweep_p_out)
            for (double t : cfg.sweep_thresholds)
                for (auto s : cfg.sweep_seeds)
                    jobs.push_back({sweep_record_config(cfg, p_in, p_out, t, s),
                                    dir / "cells" / cell_name(p_in, p_out, t) / ("seed" + std::to_string(s))});

    std::vector<SweepRecord> records(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) { records[i] = run_sweep_record(jobs[i].config, jobs[i].dir); });

    detail::write_file(dir / artifact::kSweepLong, [&](std::ostream& os) { write_sweep_long_csv(os, records); });
    detail::write_file(dir / artifact::kSweepAggregate,
                       [&](std::ostream& os) { write_sweep_aggregate_csv(os, aggregate_sweep(records)); });
    detail::write_json(dir / artifact::kSweepManifest, {{"config", config_to_json(cfg)},
                                                        {"records", records.size()},
                                                        {"seeds", cfg.sweep_seeds}});
    return records;
}

}  // namespace qlemap
