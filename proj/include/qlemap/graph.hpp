#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qlemap/matrix.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

inline constexpr int kUnlabeled = -1;

inline bool is_power_of_two(std::size_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

// floor(log2(x)) for x >= 1.
inline std::size_t log2_floor(std::size_t x) noexcept {
    std::size_t r = 0;
    while (x > 1) {
        x >>= 1;
        ++r;
    }
    return r;
}

inline std::size_t next_power_of_two(std::size_t x) noexcept {
    std::size_t p = 1;
    while (p < x) p <<= 1;
    return p;
}

struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;  // u < v after normalization

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Undirected simple graph. Immutable once built: the with_* members return
// modified copies.
class Graph {
public:
    Graph() = default;

    explicit Graph(std::size_t num_nodes, std::vector<Edge> edges = {})
        : num_nodes_(num_nodes),
          labels_(num_nodes, kUnlabeled),
          communities_(num_nodes, kUnlabeled) {
        for (auto& e : edges) {
            if (e.u == e.v) throw std::invalid_argument("graph: self-loop on node " + std::to_string(e.u));
            if (e.u >= num_nodes || e.v >= num_nodes)
                throw std::invalid_argument("graph: edge endpoint out of range");
            if (e.u > e.v) std::swap(e.u, e.v);
        }
        std::sort(edges.begin(), edges.end());
        if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
            throw std::invalid_argument("graph: duplicate edge");
        edges_ = std::move(edges);
    }

    std::size_t num_nodes() const noexcept { return num_nodes_; }
    std::size_t num_edges() const noexcept { return edges_.size(); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    // Per-node label in {0,1}, or kUnlabeled.
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<int>& communities() const noexcept { return communities_; }

    bool has_labels() const {
        return std::any_of(labels_.begin(), labels_.end(), [](int l) { return l != kUnlabeled; });
    }

    std::vector<std::size_t> labeled_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t v = 0; v < num_nodes_; ++v)
            if (labels_[v] != kUnlabeled) out.push_back(v);
        return out;
    }

    Graph with_labels(std::vector<int> labels) const {
        if (labels.size() != num_nodes_) throw std::invalid_argument("graph: label vector size mismatch");
        for (int l : labels)
            if (l != kUnlabeled && l != 0 && l != 1) throw std::invalid_argument("graph: labels must be 0 or 1");
        Graph g = *this;
        g.labels_ = std::move(labels);
        return g;
    }

    Graph with_communities(std::vector<int> communities) const {
        if (communities.size() != num_nodes_) throw std::invalid_argument("graph: community vector size mismatch");
        Graph g = *this;
        g.communities_ = std::move(communities);
        return g;
    }

    std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> deg(num_nodes_, 0);
        for (const auto& e : edges_) {
            ++deg[e.u];
            ++deg[e.v];
        }
        return deg;
    }

    std::vector<std::vector<std::size_t>> adjacency_lists() const {
        std::vector<std::vector<std::size_t>> adj(num_nodes_);
        for (const auto& e : edges_) {
            adj[e.u].push_back(e.v);
            adj[e.v].push_back(e.u);
        }
        return adj;
    }

    // 2|E| / (|V|(|V|+1)), the density convention used throughout.
    double density() const {
        if (num_nodes_ == 0) return 0.0;
        const double n = static_cast<double>(num_nodes_);
        return 2.0 * static_cast<double>(edges_.size()) / (n * (n + 1.0));
    }

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    std::size_t num_nodes_ = 0;
    std::vector<Edge> edges_;
    std::vector<int> labels_;
    std::vector<int> communities_;
};

struct DataSplit {
    std::vector<std::size_t> train_nodes;
    std::vector<std::size_t> test_nodes;
    std::uint64_t seed = 0;
};

/// Stochastic block model with equal-size contiguous communities.
///
/// Node v belongs to community v / (n_nodes / n_communities). Every pair is
/// visited once in (u, v) lexicographic order and connected with p_in or
/// p_out. With two communities the community id doubles as the node label.
inline Graph sbm_generate(std::size_t n_nodes, double p_in, double p_out, std::size_t n_communities,
                          std::uint64_t seed) {
    if (!is_power_of_two(n_nodes)) throw std::invalid_argument("sbm: n_nodes must be a power of 2");
    if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0))
        throw std::invalid_argument("sbm: probabilities must lie in [0, 1]");
    if (n_communities == 0 || n_nodes % n_communities != 0)
        throw std::invalid_argument("sbm: n_communities must divide n_nodes");

    const std::size_t block = n_nodes / n_communities;
    std::vector<int> community(n_nodes);
    for (std::size_t v = 0; v < n_nodes; ++v) community[v] = static_cast<int>(v / block);

    Rng rng(seed);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n_nodes; ++u)
        for (std::size_t v = u + 1; v < n_nodes; ++v) {
            const double p = community[u] == community[v] ? p_in : p_out;
            if (uniform01(rng) < p) edges.push_back({u, v});
        }

    Graph g = Graph(n_nodes, std::move(edges)).with_communities(community);
    if (n_communities == 2) g = g.with_labels(community);
    return g;
}

// Per-pair probability giving expected density `density` under the
// 2|E|/(|V|(|V|+1)) convention; clamped so density 1 is the complete graph.
inline double pair_probability_for_density(std::size_t n_nodes, double density) {
    if (n_nodes < 2) return 0.0;
    const double n = static_cast<double>(n_nodes);
    return std::min(1.0, density * (n + 1.0) / (n - 1.0));
}

/// Erdos-Renyi graph matched to a target density.
inline Graph random_graph(std::size_t n_nodes, double density, std::uint64_t seed) {
    if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("random_graph: density must lie in [0, 1]");
    const double p = pair_probability_for_density(n_nodes, density);
    Rng rng(seed);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n_nodes; ++u)
        for (std::size_t v = u + 1; v < n_nodes; ++v)
            if (uniform01(rng) < p) edges.push_back({u, v});
    return Graph(n_nodes, std::move(edges));
}

// L = D - A, dense.
inline Matrix laplacian(const Graph& g) {
    Matrix L(g.num_nodes(), g.num_nodes());
    for (const auto& e : g.edges()) {
        L(e.u, e.v) = -1.0;
        L(e.v, e.u) = -1.0;
        L(e.u, e.u) += 1.0;
        L(e.v, e.v) += 1.0;
    }
    return L;
}

/// Appends isolated, unlabeled nodes until the node count is a power of two.
inline Graph pad_to_power_of_two(const Graph& g) {
    const std::size_t target = next_power_of_two(std::max<std::size_t>(g.num_nodes(), 1));
    if (target == g.num_nodes()) return g;
    std::vector<int> labels = g.labels();
    std::vector<int> communities = g.communities();
    labels.resize(target, kUnlabeled);
    communities.resize(target, kUnlabeled);
    return Graph(target, g.edges()).with_labels(std::move(labels)).with_communities(std::move(communities));
}

/// Uniform random split of the labeled nodes; |test| = round(test_fraction * |labeled|).
/// Both lists come back sorted by node id.
inline DataSplit train_test_split(const Graph& g, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("train_test_split: test_fraction must lie in (0, 1)");
    auto nodes = g.labeled_nodes();
    if (nodes.empty()) throw std::invalid_argument("train_test_split: graph has no labels");

    Rng rng(seed);
    shuffle(nodes, rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(nodes.size())));

    DataSplit split;
    split.seed = seed;
    split.test_nodes.assign(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train_nodes.assign(nodes.begin() + static_cast<std::ptrdiff_t>(n_test), nodes.end());
    std::sort(split.test_nodes.begin(), split.test_nodes.end());
    std::sort(split.train_nodes.begin(), split.train_nodes.end());
    return split;
}

// Number of connected components (BFS).
inline std::size_t connected_components(const Graph& g) {
    const auto adj = g.adjacency_lists();
    std::vector<char> seen(g.num_nodes(), 0);
    std::size_t count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < g.num_nodes(); ++s) {
        if (seen[s]) continue;
        ++count;
        seen[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (auto w : adj[v])
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
        }
    }
    return count;
}

// ---------------------------------------------------------------------------
// Text formats
//
// Edge list: "N M" followed by M lines "u v", 0-indexed, u < v, sorted.
// Node tables: CSV with header "node,<column>" and one row per node that has
// a value (labels) or per node (communities).

inline void write_edge_list(std::ostream& os, const Graph& g) {
    os << g.num_nodes() << ' ' << g.num_edges() << '\n';
    for (const auto& e : g.edges()) os << e.u << ' ' << e.v << '\n';
}

inline Graph read_edge_list(std::istream& is) {
    std::size_t n = 0, m = 0;
    if (!(is >> n >> m)) throw std::runtime_error("edge list: malformed header");
    std::vector<Edge> edges;
    edges.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        Edge e;
        if (!(is >> e.u >> e.v)) throw std::runtime_error("edge list: expected " + std::to_string(m) + " edges");
        edges.push_back(e);
    }
    return Graph(n, std::move(edges));
}

inline void write_node_column_csv(std::ostream& os, const std::string& column, const std::vector<int>& values) {
    os << "node," << column << '\n';
    for (std::size_t v = 0; v < values.size(); ++v)
        if (values[v] != kUnlabeled) os << v << ',' << values[v] << '\n';
}

inline std::vector<int> read_node_column_csv(std::istream& is, std::size_t num_nodes) {
    std::vector<int> values(num_nodes, kUnlabeled);
    std::string line;
    if (!std::getline(is, line) || line.rfind("node,", 0) != 0) throw std::runtime_error("node csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("node csv: malformed row '" + line + "'");
        const auto node = std::stoul(line.substr(0, comma));
        if (node >= num_nodes) throw std::runtime_error("node csv: node id out of range");
        values[node] = std::stoi(line.substr(comma + 1));
    }
    return values;
}

inline void write_labels_csv(std::ostream& os, const Graph& g) { write_node_column_csv(os, "label", g.labels()); }

inline Graph read_labels_csv(std::istream& is, const Graph& g) {
    return g.with_labels(read_node_column_csv(is, g.num_nodes()));
}

}  // namespace qlemap
