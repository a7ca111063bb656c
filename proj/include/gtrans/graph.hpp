#pragma once

#include <cstddef>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gtrans/rng.hpp"

namespace gtrans {

// Undirected attributed graph: symmetric hollow 0/1 adjacency plus an
// n x attr_dim real attribute matrix, both dense row-major.
struct Graph {
    int n = 0;
    int attr_dim = 0;
    std::vector<double> adj;   // n*n
    std::vector<double> attr;  // n*attr_dim

    double a(int i, int j) const { return adj[static_cast<std::size_t>(i) * n + j]; }
    bool has_edge(int i, int j) const { return a(i, j) > 0.0; }

    void set_edge(int i, int j) {
        adj[static_cast<std::size_t>(i) * n + j] = 1.0;
        adj[static_cast<std::size_t>(j) * n + i] = 1.0;
    }

    int edge_count() const {
        int m = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (has_edge(i, j)) ++m;
        return m;
    }

    int degree(int v) const {
        int d = 0;
        for (int j = 0; j < n; ++j)
            if (has_edge(v, j)) ++d;
        return d;
    }

    void validate() const {
        if (adj.size() != static_cast<std::size_t>(n) * n)
            throw std::invalid_argument("graph: adjacency size does not match n");
        if (attr.size() != static_cast<std::size_t>(n) * attr_dim)
            throw std::invalid_argument("graph: attribute row count does not match n");
        for (int i = 0; i < n; ++i) {
            if (a(i, i) != 0.0)
                throw std::invalid_argument("graph: self-loop at node " + std::to_string(i));
            for (int j = 0; j < n; ++j) {
                const double x = a(i, j);
                if (x != 0.0 && x != 1.0)
                    throw std::invalid_argument("graph: adjacency entry not binary at (" +
                                                std::to_string(i) + "," + std::to_string(j) + ")");
                if (x != a(j, i))
                    throw std::invalid_argument("graph: asymmetric adjacency at (" +
                                                std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }

    static Graph empty(int n, int attr_dim) {
        Graph g;
        g.n = n;
        g.attr_dim = attr_dim;
        g.adj.assign(static_cast<std::size_t>(n) * n, 0.0);
        g.attr.assign(static_cast<std::size_t>(n) * attr_dim, 0.0);
        return g;
    }
};

// A source/target realization of the same node set.
struct PairedExample {
    Graph source;
    Graph target;
};

constexpr int kUnreachable = -1;

// BFS hop distances from a start node; -1 where unreachable.
inline std::vector<int> bfs_hops(const Graph& g, int start) {
    std::vector<int> dist(g.n, kUnreachable);
    std::deque<int> queue;
    dist[start] = 0;
    queue.push_back(start);
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int v = 0; v < g.n; ++v) {
            if (g.has_edge(u, v) && dist[v] == kUnreachable) {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    return dist;
}

// Preferential-attachment tree: nodes join one at a time, each attaching to
// an existing node sampled proportionally to current degree. The repeated
// endpoint list makes that sampling exact. Attributes are set to the rows of
// the finished adjacency matrix.
inline Graph generate_ba(int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("generate_ba: need n >= 2, got " + std::to_string(n));
    Graph g = Graph::empty(n, n);
    std::vector<int> endpoints;
    endpoints.reserve(2 * static_cast<std::size_t>(n));
    g.set_edge(0, 1);
    endpoints.push_back(0);
    endpoints.push_back(1);
    for (int v = 2; v < n; ++v) {
        const int u = endpoints[rng.index(endpoints.size())];
        g.set_edge(v, u);
        endpoints.push_back(v);
        endpoints.push_back(u);
    }
    g.attr = g.adj;
    return g;
}

// Edge (i,j) iff 1 <= hops(i,j) <= k in g. Attributes are carried over from
// the input graph unchanged.
inline Graph k_hop_reachability(const Graph& g, int k) {
    if (k < 1) throw std::invalid_argument("k_hop_reachability: need k >= 1");
    Graph out = Graph::empty(g.n, g.attr_dim);
    out.attr = g.attr;
    for (int i = 0; i < g.n; ++i) {
        const std::vector<int> dist = bfs_hops(g, i);
        for (int j = 0; j < g.n; ++j)
            if (j != i && dist[j] != kUnreachable && dist[j] <= k)
                out.adj[static_cast<std::size_t>(i) * g.n + j] = 1.0;
    }
    return out;
}

// min(k, n) distinct uniform nodes; if the graph is smaller than k the last
// pick is repeated so the embedding width never varies.
inline std::vector<int> select_anchors(const Graph& g, int k, Rng& rng) {
    if (g.n == 0) throw std::invalid_argument("select_anchors: empty graph");
    if (k < 1) throw std::invalid_argument("select_anchors: need k >= 1");
    const auto picks = rng.sample_distinct(static_cast<std::size_t>(g.n),
                                           static_cast<std::size_t>(k));
    std::vector<int> anchors;
    anchors.reserve(k);
    for (std::size_t p : picks) anchors.push_back(static_cast<int>(p));
    while (static_cast<int>(anchors.size()) < k) anchors.push_back(anchors.back());
    return anchors;
}

struct PositionEmbedding {
    std::vector<double> values;  // n x k
    std::vector<int> anchors;
    int n = 0;
    int k = 0;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * k + j]; }
};

// Entry (i,j) = 1/(hops(i, anchor_j) + 1); unreachable pairs map to 0 and a
// node is exactly 1 against itself. With raw_hops the untransformed hop count
// is stored instead (unreachable pairs get n, an upper bound on any path).
inline PositionEmbedding position_embedding(const Graph& g, const std::vector<int>& anchors,
                                            bool raw_hops = false) {
    PositionEmbedding pe;
    pe.n = g.n;
    pe.k = static_cast<int>(anchors.size());
    pe.anchors = anchors;
    pe.values.assign(static_cast<std::size_t>(pe.n) * pe.k, 0.0);
    for (int j = 0; j < pe.k; ++j) {
        const int a = anchors[j];
        if (a < 0 || a >= g.n)
            throw std::invalid_argument("position_embedding: anchor " + std::to_string(a) +
                                        " out of range");
        const std::vector<int> dist = bfs_hops(g, a);
        for (int i = 0; i < g.n; ++i) {
            const int d = dist[i];
            double v;
            if (raw_hops)
                v = d == kUnreachable ? static_cast<double>(g.n) : static_cast<double>(d);
            else
                v = d == kUnreachable ? 0.0 : 1.0 / (static_cast<double>(d) + 1.0);
            pe.values[static_cast<std::size_t>(i) * pe.k + j] = v;
        }
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Graph files: JSON object {n, edges: [[i,j] with i<j], attributes: n rows}.
// save_graphs/load_graphs handle arrays of such objects; a bare object loads
// as a one-element list.
// ---------------------------------------------------------------------------

inline nlohmann::json graph_to_json(const Graph& g) {
    nlohmann::json j;
    j["n"] = g.n;
    auto edges = nlohmann::json::array();
    for (int i = 0; i < g.n; ++i)
        for (int k = i + 1; k < g.n; ++k)
            if (g.has_edge(i, k)) edges.push_back({i, k});
    j["edges"] = std::move(edges);
    auto attrs = nlohmann::json::array();
    for (int i = 0; i < g.n; ++i) {
        auto row = nlohmann::json::array();
        for (int d = 0; d < g.attr_dim; ++d)
            row.push_back(g.attr[static_cast<std::size_t>(i) * g.attr_dim + d]);
        attrs.push_back(std::move(row));
    }
    j["attributes"] = std::move(attrs);
    return j;
}

inline Graph graph_from_json(const nlohmann::json& j, const std::string& context) {
    if (!j.is_object() || !j.contains("n") || !j.contains("edges") || !j.contains("attributes"))
        throw std::runtime_error(context + ": expected object with fields n, edges, attributes");
    const int n = j.at("n").get<int>();
    if (n < 0) throw std::runtime_error(context + ": negative node count");
    const auto& attrs = j.at("attributes");
    if (static_cast<int>(attrs.size()) != n)
        throw std::runtime_error(context + ": attributes has " + std::to_string(attrs.size()) +
                                 " rows, expected n=" + std::to_string(n));
    const int d = n == 0 ? 0 : static_cast<int>(attrs.at(0).size());
    Graph g = Graph::empty(n, d);
    for (int i = 0; i < n; ++i) {
        const auto& row = attrs.at(i);
        if (static_cast<int>(row.size()) != d)
            throw std::runtime_error(context + ": ragged attribute row " + std::to_string(i));
        for (int c = 0; c < d; ++c)
            g.attr[static_cast<std::size_t>(i) * d + c] = row.at(c).get<double>();
    }
    std::size_t edge_idx = 0;
    for (const auto& e : j.at("edges")) {
        const std::string at = context + ": edge #" + std::to_string(edge_idx++);
        if (!e.is_array() || e.size() != 2) throw std::runtime_error(at + " is not a pair");
        const int a = e.at(0).get<int>();
        const int b = e.at(1).get<int>();
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw std::runtime_error(at + " (" + std::to_string(a) + "," + std::to_string(b) +
                                     ") index out of range for n=" + std::to_string(n));
        if (a >= b)
            throw std::runtime_error(at + " (" + std::to_string(a) + "," + std::to_string(b) +
                                     ") must satisfy i<j");
        g.set_edge(a, b);
    }
    g.validate();
    return g;
}

inline void save_graphs(const std::vector<Graph>& graphs, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Graph& g : graphs) arr.push_back(graph_to_json(g));
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << arr.dump(1) << "\n";
}

inline void save_graph(const Graph& g, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << graph_to_json(g).dump(1) << "\n";
}

inline std::vector<Graph> load_graphs(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    std::vector<Graph> out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(graph_from_json(j.at(i), path + "[" + std::to_string(i) + "]"));
    } else {
        out.push_back(graph_from_json(j, path));
    }
    return out;
}

inline Graph load_graph(const std::string& path) {
    auto v = load_graphs(path);
    if (v.size() != 1)
        throw std::runtime_error(path + ": expected a single graph, found " +
                                 std::to_string(v.size()));
    return std::move(v[0]);
}

}  // namespace gtrans
