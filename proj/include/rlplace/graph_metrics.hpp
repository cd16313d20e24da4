#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlplace/netlist.hpp"
#include "rlplace/spectral.hpp"

namespace rlplace {

// Netlist as a graph. Undirected view: clique expansion of every net, edge
// weight = number of shared nets. Directed view: driver -> sink per net, with
// combinational cycles broken (dropped back edges) so that paths between
// flip-flops are well defined; flip-flops themselves terminate paths.
struct Graph {
    int n = 0;
    std::vector<std::vector<std::pair<int, int>>> adj;  // (neighbor, weight), sorted
    std::vector<std::vector<int>> dag_out;              // directed edges after cycle breaking
    std::vector<bool> is_ff;

    int degree(int v) const { return static_cast<int>(adj[v].size()); }

    bool has_edge(int u, int v) const {
        const auto& a = adj[u];
        auto it = std::lower_bound(a.begin(), a.end(), std::make_pair(v, 0));
        return it != a.end() && it->first == v;
    }

    std::vector<std::vector<int>> neighbor_lists() const {
        std::vector<std::vector<int>> out(n);
        for (int v = 0; v < n; ++v)
            for (const auto& [u, w] : adj[v]) out[v].push_back(u);
        return out;
    }
};

namespace detail {

// Remove directed back edges among non-flip-flop nodes (iterative DFS,
// ascending order). Cycles through a flip-flop are harmless because paths
// never continue past one.
inline void break_combinational_cycles(std::vector<std::vector<int>>& out,
                                       const std::vector<bool>& is_ff) {
    const int n = static_cast<int>(out.size());
    std::vector<int> color(n, 0);  // 0 white, 1 gray, 2 black
    std::set<std::pair<int, int>> drop;
    std::vector<std::pair<int, size_t>> stack;
    for (int s = 0; s < n; ++s) {
        if (is_ff[s] || color[s] != 0) continue;
        stack.push_back({s, 0});
        color[s] = 1;
        while (!stack.empty()) {
            auto& [v, idx] = stack.back();
            if (idx < out[v].size()) {
                const int u = out[v][idx++];
                if (is_ff[u]) continue;
                if (color[u] == 1)
                    drop.insert({v, u});
                else if (color[u] == 0) {
                    color[u] = 1;
                    stack.push_back({u, 0});
                }
            } else {
                color[v] = 2;
                stack.pop_back();
            }
        }
    }
    if (drop.empty()) return;
    for (int v = 0; v < n; ++v) {
        auto& lst = out[v];
        lst.erase(std::remove_if(lst.begin(), lst.end(),
                                 [&](int u) { return drop.count({v, u}) > 0; }),
                  lst.end());
    }
}

}  // namespace detail

inline Graph build_graph(const Netlist& nl) {
    Graph g;
    g.n = static_cast<int>(nl.nodes.size());
    g.is_ff.resize(g.n, false);
    for (const auto& node : nl.nodes) g.is_ff[node.id] = node.is_flipflop;

    std::vector<std::map<int, int>> weight(g.n);
    std::vector<std::set<int>> dag(g.n);
    for (const auto& net : nl.nets) {
        std::set<int> members;
        for (const auto& p : net.pins) members.insert(p.node);
        for (auto it = members.begin(); it != members.end(); ++it)
            for (auto jt = std::next(it); jt != members.end(); ++jt) {
                ++weight[*it][*jt];
                ++weight[*jt][*it];
            }
        const int driver = net.pins.front().node;
        for (int sink : members)
            if (sink != driver) dag[driver].insert(sink);
    }
    g.adj.resize(g.n);
    for (int v = 0; v < g.n; ++v)
        for (const auto& [u, w] : weight[v]) g.adj[v].push_back({u, w});
    g.dag_out.resize(g.n);
    for (int v = 0; v < g.n; ++v) g.dag_out[v] = {dag[v].begin(), dag[v].end()};
    detail::break_combinational_cycles(g.dag_out, g.is_ff);
    return g;
}

inline Graph build_graph(const ClusteredNetlist& cn) { return build_graph(cn.to_netlist()); }

// Longest directed path (in edges) between two flip-flops. Flip-flops start
// and end paths but are never interior; DP over the implicitly split graph
// where each flip-flop has a source and a sink role.
inline int logic_levels(const Graph& g) {
    const int n = g.n;
    // split ids: v for source role, n + v for the sink role of a flip-flop
    std::vector<std::vector<int>> out(2 * n);
    std::vector<int> indeg(2 * n, 0);
    for (int v = 0; v < n; ++v)
        for (int u : g.dag_out[v]) {
            const int to = g.is_ff[u] ? n + u : u;
            out[v].push_back(to);
            ++indeg[to];
        }
    std::vector<int> topo;
    topo.reserve(2 * n);
    for (int v = 0; v < 2 * n; ++v)
        if (indeg[v] == 0) topo.push_back(v);
    for (size_t h = 0; h < topo.size(); ++h)
        for (int u : out[topo[h]])
            if (--indeg[u] == 0) topo.push_back(u);

    std::vector<int> dp(2 * n, -1);
    for (int v = 0; v < n; ++v)
        if (g.is_ff[v]) dp[v] = 0;
    int best = 0;
    for (int v : topo) {
        if (dp[v] < 0) continue;
        for (int u : out[v]) {
            dp[u] = std::max(dp[u], dp[v] + 1);
            if (u >= n) best = std::max(best, dp[u]);
        }
    }
    return best;
}

// Average over vertices of (ordered closed neighbor pairs) / (deg*(deg-1));
// vertices of degree <= 1 contribute 0.
inline double clustering_coefficient(const Graph& g) {
    if (g.n < 1) throw std::invalid_argument("clustering_coefficient requires n >= 1");
    double sum = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const int d = g.degree(i);
        if (d <= 1) continue;
        int closed = 0;
        for (const auto& [j, wj] : g.adj[i])
            for (const auto& [k, wk] : g.adj[i])
                if (j != k && g.has_edge(j, k)) ++closed;
        sum += static_cast<double>(closed) / (static_cast<double>(d) * (d - 1));
    }
    return sum / g.n;
}

// Edge density among nodes of degree > k; 0 when fewer than two qualify.
inline double rich_club(const Graph& g, int k) {
    if (k < 0) throw std::invalid_argument("rich_club requires k >= 0");
    std::vector<int> club;
    for (int v = 0; v < g.n; ++v)
        if (g.degree(v) > k) club.push_back(v);
    const size_t s = club.size();
    if (s <= 1) return 0.0;
    std::vector<bool> in(g.n, false);
    for (int v : club) in[v] = true;
    long edges = 0;
    for (int v : club)
        for (const auto& [u, w] : g.adj[v])
            if (u > v && in[u]) ++edges;
    return 2.0 * static_cast<double>(edges) / (static_cast<double>(s) * (s - 1));
}

struct FeatureVector {
    int logic_levels = 0;
    double clustering_coefficient = 0.0;
    std::map<int, double> rich_club;  // degree threshold -> coefficient
    SpectralSummary spectral;
};

inline FeatureVector extract_features(const Netlist& nl, double tol = 1e-8, int max_iter = 5000) {
    const Graph g = build_graph(nl);
    FeatureVector f;
    f.logic_levels = logic_levels(g);
    f.clustering_coefficient = g.n >= 1 ? clustering_coefficient(g) : 0.0;

    std::vector<int> degs(g.n);
    for (int v = 0; v < g.n; ++v) degs[v] = g.degree(v);
    std::sort(degs.begin(), degs.end());
    std::set<int> thresholds = {1};
    if (!degs.empty()) {
        thresholds.insert(degs[(degs.size() - 1) / 2]);          // median
        thresholds.insert(degs[(9 * (degs.size() - 1)) / 10]);   // 90th percentile
    }
    for (int k : thresholds) f.rich_club[k] = rich_club(g, k);

    if (g.n >= 2) f.spectral = spectral_summary(g.neighbor_lists(), tol, max_iter);
    return f;
}

inline std::string write_features(const FeatureVector& f) {
    nlohmann::ordered_json doc;
    doc["logic_levels"] = f.logic_levels;
    doc["clustering_coefficient"] = f.clustering_coefficient;
    doc["rich_club"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : f.rich_club) doc["rich_club"][std::to_string(k)] = v;
    doc["spectral"] = {{"fiedler_value", f.spectral.fiedler_value},
                       {"spectral_radius", f.spectral.spectral_radius},
                       {"iterations_used", f.spectral.iterations_used},
                       {"residual", f.spectral.residual}};
    return doc.dump(2) + "\n";
}

}  // namespace rlplace
