#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlplace/rng.hpp"

namespace rlplace {

enum class NodeKind { Macro, StdCell, Port };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Macro: return "macro";
        case NodeKind::StdCell: return "stdcell";
        case NodeKind::Port: return "port";
    }
    return "?";
}

inline NodeKind node_kind_from(const std::string& s) {
    if (s == "macro") return NodeKind::Macro;
    if (s == "stdcell") return NodeKind::StdCell;
    if (s == "port") return NodeKind::Port;
    throw std::invalid_argument("unknown node kind '" + s + "'");
}

struct Node {
    int id = -1;
    NodeKind kind = NodeKind::StdCell;
    std::string gate_type;
    bool is_flipflop = false;
    double width_um = 0.0;
    double height_um = 0.0;

    double area_um2() const { return width_um * height_um; }
};

struct Pin {
    int node = -1;
    double dx_um = 0.0;
    double dy_um = 0.0;
};

// First pin is the driver; the rest are sinks.
struct Net {
    int id = -1;
    std::vector<Pin> pins;
};

struct NetlistMetadata {
    int num_cells = 0;  // macros + stdcells
    int num_nets = 0;
    double total_macro_area_um2 = 0.0;
};

struct Netlist {
    std::string name;
    std::vector<Node> nodes;
    std::vector<Net> nets;
    NetlistMetadata metadata;

    NetlistMetadata compute_metadata() const {
        NetlistMetadata m;
        m.num_nets = static_cast<int>(nets.size());
        for (const auto& n : nodes) {
            if (n.kind != NodeKind::Port) ++m.num_cells;
            if (n.kind == NodeKind::Macro) m.total_macro_area_um2 += n.area_um2();
        }
        return m;
    }

    int macro_count() const {
        int c = 0;
        for (const auto& n : nodes)
            if (n.kind == NodeKind::Macro) ++c;
        return c;
    }

    void validate() const;
};

namespace detail {

constexpr int kMaxPinMultiplicity = 64;

inline void check_keys(const nlohmann::ordered_json& obj,
                       const std::vector<std::string>& required,
                       const std::vector<std::string>& optional,
                       const char* what) {
    for (const auto& k : required)
        if (!obj.contains(k))
            throw std::invalid_argument(std::string(what) + ": missing field '" + k + "'");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& k = it.key();
        if (std::find(required.begin(), required.end(), k) == required.end() &&
            std::find(optional.begin(), optional.end(), k) == optional.end())
            throw std::invalid_argument(std::string(what) + ": unknown field '" + k + "'");
    }
}

}  // namespace detail

inline void Netlist::validate() const {
    std::set<int> ids;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second)
            throw std::invalid_argument("duplicate node id " + std::to_string(n.id));
        if (n.kind == NodeKind::Port) {
            if (n.width_um != 0.0 || n.height_um != 0.0)
                throw std::invalid_argument("port " + std::to_string(n.id) + " must have zero area");
            if (n.is_flipflop)
                throw std::invalid_argument("port " + std::to_string(n.id) + " cannot be a flip-flop");
        } else if (n.width_um <= 0.0 || n.height_um <= 0.0) {
            throw std::invalid_argument("node " + std::to_string(n.id) +
                                        " has nonpositive dimensions");
        }
    }
    // dense 0..n-1
    if (!ids.empty() && (*ids.begin() != 0 || *ids.rbegin() != static_cast<int>(ids.size()) - 1))
        throw std::invalid_argument("node ids must be dense 0..n-1");

    std::set<int> net_ids;
    for (const auto& net : nets) {
        if (!net_ids.insert(net.id).second)
            throw std::invalid_argument("duplicate net id " + std::to_string(net.id));
        if (net.pins.empty())
            throw std::invalid_argument("net " + std::to_string(net.id) + " has no pins");
        std::map<int, int> mult;
        for (const auto& p : net.pins) {
            if (!ids.count(p.node))
                throw std::invalid_argument("net " + std::to_string(net.id) +
                                            " references unknown node id " + std::to_string(p.node));
            if (++mult[p.node] > detail::kMaxPinMultiplicity)
                throw std::invalid_argument("net " + std::to_string(net.id) +
                                            " references node " + std::to_string(p.node) +
                                            " more than " +
                                            std::to_string(detail::kMaxPinMultiplicity) + " times");
        }
    }
    if (!net_ids.empty() &&
        (*net_ids.begin() != 0 || *net_ids.rbegin() != static_cast<int>(net_ids.size()) - 1))
        throw std::invalid_argument("net ids must be dense 0..m-1");

    const auto m = compute_metadata();
    if (m.num_cells != metadata.num_cells || m.num_nets != metadata.num_nets)
        throw std::invalid_argument("metadata mismatch: recomputed cells/nets disagree");
    const double scale = std::max(1.0, std::abs(m.total_macro_area_um2));
    if (std::abs(m.total_macro_area_um2 - metadata.total_macro_area_um2) > 1e-9 * scale)
        throw std::invalid_argument("metadata mismatch: total_macro_area_um2 disagrees");
}

// ---------------------------------------------------------------------------
// Interchange document (canonical JSON: ids ascending, two-space indent,
// fixed field order).

inline Netlist parse_netlist(const std::string& text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("netlist syntax error: ") + e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("netlist document must be an object");
    detail::check_keys(doc, {"name", "nodes", "nets"}, {"metadata"}, "netlist");

    Netlist nl;
    nl.name = doc.at("name").get<std::string>();
    for (const auto& jn : doc.at("nodes")) {
        detail::check_keys(jn, {"id", "kind", "gate_type", "is_flipflop", "width_um", "height_um"},
                           {}, "node");
        Node n;
        n.id = jn.at("id").get<int>();
        n.kind = node_kind_from(jn.at("kind").get<std::string>());
        n.gate_type = jn.at("gate_type").get<std::string>();
        n.is_flipflop = jn.at("is_flipflop").get<bool>();
        n.width_um = jn.at("width_um").get<double>();
        n.height_um = jn.at("height_um").get<double>();
        nl.nodes.push_back(std::move(n));
    }
    for (const auto& je : doc.at("nets")) {
        detail::check_keys(je, {"id", "pins"}, {}, "net");
        Net net;
        net.id = je.at("id").get<int>();
        for (const auto& jp : je.at("pins")) {
            detail::check_keys(jp, {"node", "dx_um", "dy_um"}, {}, "pin");
            net.pins.push_back(
                {jp.at("node").get<int>(), jp.at("dx_um").get<double>(), jp.at("dy_um").get<double>()});
        }
        nl.nets.push_back(std::move(net));
    }
    std::sort(nl.nodes.begin(), nl.nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
    std::sort(nl.nets.begin(), nl.nets.end(), [](const Net& a, const Net& b) { return a.id < b.id; });

    if (doc.contains("metadata")) {
        const auto& jm = doc.at("metadata");
        detail::check_keys(jm, {"num_cells", "num_nets", "total_macro_area_um2"}, {}, "metadata");
        nl.metadata.num_cells = jm.at("num_cells").get<int>();
        nl.metadata.num_nets = jm.at("num_nets").get<int>();
        nl.metadata.total_macro_area_um2 = jm.at("total_macro_area_um2").get<double>();
    } else {
        nl.metadata = nl.compute_metadata();
    }
    nl.validate();
    return nl;
}

inline std::string write_netlist(const Netlist& input) {
    Netlist nl = input;
    std::sort(nl.nodes.begin(), nl.nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
    std::sort(nl.nets.begin(), nl.nets.end(), [](const Net& a, const Net& b) { return a.id < b.id; });
    nl.metadata = nl.compute_metadata();

    nlohmann::ordered_json doc;
    doc["name"] = nl.name;
    doc["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : nl.nodes) {
        nlohmann::ordered_json jn;
        jn["id"] = n.id;
        jn["kind"] = to_string(n.kind);
        jn["gate_type"] = n.gate_type;
        jn["is_flipflop"] = n.is_flipflop;
        jn["width_um"] = n.width_um;
        jn["height_um"] = n.height_um;
        doc["nodes"].push_back(std::move(jn));
    }
    doc["nets"] = nlohmann::ordered_json::array();
    for (const auto& net : nl.nets) {
        nlohmann::ordered_json je;
        je["id"] = net.id;
        je["pins"] = nlohmann::ordered_json::array();
        for (const auto& p : net.pins) {
            nlohmann::ordered_json jp;
            jp["node"] = p.node;
            jp["dx_um"] = p.dx_um;
            jp["dy_um"] = p.dy_um;
            je["pins"].push_back(std::move(jp));
        }
        doc["nets"].push_back(std::move(je));
    }
    nlohmann::ordered_json jm;
    jm["num_cells"] = nl.metadata.num_cells;
    jm["num_nets"] = nl.metadata.num_nets;
    jm["total_macro_area_um2"] = nl.metadata.total_macro_area_um2;
    doc["metadata"] = std::move(jm);
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Seeded synthetic instances (stand-in for real benchmark extraction).

struct SizeRanges {
    double macro_min_um = 8.0;
    double macro_max_um = 18.0;
    double cell_min_um = 1.0;
    double cell_max_um = 2.5;
};

// Gate vocabulary used for generation and feature encoding; anything else
// falls in the "other" one-hot bucket.
inline const std::vector<std::string>& gate_vocabulary() {
    static const std::vector<std::string> v = {"AND", "OR", "NAND", "NOR", "XOR", "INV", "FF"};
    return v;
}

inline Netlist generate_synthetic(uint64_t seed, int n_macros, int n_stdcells, int n_nets,
                                  double ff_fraction, const SizeRanges& sizes = {}) {
    if (n_macros < 0 || n_stdcells < 0 || n_nets < 0)
        throw std::invalid_argument("generate_synthetic: counts must be nonnegative");
    if (ff_fraction < 0.0 || ff_fraction > 1.0)
        throw std::invalid_argument("generate_synthetic: ff_fraction must be in [0,1]");
    const int n_nodes = n_macros + n_stdcells;
    if (n_nets > 0 && n_nodes == 0)
        throw std::invalid_argument("generate_synthetic: nets require at least one node");

    Rng rng(seed);
    Netlist nl;
    nl.name = "synthetic-s" + std::to_string(seed) + "-m" + std::to_string(n_macros) + "-c" +
              std::to_string(n_stdcells) + "-n" + std::to_string(n_nets);

    const int n_ff = static_cast<int>(std::floor(ff_fraction * n_nodes));
    const auto& vocab = gate_vocabulary();
    for (int i = 0; i < n_nodes; ++i) {
        Node n;
        n.id = i;
        n.is_flipflop = i < n_ff;  // lowest ids become flip-flops
        if (i < n_macros) {
            n.kind = NodeKind::Macro;
            n.gate_type = "MACRO";
            n.width_um = rng.uniform(sizes.macro_min_um, sizes.macro_max_um);
            n.height_um = rng.uniform(sizes.macro_min_um, sizes.macro_max_um);
        } else {
            n.kind = NodeKind::StdCell;
            n.gate_type = n.is_flipflop ? "FF" : vocab[rng.uniform_u64(vocab.size() - 1)];
            n.width_um = rng.uniform(sizes.cell_min_um, sizes.cell_max_um);
            n.height_um = rng.uniform(sizes.cell_min_um, sizes.cell_max_um);
        }
        nl.nodes.push_back(std::move(n));
    }

    // Connectivity: pull uncovered nodes first so every node touches a net
    // whenever n_nets >= n_nodes/4.
    std::vector<int> uncovered(n_nodes);
    std::iota(uncovered.begin(), uncovered.end(), 0);
    rng.shuffle(uncovered);
    size_t next_uncovered = 0;

    for (int i = 0; i < n_nets; ++i) {
        const int remaining_nets = n_nets - i;
        const int u = static_cast<int>(uncovered.size() - next_uncovered);
        const int needed = u > 0 ? (u + remaining_nets - 1) / remaining_nets : 0;
        int s = std::max(2 + static_cast<int>(rng.uniform_u64(5)), needed);
        s = std::min(s, n_nodes);

        Net net;
        net.id = i;
        std::set<int> used;
        while (static_cast<int>(net.pins.size()) < s && next_uncovered < uncovered.size()) {
            const int v = uncovered[next_uncovered++];
            used.insert(v);
            net.pins.push_back({v, 0.0, 0.0});
        }
        int attempts = 0;
        while (static_cast<int>(net.pins.size()) < s && attempts < 64 * s) {
            const int v = static_cast<int>(rng.uniform_u64(n_nodes));
            ++attempts;
            if (used.insert(v).second) net.pins.push_back({v, 0.0, 0.0});
        }
        for (auto& p : net.pins) {
            const Node& n = nl.nodes[p.node];
            p.dx_um = rng.uniform(0.0, n.width_um);
            p.dy_um = rng.uniform(0.0, n.height_um);
        }
        nl.nets.push_back(std::move(net));
    }

    nl.metadata = nl.compute_metadata();
    nl.validate();
    return nl;
}

// ---------------------------------------------------------------------------
// Standard-cell clustering: pin offsets dropped, one movable node per cluster.

struct ClusteredNetlist {
    Netlist original;
    std::vector<std::vector<int>> clusters;  // partition of StdCell ids
    std::vector<Node> cluster_nodes;         // ids continue after original node ids
    std::vector<Net> rewired_nets;

    // Dense-id netlist over {original non-stdcell nodes} + {cluster nodes};
    // this is what the environment and embeddings operate on.
    Netlist to_netlist() const {
        Netlist out;
        out.name = original.name + "/clustered";
        std::vector<int> compact_of(original.nodes.size() + cluster_nodes.size(), -1);
        for (const auto& n : original.nodes) {
            if (n.kind == NodeKind::StdCell) continue;
            Node c = n;
            c.id = static_cast<int>(out.nodes.size());
            compact_of[n.id] = c.id;
            out.nodes.push_back(std::move(c));
        }
        for (const auto& n : cluster_nodes) {
            Node c = n;
            c.id = static_cast<int>(out.nodes.size());
            compact_of[n.id] = c.id;
            out.nodes.push_back(std::move(c));
        }
        for (const auto& net : rewired_nets) {
            Net e = net;
            for (auto& p : e.pins) p.node = compact_of[p.node];
            out.nets.push_back(std::move(e));
        }
        out.metadata = out.compute_metadata();
        return out;
    }
};

namespace detail {

// Size-constrained asynchronous label propagation over the stdcell graph.
// The cap keeps the partition from collapsing below the target count.
inline std::vector<std::vector<int>> label_propagation(
    int n, const std::vector<std::map<int, int>>& adj, int cap, int rounds) {
    std::vector<int> label(n);
    std::iota(label.begin(), label.end(), 0);
    std::vector<int> size(n, 1);
    for (int r = 0; r < rounds; ++r) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            std::map<int, int> weight;  // label -> total edge weight
            for (const auto& [j, w] : adj[i]) weight[label[j]] += w;
            int best = label[i];
            int best_w = 0;
            for (const auto& [lab, w] : weight) {
                if (w > best_w || (w == best_w && w > 0 && lab < best)) {
                    if (lab != label[i] && size[lab] + 1 > cap) continue;
                    best = lab;
                    best_w = w;
                }
            }
            if (best != label[i]) {
                --size[label[i]];
                ++size[best];
                label[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[label[i]].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [lab, members] : groups) out.push_back(std::move(members));
    return out;
}

}  // namespace detail

inline ClusteredNetlist cluster_stdcells(const Netlist& nl, int target_clusters) {
    if (target_clusters < 1) throw std::invalid_argument("target_clusters must be positive");
    ClusteredNetlist out;
    out.original = nl;

    std::vector<int> stdcells;
    for (const auto& n : nl.nodes)
        if (n.kind == NodeKind::StdCell) stdcells.push_back(n.id);
    if (stdcells.empty()) {
        out.rewired_nets = nl.nets;
        return out;
    }
    const int n_sc = static_cast<int>(stdcells.size());
    const int target = std::min(target_clusters, n_sc);

    std::vector<int> sc_index(nl.nodes.size(), -1);
    for (int i = 0; i < n_sc; ++i) sc_index[stdcells[i]] = i;

    // StdCell-induced connectivity (clique expansion, co-occurrence weights).
    std::vector<std::map<int, int>> adj(n_sc);
    for (const auto& net : nl.nets) {
        std::set<int> members;
        for (const auto& p : net.pins)
            if (sc_index[p.node] >= 0) members.insert(sc_index[p.node]);
        for (auto it = members.begin(); it != members.end(); ++it)
            for (auto jt = std::next(it); jt != members.end(); ++jt) {
                ++adj[*it][*jt];
                ++adj[*jt][*it];
            }
    }

    const int cap = (n_sc + target - 1) / target;
    auto groups = detail::label_propagation(n_sc, adj, cap, 10);

    // Greedy merge down to the target count: fold the smallest group into its
    // most strongly connected partner.
    auto group_key = [&](const std::vector<int>& g) { return g.front(); };
    auto sort_groups = [&] {
        for (auto& g : groups) std::sort(g.begin(), g.end());
        std::sort(groups.begin(), groups.end(),
                  [&](const auto& a, const auto& b) { return group_key(a) < group_key(b); });
    };
    sort_groups();

    while (static_cast<int>(groups.size()) > target) {
        size_t smallest = 0;
        for (size_t i = 1; i < groups.size(); ++i)
            if (groups[i].size() < groups[smallest].size()) smallest = i;
        std::vector<int> in_group(n_sc, -1);
        for (size_t gi = 0; gi < groups.size(); ++gi)
            for (int m : groups[gi]) in_group[m] = static_cast<int>(gi);
        std::map<int, long> link;  // group -> weight to `smallest`
        for (int m : groups[smallest])
            for (const auto& [j, w] : adj[m])
                if (in_group[j] != static_cast<int>(smallest)) link[in_group[j]] += w;
        size_t partner = groups.size();
        long best_w = 0;
        for (const auto& [gi, w] : link)
            if (w > best_w) {
                best_w = w;
                partner = static_cast<size_t>(gi);
            }
        if (partner >= groups.size()) {  // isolated group: merge with next smallest
            partner = smallest == 0 ? 1 : 0;
            for (size_t i = 0; i < groups.size(); ++i)
                if (i != smallest && i != partner && groups[i].size() < groups[partner].size())
                    partner = i;
        }
        auto& dst = groups[partner];
        dst.insert(dst.end(), groups[smallest].begin(), groups[smallest].end());
        groups.erase(groups.begin() + static_cast<long>(smallest));
        sort_groups();
    }
    // Degenerate small inputs can leave the cap-limited propagation short of
    // the target; peel singletons off the largest group until counts match.
    while (static_cast<int>(groups.size()) < target) {
        size_t largest = 0;
        for (size_t i = 1; i < groups.size(); ++i)
            if (groups[i].size() > groups[largest].size()) largest = i;
        groups.push_back({groups[largest].back()});
        groups[largest].pop_back();
        sort_groups();
    }

    // Materialize cluster nodes and rewired nets.
    for (auto& g : groups) std::sort(g.begin(), g.end());
    const int base_id = static_cast<int>(nl.nodes.size());
    std::vector<int> cluster_of(nl.nodes.size(), -1);
    double member_area = 0.0, cluster_area = 0.0;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        std::vector<int> members;
        double area = 0.0;
        bool any_ff = false;
        for (int m : groups[gi]) {
            const int orig = stdcells[m];
            members.push_back(orig);
            cluster_of[orig] = static_cast<int>(gi);
            area += nl.nodes[orig].area_um2();
            any_ff = any_ff || nl.nodes[orig].is_flipflop;
        }
        Node c;
        c.id = base_id + static_cast<int>(gi);
        c.kind = NodeKind::StdCell;
        c.gate_type = "CLUSTER";
        c.is_flipflop = any_ff;
        c.width_um = std::sqrt(area);
        c.height_um = std::sqrt(area);
        out.clusters.push_back(std::move(members));
        out.cluster_nodes.push_back(std::move(c));
        member_area += area;
        cluster_area += out.cluster_nodes.back().area_um2();
    }
    if (std::abs(member_area - cluster_area) > 1e-9 * std::max(1.0, member_area))
        throw std::runtime_error("cluster_stdcells: area not conserved");

    for (const auto& net : nl.nets) {
        Net e = net;
        for (auto& p : e.pins) {
            if (cluster_of[p.node] >= 0) {
                p.node = base_id + cluster_of[p.node];
                p.dx_um = 0.0;
                p.dy_um = 0.0;
            }
        }
        out.rewired_nets.push_back(std::move(e));
    }
    return out;
}

// Convenience: a netlist with no stdcells still flows through the same paths.
inline ClusteredNetlist as_clustered(const Netlist& nl, int target_clusters) {
    return cluster_stdcells(nl, std::max(1, target_clusters));
}

}  // namespace rlplace
