#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rlplace/graph_metrics.hpp"
#include "rlplace/matrix.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

constexpr int kGateVocabSize = 8;  // gate_vocabulary() entries + "other"
constexpr int kNodeFeatureDim = kGateVocabSize + 4;  // + area, degree, fanout, is_macro
constexpr int kEmbedDim = 32;

inline int gate_type_index(const std::string& gate) {
    const auto& vocab = gate_vocabulary();
    for (size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == gate) return static_cast<int>(i);
    return kGateVocabSize - 1;  // "other"
}

// Per-node feature rows: gate one-hot, then z-scored area/degree/fanout,
// then an is_macro flag. Fanout counts sinks over the nets a node drives.
inline Mat node_features(const Netlist& nl, const Graph& g) {
    const int n = static_cast<int>(nl.nodes.size());
    Mat x(n, kNodeFeatureDim);
    std::vector<double> fanout(n, 0.0);
    for (const auto& net : nl.nets) {
        std::set<int> members;
        for (const auto& p : net.pins) members.insert(p.node);
        const int driver = net.pins.front().node;
        fanout[driver] += static_cast<double>(members.size() - (members.count(driver) ? 1 : 0));
    }
    for (int v = 0; v < n; ++v) {
        const Node& node = nl.nodes[v];
        x(v, gate_type_index(node.gate_type)) = 1.0;
        x(v, kGateVocabSize + 0) = node.area_um2();
        x(v, kGateVocabSize + 1) = static_cast<double>(g.degree(v));
        x(v, kGateVocabSize + 2) = fanout[v];
        x(v, kGateVocabSize + 3) = node.kind == NodeKind::Macro ? 1.0 : 0.0;
    }
    // z-score the three scale-carrying columns per netlist
    for (int c = kGateVocabSize; c < kGateVocabSize + 3; ++c) {
        double mean = 0.0;
        for (int v = 0; v < n; ++v) mean += x(v, c);
        mean /= std::max(1, n);
        double var = 0.0;
        for (int v = 0; v < n; ++v) var += (x(v, c) - mean) * (x(v, c) - mean);
        const double sd = std::sqrt(var / std::max(1, n));
        for (int v = 0; v < n; ++v) x(v, c) = sd > 1e-12 ? (x(v, c) - mean) / sd : 0.0;
    }
    return x;
}

// Two GraphSAGE layers with mean aggregation. Weights are stored (out x in).
struct EmbedParams {
    std::vector<Mat> w_self;  // per layer
    std::vector<Mat> w_nbr;
    double dropout_rate = 0.1;

    int in_dim() const { return w_self.front().cols; }
    int out_dim() const { return w_self.back().rows; }
};

inline EmbedParams init_embed_params(uint64_t seed, int in = kNodeFeatureDim,
                                     int hidden = kEmbedDim, int out = kEmbedDim,
                                     double dropout_rate = 0.1) {
    if (in <= 0 || hidden <= 0 || out <= 0)
        throw std::invalid_argument("init_embed_params: dimensions must be positive");
    Rng rng(seed);
    EmbedParams p;
    p.dropout_rate = dropout_rate;
    p.w_self.push_back(Mat::glorot_uniform(hidden, in, rng));
    p.w_nbr.push_back(Mat::glorot_uniform(hidden, in, rng));
    p.w_self.push_back(Mat::glorot_uniform(out, hidden, rng));
    p.w_nbr.push_back(Mat::glorot_uniform(out, hidden, rng));
    return p;
}

struct NodeEmbedding {
    Mat node;   // n x out_dim
    Vec graph;  // columnwise mean

    Vec row(int v) const {
        return Vec(node.data.begin() + static_cast<size_t>(v) * node.cols,
                   node.data.begin() + static_cast<size_t>(v + 1) * node.cols);
    }
};

namespace detail {

// Weighted neighbor mean; zero rows for isolated nodes.
inline Mat aggregate(const Graph& g, const Mat& h) {
    Mat m(h.rows, h.cols);
    for (int v = 0; v < g.n; ++v) {
        double total = 0.0;
        for (const auto& [u, w] : g.adj[v]) {
            total += w;
            for (int c = 0; c < h.cols; ++c) m(v, c) += w * h(u, c);
        }
        if (total > 0.0)
            for (int c = 0; c < h.cols; ++c) m(v, c) /= total;
    }
    return m;
}

// Transpose of aggregate: scatters per-node gradients back to neighbors.
inline Mat aggregate_t(const Graph& g, const Mat& grad) {
    Mat out(grad.rows, grad.cols);
    for (int v = 0; v < g.n; ++v) {
        double total = 0.0;
        for (const auto& [u, w] : g.adj[v]) total += w;
        if (total <= 0.0) continue;
        for (const auto& [u, w] : g.adj[v]) {
            const double f = w / total;
            for (int c = 0; c < grad.cols; ++c) out(u, c) += f * grad(v, c);
        }
    }
    return out;
}

inline Mat layer_affine(const Mat& w_self, const Mat& w_nbr, const Mat& h, const Mat& m) {
    Mat z(h.rows, w_self.rows);
    for (int v = 0; v < h.rows; ++v) {
        for (int r = 0; r < w_self.rows; ++r) {
            double acc = 0.0;
            const double* ws = &w_self.data[static_cast<size_t>(r) * w_self.cols];
            const double* wn = &w_nbr.data[static_cast<size_t>(r) * w_nbr.cols];
            const double* hv = &h.data[static_cast<size_t>(v) * h.cols];
            const double* mv = &m.data[static_cast<size_t>(v) * m.cols];
            for (int c = 0; c < h.cols; ++c) acc += ws[c] * hv[c] + wn[c] * mv[c];
            z(v, r) = acc;
        }
    }
    return z;
}

}  // namespace detail

inline NodeEmbedding forward_embed(const EmbedParams& p, const Graph& g, const Mat& x,
                                   bool train_mode = false, uint64_t seed = 0) {
    if (x.rows != g.n || x.cols != p.in_dim())
        throw std::invalid_argument("forward_embed: feature table shape mismatch");
    Rng rng(seed);

    Mat m0 = detail::aggregate(g, x);
    Mat h1 = detail::layer_affine(p.w_self[0], p.w_nbr[0], x, m0);
    for (auto& v : h1.data) v = v > 0.0 ? v : 0.0;
    if (train_mode && p.dropout_rate > 0.0) {
        const double keep = 1.0 - p.dropout_rate;
        for (auto& v : h1.data) v = rng.uniform01() < keep ? v / keep : 0.0;
    }
    Mat m1 = detail::aggregate(g, h1);
    Mat e = detail::layer_affine(p.w_self[1], p.w_nbr[1], h1, m1);

    if (!all_finite(e)) throw std::runtime_error("forward_embed produced non-finite values");
    NodeEmbedding out;
    out.graph.assign(e.cols, 0.0);
    for (int v = 0; v < e.rows; ++v)
        for (int c = 0; c < e.cols; ++c) out.graph[c] += e(v, c);
    if (e.rows > 0)
        for (auto& v : out.graph) v /= e.rows;
    out.node = std::move(e);
    return out;
}

struct EmbedGrads {
    std::vector<Mat> w_self;
    std::vector<Mat> w_nbr;
};

// Exact reverse-mode gradients of forward_embed's train_mode=false path.
inline EmbedGrads embed_gradients(const EmbedParams& p, const Graph& g, const Mat& x,
                                  const Mat& upstream) {
    if (upstream.rows != g.n || upstream.cols != p.out_dim())
        throw std::invalid_argument("embed_gradients: upstream shape mismatch");

    Mat m0 = detail::aggregate(g, x);
    Mat z1 = detail::layer_affine(p.w_self[0], p.w_nbr[0], x, m0);
    Mat h1 = z1;
    for (auto& v : h1.data) v = v > 0.0 ? v : 0.0;
    Mat m1 = detail::aggregate(g, h1);

    EmbedGrads gr;
    gr.w_self = {Mat(p.w_self[0].rows, p.w_self[0].cols), Mat(p.w_self[1].rows, p.w_self[1].cols)};
    gr.w_nbr = {Mat(p.w_nbr[0].rows, p.w_nbr[0].cols), Mat(p.w_nbr[1].rows, p.w_nbr[1].cols)};

    // layer 1
    for (int v = 0; v < g.n; ++v)
        for (int r = 0; r < p.w_self[1].rows; ++r) {
            const double u = upstream(v, r);
            if (u == 0.0) continue;
            for (int c = 0; c < p.w_self[1].cols; ++c) {
                gr.w_self[1](r, c) += u * h1(v, c);
                gr.w_nbr[1](r, c) += u * m1(v, c);
            }
        }
    Mat dh1(g.n, p.w_self[1].cols);
    Mat dm1(g.n, p.w_nbr[1].cols);
    for (int v = 0; v < g.n; ++v)
        for (int r = 0; r < p.w_self[1].rows; ++r) {
            const double u = upstream(v, r);
            if (u == 0.0) continue;
            for (int c = 0; c < p.w_self[1].cols; ++c) {
                dh1(v, c) += u * p.w_self[1](r, c);
                dm1(v, c) += u * p.w_nbr[1](r, c);
            }
        }
    Mat scattered = detail::aggregate_t(g, dm1);
    for (size_t i = 0; i < dh1.data.size(); ++i) dh1.data[i] += scattered.data[i];
    // ReLU gate
    for (size_t i = 0; i < dh1.data.size(); ++i)
        if (z1.data[i] <= 0.0) dh1.data[i] = 0.0;

    // layer 0
    for (int v = 0; v < g.n; ++v)
        for (int r = 0; r < p.w_self[0].rows; ++r) {
            const double u = dh1(v, r);
            if (u == 0.0) continue;
            for (int c = 0; c < p.w_self[0].cols; ++c) {
                gr.w_self[0](r, c) += u * x(v, c);
                gr.w_nbr[0](r, c) += u * m0(v, c);
            }
        }
    return gr;
}

}  // namespace rlplace
