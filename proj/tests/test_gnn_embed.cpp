#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "oracles.hpp"
#include "rlplace/gnn_embed.hpp"

using namespace rlplace;

namespace {

Graph two_node_graph(int weight = 1) {
    Graph g;
    g.n = 2;
    g.adj = {{{1, weight}}, {{0, weight}}};
    g.dag_out.resize(2);
    g.is_ff.assign(2, false);
    return g;
}

// d(sum(upstream . E))/d(param) by central differences
double fd_grad(EmbedParams p, const Graph& g, const Mat& x, const Mat& upstream, Mat EmbedParams::*family,
               bool nbr, int layer, int r, int c) {
    auto eval = [&](double delta) {
        EmbedParams q = p;
        Mat& w = nbr ? q.w_nbr[static_cast<size_t>(layer)] : q.w_self[static_cast<size_t>(layer)];
        w(r, c) += delta;
        const NodeEmbedding e = forward_embed(q, g, x);
        double acc = 0.0;
        for (size_t i = 0; i < e.node.data.size(); ++i) acc += upstream.data[i] * e.node.data[i];
        return acc;
    };
    const double h = 1e-6;
    return (eval(h) - eval(-h)) / (2.0 * h);
}

void check_gradients(const EmbedParams& p, const Graph& g, const Mat& x, const Mat& upstream) {
    const EmbedGrads grads = embed_gradients(p, g, x, upstream);
    for (int layer = 0; layer < 2; ++layer)
        for (bool nbr : {false, true}) {
            const Mat& analytic = nbr ? grads.w_nbr[static_cast<size_t>(layer)]
                                      : grads.w_self[static_cast<size_t>(layer)];
            for (int r = 0; r < analytic.rows; ++r)
                for (int c = 0; c < analytic.cols; ++c) {
                    const double fd = fd_grad(p, g, x, upstream, nullptr, nbr, layer, r, c);
                    const double a = analytic(r, c);
                    REQUIRE(std::abs(a - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
                }
        }
}

}  // namespace

TEST_CASE("init is deterministic and seed sensitive") {
    const EmbedParams a = init_embed_params(5);
    const EmbedParams b = init_embed_params(5);
    const EmbedParams c = init_embed_params(6);
    REQUIRE(a.w_self[0].data == b.w_self[0].data);
    REQUIRE(a.w_nbr[1].data == b.w_nbr[1].data);
    REQUIRE(a.w_self[0].data != c.w_self[0].data);
}

TEST_CASE("init shapes chain 13 -> 32 -> 32") {
    const EmbedParams p = init_embed_params(0, 13, 32, 32);
    REQUIRE(p.w_self[0].rows == 32);
    REQUIRE(p.w_self[0].cols == 13);
    REQUIRE(p.w_nbr[0].rows == 32);
    REQUIRE(p.w_nbr[0].cols == 13);
    REQUIRE(p.w_self[1].rows == 32);
    REQUIRE(p.w_self[1].cols == 32);
    REQUIRE(p.w_nbr[1].rows == 32);
    REQUIRE(p.w_nbr[1].cols == 32);
    const double bound = std::sqrt(6.0 / (13 + 32));
    for (double v : p.w_self[0].data) REQUIRE(std::abs(v) <= bound);
}

TEST_CASE("zero parameters give zero embeddings") {
    EmbedParams p = init_embed_params(1, 4, 8, 8);
    for (auto& w : p.w_self) w.zero();
    for (auto& w : p.w_nbr) w.zero();
    const Graph g = two_node_graph();
    Mat x(2, 4);
    x(0, 0) = 1.0;
    x(1, 1) = -2.0;
    const NodeEmbedding e = forward_embed(p, g, x);
    for (double v : e.node.data) REQUIRE(v == 0.0);
    for (double v : e.graph) REQUIRE(v == 0.0);
}

TEST_CASE("hand-computed forward on a two-node graph") {
    EmbedParams p;
    p.w_self = {Mat(1, 1), Mat(1, 1)};
    p.w_nbr = {Mat(1, 1), Mat(1, 1)};
    p.w_self[0](0, 0) = 0.5;
    p.w_nbr[0](0, 0) = 0.25;
    p.w_self[1](0, 0) = 2.0;
    p.w_nbr[1](0, 0) = -1.0;
    Mat x(2, 1);
    x(0, 0) = 1.0;
    x(1, 0) = 2.0;
    const NodeEmbedding e = forward_embed(p, two_node_graph(), x);
    // z1 = [0.5*1 + 0.25*2, 0.5*2 + 0.25*1] = [1.0, 1.25]; relu keeps both
    // e  = [2*1.0 - 1*1.25, 2*1.25 - 1*1.0] = [0.75, 1.5]
    REQUIRE(e.node(0, 0) == Catch::Approx(0.75));
    REQUIRE(e.node(1, 0) == Catch::Approx(1.5));
    REQUIRE(e.graph[0] == Catch::Approx(1.125));
}

TEST_CASE("node embeddings are permutation equivariant") {
    const Netlist nl = oracles::random_gnp_netlist(7, 0.5, 3);
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    const EmbedParams p = init_embed_params(11);
    const NodeEmbedding e = forward_embed(p, g, x);

    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(17);
    rng.shuffle(perm);
    Netlist pnl = nl;
    for (auto& n : pnl.nodes) n.id = perm[static_cast<size_t>(n.id)];
    for (auto& net : pnl.nets)
        for (auto& pin : net.pins) pin.node = perm[static_cast<size_t>(pin.node)];
    std::sort(pnl.nodes.begin(), pnl.nodes.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
    const Graph pg = build_graph(pnl);
    const NodeEmbedding pe = forward_embed(p, pg, node_features(pnl, pg));

    for (int v = 0; v < 7; ++v)
        for (int c = 0; c < e.node.cols; ++c)
            REQUIRE(pe.node(perm[static_cast<size_t>(v)], c) == Catch::Approx(e.node(v, c)).margin(1e-12));
    for (int c = 0; c < e.node.cols; ++c)
        REQUIRE(pe.graph[static_cast<size_t>(c)] == Catch::Approx(e.graph[static_cast<size_t>(c)]).margin(1e-12));
}

TEST_CASE("dropout only acts in train mode and is seed driven") {
    const Netlist nl = oracles::random_gnp_netlist(6, 0.5, 4);
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    EmbedParams p = init_embed_params(2);
    p.dropout_rate = 0.5;
    const NodeEmbedding eval1 = forward_embed(p, g, x, false, 1);
    const NodeEmbedding eval2 = forward_embed(p, g, x, false, 2);
    REQUIRE(eval1.node.data == eval2.node.data);  // eval path ignores the seed
    const NodeEmbedding tr1 = forward_embed(p, g, x, true, 1);
    const NodeEmbedding tr1b = forward_embed(p, g, x, true, 1);
    REQUIRE(tr1.node.data == tr1b.node.data);
    const NodeEmbedding tr2 = forward_embed(p, g, x, true, 2);
    REQUIRE(tr1.node.data != tr2.node.data);
}

TEST_CASE("zero upstream gives zero gradients") {
    const Netlist nl = oracles::random_gnp_netlist(5, 0.6, 8);
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    const EmbedParams p = init_embed_params(3);
    const EmbedGrads grads = embed_gradients(p, g, x, Mat(g.n, p.out_dim()));
    for (int l = 0; l < 2; ++l) {
        for (double v : grads.w_self[l].data) REQUIRE(v == 0.0);
        for (double v : grads.w_nbr[l].data) REQUIRE(v == 0.0);
    }
}

TEST_CASE("gradients match central finite differences") {
    const Netlist nl = oracles::random_gnp_netlist(5, 0.5, 21);
    const Graph g = build_graph(nl);
    Mat x = node_features(nl, g);
    const EmbedParams p = init_embed_params(7, x.cols, 6, 5);
    Rng rng(31);
    Mat upstream(g.n, 5);
    for (auto& v : upstream.data) v = rng.uniform(-1.0, 1.0);
    check_gradients(p, g, x, upstream);
}

TEST_CASE("duplicate edges contribute to both sides of the gradient") {
    Graph g = two_node_graph(2);  // same pair shares two nets
    g.n = 3;
    g.adj.push_back({{0, 1}});
    g.adj[0].push_back({2, 1});
    g.dag_out.resize(3);
    g.is_ff.assign(3, false);
    Mat x(3, 2);
    x(0, 0) = 0.7;
    x(1, 1) = -0.3;
    x(2, 0) = 0.2;
    x(2, 1) = 0.9;
    const EmbedParams p = init_embed_params(13, 2, 4, 3);
    Rng rng(5);
    Mat upstream(3, 3);
    for (auto& v : upstream.data) v = rng.uniform(-1.0, 1.0);
    check_gradients(p, g, x, upstream);

    // the doubled edge changes the aggregate relative to a unit edge
    Graph g1 = g;
    g1.adj[0][0].second = 1;
    g1.adj[1][0].second = 1;
    const NodeEmbedding e2 = forward_embed(p, g, x);
    const NodeEmbedding e1 = forward_embed(p, g1, x);
    REQUIRE(e2.node.data != e1.node.data);
}

TEST_CASE("outputs stay finite") {
    const Netlist nl = generate_synthetic(33, 6, 40, 35, 0.2);
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    for (int c = 0; c < x.cols; ++c)
        for (int v = 0; v < x.rows; ++v) REQUIRE(std::isfinite(x(v, c)));
    const NodeEmbedding e = forward_embed(init_embed_params(9), g, x);
    for (double v : e.node.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("graph embedding is the column mean") {
    const Netlist nl = oracles::random_gnp_netlist(6, 0.4, 2);
    const Graph g = build_graph(nl);
    const NodeEmbedding e = forward_embed(init_embed_params(4), g, node_features(nl, g));
    for (int c = 0; c < e.node.cols; ++c) {
        double mean = 0.0;
        for (int v = 0; v < e.node.rows; ++v) mean += e.node(v, c);
        mean /= e.node.rows;
        REQUIRE(e.graph[static_cast<size_t>(c)] == Catch::Approx(mean).margin(1e-12));
    }
}

TEST_CASE("feature rows carry a valid one-hot") {
    const Netlist nl = generate_synthetic(19, 3, 20, 18, 0.3);
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    REQUIRE(x.cols == kNodeFeatureDim);
    for (int v = 0; v < x.rows; ++v) {
        double onehot = 0.0;
        for (int c = 0; c < kGateVocabSize; ++c) onehot += x(v, c);
        REQUIRE(onehot == Catch::Approx(1.0));
    }
}

TEST_CASE("shape mismatches are rejected") {
    const Graph g = two_node_graph();
    const EmbedParams p = init_embed_params(1, 4, 8, 8);
    REQUIRE_THROWS_AS(forward_embed(p, g, Mat(2, 3)), std::invalid_argument);
    REQUIRE_THROWS_AS(embed_gradients(p, g, Mat(2, 4), Mat(2, 7)), std::invalid_argument);
}
