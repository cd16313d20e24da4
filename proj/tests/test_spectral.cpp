#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "rlplace/graph_metrics.hpp"
#include "rlplace/spectral.hpp"

using namespace rlplace;

namespace {

std::vector<std::vector<int>> neighbors_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> nbr(static_cast<size_t>(n));
    for (const auto& [a, b] : edges) {
        nbr[static_cast<size_t>(a)].push_back(b);
        nbr[static_cast<size_t>(b)].push_back(a);
    }
    return nbr;
}

Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    Graph g;
    g.n = n;
    g.adj.resize(static_cast<size_t>(n));
    g.dag_out.resize(static_cast<size_t>(n));
    g.is_ff.resize(static_cast<size_t>(n), false);
    for (const auto& [a, b] : edges) {
        g.adj[static_cast<size_t>(a)].push_back({b, 1});
        g.adj[static_cast<size_t>(b)].push_back({a, 1});
    }
    for (auto& lst : g.adj) std::sort(lst.begin(), lst.end());
    return g;
}

}  // namespace

TEST_CASE("path graph P3: spectrum {0, 1, 3}") {
    const auto nbr = neighbors_from_edges(3, {{0, 1}, {1, 2}});
    const SpectralSummary s = spectral_summary(nbr, 1e-10, 5000);
    REQUIRE(s.fiedler_value == Catch::Approx(1.0).margin(1e-8));
    REQUIRE(s.spectral_radius == Catch::Approx(3.0).margin(1e-8));
    REQUIRE(s.residual <= 1e-10);
}

TEST_CASE("disconnected graph has zero fiedler value") {
    const auto nbr = neighbors_from_edges(4, {{0, 1}, {2, 3}});
    const SpectralSummary s = spectral_summary(nbr, 1e-8, 5000);
    REQUIRE(std::abs(s.fiedler_value) <= 1e-8);
    REQUIRE(s.spectral_radius == Catch::Approx(2.0).margin(1e-7));
}

TEST_CASE("complete graph K4: spectrum {0, 4, 4, 4}") {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) edges.push_back({a, b});
    const SpectralSummary s = spectral_summary(neighbors_from_edges(4, edges), 1e-10, 5000);
    REQUIRE(s.fiedler_value == Catch::Approx(4.0).margin(1e-8));
    REQUIRE(s.spectral_radius == Catch::Approx(4.0).margin(1e-8));
}

TEST_CASE("edgeless graph is all zeros") {
    const SpectralSummary s = spectral_summary(neighbors_from_edges(3, {}), 1e-8, 100);
    REQUIRE(s.fiedler_value == 0.0);
    REQUIRE(s.spectral_radius == 0.0);
}

TEST_CASE("iterative eigenvalues match the dense oracle") {
    int connected_checked = 0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        const int n = 8 + static_cast<int>(rng.uniform_u64(57));  // up to 64
        const double p = rng.uniform(0.08, 0.5);
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (rng.uniform01() < p) edges.push_back({a, b});
        const Graph g = graph_from_edges(n, edges);
        const auto dense = oracles::dense_laplacian_eigenvalues(g);
        const SpectralSummary s = spectral_summary(g.neighbor_lists(), 1e-9, 50000);
        REQUIRE(std::abs(s.fiedler_value - dense[1]) <= 1e-6);
        REQUIRE(std::abs(s.spectral_radius - dense.back()) <= 1e-6);

        int max_deg = 0;
        for (int v = 0; v < g.n; ++v) max_deg = std::max(max_deg, g.degree(v));
        REQUIRE(s.spectral_radius <= 2.0 * max_deg + 1e-9);
        REQUIRE(s.fiedler_value >= 0.0);
        REQUIRE(s.fiedler_value <= s.spectral_radius + 1e-12);
        if (s.fiedler_value > 1e-9) ++connected_checked;
    }
    REQUIRE(connected_checked > 0);
}

TEST_CASE("fiedler sign tracks connectivity") {
    // connected ring
    const auto ring = neighbors_from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}});
    REQUIRE(spectral_summary(ring, 1e-9, 5000).fiedler_value > 1e-9);
    // two rings
    const auto two = neighbors_from_edges(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}});
    REQUIRE(spectral_summary(two, 1e-9, 5000).fiedler_value <= 1e-9);
}

TEST_CASE("non-convergence is reported with the best residual") {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < 16; ++a)
        for (int b = a + 1; b < 16; ++b)
            if ((a + b) % 3 != 0) edges.push_back({a, b});
    REQUIRE_THROWS_AS(spectral_summary(neighbors_from_edges(16, edges), 1e-14, 2),
                      SpectralNonConvergence);
    try {
        spectral_summary(neighbors_from_edges(16, edges), 1e-14, 2);
    } catch (const SpectralNonConvergence& e) {
        REQUIRE(e.iterations <= 2);
        REQUIRE(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("spectral summary requires at least two nodes") {
    REQUIRE_THROWS_AS(spectral_summary(std::vector<std::vector<int>>(1), 1e-8, 100),
                      std::invalid_argument);
}
