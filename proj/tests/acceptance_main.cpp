// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, not configurable.
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rlplace/agent.hpp"
#include "rlplace/baselines.hpp"
#include "rlplace/cli.hpp"
#include "rlplace/graph_metrics.hpp"

using namespace rlplace;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        pass = false;
        if (!detail.empty()) detail += "; ";
        detail += why;
    }
    void note(const std::string& what) {
        if (detail.empty()) detail = what;
    }
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

char fmtbuf[256];
std::string fmt(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    vsnprintf(fmtbuf, sizeof(fmtbuf), f, ap);
    va_end(ap);
    return fmtbuf;
}

// --- 1. spectral oracle ------------------------------------------------------
Outcome criterion_spectral() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        const int n = 8 + static_cast<int>(rng.uniform_u64(57));
        const double p = rng.uniform(0.08, 0.5);
        Graph g;
        g.n = n;
        g.adj.resize(n);
        g.dag_out.resize(n);
        g.is_ff.assign(n, false);
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (rng.uniform01() < p) {
                    g.adj[a].push_back({b, 1});
                    g.adj[b].push_back({a, 1});
                }
        for (auto& lst : g.adj) std::sort(lst.begin(), lst.end());
        const auto dense = oracles::dense_laplacian_eigenvalues(g);
        const SpectralSummary s = spectral_summary(g.neighbor_lists(), 1e-9, 50000);
        worst = std::max(worst, std::abs(s.fiedler_value - dense[1]));
        worst = std::max(worst, std::abs(s.spectral_radius - dense.back()));
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (worst > 1e-6) out.fail(fmt("max abs error %.3g > 1e-6", worst));
    if (dt >= 5.0) out.fail(fmt("runtime %.2fs >= 5s", dt));
    out.note(fmt("50 graphs, max abs error %.2g, %.2fs", worst, dt));
    return out;
}

// --- 2. metric oracles -------------------------------------------------------
Outcome criterion_metric_oracles() {
    Outcome out;
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed * 31 + 1);
        const int macros = 2 + static_cast<int>(seed % 4);
        const int cells = 6 + static_cast<int>(rng.uniform_u64(30 - macros - 5));
        const Netlist nl = generate_synthetic(seed, macros, cells, macros + cells, 0.25);
        const Graph g = build_graph(nl);

        if (logic_levels(g) != oracles::logic_levels_brute(g))
            out.fail(fmt("logic_levels mismatch at seed %llu", (unsigned long long)seed));
        if (std::abs(clustering_coefficient(g) - oracles::clustering_coefficient_brute(g)) > 1e-12)
            out.fail(fmt("clustering mismatch at seed %llu", (unsigned long long)seed));
        for (int k = 0; k <= 4; ++k)
            if (std::abs(rich_club(g, k) - oracles::rich_club_brute(g, k)) > 1e-12)
                out.fail(fmt("rich_club(%d) mismatch at seed %llu", k, (unsigned long long)seed));

        // hpwl against a direct min/max pass over random pin sets
        std::vector<std::vector<PointUm>> nets(5);
        double expect = 0.0;
        for (auto& net : nets) {
            const int k = 1 + static_cast<int>(rng.uniform_u64(5));
            double mnx = 1e300, mxx = -1e300, mny = 1e300, mxy = -1e300;
            for (int i = 0; i < k; ++i) {
                const double x = rng.uniform(0.0, 300.0), y = rng.uniform(0.0, 300.0);
                net.push_back({x, y});
                mnx = std::min(mnx, x);
                mxx = std::max(mxx, x);
                mny = std::min(mny, y);
                mxy = std::max(mxy, y);
            }
            expect += (mxx - mnx) + (mxy - mny);
        }
        if (std::abs(hpwl(nets) - expect) > 1e-12 * (1.0 + expect))
            out.fail(fmt("hpwl mismatch at seed %llu", (unsigned long long)seed));
        if (!out.pass) break;
    }
    out.note("100 instances, logic/clustering/rich-club/hpwl vs brute force");
    return out;
}

// --- 3. gradient correctness -------------------------------------------------
Outcome criterion_gradients() {
    Outcome out;
    double worst = 0.0;
    int coords = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        CanvasConfig canvas;
        canvas.rows = canvas.cols = 4;
        canvas.reward_mode = RewardMode::BaselineNormalized;
        const int macros = 3 + static_cast<int>(seed % 4);  // 3..6
        SizeRanges sizes;
        sizes.macro_min_um = 6.0;
        sizes.macro_max_um = 10.0;  // single-cell footprints keep 4x4 feasible
        const Netlist nl = generate_synthetic(seed * 7, macros, 6, macros + 6, 0.2, sizes);
        std::vector<InstanceContext> ctx;
        ctx.emplace_back(cluster_stdcells(nl, 2), canvas);

        PolicyValueParams p = init_policy_value_params(seed * 13 + 1, canvas.num_cells());
        TrainConfig cfg;
        const RolloutBatch batch = collect_rollouts(p, ctx, 2, seed, cfg.gamma);
        PolicyValueParams grads = actor_critic_gradient(p, batch, ctx, cfg);

        std::vector<Vec*> garrs, parrs;
        grads.for_each_array([&](const char*, Vec& a) { garrs.push_back(&a); });
        p.for_each_array([&](const char*, Vec& a) { parrs.push_back(&a); });
        for (size_t ai = 0; ai < parrs.size(); ++ai) {
            Vec& arr = *parrs[ai];
            for (size_t i = 0; i < arr.size(); ++i) {
                const double h = 1e-6, orig = arr[i];
                arr[i] = orig + h;
                const double up = loss_value(p, batch, ctx, cfg).total(cfg);
                arr[i] = orig - h;
                const double dn = loss_value(p, batch, ctx, cfg).total(cfg);
                arr[i] = orig;
                const double fd = (up - dn) / (2.0 * h);
                const double rel = std::abs((*garrs[ai])[i] - fd) / std::max(1.0, std::abs(fd));
                worst = std::max(worst, rel);
                ++coords;
            }
        }
        if (worst > 1e-4) {
            out.fail(fmt("rel err %.3g > 1e-4 at seed %llu", worst, (unsigned long long)seed));
            break;
        }
    }
    out.note(fmt("%d coordinates over 5 instances, worst rel err %.2g", coords, worst));
    return out;
}

// --- 4. mask / overlap safety ------------------------------------------------
Outcome criterion_overlap_safety() {
    Outcome out;
    int episodes_run = 0;
    Rng master(0xacce55);
    for (int inst = 0; inst < 100 && out.pass; ++inst) {
        const int macros = 3 + static_cast<int>(master.uniform_u64(6));
        const int stdcells = inst % 5 == 0 ? 12 : 0;  // a few clustered instances
        CanvasConfig canvas;
        canvas.rows = canvas.cols = 8;
        canvas.reward_mode = RewardMode::LiteralEq6;
        const Netlist nl = generate_synthetic(1000 + inst, macros, stdcells,
                                              std::max(4, macros + stdcells / 2), 0.1);
        const PlacementEnv env(as_clustered(nl, 3), canvas);

        for (int ep = 0; ep < 100 && out.pass; ++ep) {
            Rng rng(Rng::derive(7777, inst * 100 + ep));
            PlacementState s = env.reset();
            while (!s.done) {
                const ActionMask m = env.legal_mask(s);
                if (m.count == 0) break;  // dead end: abandoned, nothing placed out of bounds
                int pick = static_cast<int>(rng.uniform_u64(m.count));
                int action = -1;
                for (int c = 0; c < env.num_actions(); ++c)
                    if (m.legal[c] && pick-- == 0) {
                        action = c;
                        break;
                    }
                const StepResult res = env.step(s, action);
                if (!res.done && res.reward.reward != 0.0) out.fail("nonzero intermediate reward");
                s = res.state;
            }
            ++episodes_run;
            for (double o : s.occupancy)
                if (o > 1.0 + 1e-12) out.fail("cell occupancy above 1: overlapping footprints");
            // um rectangles pairwise disjoint, fully inside the canvas
            const auto& nodes = env.netlist().nodes;
            for (const auto& a : nodes) {
                if (a.kind != NodeKind::Macro || s.position[a.id] < 0) continue;
                const auto [aw, ah] = env.footprint_cells(a.id);
                const PointUm ao = env.macro_origin_um(s.position[a.id]);
                if (ao.first + a.width_um > canvas.width_um() + 1e-9 ||
                    ao.second + a.height_um > canvas.height_um() + 1e-9)
                    out.fail("macro out of bounds");
                for (const auto& b : nodes) {
                    if (b.kind != NodeKind::Macro || b.id <= a.id || s.position[b.id] < 0) continue;
                    const auto [bw, bh] = env.footprint_cells(b.id);
                    const PointUm bo = env.macro_origin_um(s.position[b.id]);
                    const bool disjoint = ao.first + aw * canvas.cell_w_um <= bo.first + 1e-9 ||
                                          bo.first + bw * canvas.cell_w_um <= ao.first + 1e-9 ||
                                          ao.second + ah * canvas.cell_h_um <= bo.second + 1e-9 ||
                                          bo.second + bh * canvas.cell_h_um <= ao.second + 1e-9;
                    if (!disjoint) out.fail("overlapping footprints");
                }
            }
        }
    }
    out.note(fmt("%d randomized episodes, zero overlaps, intermediate rewards all 0", episodes_run));
    return out;
}

// --- 5. ppo reduction ----------------------------------------------------------
Outcome criterion_ppo_reduction() {
    Outcome out;
    CanvasConfig canvas;
    canvas.rows = canvas.cols = 4;
    canvas.reward_mode = RewardMode::BaselineNormalized;
    SizeRanges sizes;
    sizes.macro_min_um = 6.0;
    sizes.macro_max_um = 10.0;
    const Netlist nl = generate_synthetic(55, 4, 6, 10, 0.2, sizes);
    std::vector<InstanceContext> ctx;
    ctx.emplace_back(cluster_stdcells(nl, 2), canvas);
    PolicyValueParams p = init_policy_value_params(3, canvas.num_cells());
    TrainConfig cfg;
    const RolloutBatch batch = collect_rollouts(p, ctx, 4, 9, cfg.gamma);

    const PolicyValueParams acg = actor_critic_gradient(p, batch, ctx, cfg);
    TrainConfig wide = cfg;
    wide.clip_epsilon = 1e12;  // one epoch, full batch, clip inactive
    const PolicyValueParams ppo = ppo_gradient(p, batch.flat(), ctx, wide);

    Vec fa, fb;
    acg.for_each_array([&](const char*, const Vec& a) { fa.insert(fa.end(), a.begin(), a.end()); });
    ppo.for_each_array([&](const char*, const Vec& a) { fb.insert(fb.end(), a.begin(), a.end()); });
    const double cos = dot(fa, fb) / (norm2(fa) * norm2(fb));
    if (!(cos >= 0.999)) out.fail(fmt("cosine %.6f < 0.999", cos));
    out.note(fmt("cosine similarity %.9f", cos));
    return out;
}

// --- 6. learning signal --------------------------------------------------------
Outcome criterion_learning() {
    Outcome out;
    SizeRanges sizes;
    const Netlist nl = generate_synthetic(606, 20, 0, 30, 0.0, sizes);
    CanvasConfig canvas;
    canvas.rows = canvas.cols = 16;
    canvas.reward_mode = RewardMode::BaselineNormalized;
    std::vector<InstanceContext> ctx;
    ctx.emplace_back(as_clustered(nl, 1), canvas);

    std::vector<double> rnd;
    for (uint64_t s = 0; s < 100; ++s) rnd.push_back(random_place(ctx[0].env, s).reward.hpwl_um);
    const double rnd_median = median(rnd);

    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.episodes_per_iteration = 16;
    cfg.learning_rate = 1e-3;
    cfg.workers = 2;
    cfg.seed = 42;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train(ctx, canvas, cfg);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<double> greedy;
    for (int s = 0; s < 10; ++s) greedy.push_back(greedy_place(res.checkpoint.params, ctx[0]).second.hpwl_um);
    const double g_median = median(greedy);

    if (dt >= 1800.0) out.fail(fmt("training took %.0fs >= 30min", dt));
    if (!(g_median < rnd_median)) out.fail("greedy median not below random median");
    if (!(g_median <= 0.95 * rnd_median))
        out.fail(fmt("improvement %.1f%% < 5%%", 100.0 * (1.0 - g_median / rnd_median)));
    out.note(fmt("greedy median %.0f vs random median %.0f (%.1f%% lower), %.0fs",
                 g_median, rnd_median, 100.0 * (1.0 - g_median / rnd_median), dt));
    return out;
}

// --- 7. sa optimality ----------------------------------------------------------
Outcome criterion_sa_optimality() {
    Outcome out;
    int hits = 0;
    double worst_exh = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        SizeRanges sizes;
        sizes.macro_min_um = 6.0;
        sizes.macro_max_um = 10.0;  // single-cell footprints
        const int macros = 3 + static_cast<int>(seed % 2);
        const Netlist nl = generate_synthetic(400 + seed, macros, 0, macros + 2, 0.0, sizes);
        CanvasConfig canvas;
        canvas.rows = 3;
        canvas.cols = 2;
        canvas.reward_mode = RewardMode::LiteralEq6;
        const PlacementEnv env(as_clustered(nl, 1), canvas);

        const auto t0 = std::chrono::steady_clock::now();
        const PlacementOutcome opt = exhaustive_place(env);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        worst_exh = std::max(worst_exh, dt);
        if (dt >= 10.0) out.fail(fmt("exhaustive took %.1fs >= 10s", dt));

        SaSchedule sched;  // 20k steps default
        const PlacementOutcome sa = sa_place(env, sched, seed);
        const double c_opt = opt.reward.hpwl_um + opt.reward.congestion;
        const double c_sa = sa.reward.hpwl_um + sa.reward.congestion;
        if (c_sa <= c_opt + 1e-9) ++hits;
    }
    if (hits < 18) out.fail(fmt("only %d/20 runs reached the optimum", hits));
    out.note(fmt("%d/20 optimal, slowest exhaustive %.2fs", hits, worst_exh));
    return out;
}

// --- 8. force-directed ----------------------------------------------------------
Outcome criterion_force_directed() {
    Outcome out;
    // refine() asserts objective monotonicity per sweep and throws on violation
    for (uint64_t seed = 1; seed <= 100 && out.pass; ++seed) {
        const Netlist nl = generate_synthetic(seed, 4, 40, 30, 0.1);
        CanvasConfig canvas;
        canvas.rows = canvas.cols = 8;
        const PlacementEnv env(cluster_stdcells(nl, 6), canvas);
        Rng rng(seed);
        auto s = env.try_random_placement(rng);
        if (!s) continue;
        try {
            env.refine(*s);
        } catch (const std::exception& e) {
            out.fail(fmt("objective increased at seed %llu: %s", (unsigned long long)seed, e.what()));
        }
    }

    // two fixed anchors at (0,0) and (10,10): analytic solution is the midpoint
    Netlist nl;
    nl.name = "midpoint";
    for (int i = 0; i < 2; ++i) {
        Node m;
        m.id = i;
        m.kind = NodeKind::Macro;
        m.gate_type = "MACRO";
        m.width_um = m.height_um = 10.0;
        nl.nodes.push_back(m);
    }
    Node c;
    c.id = 2;
    c.kind = NodeKind::StdCell;
    c.gate_type = "AND";
    c.width_um = c.height_um = 1.0;
    nl.nodes.push_back(c);
    Net n0, n1;
    n0.id = 0;
    n0.pins = {{0, -5.0, -5.0}, {2, 0.0, 0.0}};
    n1.id = 1;
    n1.pins = {{1, -5.0, -5.0}, {2, 0.0, 0.0}};
    nl.nets = {n0, n1};
    nl.metadata = nl.compute_metadata();
    CanvasConfig canvas;
    canvas.rows = canvas.cols = 4;
    const PlacementEnv env(as_clustered(nl, 1), canvas);
    PlacementState s = env.reset();
    s = env.step(s, 0).state;
    s = env.step(s, 5).state;  // pins at (0,0) and (10,10)
    const RefineResult r = env.refine(s);
    if (std::abs(r.coords[2].first - 5.0) > 1e-6 || std::abs(r.coords[2].second - 5.0) > 1e-6)
        out.fail(fmt("midpoint off: (%.8f, %.8f)", r.coords[2].first, r.coords[2].second));
    out.note("100 monotone refinements; midpoint within 1e-6");
    return out;
}

// --- 9. determinism ---------------------------------------------------------------
Outcome criterion_determinism() {
    Outcome out;
    const fs::path dir = fs::temp_directory_path() / "rlplace_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto file = [&](const std::string& leaf) { return (dir / leaf).string(); };

    auto run = [&](std::vector<std::string> args) {
        std::vector<const char*> argv = {"rlplace"};
        for (const auto& a : args) argv.push_back(a.c_str());
        return cli::run_cli(static_cast<int>(argv.size()), argv.data());
    };
    if (run({"gen", "--seed", "12", "--macros", "5", "--stdcells", "20", "--nets", "18", "--out",
             file("n.json")}) != 0)
        out.fail("gen failed");
    auto train_once = [&](const std::string& tag, const std::string& workers) {
        return run({"train", "--netlist", file("n.json"), "--grid", "8x8", "--clusters", "3",
                    "--iterations", "5", "--episodes", "6", "--seed", "21", "--workers", workers,
                    "--checkpoint", file(tag + ".ckpt"), "--metrics", file(tag + ".csv")});
    };
    for (auto& [tag, workers] : std::vector<std::pair<std::string, std::string>>{
             {"a", "1"}, {"b", "1"}, {"c", "2"}, {"d", "3"}})
        if (train_once(tag, workers) != 0) out.fail("train failed");
    const std::string ref = cli::read_file(file("a.csv"));
    for (const char* tag : {"b", "c", "d"}) {
        if (cli::read_file(file(std::string(tag) + ".csv")) != ref)
            out.fail(fmt("metrics differ for run %s", tag));
        if (cli::read_file(file(std::string(tag) + ".ckpt")) != cli::read_file(file("a.ckpt")))
            out.fail(fmt("checkpoint differs for run %s", tag));
    }
    out.note("4 runs (workers 1,1,2,3): metrics and checkpoints byte-identical");
    return out;
}

// --- 10. reward algebra -------------------------------------------------------------
Outcome criterion_reward_algebra() {
    Outcome out;
    // single-pin nets: zero span everywhere, so congestion is exactly 0
    Netlist nl;
    nl.name = "degenerate";
    for (int i = 0; i < 3; ++i) {
        Node m;
        m.id = i;
        m.kind = NodeKind::Macro;
        m.gate_type = "MACRO";
        m.width_um = m.height_um = 10.0;
        nl.nodes.push_back(m);
        Net net;
        net.id = i;
        net.pins = {{i, 1.0, 2.0}};
        nl.nets.push_back(net);
    }
    nl.metadata = nl.compute_metadata();
    CanvasConfig canvas;
    canvas.rows = canvas.cols = 4;
    canvas.reward_mode = RewardMode::LiteralEq6;
    const PlacementEnv env(as_clustered(nl, 1), canvas);
    for (uint64_t seed = 0; seed < 25; ++seed) {
        const PlacementOutcome o = random_place(env, seed);
        if (o.reward.congestion != 0.0) out.fail("expected zero congestion");
        if (o.reward.reward != -1.0)
            out.fail(fmt("reward %.17g != -1 with C=0", o.reward.reward));
    }
    out.note("25 placements with C=0, reward exactly -1.0");
    return out;
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> criteria = {
        {1, "spectral oracle", criterion_spectral},
        {2, "metric oracles", criterion_metric_oracles},
        {3, "gradient correctness", criterion_gradients},
        {4, "mask/overlap safety", criterion_overlap_safety},
        {5, "ppo reduction", criterion_ppo_reduction},
        {6, "learning signal", criterion_learning},
        {7, "sa optimality", criterion_sa_optimality},
        {8, "force-directed refinement", criterion_force_directed},
        {9, "determinism", criterion_determinism},
        {10, "reward algebra", criterion_reward_algebra},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %2d: %s — %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
