#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlplace/agent.hpp"
#include "rlplace/baselines.hpp"
#include "rlplace/graph_metrics.hpp"
#include "rlplace/svg_render.hpp"

namespace rlplace::cli {

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);
    f << content;
}

inline void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty())
        std::cout << content;
    else
        write_file(out_path, content);
}

struct CanvasOptions {
    int rows = 16, cols = 16;
    double cell_w = 10.0, cell_h = 10.0;
    double density_cap = 1.0;
    double lambda = 1.0;
    std::string reward_mode = "baseline";
    int refine_iters = 200;

    CanvasConfig to_config() const {
        CanvasConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.cell_w_um = cell_w;
        cfg.cell_h_um = cell_h;
        cfg.density_cap = density_cap;
        cfg.congestion_weight = lambda;
        cfg.refine_iters = refine_iters;
        if (reward_mode == "literal")
            cfg.reward_mode = RewardMode::LiteralEq6;
        else if (reward_mode == "baseline")
            cfg.reward_mode = RewardMode::BaselineNormalized;
        else
            throw std::invalid_argument("reward mode must be literal or baseline");
        return cfg;
    }

    void add_flags(CLI::App* sub) {
        sub->add_option("--grid", grid_spec_, "grid dimensions as RxC (default 16x16)");
        sub->add_option("--cell-w", cell_w, "grid cell width in um");
        sub->add_option("--cell-h", cell_h, "grid cell height in um");
        sub->add_option("--density-cap", density_cap, "max occupied fraction per cell");
        sub->add_option("--lambda", lambda, "congestion weight in the reward");
        sub->add_option("--reward-mode", reward_mode, "literal|baseline")
            ->check(CLI::IsMember({"literal", "baseline"}));
        sub->add_option("--refine-iters", refine_iters, "force-directed sweep limit");
    }

    void finalize() {
        if (grid_spec_.empty()) return;
        const auto x = grid_spec_.find('x');
        if (x == std::string::npos)
            throw std::invalid_argument("--grid expects RxC, e.g. 16x16");
        rows = std::stoi(grid_spec_.substr(0, x));
        cols = std::stoi(grid_spec_.substr(x + 1));
    }

private:
    std::string grid_spec_;
};

// ---------------------------------------------------------------------------
// Placement result document

inline std::string write_placement_doc(const PlacementEnv& env, const PlacementState& s,
                                       const std::vector<PointUm>& coords,
                                       const RewardBreakdown& rb, int target_clusters) {
    const auto& cfg = env.config();
    nlohmann::ordered_json doc;
    doc["netlist"] = env.netlist().name;
    doc["config"] = {
        {"rows", cfg.rows},
        {"cols", cfg.cols},
        {"cell_w_um", cfg.cell_w_um},
        {"cell_h_um", cfg.cell_h_um},
        {"density_cap", cfg.density_cap},
        {"congestion_weight", cfg.congestion_weight},
        {"reward_mode", cfg.reward_mode == RewardMode::LiteralEq6 ? "literal" : "baseline"},
        {"refine_iters", cfg.refine_iters},
        {"target_clusters", target_clusters},
    };
    doc["macros"] = nlohmann::ordered_json::array();
    for (const auto& node : env.netlist().nodes) {
        if (node.kind != NodeKind::Macro) continue;
        const int cell = s.position[static_cast<size_t>(node.id)];
        const PointUm o = env.macro_origin_um(cell);
        doc["macros"].push_back({{"id", node.id},
                                 {"cell", cell},
                                 {"row", cell / cfg.cols},
                                 {"col", cell % cfg.cols},
                                 {"x_um", o.first},
                                 {"y_um", o.second}});
    }
    doc["clusters"] = nlohmann::ordered_json::array();
    for (const auto& node : env.netlist().nodes) {
        if (node.kind != NodeKind::StdCell) continue;
        const PointUm& p = coords[static_cast<size_t>(node.id)];
        doc["clusters"].push_back({{"id", node.id}, {"x_um", p.first}, {"y_um", p.second}});
    }
    doc["reward"] = {{"hpwl_um", rb.hpwl_um},
                     {"congestion", rb.congestion},
                     {"density_peak", rb.density_peak},
                     {"reward", rb.reward},
                     {"baseline_hpwl_um", rb.baseline_hpwl_um}};
    return doc.dump(2) + "\n";
}

inline std::string breakdown_json(const RewardBreakdown& rb) {
    nlohmann::ordered_json doc = {{"hpwl_um", rb.hpwl_um},
                                  {"congestion", rb.congestion},
                                  {"density_peak", rb.density_peak},
                                  {"reward", rb.reward},
                                  {"baseline_hpwl_um", rb.baseline_hpwl_um}};
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Subcommand bodies

struct GenOptions {
    uint64_t seed = 0;
    int macros = 8, stdcells = 64, nets = 48;
    double ff_fraction = 0.1;
    std::string out;
};

inline int cmd_gen(const GenOptions& o) {
    const Netlist nl = generate_synthetic(o.seed, o.macros, o.stdcells, o.nets, o.ff_fraction);
    emit(o.out, write_netlist(nl));
    return 0;
}

inline int cmd_features(const std::string& netlist_path, const std::string& out) {
    const Netlist nl = parse_netlist(read_file(netlist_path));
    emit(out, write_features(extract_features(nl)));
    return 0;
}

inline int cmd_embed(const std::string& netlist_path, uint64_t seed, const std::string& out) {
    const Netlist nl = parse_netlist(read_file(netlist_path));
    const Graph g = build_graph(nl);
    const Mat x = node_features(nl, g);
    const EmbedParams p = init_embed_params(seed);
    const NodeEmbedding emb = forward_embed(p, g, x);
    std::string dsv = "node_id";
    for (int c = 0; c < emb.node.cols; ++c) dsv += ",e" + std::to_string(c);
    dsv += "\n";
    char buf[64];
    for (int v = 0; v < emb.node.rows; ++v) {
        dsv += std::to_string(v);
        for (int c = 0; c < emb.node.cols; ++c) {
            std::snprintf(buf, sizeof(buf), ",%.17g", emb.node(v, c));
            dsv += buf;
        }
        dsv += "\n";
    }
    emit(out, dsv);
    return 0;
}

struct TrainOptions {
    std::vector<std::string> netlists;
    CanvasOptions canvas;
    TrainConfig train;
    std::string checkpoint = "rlplace.ckpt";
    std::string metrics = "metrics.csv";
    bool resume = false;
};

inline std::vector<InstanceContext> load_instances(const std::vector<std::string>& paths,
                                                   const CanvasConfig& cfg, int target_clusters) {
    std::vector<InstanceContext> ctx;
    for (const auto& path : paths) {
        const Netlist nl = parse_netlist(read_file(path));
        ctx.emplace_back(cluster_stdcells(nl, target_clusters), cfg);
    }
    return ctx;
}

inline int cmd_train(TrainOptions& o) {
    o.canvas.finalize();
    const CanvasConfig cfg = o.canvas.to_config();
    const auto ctx = load_instances(o.netlists, cfg, o.train.target_clusters);

    std::optional<Checkpoint> resume;
    if (o.resume) {
        const PolicyValueParams proto = init_policy_value_params(o.train.seed, cfg.num_cells());
        resume = load_checkpoint(o.checkpoint, proto);
    }

    std::ofstream metrics(o.metrics, o.resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open metrics file: " + o.metrics);
    if (!o.resume) metrics << metrics_header() << "\n";

    train(
        ctx, cfg, o.train,
        [&](const IterationMetrics& m) {
            metrics << metrics_row(m) << "\n";
            metrics.flush();
        },
        resume ? &*resume : nullptr,
        [&](const Checkpoint& ck) { save_checkpoint(o.checkpoint, ck); });
    return 0;
}

struct PlaceOptions {
    std::string netlist;
    std::string checkpoint;
    std::string out;
    std::string svg;
    bool show_nets = false;
    uint64_t seed = 0;
    int target_clusters = 16;
    CanvasOptions canvas;
};

inline int cmd_place(PlaceOptions& o) {
    o.canvas.finalize();
    const CanvasConfig cfg = o.canvas.to_config();
    const Netlist nl = parse_netlist(read_file(o.netlist));
    const InstanceContext ctx(cluster_stdcells(nl, o.target_clusters), cfg);

    PolicyValueParams params = init_policy_value_params(o.seed, cfg.num_cells());
    if (!o.checkpoint.empty()) params = load_checkpoint(o.checkpoint, params).params;

    const auto [state, rb] = greedy_place(params, ctx);
    const RefineResult refined = ctx.env.refine(state);
    emit(o.out, write_placement_doc(ctx.env, state, refined.coords, rb, o.target_clusters));
    if (!o.svg.empty())
        write_file(o.svg, render_svg(ctx.env, state, refined.coords, {6.0, o.show_nets}));
    return 0;
}

struct EvalOptions {
    std::string netlist;
    std::string placement;
    std::string out;
    std::string svg;
    bool show_nets = false;
};

inline int cmd_eval(const EvalOptions& o) {
    const Netlist nl = parse_netlist(read_file(o.netlist));
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(read_file(o.placement));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("placement document: ") + e.what());
    }
    const auto& jc = doc.at("config");
    CanvasConfig cfg;
    cfg.rows = jc.at("rows").get<int>();
    cfg.cols = jc.at("cols").get<int>();
    cfg.cell_w_um = jc.at("cell_w_um").get<double>();
    cfg.cell_h_um = jc.at("cell_h_um").get<double>();
    cfg.density_cap = jc.at("density_cap").get<double>();
    cfg.congestion_weight = jc.at("congestion_weight").get<double>();
    cfg.refine_iters = jc.at("refine_iters").get<int>();
    cfg.reward_mode = jc.at("reward_mode").get<std::string>() == "literal"
                          ? RewardMode::LiteralEq6
                          : RewardMode::BaselineNormalized;
    const int target_clusters = jc.at("target_clusters").get<int>();

    const PlacementEnv env(cluster_stdcells(nl, target_clusters), cfg);
    PlacementState proto = env.reset();
    std::vector<int> cells(proto.order.size(), -1);
    std::map<int, int> macro_cell;
    for (const auto& jm : doc.at("macros"))
        macro_cell[jm.at("id").get<int>()] = jm.at("cell").get<int>();
    for (size_t i = 0; i < proto.order.size(); ++i) {
        auto it = macro_cell.find(proto.order[i]);
        if (it == macro_cell.end())
            throw std::invalid_argument("placement document missing macro " +
                                        std::to_string(proto.order[i]));
        cells[i] = it->second;
    }
    const auto state = env.try_state_from_cells(cells);
    if (!state) throw std::invalid_argument("placement document contains an illegal placement");

    const RewardBreakdown rb = env.terminal_reward(*state);
    emit(o.out, breakdown_json(rb));
    if (!o.svg.empty()) {
        const RefineResult refined = env.refine(*state);
        write_file(o.svg, render_svg(env, *state, refined.coords, {6.0, o.show_nets}));
    }

    const auto& jr = doc.at("reward");
    const double tol = 1e-9;
    auto close = [&](const char* key, double v) {
        return std::abs(jr.at(key).get<double>() - v) <= tol * (1.0 + std::abs(v));
    };
    if (!close("hpwl_um", rb.hpwl_um) || !close("congestion", rb.congestion) ||
        !close("reward", rb.reward)) {
        std::cerr << "eval: recomputed breakdown disagrees with the stored one\n";
        return 2;
    }
    return 0;
}

struct CompareOptions {
    std::string netlist;
    std::string checkpoint;
    std::string out;
    uint64_t seed = 0;
    int target_clusters = 16;
    SaSchedule sa;
    CanvasOptions canvas;
};

inline int cmd_compare(CompareOptions& o) {
    o.canvas.finalize();
    const CanvasConfig cfg = o.canvas.to_config();
    const Netlist nl = parse_netlist(read_file(o.netlist));
    const InstanceContext ctx(cluster_stdcells(nl, o.target_clusters), cfg);

    struct Row {
        std::string method;
        RewardBreakdown rb;
        double wall_s;
    };
    std::vector<Row> rows;
    auto timed = [&](const std::string& name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const RewardBreakdown rb = fn();
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back({name, rb, dt});
        } catch (const std::invalid_argument& e) {
            log::warn("compare: skipping %s (%s)", name.c_str(), e.what());
        }
    };

    timed("random", [&] { return random_place(ctx.env, o.seed).reward; });
    timed("sa", [&] { return sa_place(ctx.env, o.sa, o.seed).reward; });
    timed("rl", [&] {
        PolicyValueParams params = init_policy_value_params(o.seed, cfg.num_cells());
        if (!o.checkpoint.empty()) params = load_checkpoint(o.checkpoint, params).params;
        return greedy_place(params, ctx).second;
    });
    timed("exhaustive", [&] { return exhaustive_place(ctx.env).reward; });

    std::string csv = "method,hpwl_um,congestion,reward,wall_s\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.3f\n", r.method.c_str(),
                      r.rb.hpwl_um, r.rb.congestion, r.rb.reward, r.wall_s);
        csv += buf;
    }
    emit(o.out, csv);
    return 0;
}

// ---------------------------------------------------------------------------
// Argument surface

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"rlplace: RL macro placement with graph features and classical baselines"};
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file (key=value; [subcommand] sections)");
    app.allow_config_extras(CLI::config_extras_mode::error);

    GenOptions gen;
    auto* sub_gen = app.add_subcommand("gen", "generate a seeded synthetic netlist");
    sub_gen->add_option("--seed", gen.seed, "RNG seed");
    sub_gen->add_option("--macros", gen.macros, "macro count");
    sub_gen->add_option("--stdcells", gen.stdcells, "standard cell count");
    sub_gen->add_option("--nets", gen.nets, "net count");
    sub_gen->add_option("--ff-fraction", gen.ff_fraction, "flip-flop fraction of all nodes");
    sub_gen->add_option("--out", gen.out, "output netlist path (stdout if omitted)");

    std::string features_netlist, features_out;
    auto* sub_features = app.add_subcommand("features", "topological and spectral features");
    sub_features->add_option("--netlist", features_netlist, "netlist path")->required();
    sub_features->add_option("--out", features_out, "output path (stdout if omitted)");

    std::string embed_netlist, embed_out;
    uint64_t embed_seed = 0;
    auto* sub_embed = app.add_subcommand("embed", "write per-node embeddings as DSV");
    sub_embed->add_option("--netlist", embed_netlist, "netlist path")->required();
    sub_embed->add_option("--seed", embed_seed, "parameter init seed");
    sub_embed->add_option("--out", embed_out, "output path (stdout if omitted)");

    TrainOptions tr;
    auto* sub_train = app.add_subcommand("train", "train the policy/value network");
    sub_train->add_option("--netlist", tr.netlists, "netlist path (repeatable)")->required();
    sub_train->add_option("--seed", tr.train.seed, "master seed");
    sub_train->add_option("--iterations", tr.train.iterations, "training iterations");
    sub_train->add_option("--episodes", tr.train.episodes_per_iteration, "episodes per iteration");
    sub_train->add_option("--workers", tr.train.workers, "rollout worker threads");
    sub_train->add_option("--lr", tr.train.learning_rate, "learning rate");
    sub_train->add_option("--gamma", tr.train.gamma, "discount factor");
    sub_train->add_option("--beta", tr.train.value_coef, "value loss coefficient");
    sub_train->add_option("--eta", tr.train.entropy_coef, "entropy coefficient");
    sub_train->add_option("--clip", tr.train.clip_epsilon, "PPO clip epsilon");
    sub_train->add_option("--epochs", tr.train.epochs, "update epochs per batch");
    sub_train->add_option("--minibatch", tr.train.minibatch_size, "minibatch size");
    sub_train->add_option("--clusters", tr.train.target_clusters, "stdcell cluster target");
    sub_train->add_option("--checkpoint-every", tr.train.checkpoint_every,
                          "iterations between checkpoints");
    sub_train->add_option("--checkpoint", tr.checkpoint, "checkpoint path");
    sub_train->add_option("--metrics", tr.metrics, "metrics CSV path");
    sub_train->add_flag("--resume", tr.resume, "resume from the checkpoint");
    tr.canvas.add_flags(sub_train);

    PlaceOptions pl;
    auto* sub_place = app.add_subcommand("place", "greedy placement with the current policy");
    sub_place->add_option("--netlist", pl.netlist, "netlist path")->required();
    sub_place->add_option("--checkpoint", pl.checkpoint, "trained checkpoint (optional)");
    sub_place->add_option("--seed", pl.seed, "parameter init seed when no checkpoint");
    sub_place->add_option("--clusters", pl.target_clusters, "stdcell cluster target");
    sub_place->add_option("--out", pl.out, "placement document path (stdout if omitted)");
    sub_place->add_option("--svg", pl.svg, "also render the placement to this SVG");
    sub_place->add_flag("--nets", pl.show_nets, "draw net bounding boxes in the SVG");
    pl.canvas.add_flags(sub_place);

    EvalOptions ev;
    auto* sub_eval = app.add_subcommand("eval", "recompute and verify a placement document");
    sub_eval->add_option("--netlist", ev.netlist, "netlist path")->required();
    sub_eval->add_option("--placement", ev.placement, "placement document")->required();
    sub_eval->add_option("--out", ev.out, "recomputed breakdown path (stdout if omitted)");
    sub_eval->add_option("--svg", ev.svg, "render the placement to this SVG");
    sub_eval->add_flag("--nets", ev.show_nets, "draw net bounding boxes in the SVG");

    CompareOptions cmp;
    auto* sub_compare = app.add_subcommand("compare", "random / sa / rl / exhaustive table");
    sub_compare->add_option("--netlist", cmp.netlist, "netlist path")->required();
    sub_compare->add_option("--checkpoint", cmp.checkpoint, "trained checkpoint (optional)");
    sub_compare->add_option("--seed", cmp.seed, "seed for the stochastic methods");
    sub_compare->add_option("--clusters", cmp.target_clusters, "stdcell cluster target");
    sub_compare->add_option("--sa-steps", cmp.sa.steps, "annealing steps");
    sub_compare->add_option("--sa-t0", cmp.sa.t0, "initial temperature (<0: auto)");
    sub_compare->add_option("--sa-alpha", cmp.sa.alpha, "cooling factor");
    sub_compare->add_option("--out", cmp.out, "table path (stdout if omitted)");
    cmp.canvas.add_flags(sub_compare);

    try {
        app.parse(argc, argv);
        if (sub_gen->parsed()) return cmd_gen(gen);
        if (sub_features->parsed()) return cmd_features(features_netlist, features_out);
        if (sub_embed->parsed()) return cmd_embed(embed_netlist, embed_seed, embed_out);
        if (sub_train->parsed()) return cmd_train(tr);
        if (sub_place->parsed()) return cmd_place(pl);
        if (sub_eval->parsed()) return cmd_eval(ev);
        if (sub_compare->parsed()) return cmd_compare(cmp);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace rlplace::cli
