#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rlplace/gnn_embed.hpp"
#include "rlplace/logging.hpp"
#include "rlplace/place_env.hpp"

namespace rlplace {

constexpr int kTrunkHidden = 64;
constexpr int kMetadataDim = 6;

struct TrainConfig {
    double gamma = 1.0;           // discount
    double value_coef = 0.5;      // beta
    double entropy_coef = 0.01;   // eta
    double clip_epsilon = 0.2;
    int epochs = 4;
    int minibatch_size = 64;
    double learning_rate = 3e-4;
    int episodes_per_iteration = 8;
    int iterations = 100;
    uint64_t seed = 0;
    int workers = 1;
    int checkpoint_every = 100;
    int target_clusters = 16;

    void validate() const {
        if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in (0,1]");
        if (value_coef < 0.0 || entropy_coef < 0.0 || clip_epsilon <= 0.0 ||
            learning_rate < 0.0)
            throw std::invalid_argument("loss coefficients must be nonnegative");
        if (epochs < 1 || minibatch_size < 1 || episodes_per_iteration < 0 || iterations < 0 ||
            workers < 1 || target_clusters < 1)
            throw std::invalid_argument("train config counts must be positive");
    }
};

// Policy and value heads share the embedding and a two-layer trunk.
struct PolicyValueParams {
    EmbedParams embed;
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
    Mat w_policy;
    Vec b_policy;
    Mat w_value;
    Vec b_value;

    int input_dim() const { return w1.cols; }
    int num_actions() const { return w_policy.rows; }

    // Canonical traversal order; checkpointing, the optimizer and gradient
    // flattening all rely on it.
    template <typename F>
    void for_each_array(F&& f) {
        f("embed.w_self0", embed.w_self[0].data);
        f("embed.w_nbr0", embed.w_nbr[0].data);
        f("embed.w_self1", embed.w_self[1].data);
        f("embed.w_nbr1", embed.w_nbr[1].data);
        f("trunk.w1", w1.data);
        f("trunk.b1", b1);
        f("trunk.w2", w2.data);
        f("trunk.b2", b2);
        f("policy.w", w_policy.data);
        f("policy.b", b_policy);
        f("value.w", w_value.data);
        f("value.b", b_value);
    }
    template <typename F>
    void for_each_array(F&& f) const {
        const_cast<PolicyValueParams*>(this)->for_each_array(
            [&](const char* name, Vec& v) { f(name, const_cast<const Vec&>(v)); });
    }
};

inline PolicyValueParams init_policy_value_params(uint64_t seed, int num_actions,
                                                  int embed_in = kNodeFeatureDim) {
    Rng rng(seed);
    PolicyValueParams p;
    p.embed = init_embed_params(Rng::derive(seed, 1), embed_in, kEmbedDim, kEmbedDim);
    const int in = 2 * kEmbedDim + kMetadataDim;
    p.w1 = Mat::glorot_uniform(kTrunkHidden, in, rng);
    p.b1.assign(kTrunkHidden, 0.0);
    p.w2 = Mat::glorot_uniform(kTrunkHidden, kTrunkHidden, rng);
    p.b2.assign(kTrunkHidden, 0.0);
    p.w_policy = Mat::glorot_uniform(num_actions, kTrunkHidden, rng);
    p.b_policy.assign(static_cast<size_t>(num_actions), 0.0);
    p.w_value = Mat::glorot_uniform(1, kTrunkHidden, rng);
    p.b_value.assign(1, 0.0);
    return p;
}

inline PolicyValueParams zero_like(const PolicyValueParams& p) {
    PolicyValueParams z = p;
    z.for_each_array([](const char*, Vec& v) { std::fill(v.begin(), v.end(), 0.0); });
    return z;
}

// Normalized instance metadata fed beside the embeddings.
inline Vec metadata_vector(const PlacementEnv& env, int t) {
    const auto& cfg = env.config();
    const int T = env.num_macros();
    double macro_area = 0.0;
    for (const auto& n : env.netlist().nodes)
        if (n.kind == NodeKind::Macro) macro_area += n.area_um2();
    return {static_cast<double>(T) / 32.0,
            static_cast<double>(env.netlist().nets.size()) / 256.0,
            static_cast<double>(cfg.rows) / 32.0,
            static_cast<double>(cfg.cols) / 32.0,
            T > 0 ? static_cast<double>(t) / T : 0.0,
            macro_area / (cfg.width_um() * cfg.height_um())};
}

inline Vec encode_state(const NodeEmbedding& emb, int node, const Vec& metadata) {
    Vec enc;
    enc.reserve(emb.graph.size() + static_cast<size_t>(emb.node.cols) + metadata.size());
    enc.insert(enc.end(), emb.graph.begin(), emb.graph.end());
    const Vec row = emb.row(node);
    enc.insert(enc.end(), row.begin(), row.end());
    enc.insert(enc.end(), metadata.begin(), metadata.end());
    return enc;
}

struct TrunkForward {
    Vec input, z1, h1, z2, h2, logits;
    double value = 0.0;
};

inline TrunkForward forward_trunk(const PolicyValueParams& p, const Vec& input) {
    if (static_cast<int>(input.size()) != p.input_dim())
        throw std::invalid_argument("forward_trunk: input dimension mismatch");
    TrunkForward f;
    f.input = input;
    f.z1 = matvec(p.w1, input);
    axpy(1.0, p.b1, f.z1);
    f.h1 = f.z1;
    for (auto& v : f.h1) v = v > 0.0 ? v : 0.0;
    f.z2 = matvec(p.w2, f.h1);
    axpy(1.0, p.b2, f.z2);
    f.h2 = f.z2;
    for (auto& v : f.h2) v = v > 0.0 ? v : 0.0;
    f.logits = matvec(p.w_policy, f.h2);
    axpy(1.0, p.b_policy, f.logits);
    f.value = dot(p.w_value.data, f.h2) + p.b_value[0];
    return f;
}

struct PolicyEval {
    TrunkForward fwd;
    Vec probs;       // exactly zero on masked cells
    double entropy = 0.0;  // over legal actions
};

inline PolicyEval masked_policy(const PolicyValueParams& p, const Vec& input,
                                const std::vector<char>& mask) {
    PolicyEval pe;
    pe.fwd = forward_trunk(p, input);
    const Vec& z = pe.fwd.logits;
    if (mask.size() != z.size()) throw std::invalid_argument("masked_policy: mask size mismatch");
    double zmax = -1e300;
    bool any = false;
    for (size_t i = 0; i < z.size(); ++i)
        if (mask[i]) {
            zmax = std::max(zmax, z[i]);
            any = true;
        }
    if (!any) throw std::runtime_error("masked_policy: empty action mask (dead-end state)");
    pe.probs.assign(z.size(), 0.0);
    double total = 0.0;
    for (size_t i = 0; i < z.size(); ++i)
        if (mask[i]) {
            pe.probs[i] = std::exp(z[i] - zmax);
            total += pe.probs[i];
        }
    double check = 0.0;
    for (size_t i = 0; i < z.size(); ++i)
        if (mask[i]) {
            pe.probs[i] /= total;
            check += pe.probs[i];
            if (pe.probs[i] > 0.0) pe.entropy -= pe.probs[i] * std::log(pe.probs[i]);
        }
    if (std::abs(check - 1.0) > 1e-9)
        throw std::runtime_error("masked_policy: probabilities do not sum to 1");
    return pe;
}

inline double value_of(const PolicyValueParams& p, const Vec& input) {
    return forward_trunk(p, input).value;
}

// G_t = sum_i gamma^i r_{t+i}, computed by the backward recursion.
inline Vec discounted_return(const Vec& rewards, double gamma) {
    Vec g(rewards.size(), 0.0);
    double acc = 0.0;
    for (size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        g[i] = acc;
    }
    return g;
}

struct TrajectoryStep {
    int instance = 0;
    int node = 0;  // macro being placed
    int t = 0;
    std::vector<char> mask;
    int action = 0;
    double logp_old = 0.0;
    double reward = 0.0;
    double value_old = 0.0;
    double ret = 0.0;  // G_t
    bool done = false;
    Vec metadata;
};

struct EpisodeRecord {
    int instance = 0;
    bool failed = false;
    std::vector<TrajectoryStep> steps;
    RewardBreakdown terminal;
};

struct RolloutBatch {
    std::vector<EpisodeRecord> episodes;
    int failed_count = 0;

    std::vector<const TrajectoryStep*> flat() const {
        std::vector<const TrajectoryStep*> out;
        for (const auto& ep : episodes)
            if (!ep.failed)
                for (const auto& st : ep.steps) out.push_back(&st);
        return out;
    }
};

// One trainable problem instance: environment plus the static graph inputs
// the embedding consumes.
struct InstanceContext {
    PlacementEnv env;
    Graph graph;
    Mat features;

    explicit InstanceContext(const ClusteredNetlist& cn, const CanvasConfig& cfg)
        : env(cn, cfg), graph(build_graph(cn)), features(node_features(cn.to_netlist(), graph)) {
        // fill the cache up front; rollout workers then share the env read-only
        if (cfg.reward_mode == RewardMode::BaselineNormalized && env.num_macros() > 0)
            env.baseline_hpwl();
    }
};

inline std::vector<NodeEmbedding> embed_instances(const PolicyValueParams& p,
                                                  const std::vector<InstanceContext>& ctx) {
    std::vector<NodeEmbedding> out;
    out.reserve(ctx.size());
    for (const auto& c : ctx) out.push_back(forward_embed(p.embed, c.graph, c.features));
    return out;
}

// ---------------------------------------------------------------------------
// Rollouts

inline EpisodeRecord run_episode(const PolicyValueParams& params, const PlacementEnv& env,
                                 const NodeEmbedding& emb, int instance, Rng* rng, bool greedy) {
    EpisodeRecord ep;
    ep.instance = instance;
    PlacementState s = env.reset();
    while (!s.done) {
        const ActionMask mask = env.legal_mask(s);
        if (mask.count == 0) {
            ep.failed = true;
            return ep;
        }
        TrajectoryStep st;
        st.instance = instance;
        st.node = s.order[static_cast<size_t>(s.t)];
        st.t = s.t;
        st.metadata = metadata_vector(env, s.t);
        st.mask = mask.legal;
        const PolicyEval pe = masked_policy(params, encode_state(emb, st.node, st.metadata), st.mask);
        int action = -1;
        if (greedy) {
            double best = -1.0;
            for (size_t i = 0; i < pe.probs.size(); ++i)
                if (mask.legal[i] && pe.probs[i] > best) {
                    best = pe.probs[i];
                    action = static_cast<int>(i);
                }
        } else {
            const double u = rng->uniform01();
            double cum = 0.0;
            for (size_t i = 0; i < pe.probs.size(); ++i) {
                if (!mask.legal[i]) continue;
                cum += pe.probs[i];
                action = static_cast<int>(i);
                if (u < cum) break;
            }
        }
        st.action = action;
        st.logp_old = std::log(pe.probs[static_cast<size_t>(action)]);
        st.value_old = pe.fwd.value;
        StepResult res = env.step(s, action);
        st.reward = res.reward.reward;
        st.done = res.done;
        if (res.done) ep.terminal = res.reward;
        ep.steps.push_back(std::move(st));
        s = std::move(res.state);
    }
    return ep;
}

// Samples `episodes` full trajectories; episode i runs on instance i mod K
// with its own derived seed, so the batch is identical for any worker count.
inline RolloutBatch collect_rollouts(const PolicyValueParams& params,
                                     const std::vector<InstanceContext>& ctx, int episodes,
                                     uint64_t seed, double gamma, int workers = 1,
                                     bool greedy = false) {
    RolloutBatch batch;
    batch.episodes.resize(static_cast<size_t>(episodes));
    if (episodes == 0) return batch;
    if (ctx.empty()) throw std::invalid_argument("collect_rollouts: no instances");

    const std::vector<NodeEmbedding> embeds = embed_instances(params, ctx);
    const int W = std::max(1, std::min(workers, episodes));

    auto work = [&](int w) {
        for (int i = w; i < episodes; i += W) {
            const int instance = i % static_cast<int>(ctx.size());
            Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
            batch.episodes[static_cast<size_t>(i)] = run_episode(
                params, ctx[static_cast<size_t>(instance)].env, embeds[static_cast<size_t>(instance)],
                instance, &rng, greedy);
        }
    };
    if (W == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < W; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }

    for (auto& ep : batch.episodes) {
        if (ep.failed) {
            ++batch.failed_count;
            continue;
        }
        Vec rewards;
        for (const auto& st : ep.steps) rewards.push_back(st.reward);
        const Vec g = discounted_return(rewards, gamma);
        for (size_t i = 0; i < ep.steps.size(); ++i) ep.steps[i].ret = g[i];
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Gradients

struct LossBreakdown {
    double policy = 0.0;
    double value = 0.0;
    double entropy = 0.0;  // sum of per-step entropies
    double approx_kl = 0.0;
    int steps = 0;

    double total(const TrainConfig& cfg) const {
        return policy + cfg.value_coef * value - cfg.entropy_coef * entropy;
    }
};

namespace detail {

inline void backward_trunk(const PolicyValueParams& p, const TrunkForward& f, const Vec& dlogits,
                           double dvalue, PolicyValueParams& g, Vec& dinput) {
    Vec dh2(static_cast<size_t>(kTrunkHidden), 0.0);
    for (int r = 0; r < p.w_policy.rows; ++r) {
        const double d = dlogits[static_cast<size_t>(r)];
        if (d == 0.0) continue;
        g.b_policy[static_cast<size_t>(r)] += d;
        const double* row = &p.w_policy.data[static_cast<size_t>(r) * p.w_policy.cols];
        double* grow = &g.w_policy.data[static_cast<size_t>(r) * p.w_policy.cols];
        for (int c = 0; c < p.w_policy.cols; ++c) {
            grow[c] += d * f.h2[static_cast<size_t>(c)];
            dh2[static_cast<size_t>(c)] += d * row[c];
        }
    }
    if (dvalue != 0.0) {
        g.b_value[0] += dvalue;
        for (int c = 0; c < p.w_value.cols; ++c) {
            g.w_value.data[static_cast<size_t>(c)] += dvalue * f.h2[static_cast<size_t>(c)];
            dh2[static_cast<size_t>(c)] += dvalue * p.w_value.data[static_cast<size_t>(c)];
        }
    }
    Vec dz2 = dh2;
    for (size_t i = 0; i < dz2.size(); ++i)
        if (f.z2[i] <= 0.0) dz2[i] = 0.0;
    Vec dh1(static_cast<size_t>(kTrunkHidden), 0.0);
    for (int r = 0; r < p.w2.rows; ++r) {
        const double d = dz2[static_cast<size_t>(r)];
        if (d == 0.0) continue;
        g.b2[static_cast<size_t>(r)] += d;
        const double* row = &p.w2.data[static_cast<size_t>(r) * p.w2.cols];
        double* grow = &g.w2.data[static_cast<size_t>(r) * p.w2.cols];
        for (int c = 0; c < p.w2.cols; ++c) {
            grow[c] += d * f.h1[static_cast<size_t>(c)];
            dh1[static_cast<size_t>(c)] += d * row[c];
        }
    }
    Vec dz1 = dh1;
    for (size_t i = 0; i < dz1.size(); ++i)
        if (f.z1[i] <= 0.0) dz1[i] = 0.0;
    dinput.assign(f.input.size(), 0.0);
    for (int r = 0; r < p.w1.rows; ++r) {
        const double d = dz1[static_cast<size_t>(r)];
        if (d == 0.0) continue;
        g.b1[static_cast<size_t>(r)] += d;
        const double* row = &p.w1.data[static_cast<size_t>(r) * p.w1.cols];
        double* grow = &g.w1.data[static_cast<size_t>(r) * p.w1.cols];
        for (int c = 0; c < p.w1.cols; ++c) {
            grow[c] += d * f.input[static_cast<size_t>(c)];
            dinput[static_cast<size_t>(c)] += d * row[c];
        }
    }
}

// Shared by the plain actor-critic gradient and the PPO surrogate; `clipped`
// toggles the probability-ratio surrogate.
inline LossBreakdown loss_gradient(const PolicyValueParams& p,
                                   const std::vector<const TrajectoryStep*>& steps,
                                   const std::vector<InstanceContext>& ctx, const TrainConfig& cfg,
                                   bool clipped, PolicyValueParams* grads) {
    LossBreakdown lb;
    if (steps.empty()) return lb;

    std::map<int, NodeEmbedding> embeds;
    std::map<int, Mat> upstream;  // d(loss)/d(node embeddings) per instance
    std::map<int, Vec> dgraph;    // accumulated graph-embedding gradient
    for (const auto* st : steps) {
        if (embeds.count(st->instance)) continue;
        const auto& c = ctx[static_cast<size_t>(st->instance)];
        embeds.emplace(st->instance, forward_embed(p.embed, c.graph, c.features));
        upstream.emplace(st->instance, Mat(c.graph.n, p.embed.out_dim()));
        dgraph.emplace(st->instance, Vec(static_cast<size_t>(p.embed.out_dim()), 0.0));
    }

    for (const auto* st : steps) {
        const NodeEmbedding& emb = embeds.at(st->instance);
        const PolicyEval pe =
            masked_policy(p, encode_state(emb, st->node, st->metadata), st->mask);
        const double logp_new = std::log(pe.probs[static_cast<size_t>(st->action)]);
        const double adv = st->ret - st->value_old;

        double policy_scale = -adv;  // d(loss)/d(logp)
        if (clipped) {
            const double ratio = std::exp(logp_new - st->logp_old);
            const double lo = 1.0 - cfg.clip_epsilon, hi = 1.0 + cfg.clip_epsilon;
            const double unclipped = ratio * adv;
            const double clippedv = std::clamp(ratio, lo, hi) * adv;
            lb.policy -= std::min(unclipped, clippedv);
            // gradient flows only while the unclipped branch is active
            policy_scale = unclipped <= clippedv ? -adv * ratio : 0.0;
            lb.approx_kl += st->logp_old - logp_new;
        } else {
            lb.policy -= adv * logp_new;
        }
        const double vnow = pe.fwd.value;
        lb.value += (st->ret - vnow) * (st->ret - vnow);
        lb.entropy += pe.entropy;
        lb.steps += 1;

        if (!grads) continue;
        Vec dlogits(pe.probs.size(), 0.0);
        for (size_t i = 0; i < pe.probs.size(); ++i) {
            if (!st->mask[i]) continue;
            const double onehot = static_cast<int>(i) == st->action ? 1.0 : 0.0;
            dlogits[i] += policy_scale * (onehot - pe.probs[i]);
            if (pe.probs[i] > 0.0)
                dlogits[i] += cfg.entropy_coef * pe.probs[i] * (std::log(pe.probs[i]) + pe.entropy);
        }
        const double dvalue = 2.0 * cfg.value_coef * (vnow - st->ret);
        Vec dinput;
        backward_trunk(p, pe.fwd, dlogits, dvalue, *grads, dinput);
        Vec& dg = dgraph.at(st->instance);
        Mat& up = upstream.at(st->instance);
        const int d = p.embed.out_dim();
        for (int c = 0; c < d; ++c) {
            dg[static_cast<size_t>(c)] += dinput[static_cast<size_t>(c)];
            up(st->node, c) += dinput[static_cast<size_t>(d + c)];
        }
    }
    if (!std::isfinite(lb.total(cfg)))
        throw std::runtime_error("loss_gradient: non-finite loss (policy=" +
                                 std::to_string(lb.policy) + " value=" + std::to_string(lb.value) +
                                 " entropy=" + std::to_string(lb.entropy) + ")");

    if (grads) {
        for (auto& [inst, up] : upstream) {
            const auto& c = ctx[static_cast<size_t>(inst)];
            // graph embedding is the mean over nodes
            const Vec& dg = dgraph.at(inst);
            for (int v = 0; v < up.rows; ++v)
                for (int col = 0; col < up.cols; ++col)
                    up(v, col) += dg[static_cast<size_t>(col)] / up.rows;
            const EmbedGrads eg = embed_gradients(p.embed, c.graph, c.features, up);
            for (int l = 0; l < 2; ++l) {
                for (size_t i = 0; i < eg.w_self[l].data.size(); ++i)
                    grads->embed.w_self[l].data[i] += eg.w_self[l].data[i];
                for (size_t i = 0; i < eg.w_nbr[l].data.size(); ++i)
                    grads->embed.w_nbr[l].data[i] += eg.w_nbr[l].data[i];
            }
        }
    }
    return lb;
}

}  // namespace detail

// Gradient of the combined policy/value/entropy loss over a completed batch.
inline PolicyValueParams actor_critic_gradient(const PolicyValueParams& p, const RolloutBatch& batch,
                                               const std::vector<InstanceContext>& ctx,
                                               const TrainConfig& cfg,
                                               LossBreakdown* loss_out = nullptr) {
    PolicyValueParams grads = zero_like(p);
    const LossBreakdown lb = detail::loss_gradient(p, batch.flat(), ctx, cfg, false, &grads);
    if (loss_out) *loss_out = lb;
    return grads;
}

inline LossBreakdown loss_value(const PolicyValueParams& p, const RolloutBatch& batch,
                                const std::vector<InstanceContext>& ctx, const TrainConfig& cfg) {
    return detail::loss_gradient(p, batch.flat(), ctx, cfg, false, nullptr);
}

// PPO surrogate gradient on a set of steps (exposed for the reduction check:
// with a huge clip epsilon and untouched params it must match
// actor_critic_gradient's direction).
inline PolicyValueParams ppo_gradient(const PolicyValueParams& p,
                                      const std::vector<const TrajectoryStep*>& steps,
                                      const std::vector<InstanceContext>& ctx,
                                      const TrainConfig& cfg, LossBreakdown* loss_out = nullptr) {
    PolicyValueParams grads = zero_like(p);
    const LossBreakdown lb = detail::loss_gradient(p, steps, ctx, cfg, true, &grads);
    if (loss_out) *loss_out = lb;
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizer: per-parameter adaptive scaling from first/second moment
// estimates (0.9 / 0.999), bias-corrected.

struct AdamState {
    std::vector<Vec> m, v;
    int64_t t = 0;

    static AdamState for_params(const PolicyValueParams& p) {
        AdamState s;
        p.for_each_array([&](const char*, const Vec& arr) {
            s.m.emplace_back(arr.size(), 0.0);
            s.v.emplace_back(arr.size(), 0.0);
        });
        return s;
    }
};

inline double global_grad_norm(const PolicyValueParams& grads) {
    double sq = 0.0;
    grads.for_each_array([&](const char*, const Vec& arr) {
        for (double g : arr) sq += g * g;
    });
    return std::sqrt(sq);
}

inline void adam_step(PolicyValueParams& p, PolicyValueParams& grads, AdamState& opt, double lr,
                      double max_grad_norm = 0.5) {
    const double norm = global_grad_norm(grads);
    const double scale = norm > max_grad_norm && norm > 0.0 ? max_grad_norm / norm : 1.0;
    ++opt.t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
    size_t k = 0;
    std::vector<Vec*> gptrs;
    grads.for_each_array([&](const char*, Vec& arr) { gptrs.push_back(&arr); });
    p.for_each_array([&](const char*, Vec& arr) {
        Vec& m = opt.m[k];
        Vec& v = opt.v[k];
        const Vec& g = *gptrs[k];
        for (size_t i = 0; i < arr.size(); ++i) {
            const double gi = g[i] * scale;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            arr[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
        ++k;
    });
}

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;    // mean per step
    double approx_kl = 0.0;  // mean per step
    double grad_norm = 0.0;  // mean per minibatch, pre-clip
    int steps = 0;
};

// Multiple epochs of shuffled minibatch updates with the clipped surrogate.
inline UpdateStats ppo_update(PolicyValueParams& p, AdamState& opt, const RolloutBatch& batch,
                              const std::vector<InstanceContext>& ctx, const TrainConfig& cfg,
                              uint64_t shuffle_seed) {
    const auto steps = batch.flat();
    UpdateStats stats;
    if (steps.empty()) return stats;

    int minibatches = 0;
    double kl_sum = 0.0, ent_sum = 0.0, pl_sum = 0.0, vl_sum = 0.0, gn_sum = 0.0;
    int counted_steps = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> idx(steps.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(Rng::derive(shuffle_seed, static_cast<uint64_t>(epoch)));
        rng.shuffle(idx);
        for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(cfg.minibatch_size)) {
            const size_t end = std::min(idx.size(), start + static_cast<size_t>(cfg.minibatch_size));
            std::vector<const TrajectoryStep*> mb;
            for (size_t i = start; i < end; ++i) mb.push_back(steps[idx[i]]);
            LossBreakdown lb;
            PolicyValueParams grads = ppo_gradient(p, mb, ctx, cfg, &lb);
            gn_sum += global_grad_norm(grads);
            adam_step(p, grads, opt, cfg.learning_rate);
            ++minibatches;
            pl_sum += lb.policy;
            vl_sum += lb.value;
            ent_sum += lb.entropy;
            kl_sum += lb.approx_kl;
            counted_steps += lb.steps;
        }
    }
    stats.steps = static_cast<int>(steps.size());
    stats.policy_loss = pl_sum / minibatches;
    stats.value_loss = vl_sum / minibatches;
    stats.entropy = ent_sum / counted_steps;
    stats.approx_kl = kl_sum / counted_steps;
    stats.grad_norm = gn_sum / minibatches;
    return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints: "RLPL" magic, u32 version, then length-prefixed named blocks
// of little-endian 64-bit floats.

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_block(std::string& out, const std::string& name, const Vec& values) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u64(out, values.size());
    for (double d : values) put_f64(out, d);
}

}  // namespace detail

struct Checkpoint {
    PolicyValueParams params;
    AdamState opt;
    uint64_t iteration = 0;
    uint64_t config_hash = 0;
};

inline uint64_t fnv1a_hash(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    std::string out = "RLPL";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, ck.config_hash);
    detail::put_u64(out, ck.iteration);
    detail::put_u64(out, static_cast<uint64_t>(ck.opt.t));

    uint32_t n_blocks = 0;
    ck.params.for_each_array([&](const char*, const Vec&) { n_blocks += 3; });
    detail::put_u32(out, n_blocks);
    size_t k = 0;
    ck.params.for_each_array([&](const char* name, const Vec& arr) {
        detail::put_block(out, name, arr);
        detail::put_block(out, std::string(name) + ".m", ck.opt.m[k]);
        detail::put_block(out, std::string(name) + ".v", ck.opt.v[k]);
        ++k;
    });
    return out;
}

// `proto` supplies the parameter shapes; stored blocks are matched by name.
inline Checkpoint deserialize_checkpoint(const std::string& bytes, const PolicyValueParams& proto) {
    detail::ByteReader r{bytes};
    if (r.bytes(4) != "RLPL") throw std::runtime_error("checkpoint: bad magic");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.params = proto;
    ck.opt = AdamState::for_params(proto);
    ck.config_hash = r.u64();
    ck.iteration = r.u64();
    ck.opt.t = static_cast<int64_t>(r.u64());

    std::map<std::string, Vec> blocks;
    const uint32_t n_blocks = r.u32();
    for (uint32_t b = 0; b < n_blocks; ++b) {
        const uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const uint64_t count = r.u64();
        Vec values(count);
        for (auto& d : values) d = r.f64();
        blocks[name] = std::move(values);
    }
    auto take = [&](const std::string& name, Vec& dst) {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw std::runtime_error("checkpoint: missing block " + name);
        if (it->second.size() != dst.size())
            throw std::runtime_error("checkpoint: block " + name + " has wrong size");
        dst = std::move(it->second);
    };
    size_t k = 0;
    ck.params.for_each_array([&](const char* name, Vec& arr) {
        take(name, arr);
        take(std::string(name) + ".m", ck.opt.m[k]);
        take(std::string(name) + ".v", ck.opt.v[k]);
        ++k;
    });
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    const std::string bytes = serialize_checkpoint(ck);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path, const PolicyValueParams& proto) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, proto);
}

// ---------------------------------------------------------------------------
// Training loop

struct IterationMetrics {
    uint64_t iteration = 0;
    int episodes = 0;
    int failed = 0;
    double mean_reward = 0.0;
    double mean_hpwl_um = 0.0;
    double mean_congestion = 0.0;
    double mean_density_peak = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double grad_norm = 0.0;
    double learning_rate = 0.0;
};

inline const char* metrics_header() {
    return "iteration,episodes,failed,mean_reward,mean_hpwl_um,mean_congestion,"
           "mean_density_peak,policy_loss,value_loss,entropy,approx_kl,grad_norm,learning_rate";
}

inline std::string metrics_row(const IterationMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%llu,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                  static_cast<unsigned long long>(m.iteration), m.episodes, m.failed, m.mean_reward,
                  m.mean_hpwl_um, m.mean_congestion, m.mean_density_peak, m.policy_loss,
                  m.value_loss, m.entropy, m.approx_kl, m.grad_norm, m.learning_rate);
    return buf;
}

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<IterationMetrics> metrics;
};

inline uint64_t config_hash(const CanvasConfig& canvas, const TrainConfig& train) {
    char buf[640];
    std::snprintf(buf, sizeof(buf),
                  "rows=%d cols=%d cell_w=%.17g cell_h=%.17g cap=%.17g lambda=%.17g mode=%d "
                  "gamma=%.17g beta=%.17g eta=%.17g clip=%.17g epochs=%d mb=%d lr=%.17g eps=%d "
                  "clusters=%d",
                  canvas.rows, canvas.cols, canvas.cell_w_um, canvas.cell_h_um, canvas.density_cap,
                  canvas.congestion_weight, static_cast<int>(canvas.reward_mode), train.gamma,
                  train.value_coef, train.entropy_coef, train.clip_epsilon, train.epochs,
                  train.minibatch_size, train.learning_rate, train.episodes_per_iteration,
                  train.target_clusters);
    return fnv1a_hash(buf);
}

// collect -> update loop with per-iteration metrics; `sink` receives each
// metrics row as it is produced (the CLI streams it to the metrics file).
inline TrainResult train(const std::vector<InstanceContext>& ctx, const CanvasConfig& canvas,
                         const TrainConfig& cfg,
                         const std::function<void(const IterationMetrics&)>& sink = {},
                         const Checkpoint* resume = nullptr,
                         const std::function<void(const Checkpoint&)>& checkpoint_sink = {}) {
    cfg.validate();
    if (ctx.empty()) throw std::invalid_argument("train: need at least one netlist");
    const uint64_t chash = config_hash(canvas, cfg);

    TrainResult out;
    Checkpoint& ck = out.checkpoint;
    if (resume) {
        if (resume->config_hash != chash)
            throw std::runtime_error("checkpoint config hash mismatch; refusing to resume");
        ck = *resume;
    } else {
        ck.params = init_policy_value_params(cfg.seed, canvas.num_cells());
        ck.opt = AdamState::for_params(ck.params);
        ck.config_hash = chash;
    }

    const uint64_t first = ck.iteration;
    for (uint64_t iter = first; iter < first + static_cast<uint64_t>(cfg.iterations); ++iter) {
        const RolloutBatch batch =
            collect_rollouts(ck.params, ctx, cfg.episodes_per_iteration,
                             Rng::derive(cfg.seed, 0x1000 + iter), cfg.gamma, cfg.workers);
        IterationMetrics m;
        m.iteration = iter;
        m.episodes = static_cast<int>(batch.episodes.size());
        m.failed = batch.failed_count;
        int ok = 0;
        for (const auto& ep : batch.episodes) {
            if (ep.failed) continue;
            ++ok;
            m.mean_reward += ep.terminal.reward;
            m.mean_hpwl_um += ep.terminal.hpwl_um;
            m.mean_congestion += ep.terminal.congestion;
            m.mean_density_peak += ep.terminal.density_peak;
        }
        if (ok > 0) {
            m.mean_reward /= ok;
            m.mean_hpwl_um /= ok;
            m.mean_congestion /= ok;
            m.mean_density_peak /= ok;
        }
        const UpdateStats st =
            ppo_update(ck.params, ck.opt, batch, ctx, cfg, Rng::derive(cfg.seed, 0x2000 + iter));
        m.policy_loss = st.policy_loss;
        m.value_loss = st.value_loss;
        m.entropy = st.entropy;
        m.approx_kl = st.approx_kl;
        m.grad_norm = st.grad_norm;
        m.learning_rate = cfg.learning_rate;
        ck.iteration = iter + 1;
        out.metrics.push_back(m);
        if (sink) sink(m);
        if (checkpoint_sink && cfg.checkpoint_every > 0 &&
            ck.iteration % static_cast<uint64_t>(cfg.checkpoint_every) == 0)
            checkpoint_sink(ck);
        log::info("iteration %llu reward %.4f hpwl %.1f", static_cast<unsigned long long>(iter),
                  m.mean_reward, m.mean_hpwl_um);
    }
    if (checkpoint_sink) checkpoint_sink(ck);
    return out;
}

// Deterministic greedy evaluation; returns the final state and its score.
inline std::pair<PlacementState, RewardBreakdown> greedy_place(const PolicyValueParams& params,
                                                               const InstanceContext& ctx) {
    const NodeEmbedding emb = forward_embed(params.embed, ctx.graph, ctx.features);
    PlacementState s = ctx.env.reset();
    RewardBreakdown rb;
    if (s.done) return {s, ctx.env.terminal_reward(s)};
    while (!s.done) {
        const ActionMask mask = ctx.env.legal_mask(s);
        if (mask.count == 0) throw std::runtime_error("greedy_place: dead-end state");
        const Vec enc = encode_state(emb, s.order[static_cast<size_t>(s.t)],
                                     metadata_vector(ctx.env, s.t));
        const PolicyEval pe = masked_policy(params, enc, mask.legal);
        int action = -1;
        double best = -1.0;
        for (size_t i = 0; i < pe.probs.size(); ++i)
            if (mask.legal[i] && pe.probs[i] > best) {
                best = pe.probs[i];
                action = static_cast<int>(i);
            }
        StepResult res = ctx.env.step(s, action);
        rb = res.reward;
        s = std::move(res.state);
    }
    return {s, rb};
}

}  // namespace rlplace
