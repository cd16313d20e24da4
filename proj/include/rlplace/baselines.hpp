#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rlplace/place_env.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

struct PlacementOutcome {
    PlacementState state;
    RewardBreakdown reward;
};

// Uniform choice over the legal mask at every step; scored through the same
// terminal pipeline as the RL environment.
inline PlacementOutcome random_place(const PlacementEnv& env, uint64_t seed) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(attempt)));
        auto s = env.try_random_placement(rng);
        if (s) return {*s, env.terminal_reward(*s)};
    }
    throw std::runtime_error("random_place: no legal placement after 16 reseeds");
}

struct SaSchedule {
    double t0 = -1.0;  // < 0: auto, 0.1 * initial cost
    double alpha = 0.9995;
    int steps = 20000;
};

namespace detail {

inline double placement_cost(const PlacementEnv& env, const PlacementState& s) {
    const RefineResult refined = env.refine(s);
    const auto pins = env.net_pin_positions(s, refined.coords);
    return hpwl(pins) + env.config().congestion_weight * congestion(env.config(), pins);
}

}  // namespace detail

// Simulated annealing from a random start: relocate-or-swap moves, Metropolis
// acceptance, geometric cooling, best-seen result returned.
inline PlacementOutcome sa_place(const PlacementEnv& env, const SaSchedule& schedule,
                                 uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x5aull));
    PlacementOutcome start = random_place(env, seed);
    const int n_macros = static_cast<int>(start.state.order.size());
    if (n_macros == 0 || schedule.steps == 0) return start;

    std::vector<int> cells(start.state.order.size());
    for (size_t i = 0; i < cells.size(); ++i)
        cells[i] = start.state.position[static_cast<size_t>(start.state.order[i])];

    double cost = detail::placement_cost(env, start.state);
    std::vector<int> best_cells = cells;
    double best_cost = cost;

    double temp = schedule.t0 < 0.0 ? 0.1 * cost : schedule.t0;
    const int num_cells = env.config().num_cells();
    for (int step = 0; step < schedule.steps; ++step, temp *= schedule.alpha) {
        std::vector<int> cand = cells;
        if (n_macros >= 2 && rng.uniform01() < 0.5) {
            const int a = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(n_macros)));
            int b = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(n_macros - 1)));
            if (b >= a) ++b;
            std::swap(cand[static_cast<size_t>(a)], cand[static_cast<size_t>(b)]);
        } else {
            const int a = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(n_macros)));
            cand[static_cast<size_t>(a)] = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(num_cells)));
        }
        auto s = env.try_state_from_cells(cand);
        if (!s) continue;
        const double c = detail::placement_cost(env, *s);
        const double delta = c - cost;
        bool accept = delta < 0.0;
        if (!accept && temp > 1e-300) accept = rng.uniform01() < std::exp(-delta / temp);
        if (accept) {
            cells = std::move(cand);
            cost = c;
            if (cost < best_cost) {
                best_cost = cost;
                best_cells = cells;
            }
        }
    }
    auto best = env.try_state_from_cells(best_cells);
    return {*best, env.terminal_reward(*best)};
}

// Enumerates every legal assignment (lexicographic in macro order then cell
// index) and returns the first minimum of HPWL + lambda * congestion.
inline PlacementOutcome exhaustive_place(const PlacementEnv& env, double guard = 1e7) {
    PlacementState proto = env.reset();
    const int n_macros = static_cast<int>(proto.order.size());
    if (std::pow(static_cast<double>(env.config().num_cells()), n_macros) > guard)
        throw std::invalid_argument("exhaustive_place: search space exceeds guard");
    if (n_macros == 0) return {proto, env.terminal_reward(proto)};

    std::vector<int> cells(static_cast<size_t>(n_macros), -1);
    std::vector<int> best_cells;
    double best_cost = 0.0;

    std::function<void(PlacementState&, int)> dfs = [&](PlacementState& s, int depth) {
        if (depth == n_macros) {
            const double c = detail::placement_cost(env, s);
            if (best_cells.empty() || c < best_cost) {
                best_cost = c;
                best_cells = cells;
            }
            return;
        }
        const ActionMask mask = env.legal_mask(s);
        for (int cell = 0; cell < env.config().num_cells(); ++cell) {
            if (!mask.legal[static_cast<size_t>(cell)]) continue;
            PlacementState next = s;
            env.apply_unchecked(next, cell);
            cells[static_cast<size_t>(depth)] = cell;
            dfs(next, depth + 1);
        }
    };
    dfs(proto, 0);
    if (best_cells.empty()) throw std::runtime_error("exhaustive_place: no legal placement");
    auto best = env.try_state_from_cells(best_cells);
    return {*best, env.terminal_reward(*best)};
}

}  // namespace rlplace
