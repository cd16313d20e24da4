#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rlplace/logging.hpp"
#include "rlplace/netlist.hpp"
#include "rlplace/rng.hpp"

namespace rlplace {

enum class RewardMode { LiteralEq6, BaselineNormalized };

struct CanvasConfig {
    int rows = 16;
    int cols = 16;
    double cell_w_um = 10.0;
    double cell_h_um = 10.0;
    double density_cap = 1.0;
    double congestion_weight = 1.0;  // lambda
    RewardMode reward_mode = RewardMode::BaselineNormalized;
    int refine_iters = 200;
    double refine_tol_factor = 1e-3;  // tolerance = factor * cell_w_um
    int baseline_samples = 32;

    double width_um() const { return cols * cell_w_um; }
    double height_um() const { return rows * cell_h_um; }
    int num_cells() const { return rows * cols; }

    void validate(int n_macros) const {
        if (rows < 1 || cols < 1 || rows > 32 || cols > 32)
            throw std::invalid_argument("canvas grid must be between 1x1 and 32x32");
        if (cell_w_um <= 0.0 || cell_h_um <= 0.0)
            throw std::invalid_argument("canvas cell dimensions must be positive");
        if (congestion_weight < 0.0)
            throw std::invalid_argument("congestion weight must be nonnegative");
        if (rows * cols < n_macros)
            throw std::invalid_argument("grid has fewer cells than macros");
    }
};

struct PlacementState {
    int t = 0;
    std::vector<int> order;      // macro node ids, descending area, ties by id
    std::vector<int> position;   // per node: placed cell index, -1 otherwise
    std::vector<double> occupancy;  // per grid cell
    bool done = false;
};

struct ActionMask {
    std::vector<char> legal;
    int count = 0;
};

struct RewardBreakdown {
    double hpwl_um = 0.0;
    double congestion = 0.0;
    double density_peak = 0.0;
    double reward = 0.0;
    double baseline_hpwl_um = 0.0;  // H_rand (BaselineNormalized mode only)
};

struct StepResult {
    PlacementState state;
    RewardBreakdown reward;
    bool done = false;
};

struct RefineResult {
    std::vector<std::pair<double, double>> coords;  // per compact node; movables refined
    bool converged = false;
    int sweeps = 0;
};

using PointUm = std::pair<double, double>;

// Sum over nets of the bounding-box half perimeter. Nets with fewer than two
// pins contribute zero.
inline double hpwl(const std::vector<std::vector<PointUm>>& net_pins) {
    double total = 0.0;
    for (const auto& pins : net_pins) {
        if (pins.empty()) continue;
        double minx = pins[0].first, maxx = pins[0].first;
        double miny = pins[0].second, maxy = pins[0].second;
        for (const auto& [x, y] : pins) {
            minx = std::min(minx, x);
            maxx = std::max(maxx, x);
            miny = std::min(miny, y);
            maxy = std::max(maxy, y);
        }
        total += (maxx - minx) + (maxy - miny);
    }
    return total;
}

// RUDY-style demand: each net spreads its half perimeter uniformly over the
// grid cells its bounding box touches; score is the mean of the top 10% most
// demanded cells, normalized by the cell perimeter.
inline double congestion(const CanvasConfig& cfg, const std::vector<std::vector<PointUm>>& net_pins) {
    std::vector<double> demand(static_cast<size_t>(cfg.num_cells()), 0.0);
    auto cell_index = [](double v, double size, int count) {
        int i = static_cast<int>(std::floor(v / size));
        return std::clamp(i, 0, count - 1);
    };
    for (const auto& pins : net_pins) {
        if (pins.size() < 2) continue;
        double minx = pins[0].first, maxx = pins[0].first;
        double miny = pins[0].second, maxy = pins[0].second;
        for (const auto& [x, y] : pins) {
            minx = std::min(minx, x);
            maxx = std::max(maxx, x);
            miny = std::min(miny, y);
            maxy = std::max(maxy, y);
        }
        const double span = (maxx - minx) + (maxy - miny);
        if (span <= 0.0) continue;
        const int ix0 = cell_index(minx, cfg.cell_w_um, cfg.cols);
        const int ix1 = cell_index(maxx, cfg.cell_w_um, cfg.cols);
        const int iy0 = cell_index(miny, cfg.cell_h_um, cfg.rows);
        const int iy1 = cell_index(maxy, cfg.cell_h_um, cfg.rows);
        const double share = span / ((ix1 - ix0 + 1) * (iy1 - iy0 + 1));
        for (int r = iy0; r <= iy1; ++r)
            for (int c = ix0; c <= ix1; ++c) demand[static_cast<size_t>(r) * cfg.cols + c] += share;
    }
    std::sort(demand.begin(), demand.end(), std::greater<>());
    const int k = std::max(1, (cfg.num_cells() + 9) / 10);
    double mean = 0.0;
    for (int i = 0; i < k; ++i) mean += demand[static_cast<size_t>(i)];
    mean /= k;
    return mean / (2.0 * (cfg.cell_w_um + cfg.cell_h_um));
}

// The placement MDP over one clustered netlist. A single instance is not
// safe for concurrent stepping; use one instance per rollout worker.
class PlacementEnv {
public:
    PlacementEnv(const ClusteredNetlist& cn, const CanvasConfig& cfg)
        : netlist_(cn.to_netlist()), cfg_(cfg) {
        const int n = static_cast<int>(netlist_.nodes.size());
        cfg_.validate(netlist_.macro_count());
        foot_w_.resize(n, 0);
        foot_h_.resize(n, 0);
        for (const auto& node : netlist_.nodes) {
            if (node.kind != NodeKind::Macro) continue;
            foot_w_[node.id] = std::max(1, static_cast<int>(std::ceil(node.width_um / cfg_.cell_w_um - 1e-9)));
            foot_h_[node.id] = std::max(1, static_cast<int>(std::ceil(node.height_um / cfg_.cell_h_um - 1e-9)));
            if (foot_w_[node.id] > cfg_.cols || foot_h_[node.id] > cfg_.rows)
                throw std::invalid_argument("macro " + std::to_string(node.id) + " larger than canvas");
        }
        init_port_positions();
    }

    const Netlist& netlist() const { return netlist_; }
    const CanvasConfig& config() const { return cfg_; }
    int num_actions() const { return cfg_.num_cells(); }

    int num_macros() const { return netlist_.macro_count(); }

    PlacementState reset(uint64_t /*seed*/ = 0) const {
        PlacementState s;
        for (const auto& node : netlist_.nodes)
            if (node.kind == NodeKind::Macro) s.order.push_back(node.id);
        std::sort(s.order.begin(), s.order.end(), [&](int a, int b) {
            const double aa = netlist_.nodes[a].area_um2(), ab = netlist_.nodes[b].area_um2();
            if (aa != ab) return aa > ab;
            return a < b;
        });
        s.position.assign(netlist_.nodes.size(), -1);
        s.occupancy.assign(static_cast<size_t>(cfg_.num_cells()), 0.0);
        s.done = s.order.empty();
        return s;
    }

    ActionMask legal_mask(const PlacementState& s) const {
        if (s.done) throw std::invalid_argument("legal_mask called on terminal state");
        const int macro = s.order[s.t];
        const int fw = foot_w_[macro], fh = foot_h_[macro];
        ActionMask m;
        m.legal.assign(static_cast<size_t>(cfg_.num_cells()), 0);
        for (int r = 0; r + fh <= cfg_.rows; ++r)
            for (int c = 0; c + fw <= cfg_.cols; ++c) {
                bool ok = true;
                for (int rr = r; ok && rr < r + fh; ++rr)
                    for (int cc = c; ok && cc < c + fw; ++cc)
                        if (s.occupancy[static_cast<size_t>(rr) * cfg_.cols + cc] + 1.0 >
                            cfg_.density_cap + 1e-9)
                            ok = false;
                if (ok) {
                    m.legal[static_cast<size_t>(r) * cfg_.cols + c] = 1;
                    ++m.count;
                }
            }
        return m;
    }

    StepResult step(const PlacementState& s, int action) const {
        if (s.done) throw std::invalid_argument("step called on terminal state");
        if (action < 0 || action >= cfg_.num_cells())
            throw std::invalid_argument("action out of range");
        const ActionMask m = legal_mask(s);
        if (!m.legal[static_cast<size_t>(action)])
            throw std::invalid_argument("illegal action " + std::to_string(action));

        StepResult out;
        out.state = s;
        apply_unchecked(out.state, action);
        out.done = out.state.done;
        if (out.done) out.reward = terminal_reward(out.state);
        return out;
    }

    // Places without re-deriving the mask; caller guarantees legality.
    void apply_unchecked(PlacementState& s, int action) const {
        const int macro = s.order[s.t];
        const int r0 = action / cfg_.cols, c0 = action % cfg_.cols;
        for (int rr = r0; rr < r0 + foot_h_[macro]; ++rr)
            for (int cc = c0; cc < c0 + foot_w_[macro]; ++cc)
                s.occupancy[static_cast<size_t>(rr) * cfg_.cols + cc] += 1.0;
        s.position[macro] = action;
        ++s.t;
        s.done = s.t == static_cast<int>(s.order.size());
    }

    RewardBreakdown terminal_reward(const PlacementState& s) const {
        if (!s.done) throw std::invalid_argument("terminal_reward called before episode end");
        const RefineResult refined = refine(s);
        return score(s, refined);
    }

    RewardBreakdown score(const PlacementState& s, const RefineResult& refined) const {
        RewardBreakdown rb;
        const auto pins = net_pin_positions(s, refined.coords);
        rb.hpwl_um = hpwl(pins);
        rb.congestion = congestion(cfg_, pins);
        for (double o : s.occupancy) rb.density_peak = std::max(rb.density_peak, o);
        const double lam = cfg_.congestion_weight;
        if (cfg_.reward_mode == RewardMode::LiteralEq6) {
            // (-H - lam*C)/H == -1 - lam*C/H; exactly -1 whenever C == 0
            const double denom = rb.hpwl_um > 0.0 ? rb.hpwl_um : 1.0;
            rb.reward = -1.0 - lam * rb.congestion / denom;
        } else {
            rb.baseline_hpwl_um = baseline_hpwl();
            const double denom = rb.baseline_hpwl_um > 0.0 ? rb.baseline_hpwl_um : 1.0;
            rb.reward = -(rb.hpwl_um + lam * rb.congestion) / denom;
        }
        return rb;
    }

    // Force-directed refinement: Jacobi sweeps moving each cluster to the
    // connectivity-weighted centroid of its net neighbors, clamped to canvas.
    RefineResult refine(const PlacementState& s) const {
        const int n = static_cast<int>(netlist_.nodes.size());
        RefineResult out;
        out.coords.assign(static_cast<size_t>(n), {cfg_.width_um() / 2.0, cfg_.height_um() / 2.0});
        std::vector<int> movable;  // cluster nodes
        for (const auto& node : netlist_.nodes) {
            if (node.kind == NodeKind::StdCell)
                movable.push_back(node.id);
            else
                out.coords[static_cast<size_t>(node.id)] = fixed_position(s, node.id);
        }
        if (movable.empty()) {
            out.converged = true;
            return out;
        }
        std::vector<int> movable_index(n, -1);
        for (size_t i = 0; i < movable.size(); ++i) movable_index[movable[i]] = static_cast<int>(i);

        // Pairwise terms from clique expansion of each net over pin points.
        struct Anchor {
            double w = 0.0, wx = 0.0, wy = 0.0, wnorm = 0.0;
        };
        std::vector<Anchor> anchors(movable.size());
        std::vector<std::map<int, double>> edges(movable.size());  // movable idx -> weight
        for (const auto& net : netlist_.nets) {
            const auto& ps = net.pins;
            for (size_t i = 0; i < ps.size(); ++i)
                for (size_t j = i + 1; j < ps.size(); ++j) {
                    const int u = ps[i].node, v = ps[j].node;
                    const int mu = movable_index[u], mv = movable_index[v];
                    if (mu < 0 && mv < 0) continue;
                    if (mu >= 0 && mv >= 0) {
                        if (mu == mv) continue;
                        edges[static_cast<size_t>(mu)][mv] += 1.0;
                        edges[static_cast<size_t>(mv)][mu] += 1.0;
                    } else {
                        const int m = mu >= 0 ? mu : mv;
                        const auto& fp = mu >= 0 ? ps[j] : ps[i];
                        const PointUm base = out.coords[static_cast<size_t>(fp.node)];
                        const double ax = base.first + fp.dx_um, ay = base.second + fp.dy_um;
                        auto& a = anchors[static_cast<size_t>(m)];
                        a.w += 1.0;
                        a.wx += ax;
                        a.wy += ay;
                        a.wnorm += ax * ax + ay * ay;
                    }
                }
        }

        std::vector<PointUm> pos(movable.size(), {cfg_.width_um() / 2.0, cfg_.height_um() / 2.0});
        auto objective = [&] {
            double f = 0.0;
            for (size_t i = 0; i < movable.size(); ++i) {
                const auto& [x, y] = pos[i];
                const auto& a = anchors[i];
                f += a.w * (x * x + y * y) - 2.0 * (x * a.wx + y * a.wy) + a.wnorm;
                for (const auto& [j, w] : edges[i]) {
                    if (static_cast<size_t>(j) < i) continue;  // count each pair once
                    const double dx = x - pos[static_cast<size_t>(j)].first;
                    const double dy = y - pos[static_cast<size_t>(j)].second;
                    f += w * (dx * dx + dy * dy);
                }
            }
            return f;
        };

        const double tol = cfg_.refine_tol_factor * cfg_.cell_w_um;
        double prev_obj = objective();
        for (out.sweeps = 0; out.sweeps < cfg_.refine_iters; ++out.sweeps) {
            std::vector<PointUm> next = pos;
            double max_disp = 0.0;
            for (size_t i = 0; i < movable.size(); ++i) {
                const auto& a = anchors[i];
                double wsum = a.w, wx = a.wx, wy = a.wy;
                for (const auto& [j, w] : edges[i]) {
                    wsum += w;
                    wx += w * pos[static_cast<size_t>(j)].first;
                    wy += w * pos[static_cast<size_t>(j)].second;
                }
                if (wsum <= 0.0) continue;  // unconnected: stays put
                double nx = std::clamp(wx / wsum, 0.0, cfg_.width_um());
                double ny = std::clamp(wy / wsum, 0.0, cfg_.height_um());
                max_disp = std::max(max_disp, std::hypot(nx - pos[i].first, ny - pos[i].second));
                next[i] = {nx, ny};
            }
            pos = std::move(next);
            const double obj = objective();
            if (obj > prev_obj + 1e-9 * (1.0 + std::abs(prev_obj)))
                throw std::runtime_error("force_directed_refine: objective increased");
            prev_obj = obj;
            if (max_disp <= tol) {
                out.converged = true;
                ++out.sweeps;
                break;
            }
        }
        if (!out.converged)
            log::warn("force_directed_refine: not converged after %d sweeps", out.sweeps);
        for (size_t i = 0; i < movable.size(); ++i) out.coords[static_cast<size_t>(movable[i])] = pos[i];
        return out;
    }

    // Pin coordinates per net, given macro cells and refined cluster coords.
    std::vector<std::vector<PointUm>> net_pin_positions(
        const PlacementState& s, const std::vector<PointUm>& coords) const {
        std::vector<std::vector<PointUm>> out(netlist_.nets.size());
        for (size_t e = 0; e < netlist_.nets.size(); ++e)
            for (const auto& p : netlist_.nets[e].pins) {
                const Node& node = netlist_.nodes[static_cast<size_t>(p.node)];
                PointUm base;
                if (node.kind == NodeKind::Macro) {
                    base = macro_pin_base(s, p.node);
                } else {
                    base = coords[static_cast<size_t>(p.node)];
                }
                out[e].push_back({base.first + p.dx_um, base.second + p.dy_um});
            }
        return out;
    }

    // Macro pins hang off the center of the origin cell.
    PointUm macro_pin_base(const PlacementState& s, int macro) const {
        const int cell = s.position[static_cast<size_t>(macro)];
        if (cell < 0) throw std::invalid_argument("macro " + std::to_string(macro) + " not placed");
        const int r = cell / cfg_.cols, c = cell % cfg_.cols;
        return {c * cfg_.cell_w_um + cfg_.cell_w_um / 2.0, r * cfg_.cell_h_um + cfg_.cell_h_um / 2.0};
    }

    PointUm macro_origin_um(int cell) const {
        const int r = cell / cfg_.cols, c = cell % cfg_.cols;
        return {c * cfg_.cell_w_um, r * cfg_.cell_h_um};
    }

    std::pair<int, int> footprint_cells(int macro) const { return {foot_w_[macro], foot_h_[macro]}; }

    // Mean HPWL of seeded random legal placements of this instance. Seeds are
    // fixed constants so the value is a pure function of (netlist, config),
    // which keeps `eval` recomputation exact.
    double baseline_hpwl() const {
        if (baseline_hpwl_ >= 0.0) return baseline_hpwl_;
        double total = 0.0;
        int successes = 0;
        for (int i = 0; i < cfg_.baseline_samples; ++i) {
            std::optional<PlacementState> s;
            for (int attempt = 0; attempt < 16 && !s; ++attempt) {
                Rng rng(Rng::derive(0xba5e11ull, static_cast<uint64_t>(i * 16 + attempt)));
                s = try_random_placement(rng);
            }
            if (!s) continue;
            const RefineResult refined = refine(*s);
            total += hpwl(net_pin_positions(*s, refined.coords));
            ++successes;
        }
        if (successes == 0) throw std::runtime_error("baseline_hpwl: no legal random placement found");
        baseline_hpwl_ = total / successes;
        return baseline_hpwl_;
    }

    // Builds a complete state from per-macro cells (aligned with reset()'s
    // order); nullopt on any out-of-bounds or colliding footprint.
    std::optional<PlacementState> try_state_from_cells(const std::vector<int>& cells) const {
        PlacementState s = reset();
        if (cells.size() != s.order.size())
            throw std::invalid_argument("try_state_from_cells: wrong cell count");
        for (size_t i = 0; i < s.order.size(); ++i) {
            const int macro = s.order[i];
            const int cell = cells[i];
            if (cell < 0 || cell >= cfg_.num_cells()) return std::nullopt;
            const int r0 = cell / cfg_.cols, c0 = cell % cfg_.cols;
            if (r0 + foot_h_[macro] > cfg_.rows || c0 + foot_w_[macro] > cfg_.cols)
                return std::nullopt;
            for (int r = r0; r < r0 + foot_h_[macro]; ++r)
                for (int c = c0; c < c0 + foot_w_[macro]; ++c)
                    if (s.occupancy[static_cast<size_t>(r) * cfg_.cols + c] + 1.0 >
                        cfg_.density_cap + 1e-9)
                        return std::nullopt;
            apply_unchecked(s, cell);
        }
        return s;
    }

    std::optional<PlacementState> try_random_placement(Rng& rng) const {
        PlacementState s = reset();
        while (!s.done) {
            const ActionMask m = legal_mask(s);
            if (m.count == 0) return std::nullopt;
            int pick = static_cast<int>(rng.uniform_u64(static_cast<uint64_t>(m.count)));
            int action = -1;
            for (int c = 0; c < cfg_.num_cells(); ++c) {
                if (!m.legal[static_cast<size_t>(c)]) continue;
                if (pick-- == 0) {
                    action = c;
                    break;
                }
            }
            apply_unchecked(s, action);
        }
        return s;
    }

    PointUm port_position(int node) const { return port_pos_.at(node); }

private:
    PointUm fixed_position(const PlacementState& s, int node) const {
        const Node& nd = netlist_.nodes[static_cast<size_t>(node)];
        if (nd.kind == NodeKind::Macro) return macro_pin_base(s, node);
        return port_pos_.at(node);  // Port
    }

    // Ports sit on an IO ring: evenly spaced along the canvas perimeter,
    // counterclockwise from the lower-left corner, in id order.
    void init_port_positions() {
        std::vector<int> ports;
        for (const auto& n : netlist_.nodes)
            if (n.kind == NodeKind::Port) ports.push_back(n.id);
        if (ports.empty()) return;
        const double w = cfg_.width_um(), h = cfg_.height_um();
        const double per = 2.0 * (w + h);
        for (size_t i = 0; i < ports.size(); ++i) {
            double d = (static_cast<double>(i) + 0.5) / static_cast<double>(ports.size()) * per;
            PointUm p;
            if (d < w)
                p = {d, 0.0};
            else if ((d -= w) < h)
                p = {w, d};
            else if ((d -= h) < w)
                p = {w - d, h};
            else
                p = {0.0, d - w};
            port_pos_[ports[i]] = p;
        }
    }

    Netlist netlist_;
    CanvasConfig cfg_;
    std::vector<int> foot_w_, foot_h_;
    std::map<int, PointUm> port_pos_;
    mutable double baseline_hpwl_ = -1.0;
};

}  // namespace rlplace
