#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "rlplace/place_env.hpp"

namespace rlplace {

struct RenderOptions {
    double scale = 6.0;  // svg units per um
    bool show_nets = false;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace detail

// Deterministic SVG: grid, macro rectangles with ids, cluster dots, and
// optional net bounding boxes shaded by demand. Y axis is flipped so the
// canvas origin sits at the lower left.
inline std::string render_svg(const PlacementEnv& env, const PlacementState& s,
                              const std::vector<PointUm>& coords, const RenderOptions& opt = {}) {
    const auto& cfg = env.config();
    const double W = cfg.width_um() * opt.scale, H = cfg.height_um() * opt.scale;
    auto X = [&](double um) { return detail::fmt(um * opt.scale); };
    auto Y = [&](double um) { return detail::fmt(H - um * opt.scale); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(W) + "\" height=\"" +
           detail::fmt(H) + "\" viewBox=\"0 0 " + detail::fmt(W) + " " + detail::fmt(H) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + detail::fmt(W) + "\" height=\"" + detail::fmt(H) +
           "\" fill=\"#fafafa\" stroke=\"#444\"/>\n";
    for (int c = 1; c < cfg.cols; ++c)
        svg += "<line x1=\"" + X(c * cfg.cell_w_um) + "\" y1=\"0\" x2=\"" + X(c * cfg.cell_w_um) +
               "\" y2=\"" + detail::fmt(H) + "\" stroke=\"#ddd\"/>\n";
    for (int r = 1; r < cfg.rows; ++r)
        svg += "<line x1=\"0\" y1=\"" + Y(r * cfg.cell_h_um) + "\" x2=\"" + detail::fmt(W) +
               "\" y2=\"" + Y(r * cfg.cell_h_um) + "\" stroke=\"#ddd\"/>\n";

    if (opt.show_nets) {
        const auto pins = env.net_pin_positions(s, coords);
        for (const auto& net : pins) {
            if (net.size() < 2) continue;
            double minx = net[0].first, maxx = net[0].first, miny = net[0].second, maxy = net[0].second;
            for (const auto& [x, y] : net) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
            const double span = (maxx - minx) + (maxy - miny);
            const int shade = std::clamp(255 - static_cast<int>(span / cfg.cell_w_um * 8.0), 64, 255);
            char color[16];
            std::snprintf(color, sizeof(color), "#ff%02x%02x", shade, shade);
            svg += "<rect x=\"" + X(minx) + "\" y=\"" + Y(maxy) + "\" width=\"" +
                   detail::fmt((maxx - minx) * opt.scale) + "\" height=\"" +
                   detail::fmt((maxy - miny) * opt.scale) + "\" fill=\"none\" stroke=\"" + color +
                   "\" stroke-width=\"0.8\"/>\n";
        }
    }

    for (const auto& node : env.netlist().nodes) {
        if (node.kind != NodeKind::Macro || s.position[static_cast<size_t>(node.id)] < 0) continue;
        const PointUm o = env.macro_origin_um(s.position[static_cast<size_t>(node.id)]);
        svg += "<rect x=\"" + X(o.first) + "\" y=\"" + Y(o.second + node.height_um) + "\" width=\"" +
               detail::fmt(node.width_um * opt.scale) + "\" height=\"" +
               detail::fmt(node.height_um * opt.scale) +
               "\" fill=\"#7fa8d9\" fill-opacity=\"0.8\" stroke=\"#1f3a5f\"/>\n";
        svg += "<text x=\"" + X(o.first + node.width_um / 2) + "\" y=\"" +
               Y(o.second + node.height_um / 2) +
               "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#102030\">" +
               std::to_string(node.id) + "</text>\n";
    }
    for (const auto& node : env.netlist().nodes) {
        if (node.kind != NodeKind::StdCell) continue;
        const PointUm& p = coords[static_cast<size_t>(node.id)];
        svg += "<circle cx=\"" + X(p.first) + "\" cy=\"" + Y(p.second) +
               "\" r=\"2.5\" fill=\"#c55\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace rlplace
