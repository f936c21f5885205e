#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dfm/common.hpp"

namespace dfm {

/// Figure inputs are plain 2-D point lists so plots can be built straight
/// from CSV dumps without touching the numeric modules.
struct PlotGroup {
    int class_id = 0;
    std::vector<std::array<double, 2>> points;
};

struct PlotPath {
    int class_id = 0;
    std::vector<std::array<double, 2>> points;
};

inline const std::vector<std::string>& class_palette() {
    static const std::vector<std::string> p = {
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
        "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return p;
}

inline const std::string& class_color(int class_id) {
    const auto& p = class_palette();
    return p[static_cast<std::size_t>(class_id) % p.size()];
}

namespace detail {

// fixed two-decimal pixel coordinates keep the output byte-stable
inline std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

struct Frame {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // data bounds
    double px0 = 0, py0 = 0, w = 1, h = 1;  // pixel viewport

    double X(double x) const { return px0 + (x - x0) / (x1 - x0) * w; }
    double Y(double y) const { return py0 + (y1 - y) / (y1 - y0) * h; }
};

struct Bounds {
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    bool any = false;

    void add(double x, double y) {
        if (!any) {
            x0 = x1 = x;
            y0 = y1 = y;
            any = true;
        } else {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    void pad(double frac) {
        if (!any) {
            x0 = y0 = -1;
            x1 = y1 = 1;
            return;
        }
        double dx = x1 - x0, dy = y1 - y0;
        if (dx <= 0) dx = 1;
        if (dy <= 0) dy = 1;
        x0 -= frac * dx;
        x1 += frac * dx;
        y0 -= frac * dy;
        y1 += frac * dy;
    }
};

inline void frame_box(std::ostringstream& o, const Frame& f) {
    o << "<rect x=\"" << px(f.px0) << "\" y=\"" << px(f.py0) << "\" width=\"" << px(f.w)
      << "\" height=\"" << px(f.h) << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
}

inline void text(std::ostringstream& o, double x, double y, const std::string& s,
                 const std::string& anchor = "start", int size = 12,
                 const std::string& fill = "#333333") {
    o << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" font-family=\"sans-serif\" font-size=\""
      << size << "\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">" << xml_escape(s)
      << "</text>\n";
}

inline void scatter(std::ostringstream& o, const Frame& f, const PlotGroup& g, double r,
                    double opacity) {
    o << "<g fill=\"" << class_color(g.class_id) << "\" fill-opacity=\"" << px(opacity) << "\">\n";
    for (const auto& p : g.points)
        o << "<circle cx=\"" << px(f.X(p[0])) << "\" cy=\"" << px(f.Y(p[1])) << "\" r=\"" << px(r)
          << "\"/>\n";
    o << "</g>\n";
}

// Gaussian kernel density on a coarse grid, one translucent layer per class.
// Bandwidth follows the n^(-1/6) rule for two dimensions.
inline void kde_layer(std::ostringstream& o, const Frame& f, const PlotGroup& g, int cells) {
    if (g.points.empty()) return;
    double mx = 0, my = 0;
    for (const auto& p : g.points) {
        mx += p[0];
        my += p[1];
    }
    mx /= static_cast<double>(g.points.size());
    my /= static_cast<double>(g.points.size());
    double vx = 0, vy = 0;
    for (const auto& p : g.points) {
        vx += (p[0] - mx) * (p[0] - mx);
        vy += (p[1] - my) * (p[1] - my);
    }
    double n = static_cast<double>(g.points.size());
    double sd = std::sqrt(std::max((vx + vy) / (2.0 * n), 1e-12));
    double bw = sd * std::pow(n, -1.0 / 6.0);
    double cw = (f.x1 - f.x0) / cells, ch = (f.y1 - f.y0) / cells;

    std::vector<double> dens(static_cast<std::size_t>(cells) * cells, 0.0);
    double peak = 0.0;
    for (int iy = 0; iy < cells; ++iy) {
        for (int ix = 0; ix < cells; ++ix) {
            double cx = f.x0 + (ix + 0.5) * cw;
            double cy = f.y0 + (iy + 0.5) * ch;
            double acc = 0.0;
            for (const auto& p : g.points) {
                double dx = (cx - p[0]) / bw, dy = (cy - p[1]) / bw;
                double q = dx * dx + dy * dy;
                if (q < 25.0) acc += std::exp(-0.5 * q);
            }
            dens[static_cast<std::size_t>(iy) * cells + ix] = acc;
            peak = std::max(peak, acc);
        }
    }
    if (peak <= 0.0) return;
    o << "<g fill=\"" << class_color(g.class_id) << "\">\n";
    for (int iy = 0; iy < cells; ++iy) {
        for (int ix = 0; ix < cells; ++ix) {
            double a = 0.35 * dens[static_cast<std::size_t>(iy) * cells + ix] / peak;
            if (a < 0.02) continue;
            double x = f.X(f.x0 + ix * cw);
            double y = f.Y(f.y0 + (iy + 1) * ch);
            o << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(f.w / cells)
              << "\" height=\"" << px(f.h / cells) << "\" fill-opacity=\"" << px(a) << "\"/>\n";
        }
    }
    o << "</g>\n";
}

inline void polyline(std::ostringstream& o, const Frame& f,
                     const std::vector<std::array<double, 2>>& pts, const std::string& color,
                     double width, double opacity) {
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << px(width)
      << "\" stroke-opacity=\"" << px(opacity) << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) o << ' ';
        o << px(f.X(pts[i][0])) << ',' << px(f.Y(pts[i][1]));
    }
    o << "\"/>\n";
}

inline std::string svg_open(double w, double h) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w) << "\" height=\"" << px(h)
      << "\" viewBox=\"0 0 " << px(w) << ' ' << px(h) << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    return o.str();
}

// one scatter panel: density shading, data scatter, trajectories by class
inline void flow_panel(std::ostringstream& o, const Frame& f, const std::vector<PlotGroup>& data,
                       const std::vector<PlotPath>& paths, const std::string& title) {
    for (const auto& g : data) kde_layer(o, f, g, 48);
    for (const auto& g : data) scatter(o, f, g, 1.6, 0.45);

    std::vector<int> classes;
    for (const auto& p : paths)
        if (std::find(classes.begin(), classes.end(), p.class_id) == classes.end())
            classes.push_back(p.class_id);
    std::sort(classes.begin(), classes.end());
    for (int c : classes) {
        o << "<g class=\"traj-class-" << c << "\">\n";
        for (const auto& p : paths)
            if (p.class_id == c) polyline(o, f, p.points, class_color(c), 1.0, 0.5);
        o << "</g>\n";
    }
    frame_box(o, f);
    if (!title.empty()) text(o, f.px0 + 6, f.py0 + 16, title, "start", 13);
}

}  // namespace detail

/// Class-conditioned trajectories over the data scatter. 2-D only.
inline std::string svg_flows(const std::vector<PlotGroup>& data,
                             const std::vector<PlotPath>& paths,
                             const std::string& title = "") {
    detail::Bounds b;
    for (const auto& g : data)
        for (const auto& p : g.points) b.add(p[0], p[1]);
    for (const auto& t : paths)
        for (const auto& p : t.points) b.add(p[0], p[1]);
    b.pad(0.08);

    const double W = 560, H = 560, M = 30;
    detail::Frame f{b.x0, b.x1, b.y0, b.y1, M, M, W - 2 * M, H - 2 * M};
    std::ostringstream o;
    o << detail::svg_open(W, H);
    detail::flow_panel(o, f, data, paths, title);
    o << "</svg>\n";
    return o.str();
}

/// Two stacked sample panels sharing one coordinate frame, first input on
/// top. Used for objective comparisons.
inline std::string svg_panels(const std::vector<PlotGroup>& top,
                              const std::vector<PlotGroup>& bottom,
                              const std::string& top_title, const std::string& bottom_title) {
    detail::Bounds b;
    for (const auto* side : {&top, &bottom})
        for (const auto& g : *side)
            for (const auto& p : g.points) b.add(p[0], p[1]);
    b.pad(0.08);

    const double W = 560, PH = 300, M = 30, GAP = 14;
    const double H = 2 * PH + GAP + 2 * M;
    detail::Frame ft{b.x0, b.x1, b.y0, b.y1, M, M, W - 2 * M, PH};
    detail::Frame fb{b.x0, b.x1, b.y0, b.y1, M, M + PH + GAP, W - 2 * M, PH};
    std::ostringstream o;
    o << detail::svg_open(W, H);
    for (const auto& g : top) detail::kde_layer(o, ft, g, 40);
    for (const auto& g : top) detail::scatter(o, ft, g, 1.6, 0.5);
    detail::frame_box(o, ft);
    detail::text(o, ft.px0 + 6, ft.py0 + 16, top_title, "start", 13);
    for (const auto& g : bottom) detail::kde_layer(o, fb, g, 40);
    for (const auto& g : bottom) detail::scatter(o, fb, g, 1.6, 0.5);
    detail::frame_box(o, fb);
    detail::text(o, fb.px0 + 6, fb.py0 + 16, bottom_title, "start", 13);
    o << "</svg>\n";
    return o.str();
}

/// Row of snapshots showing where each path's denoised expectation sits at
/// the recorded times. paths[i].points here are expectations at snapshot j;
/// times labels the columns.
inline std::string svg_denoise_strip(const std::vector<std::vector<PlotGroup>>& snapshots,
                                     const std::vector<double>& times) {
    require(snapshots.size() == times.size(), "denoise strip: snapshot/time count mismatch");
    require(!snapshots.empty(), "denoise strip: nothing to draw");

    detail::Bounds b;
    for (const auto& snap : snapshots)
        for (const auto& g : snap)
            for (const auto& p : g.points) b.add(p[0], p[1]);
    b.pad(0.1);

    const double PW = 170, PH = 170, M = 24, GAP = 10;
    const int n = static_cast<int>(snapshots.size());
    const double W = M + n * PW + (n - 1) * GAP + M;
    const double H = PH + 2 * M + 14;
    std::ostringstream o;
    o << detail::svg_open(W, H);
    for (int j = 0; j < n; ++j) {
        detail::Frame f{b.x0, b.x1, b.y0, b.y1, M + j * (PW + GAP), M, PW, PH};
        for (const auto& g : snapshots[static_cast<std::size_t>(j)])
            detail::scatter(o, f, g, 1.4, 0.6);
        detail::frame_box(o, f);
        detail::text(o, f.px0 + f.w / 2, f.py0 + f.h + 16,
                     "t = " + detail::px(times[static_cast<std::size_t>(j)]), "middle", 11);
    }
    o << "</svg>\n";
    return o.str();
}

struct LossCurvePoint {
    double iteration = 0;
    double fm_term = 0;
    double contrastive_term = 0;
    double total = 0;
};

inline std::string svg_loss_curves(const std::vector<LossCurvePoint>& history) {
    require(!history.empty(), "loss curves: empty history");

    // thin long histories so file size stays bounded
    std::vector<LossCurvePoint> pts;
    std::size_t stride = std::max<std::size_t>(1, history.size() / 2000);
    for (std::size_t i = 0; i < history.size(); i += stride) pts.push_back(history[i]);
    if ((history.size() - 1) % stride != 0) pts.push_back(history.back());

    detail::Bounds b;
    for (const auto& p : pts) {
        b.add(p.iteration, p.fm_term);
        b.add(p.iteration, p.contrastive_term);
        b.add(p.iteration, p.total);
    }
    b.pad(0.06);

    const double W = 640, H = 400, M = 44;
    detail::Frame f{b.x0, b.x1, b.y0, b.y1, M, M, W - 2 * M, H - 2 * M};
    std::ostringstream o;
    o << detail::svg_open(W, H);

    auto curve = [&](auto get, const std::string& color, const std::string& name, int slot) {
        std::vector<std::array<double, 2>> line;
        line.reserve(pts.size());
        for (const auto& p : pts) line.push_back({p.iteration, get(p)});
        detail::polyline(o, f, line, color, 1.4, 0.9);
        detail::text(o, f.px0 + f.w - 6, f.py0 + 16 + 15 * slot, name, "end", 12, color);
    };
    curve([](const LossCurvePoint& p) { return p.fm_term; }, "#1f77b4", "fm", 0);
    curve([](const LossCurvePoint& p) { return p.contrastive_term; }, "#ff7f0e", "contrastive", 1);
    curve([](const LossCurvePoint& p) { return p.total; }, "#2ca02c", "total", 2);

    detail::frame_box(o, f);
    detail::text(o, f.px0, f.py0 + f.h + 16, detail::px(b.x0), "start", 10);
    detail::text(o, f.px0 + f.w, f.py0 + f.h + 16, detail::px(b.x1), "end", 10);
    detail::text(o, f.px0 - 4, f.py0 + f.h, detail::px(b.y0), "end", 10);
    detail::text(o, f.px0 - 4, f.py0 + 10, detail::px(b.y1), "end", 10);
    detail::text(o, f.px0 + f.w / 2, f.py0 + f.h + 30, "iteration", "middle", 11);
    o << "</svg>\n";
    return o.str();
}

}  // namespace dfm
