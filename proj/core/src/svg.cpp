#include "lab/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace lab::svg {
namespace {

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Blue-to-yellow ramp for t in [0, 1].
std::string ramp(double t) {
    if (!std::isfinite(t)) return "#bbbbbb";
    t = std::clamp(t, 0.0, 1.0);
    const double r = 68 + t * (253 - 68), g = 1 + t * (231 - 1), b = 84 + t * (37 - 84);
    return fmt::format("#{:02x}{:02x}{:02x}", static_cast<int>(std::lround(r)), static_cast<int>(std::lround(g)),
                       static_cast<int>(std::lround(b)));
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

class Canvas {
  public:
    Canvas(double x0, double y0, double w, double h, Range xr, Range yr)
        : x0_(x0), y0_(y0), w_(w), h_(h), xr_(xr), yr_(yr) {}

    double px(double x) const { return x0_ + (x - xr_.lo) / (xr_.hi - xr_.lo) * w_; }
    double py(double y) const { return y0_ + h_ - (y - yr_.lo) / (yr_.hi - yr_.lo) * h_; }

  private:
    double x0_, y0_, w_, h_;
    Range xr_, yr_;
};

void axes(std::string& out, const Panel& p, double x0, double y0, double w, double h, const Range& xr, const Range& yr) {
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#444\"/>\n",
                       x0, y0, w, h);
    for (int i = 0; i <= 4; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        const double sx = x0 + w * i / 4.0;
        const double sy = y0 + h - h * i / 4.0;
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\" text-anchor=\"middle\">{:.3g}</text>\n", sx,
                           y0 + h + 12, fx);
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\" text-anchor=\"end\">{:.3g}</text>\n", x0 - 4,
                           sy + 3, fy);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n", x0 + w / 2,
                       y0 + h + 26, escape(p.x_label));
    out += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1f} {:.1f})\">{}</text>\n",
        x0 - 34, y0 + h / 2, x0 - 34, y0 + h / 2, escape(p.y_label));
}

void heatmap(std::string& out, const Panel& p, double x0, double y0, double w, double h) {
    const num::Matrix& m = *p.heatmap;
    if (m.size() == 0) return;
    const double lo = m.minCoeff(), hi = m.maxCoeff();
    const double cw = w / static_cast<double>(m.cols()), ch = h / static_cast<double>(m.rows());
    for (num::Index r = 0; r < m.rows(); ++r) {
        for (num::Index c = 0; c < m.cols(); ++c) {
            const double t = hi > lo ? (m(r, c) - lo) / (hi - lo) : 0.0;
            out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                               x0 + c * cw, y0 + r * ch, cw + 0.05, ch + 0.05, ramp(t));
        }
    }
    const std::size_t n = p.heatmap_labels.size();
    const std::size_t step = n > 10 ? (n + 9) / 10 : 1;
    for (std::size_t i = 0; i < n; i += step) {
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"8\" text-anchor=\"middle\">{}</text>\n",
                           x0 + (static_cast<double>(i) + 0.5) * cw, y0 + h + 10, escape(p.heatmap_labels[i]));
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"8\" text-anchor=\"end\">{}</text>\n", x0 - 3,
                           y0 + (static_cast<double>(i) + 0.5) * ch + 3, escape(p.heatmap_labels[i]));
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\">min {:.4g}, max {:.4g}</text>\n", x0,
                       y0 + h + 24, lo, hi);
}

void panel(std::string& out, const Panel& p, double left, double top, double width, double height) {
    const double x0 = left + 48, y0 = top + 22, w = width - 64, h = height - 62;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" font-weight=\"bold\">{}</text>\n", left + 8,
                       top + 14, escape(p.title));
    if (p.heatmap) {
        heatmap(out, p, x0, y0, w, h);
        return;
    }

    Range xr, yr;
    for (const auto& l : p.lines) {
        for (double v : l.x) xr.add(v);
        for (double v : l.y) yr.add(v);
        for (double v : l.lo) yr.add(v);
        for (double v : l.hi) yr.add(v);
    }
    for (const auto& s : p.points) {
        for (double v : s.x) xr.add(v);
        for (double v : s.y) yr.add(v);
    }
    if (p.band) {
        yr.add(p.band->first);
        yr.add(p.band->second);
    }
    xr.finish();
    yr.finish();
    const Canvas cv(x0, y0, w, h, xr, yr);
    axes(out, p, x0, y0, w, h, xr, yr);

    if (p.band) {
        const double a = cv.py(p.band->second), b = cv.py(p.band->first);
        out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#999\" fill-opacity=\"0.25\"/>\n",
                           x0, a, w, b - a);
    }

    for (std::size_t i = 0; i < p.lines.size(); ++i) {
        const Line& l = p.lines[i];
        const char* colour = kPalette[i % kPalette.size()];
        if (l.lo.size() == l.x.size() && l.hi.size() == l.x.size() && !l.x.empty()) {
            std::string poly;
            for (std::size_t k = 0; k < l.x.size(); ++k) {
                if (std::isfinite(l.hi[k])) poly += fmt::format("{:.1f},{:.1f} ", cv.px(l.x[k]), cv.py(l.hi[k]));
            }
            for (std::size_t k = l.x.size(); k-- > 0;) {
                if (std::isfinite(l.lo[k])) poly += fmt::format("{:.1f},{:.1f} ", cv.px(l.x[k]), cv.py(l.lo[k]));
            }
            out += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n", poly, colour);
        }
        std::string path;
        for (std::size_t k = 0; k < l.x.size() && k < l.y.size(); ++k) {
            if (!std::isfinite(l.y[k])) continue;
            path += fmt::format("{}{:.1f},{:.1f} ", path.empty() ? "M" : "L", cv.px(l.x[k]), cv.py(l.y[k]));
        }
        out += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{}/>\n", path, colour,
                           l.dashed ? " stroke-dasharray=\"4 3\"" : "");
    }

    for (std::size_t i = 0; i < p.points.size(); ++i) {
        const Points& s = p.points[i];
        Range vr;
        for (double v : s.value) vr.add(v);
        const bool coloured = s.value.size() == s.x.size() && std::isfinite(vr.lo);
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            std::string fill = kPalette[i % kPalette.size()];
            if (coloured) fill = ramp(vr.hi > vr.lo ? (s.value[k] - vr.lo) / (vr.hi - vr.lo) : 0.0);
            if (coloured && !std::isfinite(s.value[k])) fill = ramp(std::numeric_limits<double>::quiet_NaN());
            out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"2.2\" fill=\"{}\"/>\n", cv.px(s.x[k]),
                               cv.py(s.y[k]), fill);
        }
    }

    // Legend for labelled series.
    double ly = y0 + 10;
    for (std::size_t i = 0; i < p.lines.size(); ++i) {
        if (p.lines[i].label.empty()) continue;
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\" fill=\"{}\">{}</text>\n", x0 + 6, ly,
                           kPalette[i % kPalette.size()], escape(p.lines[i].label));
        ly += 11;
    }
}

}  // namespace

std::string render(const std::vector<Panel>& panels, int columns, int panel_width, int panel_height) {
    columns = std::max(1, std::min<int>(columns, static_cast<int>(std::max<std::size_t>(panels.size(), 1))));
    const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
    const int width = columns * panel_width, height = std::max(rows, 1) * panel_height;
    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        width, height, width, height);
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const int c = static_cast<int>(i) % columns, r = static_cast<int>(i) / columns;
        panel(out, panels[i], c * panel_width, r * panel_height, panel_width, panel_height);
    }
    out += "</svg>\n";
    return out;
}

}  // namespace lab::svg
