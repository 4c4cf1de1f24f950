#pragma once

// Small self-contained SVG charts: line plots with optional shaded bands,
// and grouped bar charts. No dependencies, fixed layout, deterministic
// output for identical inputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace spg::svg {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> x, y;
    std::vector<double> lo, hi;  // optional band, same length as x
};

struct BarGroup {
    std::string label;
    std::string color;
    std::vector<double> heights;  // one per category
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Scale {
    double lo, hi, p0, p1;  // data range -> pixel range
    double operator()(double v) const {
        if (hi == lo) return (p0 + p1) / 2.0;
        return p0 + (v - lo) / (hi - lo) * (p1 - p0);
    }
};

inline std::vector<double> ticks(double lo, double hi, int want = 6) {
    if (!(hi > lo)) return {lo};
    double raw = (hi - lo) / want;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    std::vector<double> out;
    double t = std::ceil(lo / step) * step;
    for (; t <= hi + step * 1e-9; t += step) out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    return out;
}

inline void open_canvas(std::ostringstream& s, int w, int h, const std::string& title) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\" font-family=\"sans-serif\">\n";
    s << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
}

inline void axes(std::ostringstream& s, const Scale& sx, const Scale& sy,
                 const std::string& xlabel, const std::string& ylabel, int h) {
    s << "<line x1=\"" << sx.p0 << "\" y1=\"" << sy.p0 << "\" x2=\"" << sx.p1 << "\" y2=\""
      << sy.p0 << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << sx.p0 << "\" y1=\"" << sy.p0 << "\" x2=\"" << sx.p0 << "\" y2=\""
      << sy.p1 << "\" stroke=\"black\"/>\n";
    for (double t : ticks(sx.lo, sx.hi)) {
        double px = sx(t);
        s << "<line x1=\"" << px << "\" y1=\"" << sy.p0 << "\" x2=\"" << px << "\" y2=\""
          << sy.p0 + 5 << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << px << "\" y=\"" << sy.p0 + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(t) << "</text>\n";
    }
    for (double t : ticks(sy.lo, sy.hi)) {
        double py = sy(t);
        s << "<line x1=\"" << sx.p0 - 5 << "\" y1=\"" << py << "\" x2=\"" << sx.p0 << "\" y2=\""
          << py << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << sx.p0 - 8 << "\" y=\"" << py + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(t) << "</text>\n";
    }
    s << "<text x=\"" << (sx.p0 + sx.p1) / 2 << "\" y=\"" << h - 8
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel << "</text>\n";
    s << "<text x=\"16\" y=\"" << (sy.p0 + sy.p1) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << (sy.p0 + sy.p1) / 2 << ")\">" << ylabel << "</text>\n";
}

inline void legend(std::ostringstream& s, const std::vector<std::string>& labels,
                   const std::vector<std::string>& colors, double x, double y) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double ly = y + 18.0 * double(i);
        s << "<rect x=\"" << x << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\""
          << colors[i] << "\"/>\n";
        s << "<text x=\"" << x + 18 << "\" y=\"" << ly + 2 << "\" font-size=\"12\">" << labels[i]
          << "</text>\n";
    }
}

}  // namespace detail

inline std::string line_chart(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, const std::vector<Series>& series,
                              int w = 880, int h = 520) {
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool first = true;
    for (const auto& sr : series)
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            double lo = sr.lo.empty() ? sr.y[i] : sr.lo[i];
            double hi = sr.hi.empty() ? sr.y[i] : sr.hi[i];
            if (!std::isfinite(lo) || !std::isfinite(hi)) continue;
            if (first) {
                xlo = xhi = sr.x[i];
                ylo = lo;
                yhi = hi;
                first = false;
            }
            xlo = std::min(xlo, sr.x[i]);
            xhi = std::max(xhi, sr.x[i]);
            ylo = std::min(ylo, lo);
            yhi = std::max(yhi, hi);
        }
    double pad = (yhi - ylo) * 0.06 + 1e-12;
    ylo -= pad;
    yhi += pad;
    detail::Scale sx{xlo, xhi, 64, double(w) - 150};
    detail::Scale sy{ylo, yhi, double(h) - 44, 40};
    std::ostringstream s;
    detail::open_canvas(s, w, h, title);
    detail::axes(s, sx, sy, xlabel, ylabel, h);
    for (const auto& sr : series) {
        if (!sr.lo.empty()) {
            s << "<path d=\"";
            for (std::size_t i = 0; i < sr.x.size(); ++i)
                s << (i ? "L" : "M") << detail::fmt(sx(sr.x[i])) << " "
                  << detail::fmt(sy(sr.lo[i]));
            for (std::size_t i = sr.x.size(); i-- > 0;)
                s << "L" << detail::fmt(sx(sr.x[i])) << " " << detail::fmt(sy(sr.hi[i]));
            s << "Z\" fill=\"" << sr.color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        }
        s << "<polyline fill=\"none\" stroke=\"" << sr.color << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < sr.x.size(); ++i)
            s << detail::fmt(sx(sr.x[i])) << "," << detail::fmt(sy(sr.y[i])) << " ";
        s << "\"/>\n";
    }
    std::vector<std::string> labels, colors;
    for (const auto& sr : series) {
        labels.push_back(sr.label);
        colors.push_back(sr.color);
    }
    detail::legend(s, labels, colors, double(w) - 138, 52);
    s << "</svg>\n";
    return s.str();
}

inline std::string bar_chart(const std::string& title, const std::string& xlabel,
                             const std::string& ylabel,
                             const std::vector<std::string>& categories,
                             const std::vector<BarGroup>& groups, int w = 880, int h = 520) {
    double yhi = 0.0;
    for (const auto& g : groups)
        for (double v : g.heights) yhi = std::max(yhi, v);
    if (yhi <= 0.0) yhi = 1.0;
    yhi *= 1.08;
    detail::Scale sx{0.0, double(categories.size()), 64, double(w) - 150};
    detail::Scale sy{0.0, yhi, double(h) - 44, 40};
    std::ostringstream s;
    detail::open_canvas(s, w, h, title);
    detail::axes(s, sx, sy, xlabel, ylabel, h);
    double slot = (sx.p1 - sx.p0) / double(categories.size());
    double bw = slot * 0.8 / double(groups.size());
    for (std::size_t c = 0; c < categories.size(); ++c) {
        double x0 = sx.p0 + slot * double(c) + slot * 0.1;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            double v = groups[gi].heights[c];
            double ytop = sy(v);
            s << "<rect x=\"" << detail::fmt(x0 + bw * double(gi)) << "\" y=\""
              << detail::fmt(ytop) << "\" width=\"" << detail::fmt(bw * 0.92) << "\" height=\""
              << detail::fmt(sy.p0 - ytop) << "\" fill=\"" << groups[gi].color << "\"/>\n";
        }
        s << "<text x=\"" << detail::fmt(x0 + slot * 0.4) << "\" y=\"" << sy.p0 + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << categories[c] << "</text>\n";
    }
    std::vector<std::string> labels, colors;
    for (const auto& g : groups) {
        labels.push_back(g.label);
        colors.push_back(g.color);
    }
    detail::legend(s, labels, colors, double(w) - 138, 52);
    s << "</svg>\n";
    return s.str();
}

}  // namespace spg::svg
