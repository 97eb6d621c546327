#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "get/common.hpp"

namespace get {

// Shortest round-trippable decimal form, deterministic across runs.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double parsed = 0.0;
    std::sscanf(buf, "%lf", &parsed);
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[64];
        std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &parsed);
        if (parsed == v) return shorter;
    }
    return buf;
}

// Minimal grouped bar chart with error whiskers; self-contained SVG so the
// run directory needs no plotting toolchain.
inline void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                                const std::string& ylabel, const std::vector<std::string>& labels,
                                const std::vector<double>& means, const std::vector<double>& stds) {
    if (labels.size() != means.size() || labels.size() != stds.size())
        throw ShapeError("bar chart: labels/means/stds sizes differ");
    const double W = 720.0, H = 420.0;
    const double left = 70.0, right = 20.0, top = 48.0, bottom = 64.0;
    const double plot_w = W - left - right, plot_h = H - top - bottom;
    double ymax = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i)
        if (std::isfinite(means[i])) ymax = std::max(ymax, means[i] + stds[i]);
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.15;

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write chart: " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">"
       << title << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + plot_h / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << top + plot_h / 2 << ")\">" << ylabel << "</text>\n";

    for (int tick = 0; tick <= 5; ++tick) {
        const double v = ymax * tick / 5.0;
        const double y = top + plot_h - plot_h * tick / 5.0;
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << W - right << "\" y2=\"" << y
           << "\" stroke=\"#dddddd\"/>\n";
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.3g", v);
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << lab
           << "</text>\n";
    }

    const std::size_t n = labels.size();
    const double slot = plot_w / static_cast<double>(n);
    const double bar_w = slot * 0.6;
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = left + slot * (static_cast<double>(i) + 0.5);
        if (std::isfinite(means[i])) {
            const double h = plot_h * means[i] / ymax;
            const double y = top + plot_h - h;
            os << "<rect x=\"" << cx - bar_w / 2 << "\" y=\"" << y << "\" width=\"" << bar_w
               << "\" height=\"" << h << "\" fill=\"#4878a8\"/>\n";
            if (stds[i] > 0.0) {
                const double y1 = top + plot_h - plot_h * (means[i] + stds[i]) / ymax;
                const double y2 =
                    top + plot_h -
                    plot_h * std::max(0.0, means[i] - stds[i]) / ymax;
                os << "<line x1=\"" << cx << "\" y1=\"" << y1 << "\" x2=\"" << cx << "\" y2=\""
                   << y2 << "\" stroke=\"#222222\"/>\n";
                os << "<line x1=\"" << cx - 5 << "\" y1=\"" << y1 << "\" x2=\"" << cx + 5
                   << "\" y2=\"" << y1 << "\" stroke=\"#222222\"/>\n";
                os << "<line x1=\"" << cx - 5 << "\" y1=\"" << y2 << "\" x2=\"" << cx + 5
                   << "\" y2=\"" << y2 << "\" stroke=\"#222222\"/>\n";
            }
            char lab[32];
            std::snprintf(lab, sizeof lab, "%.3g", means[i]);
            os << "<text x=\"" << cx << "\" y=\"" << y - 6
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << lab
               << "</text>\n";
        } else {
            os << "<text x=\"" << cx << "\" y=\"" << top + plot_h / 2
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
                  "fill=\"#aa2222\">n/a</text>\n";
        }
        os << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << labels[i]
           << "</text>\n";
    }
    os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << W - right
       << "\" y2=\"" << top + plot_h << "\" stroke=\"#000000\"/>\n";
    os << "</svg>\n";
    if (!os) throw IoError("short write: " + path.string());
}

// Simple polyline chart for the training-set-size sweep.
inline void write_line_chart_svg(const std::filesystem::path& path, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.empty()) throw ShapeError("line chart: bad series");
    const double W = 720.0, H = 420.0;
    const double left = 70.0, right = 24.0, top = 48.0, bottom = 64.0;
    const double plot_w = W - left - right, plot_h = H - top - bottom;
    double xmax = *std::max_element(xs.begin(), xs.end());
    double ymax = 0.0;
    for (double y : ys)
        if (std::isfinite(y)) ymax = std::max(ymax, y);
    if (xmax <= 0.0) xmax = 1.0;
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.15;

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write chart: " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">"
       << title << "</text>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << top + plot_h / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << top + plot_h / 2 << ")\">" << ylabel << "</text>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        const double v = ymax * tick / 5.0;
        const double y = top + plot_h - plot_h * tick / 5.0;
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << W - right << "\" y2=\"" << y
           << "\" stroke=\"#dddddd\"/>\n";
        char lab[32];
        std::snprintf(lab, sizeof lab, "%.3g", v);
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << lab
           << "</text>\n";
    }
    auto px = [&](double x) { return left + plot_w * x / xmax; };
    auto py = [&](double y) { return top + plot_h - plot_h * y / ymax; };
    os << "<polyline fill=\"none\" stroke=\"#4878a8\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << "," << py(ys[i]) << " ";
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
           << "\" r=\"3.5\" fill=\"#4878a8\"/>\n";
        char lab[48];
        std::snprintf(lab, sizeof lab, "%.3g", ys[i]);
        os << "<text x=\"" << px(xs[i]) << "\" y=\"" << py(ys[i]) - 8
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << lab
           << "</text>\n";
        std::snprintf(lab, sizeof lab, "%.6g", xs[i]);
        os << "<text x=\"" << px(xs[i]) << "\" y=\"" << top + plot_h + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << lab
           << "</text>\n";
    }
    os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << W - right
       << "\" y2=\"" << top + plot_h << "\" stroke=\"#000000\"/>\n";
    os << "</svg>\n";
    if (!os) throw IoError("short write: " + path.string());
}

}  // namespace get
