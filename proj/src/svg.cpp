#include "ctxmeter/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ctxmeter {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kMargin = 54.0;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string render_line_chart(const std::vector<SvgSeries>& series, const std::string& x_label,
                              const std::string& y_label, bool log_y) {
    if (series.empty()) throw std::invalid_argument("render_line_chart: no series");

    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const SvgSeries& s : series) {
        if (s.x.size() != s.y.size()) {
            throw std::invalid_argument("render_line_chart: series length mismatch");
        }
        for (size_t i = 0; i < s.x.size(); ++i) {
            double y = s.y[i];
            if (log_y) {
                if (y <= 0.0) continue;
                y = std::log10(y);
            }
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    if (y_max <= y_min) y_max = y_min + 1.0;

    auto px = [&](double x) {
        return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin);
    };
    auto py = [&](double y) {
        return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin);
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                      "\" height=\"" + num(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" +
           num(kWidth - kMargin) + "\" y2=\"" + num(kHeight - kMargin) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(kMargin) +
           "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 12.0) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + x_label + "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(kHeight / 2) +
           "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
           num(kHeight / 2) + ")\">" + y_label + (log_y ? " (log10)" : "") + "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const SvgSeries& s = series[si];
        std::string points;
        for (size_t i = 0; i < s.x.size(); ++i) {
            double y = s.y[i];
            if (log_y) {
                if (y <= 0.0) continue;
                y = std::log10(y);
            }
            points += num(px(s.x[i])) + "," + num(py(y)) + " ";
        }
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        svg += "<text x=\"" + num(kWidth - kMargin + 4.0) + "\" y=\"" +
               num(kMargin + 16.0 * static_cast<double>(si)) + "\" font-size=\"11\" fill=\"" +
               color + "\">" + s.label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace ctxmeter
