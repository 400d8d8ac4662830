#pragma once

#include <string>
#include <vector>

namespace ctxmeter {

// Minimal static line chart: one polyline per series over a shared x axis.
// Enough to eyeball relative-influence curves without a plotting stack.
struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

std::string render_line_chart(const std::vector<SvgSeries>& series, const std::string& x_label,
                              const std::string& y_label, bool log_y = false);

}  // namespace ctxmeter
