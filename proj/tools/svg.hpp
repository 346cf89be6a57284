#pragma once

#include <string>
#include <vector>

namespace mixest::cli {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal static line chart (no interactivity): one polyline per series,
// axis ticks and a legend. Used for SE-vs-delta curves.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series);

}  // namespace mixest::cli
