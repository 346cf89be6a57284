#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mixest/errors.hpp"

namespace mixest::cli {

namespace {
const char* kPalette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e",
                          "#9467bd", "#8c564b"};
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series) {
  std::ofstream file(path);
  if (!file) throw ValidationError("cannot open SVG output: " + path);

  const double width = 720, height = 480;
  const double ml = 70, mr = 150, mt = 50, mb = 55;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) { xmin = 0; xmax = 1; }
  if (ymin > ymax) { ymin = 0; ymax = 1; }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * plot_h; };

  file << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
       << height << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  file << "<text x='" << width / 2 << "' y='24' text-anchor='middle' "
       << "font-family='sans-serif' font-size='16'>" << title << "</text>\n";
  file << "<rect x='" << ml << "' y='" << mt << "' width='" << plot_w << "' height='"
       << plot_h << "' fill='none' stroke='#444'/>\n";

  for (int t = 0; t <= 5; ++t) {
    const double xv = xmin + t * (xmax - xmin) / 5;
    const double yv = ymin + t * (ymax - ymin) / 5;
    file << "<line x1='" << sx(xv) << "' y1='" << mt + plot_h << "' x2='" << sx(xv)
         << "' y2='" << mt + plot_h + 5 << "' stroke='#444'/>\n";
    file << "<text x='" << sx(xv) << "' y='" << mt + plot_h + 20
         << "' text-anchor='middle' font-family='sans-serif' font-size='11'>" << xv
         << "</text>\n";
    file << "<line x1='" << ml - 5 << "' y1='" << sy(yv) << "' x2='" << ml << "' y2='"
         << sy(yv) << "' stroke='#444'/>\n";
    file << "<text x='" << ml - 9 << "' y='" << sy(yv) + 4
         << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << yv
         << "</text>\n";
  }
  file << "<text x='" << ml + plot_w / 2 << "' y='" << height - 12
       << "' text-anchor='middle' font-family='sans-serif' font-size='13'>" << x_label
       << "</text>\n";
  file << "<text x='18' y='" << mt + plot_h / 2
       << "' text-anchor='middle' font-family='sans-serif' font-size='13' "
       << "transform='rotate(-90 18 " << mt + plot_h / 2 << ")'>" << y_label
       << "</text>\n";

  int idx = 0;
  for (const auto& s : series) {
    const char* color = kPalette[idx % 6];
    file << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      file << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    }
    file << "'/>\n";
    const double ly = mt + 18 + 20 * idx;
    file << "<line x1='" << ml + plot_w + 12 << "' y1='" << ly << "' x2='"
         << ml + plot_w + 36 << "' y2='" << ly << "' stroke='" << color
         << "' stroke-width='2'/>\n";
    file << "<text x='" << ml + plot_w + 42 << "' y='" << ly + 4
         << "' font-family='sans-serif' font-size='12'>" << s.label << "</text>\n";
    ++idx;
  }
  file << "</svg>\n";
}

}  // namespace mixest::cli
