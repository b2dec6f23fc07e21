#pragma once

#include <string>
#include <vector>

namespace ftlab {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  std::vector<std::pair<std::string, double>> h_lines;  // reference lines
};

// Standalone SVG line chart; no plotting dependency.
void write_svg_chart(const std::string& path, const SvgChart& chart);

}  // namespace ftlab
