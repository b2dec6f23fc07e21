#include "ftlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ftlab/tensor.hpp"

namespace ftlab {

namespace {

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_chart(const std::string& path, const SvgChart& chart) {
  const double W = 720, H = 420;
  const double ml = 70, mr = 160, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  for (const auto& [label, y] : chart.h_lines) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream os(path);
  check(bool(os), "cannot write SVG '" + path + "'");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-size=\"15\">" << chart.title << "</text>\n";

  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double x = xmin + (xmax - xmin) * i / 5.0;
    double y = ymin + (ymax - ymin) * i / 5.0;
    os << "<text x=\"" << px(x) << "\" y=\"" << mt + ph + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(x) << "</text>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(y) << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\" font-size=\"12\">" << chart.x_label
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << mt + ph / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 "
     << mt + ph / 2 << ")\">" << chart.y_label << "</text>\n";

  std::size_t ci = 0;
  for (const auto& [label, y] : chart.h_lines) {
    os << "<line x1=\"" << ml << "\" y1=\"" << py(y) << "\" x2=\"" << ml + pw
       << "\" y2=\"" << py(y)
       << "\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>\n";
    os << "<text x=\"" << ml + pw + 6 << "\" y=\"" << py(y) + 4
       << "\" font-size=\"11\" fill=\"#555\">" << label << "</text>\n";
  }
  for (const auto& s : chart.series) {
    const char* color = kColors[ci % 10];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.8\" points=\"";
    for (auto [x, y] : s.points) os << px(x) << "," << py(y) << " ";
    os << "\"/>\n";
    double ly = mt + 16 + 16 * double(ci);
    os << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\""
       << ml + pw + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw + 34 << "\" y=\"" << ly + 4
       << "\" font-size=\"11\">" << s.label << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace ftlab
