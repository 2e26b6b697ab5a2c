#pragma once

// Minimal static SVG line/scatter charts for frontier and timing outputs.

#include <string>
#include <vector>

namespace fairmi {

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<SvgSeries> series;
};

std::string render_svg(const SvgChart& chart);

}  // namespace fairmi
