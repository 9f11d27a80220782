#pragma once

#include <string>
#include <vector>

namespace pod2c {

// Minimal self-contained SVG line chart: one polyline per series with a
// shaded mean +- std band.
struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std_dev;
};

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series);

}  // namespace pod2c
