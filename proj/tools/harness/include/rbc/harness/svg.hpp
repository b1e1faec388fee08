#pragma once

#include <string>
#include <vector>

namespace rbc::harness {

struct ChartPoint {
  double x;
  double y;
  double error = 0.0;  // half-height of the error bar; 0 draws none
};

struct ChartSeries {
  std::string name;
  std::vector<ChartPoint> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
};

/// Standalone SVG with axes, ticks, one polyline per series and a legend.
/// With `timestamp`, a generation-time comment is added after the header.
std::string render_svg(const LineChart& chart, bool timestamp = true);

}  // namespace rbc::harness
