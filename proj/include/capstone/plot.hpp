#pragma once

// Static, self-contained SVG charts: line charts for signals and parameter
// sweeps, grouped bars for method comparisons. Axes and labels are drawn
// with <line> and <text>; each series is exactly one <path>.

#include <string>
#include <vector>

namespace capstone::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 800;
  int height = 400;
};

// Throws InputError on mismatched or empty series. Horizontal runs collapse
// to their end points, so a constant series is a single horizontal segment.
// Dense series keep their first, lowest, highest and last point per pixel
// column.
std::string line_chart(const Axes& axes, const std::vector<Series>& series);

struct BarGroup {
  std::string label;          // category on the x axis
  std::vector<double> values; // one per series name
};

std::string bar_chart(const Axes& axes, const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups);

// Evenly spaced round tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

}  // namespace capstone::plot
