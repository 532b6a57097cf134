#include "capstone/plot.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 36.0, kBottom = 50.0;

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string label(double v) {
  if (v == 0.0) return "0";
  const double a = std::fabs(v);
  if (a >= 1e6 || a < 1e-3) return fmt::format("{:.2e}", v);
  auto s = fmt::format("{:.4f}", v);
  s.erase(s.find_last_not_of('0') + 1);
  if (s.back() == '.') s.pop_back();
  return s;
}

struct Frame {
  double x0, x1, y0, y1;  // data ranges
  double w, h;            // pixel size of the plotting area

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * w; }
  double py(double y) const { return kTop + h - (y - y0) / (y1 - y0) * h; }
};

void widen(double& lo, double& hi) {
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : std::fabs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
}

std::string header(const Axes& a) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2:.1f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{3}</text>\n",
      a.width, a.height, a.width / 2.0, escape(a.title));
}

std::string axes_lines(const Axes& a, const Frame& f, const std::vector<double>& yt) {
  std::string s;
  const double bottom = kTop + f.h, right = kLeft + f.w;
  s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n", kLeft,
                   bottom, right);
  s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", kLeft,
                   kTop, bottom);
  for (const double v : yt) {
    const double y = f.py(v);
    s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                     kLeft - 4, y, kLeft);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6, y + 4, label(v));
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + f.w / 2,
                   static_cast<double>(a.height) - 8, escape(a.x_label));
  s += fmt::format("<text x=\"14\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0:.1f})\">{1}</text>\n",
                   kTop + f.h / 2, escape(a.y_label));
  return s;
}

std::string legend(const std::vector<std::string>& names, double right) {
  std::string s;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double y = kTop + 4 + 16.0 * static_cast<double>(k);
    const char* colour = kPalette[k % std::size(kPalette)];
    s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", right - 120, y,
                     colour);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", right - 106, y + 9, escape(names[k]));
  }
  return s;
}

Frame frame(const Axes& a, double x0, double x1, double y0, double y1) {
  if (a.width <= kLeft + kRight + 10 || a.height <= kTop + kBottom + 10) throw InputError("plot size too small");
  return {x0, x1, y0, y1, a.width - kLeft - kRight, a.height - kTop - kBottom};
}

// Pixel coordinates; runs of x-sorted points inside one pixel column keep
// only their first, lowest, highest and last point.
std::pair<std::vector<double>, std::vector<double>> thin(const Series& s, const Frame& f) {
  std::vector<double> xs, ys;
  const auto push = [&](std::size_t i) {
    xs.push_back(f.px(s.x[i]));
    ys.push_back(f.py(s.y[i]));
  };
  std::size_t i = 0;
  while (i < s.x.size()) {
    const double col = std::floor(f.px(s.x[i]));
    std::size_t j = i, lo = i, hi = i;
    while (j + 1 < s.x.size() && s.x[j + 1] >= s.x[j] && std::floor(f.px(s.x[j + 1])) == col) {
      ++j;
      if (s.y[j] < s.y[lo]) lo = j;
      if (s.y[j] > s.y[hi]) hi = j;
    }
    std::vector<std::size_t> keep{i, lo, hi, j};
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    for (const auto k : keep) push(k);
    i = j + 1;
  }
  return {xs, ys};
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo) || target < 1) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (const double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) t.push_back(std::fabs(v) < step * 1e-9 ? 0.0 : v);
  return t;
}

std::string line_chart(const Axes& axes, const std::vector<Series>& series) {
  if (series.empty()) throw InputError("nothing to plot");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InputError(fmt::format("series '{}' has mismatched x and y", s.name));
    if (s.x.empty()) throw InputError(fmt::format("series '{}' is empty", s.name));
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw InputError(fmt::format("series '{}' has a non-finite value", s.name));
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  widen(x0, x1);
  widen(y0, y1);
  const Frame f = frame(axes, x0, x1, y0, y1);

  std::string svg = header(axes);
  const auto xt = nice_ticks(x0, x1);
  for (const double v : xt) {
    const double x = f.px(v);
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", x,
                       kTop + f.h, kTop + f.h + 4);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x, kTop + f.h + 18,
                       label(v));
  }
  svg += axes_lines(axes, f, nice_ticks(y0, y1));

  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    const auto [xs, ys] = thin(s, f);
    std::string d = fmt::format("M{:.2f},{:.2f}", xs[0], ys[0]);
    for (std::size_t i = 1; i < xs.size(); ++i) {
      // Interior points of a horizontal run add nothing.
      if (i + 1 < xs.size() && ys[i] == ys[i - 1] && ys[i] == ys[i + 1]) continue;
      d += fmt::format(" L{:.2f},{:.2f}", xs[i], ys[i]);
    }
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n", d,
                       kPalette[k % std::size(kPalette)]);
  }
  if (series.size() > 1) svg += legend(names, axes.width - kRight);
  svg += "</svg>\n";
  return svg;
}

std::string bar_chart(const Axes& axes, const std::vector<std::string>& series_names,
                      const std::vector<BarGroup>& groups) {
  if (groups.empty() || series_names.empty()) throw InputError("nothing to plot");
  double y1 = 0.0;
  for (const auto& g : groups) {
    if (g.values.size() != series_names.size())
      throw InputError(fmt::format("group '{}' has {} values for {} series", g.label, g.values.size(),
                                   series_names.size()));
    for (const double v : g.values) {
      if (!std::isfinite(v) || v < 0.0) throw InputError(fmt::format("group '{}' has a negative or non-finite bar", g.label));
      y1 = std::max(y1, v);
    }
  }
  if (y1 == 0.0) y1 = 1.0;
  const auto yt = nice_ticks(0.0, y1);
  y1 = std::max(y1, yt.back());
  const Frame f = frame(axes, 0.0, static_cast<double>(groups.size()), 0.0, y1);

  std::string svg = header(axes);
  svg += axes_lines(axes, f, yt);
  const double slot = f.w / static_cast<double>(groups.size());
  const double bar = slot * 0.8 / static_cast<double>(series_names.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double left = kLeft + slot * static_cast<double>(g) + slot * 0.1;
    for (std::size_t k = 0; k < series_names.size(); ++k) {
      const double top = f.py(groups[g].values[k]);
      svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                         left + bar * static_cast<double>(k), top, bar, kTop + f.h - top,
                         kPalette[k % std::size(kPalette)]);
    }
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                       kLeft + slot * (static_cast<double>(g) + 0.5), kTop + f.h + 18, escape(groups[g].label));
  }
  if (series_names.size() > 1) svg += legend(series_names, axes.width - kRight);
  svg += "</svg>\n";
  return svg;
}

}  // namespace capstone::plot
