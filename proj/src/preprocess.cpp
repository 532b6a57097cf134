#include "capstone/preprocess.hpp"

#include <cmath>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::preprocess {

namespace {

constexpr double kEps = 1e-12;
constexpr double kMetresPerDegree = geo::kEarthRadiusM * 3.14159265358979323846 / 180.0;

double half_sq_distance_m2(const geo::GeoPoint& a, const geo::GeoPoint& b) {
  const double coslat = std::cos(0.5 * (a.lat + b.lat) * 3.14159265358979323846 / 180.0);
  const double dy = (a.lat - b.lat) * kMetresPerDegree;
  const double dx = (a.lon - b.lon) * kMetresPerDegree * coslat;
  return 0.5 * (dx * dx + dy * dy);
}

}  // namespace

void ResampleSpec::validate() const {
  if (!(interval_s > 0.0)) throw InputError(fmt::format("resample interval must be positive, got {}", interval_s));
  if (semivariance_window < 2)
    throw InputError(fmt::format("semivariance window must be at least 2, got {}", semivariance_window));
  if (!(max_gap_s > 0.0)) throw InputError(fmt::format("max gap must be positive, got {}", max_gap_s));
}

std::vector<double> binomial_kernel(int width) {
  if (width < 1 || width % 2 == 0) throw InputError(fmt::format("kernel width must be odd and >= 1, got {}", width));
  std::vector<double> k(static_cast<std::size_t>(width), 0.0);
  k[0] = 1.0;
  for (int row = 1; row < width; ++row)
    for (int j = row; j > 0; --j) k[j] += k[j - 1];
  const double total = std::ldexp(1.0, width - 1);
  for (auto& v : k) v /= total;
  return k;
}

Trajectory lowpass(const Trajectory& traj, int kernel_width) {
  const auto kernel = binomial_kernel(kernel_width);
  const int half = kernel_width / 2;
  const int n = static_cast<int>(traj.size());
  Trajectory out = traj;
  for (int i = 0; i < n; ++i) {
    double lat = 0.0, lon = 0.0, wsum = 0.0;
    for (int k = -half; k <= half; ++k) {
      const int j = i + k;
      if (j < 0 || j >= n) continue;
      const double w = kernel[static_cast<std::size_t>(k + half)];
      lat += w * traj.points[j].loc.lat;
      lon += w * traj.points[j].loc.lon;
      wsum += w;
    }
    out.points[i].loc = {lat / wsum, lon / wsum};
  }
  return out;
}

Semivariogram fit_semivariogram(std::span<const TrackPoint> window) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t a = 0; a < window.size(); ++a)
    for (std::size_t b = a + 1; b < window.size(); ++b) {
      const double x = std::fabs(window[b].t - window[a].t);
      const double y = half_sq_distance_m2(window[a].loc, window[b].loc);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++m;
    }
  Semivariogram g;
  if (m == 0) return g;
  const double md = static_cast<double>(m);
  const double det = md * sxx - sx * sx;
  if (det > 0.0) {
    g.slope = (md * sxy - sx * sy) / det;
    g.nugget = (sy - g.slope * sx) / md;
  } else {
    g.nugget = sy / md;
  }
  if (g.slope < 0.0) {
    g.slope = 0.0;
    g.nugget = sy / md;
  }
  if (g.nugget < 0.0) {
    g.nugget = 0.0;
    g.slope = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
  }
  return g;
}

Trajectory interpolate(const Trajectory& traj, const ResampleSpec& spec) {
  spec.validate();
  if (traj.size() < 2) throw InputError("interpolation needs at least two points");
  const auto& pts = traj.points;
  const std::size_t n = pts.size();
  const auto window = static_cast<std::size_t>(spec.semivariance_window);

  Trajectory out;
  const double t0 = pts.front().t;
  const double t_last = pts.back().t;
  const auto steps = static_cast<std::size_t>(std::floor((t_last - t0) / spec.interval_s + 1e-9));
  out.points.reserve(steps + 1);

  std::size_t next = 0;  // first original sample with t >= target
  std::size_t fitted_for = n;
  Semivariogram gamma;
  std::vector<double> w;
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = t0 + static_cast<double>(s) * spec.interval_s;
    while (next < n - 1 && pts[next].t < t) ++next;
    const std::size_t first = next + 1 >= window ? next + 1 - window : 0;
    const std::span<const TrackPoint> win(pts.data() + first, next + 1 - first);
    if (fitted_for != next) {
      gamma = fit_semivariogram(win);
      fitted_for = next;
    }
    w.assign(win.size(), 0.0);
    double wsum = 0.0;
    for (std::size_t j = 0; j < win.size(); ++j) {
      w[j] = 1.0 / (gamma(std::fabs(t - win[j].t)) + kEps);
      wsum += w[j];
    }
    double lat = 0.0, lon = 0.0;
    for (std::size_t j = 0; j < win.size(); ++j) {
      lat += w[j] / wsum * win[j].loc.lat;
      lon += w[j] / wsum * win[j].loc.lon;
    }
    out.points.push_back({{lat, lon}, t, std::nullopt});
  }
  return out;
}

std::vector<Trajectory> split_segments(const Trajectory& traj, double max_gap_s) {
  std::vector<Trajectory> segments;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (i == 0 || traj.points[i].t - traj.points[i - 1].t > max_gap_s) segments.emplace_back();
    segments.back().points.push_back(traj.points[i]);
  }
  return segments;
}

std::vector<Trajectory> resample(const Trajectory& traj, const ResampleSpec& spec, int kernel_width) {
  spec.validate();
  if (traj.empty()) throw InputError("empty trajectory");
  std::vector<Trajectory> out;
  for (auto& seg : split_segments(traj, spec.max_gap_s)) {
    if (seg.size() < 2) continue;
    out.push_back(interpolate(lowpass(seg, kernel_width), spec));
  }
  if (out.empty()) throw InputError("trajectory has no segment with two or more points");
  return out;
}

}  // namespace capstone::preprocess
