#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capstone/geocell.hpp"

namespace capstone {

using Timestamp = double;  // seconds since the Unix epoch, UTC

struct TrackPoint {
  geo::GeoPoint loc;
  Timestamp t = 0.0;
  std::optional<double> accuracy_m;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

// Temporally ordered sequence of fixes with strictly increasing timestamps.
struct Trajectory {
  std::vector<TrackPoint> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  const TrackPoint& operator[](std::size_t i) const { return points[i]; }

  Timestamp start_time() const { return points.front().t; }
  Timestamp end_time() const { return points.back().t; }

  // Every gap equals `interval` to within `tolerance` seconds.
  bool is_uniform(double interval, double tolerance = 1e-6) const;

  // Throws InputError naming the first violating index.
  void validate() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

Timestamp parse_iso8601(const std::string& text);  // throws InputError
std::string format_iso8601(Timestamp t);           // whole seconds, trailing 'Z'

// Seconds since the epoch for a proleptic-Gregorian UTC date and time.
Timestamp civil_to_epoch(int year, unsigned month, unsigned day, int hour, int minute, double second);

}  // namespace capstone
