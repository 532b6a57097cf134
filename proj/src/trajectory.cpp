#include "capstone/trajectory.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone {

bool Trajectory::is_uniform(double interval, double tolerance) const {
  for (std::size_t i = 1; i < points.size(); ++i)
    if (std::fabs((points[i].t - points[i - 1].t) - interval) > tolerance) return false;
  return true;
}

void Trajectory::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].loc.valid())
      throw InputError(fmt::format("point {} has invalid coordinates ({}, {})", i, points[i].loc.lat,
                                   points[i].loc.lon));
    if (!std::isfinite(points[i].t)) throw InputError(fmt::format("point {} has a non-finite timestamp", i));
    if (i > 0 && !(points[i].t > points[i - 1].t))
      throw InputError(fmt::format("timestamps not strictly increasing at point {}", i));
  }
}

Timestamp civil_to_epoch(int year, unsigned month, unsigned day, int hour, int minute, double second) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw InputError(fmt::format("invalid date {:04}-{:02}-{:02}", year, month, day));
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) * 86400.0 + hour * 3600.0 + minute * 60.0 + second;
}

Timestamp parse_iso8601(const std::string& text) {
  int y, mo, d, h, mi;
  double s;
  char sep;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed) != 7 ||
      (sep != 'T' && sep != ' '))
    throw InputError(fmt::format("bad ISO-8601 timestamp '{}'", text));
  const std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z" || rest == "+00:00"))
    throw InputError(fmt::format("only UTC timestamps are supported: '{}'", text));
  if (mo < 1 || mo > 12 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s >= 61)
    throw InputError(fmt::format("bad ISO-8601 timestamp '{}'", text));
  return civil_to_epoch(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, s);
}

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const auto secs = static_cast<long long>(std::floor(t));
  const auto day_count = static_cast<int>(std::floor(static_cast<double>(secs) / 86400.0));
  const long long in_day = secs - static_cast<long long>(day_count) * 86400;
  const year_month_day ymd{sys_days{days{day_count}}};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), in_day / 3600,
                     (in_day / 60) % 60, in_day % 60);
}

}  // namespace capstone
