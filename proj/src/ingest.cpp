#include "capstone/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::ingest {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line, std::string_view what) {
  field = trim(field);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty())
    throw ParseError(fmt::format("cannot parse {} '{}'", what, field), line);
  return value;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

// Applies the ordering policy shared by every reader: equal timestamps keep
// the first row, backwards rows are rejected (strict) or dropped.
void append_point(Trajectory& traj, TrackPoint p, std::size_t line, bool strict, Warnings* warnings) {
  if (!p.loc.valid())
    throw ParseError(fmt::format("coordinate out of range (lat={}, lon={})", p.loc.lat, p.loc.lon), line);
  if (!traj.empty()) {
    const Timestamp last = traj.points.back().t;
    if (p.t == last) {
      if (warnings) {
        ++warnings->duplicate_timestamps;
        warnings->messages.push_back(fmt::format("line {}: duplicate timestamp dropped", line));
      }
      return;
    }
    if (p.t < last) {
      if (strict) throw ParseError("timestamp goes backwards", line);
      if (warnings) {
        ++warnings->out_of_order;
        warnings->messages.push_back(fmt::format("line {}: out-of-order row dropped", line));
      }
      return;
    }
  }
  traj.points.push_back(p);
}

}  // namespace

Trajectory read_csv(std::istream& in, const CsvColumns& cols, Warnings* warnings) {
  std::string line;
  std::size_t lineno = 0;
  std::string header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = line;
      break;
    }
  }
  if (header.empty()) throw InputError("empty trajectory file");

  const auto names = split(header, ',');
  int lat_col = -1, lon_col = -1, ts_col = -1, acc_col = -1;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto name = trim(names[c]);
    if (name == cols.lat) lat_col = static_cast<int>(c);
    else if (name == cols.lon) lon_col = static_cast<int>(c);
    else if (name == cols.timestamp) ts_col = static_cast<int>(c);
    else if (name == cols.accuracy) acc_col = static_cast<int>(c);
  }
  if (lat_col < 0 || lon_col < 0 || ts_col < 0)
    throw ParseError(fmt::format("header must name columns '{}', '{}' and '{}'", cols.lat, cols.lon, cols.timestamp),
                     lineno);

  Trajectory traj;
  const auto needed = static_cast<std::size_t>(std::max({lat_col, lon_col, ts_col, acc_col}));
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() <= needed) throw ParseError("too few fields", lineno);
    TrackPoint p;
    p.loc.lat = parse_double(fields[lat_col], lineno, "latitude");
    p.loc.lon = parse_double(fields[lon_col], lineno, "longitude");
    p.t = parse_double(fields[ts_col], lineno, "timestamp");
    if (acc_col >= 0 && !trim(fields[acc_col]).empty())
      p.accuracy_m = parse_double(fields[acc_col], lineno, "accuracy");
    append_point(traj, p, lineno, cols.strict, warnings);
  }
  if (traj.empty()) throw InputError("empty trajectory");
  return traj;
}

Trajectory read_csv(const std::filesystem::path& path, const CsvColumns& cols, Warnings* warnings) {
  auto in = open(path);
  return read_csv(in, cols, warnings);
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  const bool with_accuracy =
      std::any_of(traj.points.begin(), traj.points.end(), [](const TrackPoint& p) { return p.accuracy_m.has_value(); });
  out << (with_accuracy ? "lat,lon,timestamp,accuracy\n" : "lat,lon,timestamp\n");
  for (const auto& p : traj.points) {
    out << fmt::format("{:.7f},{:.7f},{}", p.loc.lat, p.loc.lon, p.t);
    if (with_accuracy) out << ',' << (p.accuracy_m ? fmt::format("{}", *p.accuracy_m) : std::string());
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  write_csv(out, traj);
}

Trajectory read_plt(std::istream& in, Warnings* warnings) {
  std::string line;
  std::size_t lineno = 0;
  for (int h = 0; h < 6; ++h) {
    if (!std::getline(in, line)) throw ParseError("plt header shorter than 6 lines", lineno);
    ++lineno;
  }
  Trajectory traj;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() < 7) throw ParseError("plt row needs 7 fields", lineno);
    TrackPoint p;
    p.loc.lat = parse_double(f[0], lineno, "latitude");
    p.loc.lon = parse_double(f[1], lineno, "longitude");
    const double days = parse_double(f[4], lineno, "day count");

    int y, mo, d, h, mi, s;
    const std::string date(trim(f[5]));
    const std::string time(trim(f[6]));
    if (std::sscanf(date.c_str(), "%d-%d-%d", &y, &mo, &d) != 3 ||
        std::sscanf(time.c_str(), "%d:%d:%d", &h, &mi, &s) != 3)
      throw ParseError(fmt::format("malformed date/time '{} {}'", date, time), lineno);
    try {
      p.t = civil_to_epoch(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, s);
    } catch (const InputError& e) {
      throw ParseError(e.what(), lineno);
    }
    // Day count is relative to 1899-12-30, i.e. 25569 days before the epoch.
    const double from_days = (days - 25569.0) * 86400.0;
    if (std::fabs(from_days - p.t) > 1.0)
      throw ParseError(fmt::format("day count {} disagrees with '{} {}'", days, date, time), lineno);
    append_point(traj, p, lineno, true, warnings);
  }
  if (traj.empty()) throw InputError("empty trajectory");
  return traj;
}

Trajectory read_plt(const std::filesystem::path& path, Warnings* warnings) {
  auto in = open(path);
  return read_plt(in, warnings);
}

Trajectory read_any(const std::filesystem::path& path, const CsvColumns& cols, Warnings* warnings) {
  if (path.extension() == ".plt") return read_plt(path, warnings);
  return read_csv(path, cols, warnings);
}

std::vector<GroundTruthRoi> read_ground_truth(std::istream& in, std::optional<int> expected_level,
                                              Warnings* warnings) {
  std::vector<GroundTruthRoi> rois;
  std::vector<bool> has_area;
  std::string line;
  std::size_t lineno = 0;
  bool in_block = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty()) {
      in_block = false;
      continue;
    }
    if (text.front() == '#') continue;

    if (text.starts_with("roi ")) {
      std::istringstream ss{std::string(text.substr(4))};
      std::string id, level_tok;
      if (!(ss >> id >> level_tok) || !level_tok.starts_with("level="))
        throw ParseError("expected 'roi <id> level=<L>'", lineno);
      GroundTruthRoi roi;
      roi.id = id;
      roi.level = static_cast<int>(parse_double(std::string_view(level_tok).substr(6), lineno, "level"));
      if (roi.level < 0 || roi.level > geo::kMaxLevel) throw ParseError("level out of range", lineno);
      if (expected_level && roi.level != *expected_level)
        throw ParseError(fmt::format("roi '{}' declares level {} but the session uses level {}", id, roi.level,
                                     *expected_level),
                         lineno);
      rois.push_back(std::move(roi));
      has_area.push_back(false);
      in_block = true;
      continue;
    }
    if (!in_block) throw ParseError("field line outside an roi block", lineno);
    auto& roi = rois.back();

    if (text.starts_with("cells:")) {
      for (auto tok : split(text.substr(6), ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        geo::CellId c;
        try {
          c = geo::CellId::from_hex(tok);
        } catch (const InputError& e) {
          throw ParseError(e.what(), lineno);
        }
        if (c.level() != roi.level)
          throw ParseError(fmt::format("cell {} is level {}, roi declares {}", c.to_hex(), c.level(), roi.level),
                           lineno);
        roi.cells.insert(c);
      }
    } else if (text.starts_with("window:")) {
      std::istringstream ss{std::string(text.substr(7))};
      std::string a, b;
      if (!(ss >> a >> b)) throw ParseError("expected 'window: <entry> <exit>'", lineno);
      VisitWindow w;
      try {
        w.entry = parse_iso8601(a);
        w.exit = parse_iso8601(b);
      } catch (const InputError& e) {
        throw ParseError(e.what(), lineno);
      }
      if (w.exit < w.entry) throw ParseError("window exit precedes entry", lineno);
      roi.windows.push_back(w);
    } else if (text.starts_with("area:")) {
      roi.area_m2 = parse_double(text.substr(5), lineno, "area");
      has_area.back() = true;
    } else {
      throw ParseError(fmt::format("unknown field '{}'", text), lineno);
    }
  }

  std::map<geo::CellId, std::size_t> owner;
  for (std::size_t r = 0; r < rois.size(); ++r) {
    auto& roi = rois[r];
    if (roi.cells.empty()) throw InputError(fmt::format("roi '{}' has no cells", roi.id));
    std::sort(roi.windows.begin(), roi.windows.end(),
              [](const VisitWindow& a, const VisitWindow& b) { return a.entry < b.entry; });
    for (std::size_t w = 1; w < roi.windows.size(); ++w)
      if (roi.windows[w].entry < roi.windows[w - 1].exit)
        throw InputError(fmt::format("roi '{}' has overlapping visit windows", roi.id));
    if (!has_area[r]) roi.area_m2 = geo::average_area_m2(roi.level) * static_cast<double>(roi.cells.size());
    for (const auto c : roi.cells) {
      auto [it, inserted] = owner.emplace(c, r);
      if (!inserted && it->second != r && warnings) {
        ++warnings->shared_cells;
        warnings->messages.push_back(
            fmt::format("cell {} shared by rois '{}' and '{}'", c.to_hex(), rois[it->second].id, roi.id));
      }
    }
  }
  return rois;
}

std::vector<GroundTruthRoi> read_ground_truth(const std::filesystem::path& path, std::optional<int> expected_level,
                                              Warnings* warnings) {
  auto in = open(path);
  return read_ground_truth(in, expected_level, warnings);
}

void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRoi>& rois) {
  bool first = true;
  for (const auto& roi : rois) {
    if (!first) out << '\n';
    first = false;
    out << "roi " << roi.id << " level=" << roi.level << '\n';
    out << "cells: ";
    bool sep = false;
    for (const auto c : roi.cells) {
      if (sep) out << ',';
      out << c.to_hex();
      sep = true;
    }
    out << '\n';
    for (const auto& w : roi.windows)
      out << "window: " << format_iso8601(w.entry) << ' ' << format_iso8601(w.exit) << '\n';
    out << fmt::format("area: {:.3f}\n", roi.area_m2);
  }
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthRoi>& rois) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  write_ground_truth(out, rois);
}

}  // namespace capstone::ingest
