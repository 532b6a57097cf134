#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/trajectory.hpp"

namespace capstone::ingest {

struct CsvColumns {
  std::string lat = "lat";
  std::string lon = "lon";
  std::string timestamp = "timestamp";
  std::string accuracy = "accuracy";  // optional column
  // Reject rows whose timestamp goes backwards; otherwise drop them.
  bool strict = true;
};

struct Warnings {
  std::size_t duplicate_timestamps = 0;
  std::size_t out_of_order = 0;
  std::size_t shared_cells = 0;
  std::vector<std::string> messages;
};

Trajectory read_csv(std::istream& in, const CsvColumns& cols = {}, Warnings* warnings = nullptr);
Trajectory read_csv(const std::filesystem::path& path, const CsvColumns& cols = {},
                    Warnings* warnings = nullptr);

// Canonical layout: `lat,lon,timestamp[,accuracy]`, degrees at 1e-7.
void write_csv(std::ostream& out, const Trajectory& traj);
void write_csv(const std::filesystem::path& path, const Trajectory& traj);

// Geolife .plt: six header lines, then
// lat,lon,0,altitude_ft,days_since_1899-12-30,date,time
Trajectory read_plt(std::istream& in, Warnings* warnings = nullptr);
Trajectory read_plt(const std::filesystem::path& path, Warnings* warnings = nullptr);

// Dispatches on extension: .plt -> Geolife, anything else -> CSV.
Trajectory read_any(const std::filesystem::path& path, const CsvColumns& cols = {},
                    Warnings* warnings = nullptr);

struct VisitWindow {
  Timestamp entry = 0.0;
  Timestamp exit = 0.0;
  friend bool operator==(const VisitWindow&, const VisitWindow&) = default;
};

struct GroundTruthRoi {
  std::string id;
  int level = 0;
  std::set<geo::CellId> cells;
  std::vector<VisitWindow> windows;
  double area_m2 = 0.0;

  friend bool operator==(const GroundTruthRoi&, const GroundTruthRoi&) = default;
};

// Blocks of
//   roi <id> level=<L>
//   cells: <hex>,<hex>,...
//   window: <entryISO8601> <exitISO8601>
//   area: <m2>                 (optional)
// separated by blank lines. `#` starts a comment line.
std::vector<GroundTruthRoi> read_ground_truth(std::istream& in, std::optional<int> expected_level = {},
                                              Warnings* warnings = nullptr);
std::vector<GroundTruthRoi> read_ground_truth(const std::filesystem::path& path,
                                              std::optional<int> expected_level = {},
                                              Warnings* warnings = nullptr);
void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRoi>& rois);
void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthRoi>& rois);

}  // namespace capstone::ingest
