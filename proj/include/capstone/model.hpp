#pragma once

// Mobility model graph: ROIs as nodes, observed movements between them as
// edges carrying a representative path and a first-order transition
// probability.

#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/peaks.hpp"

namespace capstone::model {

using CellSet = std::set<geo::CellId>;

// 2|a n b| / (|a| + |b|); two empty sets give 0.
double dice(const CellSet& a, const CellSet& b);

struct Roi {
  int id = 0;
  CellSet cells;
  double area_m2 = 0.0;
  std::size_t visit_count = 0;
  std::size_t sub_visit_count = 0;
  double mean_stay_s = 0.0;
  double first_entry = 0.0;
  double last_exit = 0.0;

  friend bool operator==(const Roi&, const Roi&) = default;
};

struct Transition {
  int from = 0;
  int to = 0;
  std::vector<geo::CellId> path;
  double probability = 0.0;
  std::size_t count = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct MobilityModel {
  int level = geo::kDefaultLevel;
  std::optional<int> basecamp_id;
  std::vector<Roi> rois;
  std::vector<Transition> transitions;  // sorted by (from, to)

  friend bool operator==(const MobilityModel&, const MobilityModel&) = default;
};

struct Assembly {
  std::vector<Roi> rois;
  std::vector<int> assignment;  // ROI id per input visit
  std::vector<bool> nested;     // visit attached as a sub-visit of its predecessor
  std::optional<int> basecamp_id;
};

// Time-ordered visits to ROIs. A visit sharing any cell with an existing ROI
// joins it (ROIs it bridges are merged); a visit whose time span lies inside
// the previous top-level visit is a sub-visit of that visit's ROI. ROI ids
// follow first appearance, so the result is a pure function of the input.
Assembly assemble(const std::vector<peaks::Visit>& visits, int level = geo::kDefaultLevel);

// Modal cell at K evenly spaced stations of fractional progress, K being the
// median path length; consecutive repeats dropped; ties go to the lower rank.
// Throws InputError on an empty list.
std::vector<geo::CellId> representative_path(const std::vector<std::vector<geo::CellId>>& paths);

// Count-based first-order probabilities over consecutive ids, sorted by
// (from, to). Fewer than two entries give no transitions.
std::vector<Transition> transition_matrix(std::span<const int> sequence);

// assemble + transitions between consecutive top-level visits, each with the
// representative of its observed paths (exit cell, transition cells, entry
// cell).
MobilityModel build_model(const std::vector<peaks::Visit>& visits, int level = geo::kDefaultLevel);

// JSON document with top-level `level`, `basecamp`, `rois`, `transitions`.
// Numbers are rounded to 12 significant digits; a second roundtrip is exact.
std::string serialize(const MobilityModel& model);
MobilityModel deserialize(const std::string& document);  // throws InputError

}  // namespace capstone::model
