#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/trajectory.hpp"

namespace capstone::signal {

// Uniformly sampled sequence of Hilbert ranks, one per trajectory fix.
struct SpaceTimeSignal {
  geo::CellLevel level;
  Timestamp start_time = 0.0;
  double interval = 0.0;
  std::vector<std::uint64_t> values;  // values[i] == rank(cells[i])
  std::vector<geo::CellId> cells;
  std::uint64_t basecamp_rank = 0;
  geo::CellId basecamp_cell;

  std::size_t size() const noexcept { return values.size(); }
  Timestamp time_at(std::size_t i) const noexcept { return start_time + static_cast<double>(i) * interval; }
};

// Signed distance from the basecamp in rank units.
struct SignalView {
  Timestamp start_time = 0.0;
  double interval = 0.0;
  std::vector<std::int64_t> offsets;

  std::vector<double> as_double() const;
};

// Throws InputError on an empty or non-uniform trajectory. A single fix is
// accepted when `interval` is given.
SpaceTimeSignal to_signal(const Trajectory& traj, geo::CellLevel level, std::optional<double> interval = {});

// Most frequent cell; ties go to the cell seen first.
geo::CellId basecamp(const std::vector<geo::CellId>& cells);
geo::CellId basecamp(const SpaceTimeSignal& signal);

// Same signal measured against another reference cell (used to give every
// segment of a gappy trajectory one shared basecamp).
SpaceTimeSignal rebase(SpaceTimeSignal signal, geo::CellId reference);

SignalView view_offsets(const SpaceTimeSignal& signal);

// Great-circle metres from the basecamp centre, for plotting.
std::vector<double> distance_view(const SpaceTimeSignal& signal);

// CSV `timestamp,cell_hex,rank,offset`.
void write_signal_csv(std::ostream& out, const SpaceTimeSignal& signal);

}  // namespace capstone::signal
