#include "capstone/signal.hpp"

#include <cmath>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::signal {

std::vector<double> SignalView::as_double() const {
  return {offsets.begin(), offsets.end()};
}

SpaceTimeSignal to_signal(const Trajectory& traj, geo::CellLevel level, std::optional<double> interval) {
  if (traj.empty()) throw InputError("empty trajectory");
  double step = 0.0;
  if (traj.size() >= 2) {
    step = traj[1].t - traj[0].t;
    if (interval && std::fabs(*interval - step) > 1e-6)
      throw InputError(fmt::format("trajectory interval {} s does not match the expected {} s", step, *interval));
    if (!traj.is_uniform(step, 1e-6 * std::max(1.0, step)))
      throw InputError("trajectory is not uniformly sampled; resample it first");
  } else if (interval) {
    step = *interval;
  } else {
    throw InputError("cannot infer the sampling interval of a single fix");
  }

  SpaceTimeSignal s;
  s.level = level;
  s.start_time = traj.start_time();
  s.interval = step;
  s.cells.reserve(traj.size());
  s.values.reserve(traj.size());
  for (const auto& p : traj.points) {
    const auto c = geo::cell_id(p.loc, level);
    s.cells.push_back(c);
    s.values.push_back(geo::rank(c));
  }
  s.basecamp_cell = basecamp(s.cells);
  s.basecamp_rank = geo::rank(s.basecamp_cell);
  return s;
}

geo::CellId basecamp(const std::vector<geo::CellId>& cells) {
  if (cells.empty()) throw InputError("basecamp of an empty signal");
  std::unordered_map<std::uint64_t, std::size_t> counts;
  counts.reserve(cells.size() / 4 + 1);
  geo::CellId best = cells.front();
  std::size_t best_count = 0;
  // Scanning in order and replacing only on a strictly larger count keeps
  // the earliest first occurrence on ties.
  for (const auto c : cells) ++counts[c.raw()];
  for (const auto c : cells) {
    const auto k = counts[c.raw()];
    if (k > best_count) {
      best = c;
      best_count = k;
    }
  }
  return best;
}

geo::CellId basecamp(const SpaceTimeSignal& signal) { return basecamp(signal.cells); }

SpaceTimeSignal rebase(SpaceTimeSignal signal, geo::CellId reference) {
  if (reference.level() != signal.level.value())
    throw InputError(fmt::format("reference cell level {} differs from signal level {}", reference.level(),
                                 signal.level.value()));
  signal.basecamp_cell = reference;
  signal.basecamp_rank = geo::rank(reference);
  return signal;
}

SignalView view_offsets(const SpaceTimeSignal& signal) {
  SignalView v;
  v.start_time = signal.start_time;
  v.interval = signal.interval;
  v.offsets.reserve(signal.size());
  for (const auto r : signal.values)
    v.offsets.push_back(static_cast<std::int64_t>(r) - static_cast<std::int64_t>(signal.basecamp_rank));
  return v;
}

std::vector<double> distance_view(const SpaceTimeSignal& signal) {
  const auto home = geo::decode(signal.basecamp_cell).center;
  std::vector<double> d;
  d.reserve(signal.size());
  for (const auto c : signal.cells) d.push_back(geo::haversine_m(home, geo::decode(c).center));
  return d;
}

void write_signal_csv(std::ostream& out, const SpaceTimeSignal& signal) {
  out << "timestamp,cell_hex,rank,offset\n";
  const auto view = view_offsets(signal);
  for (std::size_t i = 0; i < signal.size(); ++i)
    out << fmt::format("{},{},{},{}\n", signal.time_at(i), signal.cells[i].to_hex(), signal.values[i],
                       view.offsets[i]);
}

}  // namespace capstone::signal
