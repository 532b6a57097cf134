#include "capstone/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capstone/errors.hpp"

namespace capstone::pipeline {

namespace {

struct Run {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::size_t size() const noexcept { return end - begin; }
};

// Maximal runs where pred holds, inside [lo, hi).
template <class Pred>
std::vector<Run> runs_where(std::size_t lo, std::size_t hi, Pred pred) {
  std::vector<Run> out;
  std::size_t i = lo;
  while (i < hi) {
    if (!pred(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < hi && pred(j)) ++j;
    out.push_back({i, j});
    i = j;
  }
  return out;
}

// Static runs inside an excursion; gaps shorter than `bridge` are noise and
// get closed, runs shorter than `min_len` are dropped.
std::vector<Run> stays_in(const Run& ex, const std::vector<double>& act, std::size_t bridge, std::size_t min_len) {
  auto runs = runs_where(ex.begin, ex.end, [&](std::size_t i) { return act[i] <= 0.5; });
  std::vector<Run> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && r.begin - merged.back().end < bridge) merged.back().end = r.end;
    else merged.push_back(r);
  }
  std::erase_if(merged, [&](const Run& r) { return r.size() < min_len; });
  return merged;
}

bool shares_cell(const peaks::Visit& a, const peaks::Visit& b) {
  for (const auto c : b.roi_cells)
    if (a.roi_cells.count(c)) return true;
  return false;
}

// Within one excursion, a later visit back to the cells of an earlier one
// closes a parent stay; the visits between are its sub-visits.
std::vector<peaks::Visit> nest(std::vector<peaks::Visit> in) {
  // Neighbours on the same cells are one stay broken up by noise.
  std::vector<peaks::Visit> seq;
  for (auto& v : in) {
    if (!seq.empty() && shares_cell(seq.back(), v)) {
      auto& prev = seq.back();
      prev.roi_cells.insert(v.roi_cells.begin(), v.roi_cells.end());
      prev.exit_index = v.exit_index;
      prev.exit_time = v.exit_time;
      prev.exit_cell = v.exit_cell;
      prev.transition_out = std::move(v.transition_out);
      continue;
    }
    seq.push_back(std::move(v));
  }

  std::vector<peaks::Visit> out;
  std::size_t i = 0;
  while (i < seq.size()) {
    std::size_t last = i;
    for (std::size_t j = seq.size(); j-- > i + 1;)
      if (shares_cell(seq[i], seq[j])) {
        last = j;
        break;
      }
    auto parent = std::move(seq[i]);
    if (last > i) {
      auto& tail = seq[last];
      parent.roi_cells.insert(tail.roi_cells.begin(), tail.roi_cells.end());
      for (std::size_t k = i + 1; k < last; ++k) {
        const auto& mid = seq[k];
        // Cells of the parent seen again in a middle stay belong to the parent.
        if (shares_cell(parent, mid)) parent.roi_cells.insert(mid.roi_cells.begin(), mid.roi_cells.end());
        else parent.sub_visits.push_back(std::move(seq[k]));
      }
      parent.exit_index = tail.exit_index;
      parent.exit_time = tail.exit_time;
      parent.exit_cell = tail.exit_cell;
      parent.transition_out = std::move(tail.transition_out);
    }
    out.push_back(std::move(parent));
    i = last + 1;
  }
  return out;
}

}  // namespace

void Options::validate() const {
  geo::CellLevel{level};
  resample.validate();
  if (kernel_width < 1 || kernel_width % 2 == 0) throw InputError("kernel_width must be a positive odd number");
  if (smoothing_width < 1 || smoothing_width % 2 == 0)
    throw InputError("smoothing_width must be a positive odd number");
  if (!(baseline_k > 0.0)) throw InputError("baseline_k must be positive");
  if (!(baseline_window_s > 0.0)) throw InputError("baseline_window_s must be positive");
  if (recurrence_horizon < 1) throw InputError("recurrence_horizon must be positive");
  if (!(slope_tolerance > 0.0)) throw InputError("slope_tolerance must be positive");
  if (!(min_stay_s >= 0.0)) throw InputError("min_stay_s must be non-negative");
  if (fit.max_iterations < 1) throw InputError("fit iterations must be positive");
}

std::vector<peaks::Visit> detect_visits(const signal::SpaceTimeSignal& sig, const Options& opts, Result* stats,
                                        SegmentTrace* trace) {
  const std::size_t n = sig.size();
  std::vector<peaks::Visit> visits;
  if (n == 0) return visits;
  const double dt = sig.interval > 0.0 ? sig.interval : 1.0;
  const auto samples = [&](double seconds) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(seconds / dt)));
  };
  const std::size_t width = static_cast<std::size_t>(opts.smoothing_width);
  const std::size_t min_stay = std::max<std::size_t>(2, samples(opts.min_stay_s));

  const auto x = signal::view_offsets(sig).as_double();
  peaks::BaselineOptions bopts;
  bopts.k = opts.baseline_k;
  bopts.window = samples(opts.baseline_window_s);
  bopts.sigma_floor = peaks::neighbour_rank_gap(sig.basecamp_cell);
  bopts.mode = opts.mode;
  const auto base = peaks::baseline(x, bopts);
  const auto act = peaks::activity(sig.values, opts.smoothing_width, opts.recurrence_horizon);

  // Excursions that hold a stay and real movement; the rest is jitter
  // around the basecamp.
  auto excursions = runs_where(0, n, [&](std::size_t i) { return !base.is_baseline[i]; });
  std::vector<bool> kept(n, false);
  std::vector<std::pair<Run, std::vector<Run>>> work;
  std::size_t jitter = 0;
  for (const auto& ex : excursions) {
    std::size_t moving = 0;
    for (std::size_t i = ex.begin; i < ex.end; ++i) moving += act[i] >= 0.75;
    auto stays = stays_in(ex, act, width, min_stay);
    if (moving < width || stays.empty()) {
      ++jitter;
      continue;
    }
    for (std::size_t i = ex.begin; i < ex.end; ++i) kept[i] = true;
    work.emplace_back(ex, std::move(stays));
  }

  // One region per stay, split at the middle of the moving gaps.
  std::vector<peaks::Region> regions;
  std::vector<std::size_t> region_excursion;
  std::vector<Run> region_stay;
  for (std::size_t e = 0; e < work.size(); ++e) {
    const auto& [ex, stays] = work[e];
    for (std::size_t k = 0; k < stays.size(); ++k) {
      peaks::Region r;
      r.begin = k == 0 ? ex.begin : (stays[k - 1].end + stays[k].begin) / 2;
      r.end = k + 1 == stays.size() ? ex.end : (stays[k].end + stays[k + 1].begin) / 2;
      r.reference_apex = (stays[k].begin + stays[k].end - 1) / 2;
      regions.push_back(r);
      region_excursion.push_back(e);
      region_stay.push_back(stays[k]);
    }
  }

  std::vector<double> fitted;
  std::size_t diverged = 0;
  std::vector<std::optional<peaks::RegionFit>> fits(regions.size());
  if (opts.fit_curves) {
    auto fr = peaks::fit_curve(base.corrected, regions, peaks::kAllShapes, opts.fit);
    fitted = std::move(fr.fitted);
    diverged = fr.diverged;
    // fit_curve skips regions too short to fit; match the rest back by position.
    std::size_t k = 0;
    for (auto& f : fr.regions) {
      while (k < regions.size() && regions[k].begin != f.region.begin) ++k;
      if (k < regions.size() && f.converged) fits[k] = f;
    }
  } else {
    fitted = base.corrected;
  }
  const auto d1 = peaks::smooth_derivative(fitted, opts.smoothing_width, opts.mode);
  const auto d2 = peaks::smooth_derivative(d1, opts.smoothing_width, opts.mode);
  peaks::DetectOptions dopts;
  dopts.width = opts.smoothing_width;
  dopts.literal_curvature = opts.literal_curvature;
  const auto detected = peaks::detect_peaks(fitted, d1, d2, dopts);

  peaks::IsolateOptions iopts;
  iopts.slope_tolerance = opts.slope_tolerance;
  iopts.width = opts.smoothing_width;
  iopts.horizon = opts.recurrence_horizon;

  std::size_t rejected = 0;
  std::vector<std::vector<peaks::Visit>> per_excursion(work.size());
  for (std::size_t k = 0; k < regions.size(); ++k) {
    const auto& r = regions[k];
    const auto& stay = region_stay[k];
    const std::size_t ref = *r.reference_apex;

    // The detection closest to the stay centre, provided it sits in the stay.
    std::optional<peaks::FittedPeak> pick;
    for (const auto& p : detected) {
      if (p.apex < stay.begin || p.apex >= stay.end) continue;
      const auto dist = [&](const peaks::FittedPeak& q) {
        return q.apex > ref ? q.apex - ref : ref - q.apex;
      };
      if (!pick || dist(p) < dist(*pick) || (dist(p) == dist(*pick) && std::fabs(p.height) > std::fabs(pick->height)))
        pick = p;
    }
    if (!pick) {
      peaks::FittedPeak p;
      p.apex = ref;
      p.detected_at = std::min(ref + 1, n - 1);
      double mean = 0.0;
      for (std::size_t i = stay.begin; i < stay.end; ++i) mean += base.corrected[i];
      p.polarity = mean >= 0.0 ? peaks::Polarity::Maximum : peaks::Polarity::Minimum;
      p.height = fitted[ref];
      p.flags |= peaks::kNoDetection;
      pick = p;
    }
    auto peak = *pick;
    const auto bounds = peaks::peak_bounds(peak, d1, d2, r.begin, r.end - 1);
    peak.start = bounds.start;
    peak.end = bounds.end;
    peak.flags |= bounds.flags;
    const auto cls = peaks::classify_shape(peak, d1, d2);
    if (cls.ambiguous) peak.flags |= peaks::kShapeAmbiguous;
    if (fits[k]) peak.shape = fits[k]->shape;
    else peak.shape.variant = cls.variant;
    if (opts.fit_curves && !fits[k]) peak.flags |= peaks::kFitDiverged;

    // The region carries both transition halves, so isolation sees all of it.
    peak.start = std::min(peak.start, r.begin);
    peak.end = std::max(peak.end, r.end - 1);
    auto v = peaks::isolate_visit(sig, base.corrected, peak, act, iopts);
    if (!v) {
      ++rejected;
      continue;
    }
    per_excursion[region_excursion[k]].push_back(std::move(*v));
  }
  for (auto& seq : per_excursion)
    for (auto& v : nest(std::move(seq))) visits.push_back(std::move(v));

  // Stays at the basecamp: everything outside the kept excursions.
  for (const auto& run : runs_where(0, n, [&](std::size_t i) { return !kept[i]; })) {
    std::vector<std::size_t> still;
    for (std::size_t i = run.begin; i < run.end; ++i)
      if (act[i] <= 0.5) still.push_back(i);
    if (still.size() < min_stay) continue;
    peaks::Visit v;
    for (const auto i : still) v.roi_cells.insert(sig.cells[i]);
    v.entry_index = still.front();
    v.exit_index = still.back();
    v.entry_cell = sig.cells[v.entry_index];
    v.exit_cell = sig.cells[v.exit_index];
    v.entry_time = sig.time_at(v.entry_index);
    v.exit_time = sig.time_at(v.exit_index);
    v.apex_time = sig.time_at((v.entry_index + v.exit_index) / 2);
    v.peak.start = run.begin;
    v.peak.end = run.end - 1;
    v.peak.apex = (v.entry_index + v.exit_index) / 2;
    v.peak.detected_at = std::min(v.peak.apex + 1, n - 1);
    v.basecamp = true;
    visits.push_back(std::move(v));
  }
  std::sort(visits.begin(), visits.end(),
            [](const peaks::Visit& a, const peaks::Visit& b) { return a.entry_index < b.entry_index; });

  if (stats) {
    stats->excursions += excursions.size();
    stats->jitter_excursions += jitter;
    stats->rejected_peaks += rejected;
    stats->diverged_fits += diverged;
  }
  if (trace) {
    trace->signal = sig;
    trace->offsets = x;
    trace->corrected = base.corrected;
    trace->fitted = std::move(fitted);
    trace->activity = act;
  }
  return visits;
}

Result run(const Trajectory& traj, const Options& opts) {
  opts.validate();
  if (traj.empty()) throw InputError("empty trajectory");
  traj.validate();
  const geo::CellLevel level{opts.level};
  const auto pieces = preprocess::resample(traj, opts.resample, opts.kernel_width);

  std::vector<signal::SpaceTimeSignal> signals;
  std::vector<geo::CellId> all_cells;
  for (const auto& seg : pieces) {
    if (seg.size() < 2) continue;
    signals.push_back(signal::to_signal(seg, level, opts.resample.interval_s));
    all_cells.insert(all_cells.end(), signals.back().cells.begin(), signals.back().cells.end());
  }
  if (signals.empty()) throw InputError("trajectory too short to resample");
  const auto home = signal::basecamp(all_cells);

  Result out;
  for (auto& s : signals) {
    SegmentTrace trace;
    auto visits = detect_visits(signal::rebase(std::move(s), home), opts, &out, &trace);
    for (auto& v : visits) out.visits.push_back(std::move(v));
    out.segments.push_back(std::move(trace));
  }
  std::stable_sort(out.visits.begin(), out.visits.end(),
                   [](const peaks::Visit& a, const peaks::Visit& b) { return a.entry_time < b.entry_time; });
  out.model = model::build_model(out.visits, opts.level);
  return out;
}

}  // namespace capstone::pipeline
