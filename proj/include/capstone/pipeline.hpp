#pragma once

// The full chain from a raw trajectory to a mobility model: resampling, the
// space-time signal, baseline correction, curve fitting, peak detection and
// isolation, nesting of revisits, and model assembly.

#include <map>
#include <string>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/model.hpp"
#include "capstone/peaks.hpp"
#include "capstone/preprocess.hpp"
#include "capstone/signal.hpp"
#include "capstone/trajectory.hpp"

namespace capstone::pipeline {

struct Options {
  int level = geo::kDefaultLevel;
  preprocess::ResampleSpec resample;
  int kernel_width = 5;
  double baseline_k = 3.0;
  double baseline_window_s = 3600.0;
  int smoothing_width = 5;
  int recurrence_horizon = 12;
  double slope_tolerance = 0.25;
  double min_stay_s = 120.0;  // shorter static runs (traffic stops) are not stays
  bool literal_curvature = false;
  bool fit_curves = true;
  // Looser than the standalone defaults: the fit only has to place the apex.
  peaks::FitOptions fit{.max_iterations = 50, .relative_tolerance = 1e-4};
  peaks::OperatorMode mode = peaks::OperatorMode::Banded;

  void validate() const;  // throws InputError
};

// Per-segment intermediate signals, kept for plots and debugging.
struct SegmentTrace {
  signal::SpaceTimeSignal signal;
  std::vector<double> offsets;
  std::vector<double> corrected;
  std::vector<double> fitted;
  std::vector<double> activity;
};

struct Result {
  std::vector<SegmentTrace> segments;
  std::vector<peaks::Visit> visits;  // top level, time-ordered, basecamp stays included
  model::MobilityModel model;
  std::size_t excursions = 0;          // runs of non-baseline samples
  std::size_t jitter_excursions = 0;   // dropped: no stay or no real movement
  std::size_t rejected_peaks = 0;      // isolate found no static run
  std::size_t diverged_fits = 0;
};

// Visits in one uniformly sampled, basecamp-referenced segment.
std::vector<peaks::Visit> detect_visits(const signal::SpaceTimeSignal& sig, const Options& opts,
                                        Result* stats = nullptr, SegmentTrace* trace = nullptr);

Result run(const Trajectory& traj, const Options& opts = {});

}  // namespace capstone::pipeline
