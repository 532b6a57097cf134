#pragma once

#include <vector>

#include "capstone/trajectory.hpp"

namespace capstone::preprocess {

struct ResampleSpec {
  double interval_s = 5.0;
  int semivariance_window = 8;  // samples feeding each estimate, >= 2
  double max_gap_s = 3600.0;    // longer gaps split the trajectory

  void validate() const;  // throws InputError
};

// Symmetric binomial kernel of the given odd width, summing to 1.
std::vector<double> binomial_kernel(int width);

// Convolves lat and lon separately; timestamps untouched. Near the ends the
// kernel is truncated and renormalised over the samples that exist.
Trajectory lowpass(const Trajectory& traj, int kernel_width);

// Linear semivariogram gamma(h) = nugget + slope * h for h > 0, gamma(0) = 0,
// h in seconds, gamma in square metres.
struct Semivariogram {
  double nugget = 0.0;
  double slope = 0.0;

  double operator()(double h) const noexcept { return h <= 0.0 ? 0.0 : nugget + slope * h; }
};

// Least-squares fit over all sample pairs of the window, both terms clamped
// to be non-negative.
Semivariogram fit_semivariogram(std::span<const TrackPoint> window);

// Resamples one gap-free stretch onto t0, t0 + interval, ... <= t_last.
// Each estimate is an inverse-semivariance weighted mean of the window:
// the first original sample at or after the target plus the
// semivariance_window - 1 samples before it.
Trajectory interpolate(const Trajectory& traj, const ResampleSpec& spec);

// Splits wherever consecutive fixes are more than max_gap_s apart.
std::vector<Trajectory> split_segments(const Trajectory& traj, double max_gap_s);

// lowpass, split, then interpolate every segment with at least two points.
std::vector<Trajectory> resample(const Trajectory& traj, const ResampleSpec& spec, int kernel_width);

}  // namespace capstone::preprocess
