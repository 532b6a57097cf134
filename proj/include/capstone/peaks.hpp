#pragma once

// Visit detection on a space-time signal: peak-shape fitting, streaming
// baseline correction, smoothed derivatives, zero-crossing detection, peak
// bounds, shape classification and the split of a peak into the static
// part (the region) and its rising/falling edges (the transitions).

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/signal.hpp"

namespace capstone::peaks {

// Banded evaluates every linear operator by its few non-zero taps. Dense
// evaluates the same operators as full n x n row products; it exists so the
// pipeline can be timed in its quadratic form and must agree with Banded.
enum class OperatorMode { Banded, Dense };

enum class ShapeVariant { RectGaussian, RectLorentzian, TriGaussian };

std::string_view to_string(ShapeVariant v);
ShapeVariant shape_from_string(std::string_view name);  // throws InputError

inline constexpr ShapeVariant kAllShapes[] = {ShapeVariant::RectGaussian, ShapeVariant::RectLorentzian,
                                              ShapeVariant::TriGaussian};

// `plateau` is the rectangle width (Rect*) or the triangle half-base (Tri);
// `spread` is the Gaussian sigma or the Lorentzian half-width. Sample units.
struct PeakShapeModel {
  ShapeVariant variant = ShapeVariant::RectGaussian;
  double plateau = 0.0;
  double spread = 1.0;
};

// Profile of the shape at offset x from its centre, scaled so the apex is 1.
// With plateau 0 every variant reduces to its bare kernel.
double shape_profile(const PeakShapeModel& shape, double x);

enum class Polarity { Maximum, Minimum };

enum Flag : unsigned {
  kStartClamped = 1u << 0,
  kEndClamped = 1u << 1,
  kShapeAmbiguous = 1u << 2,
  kFitDiverged = 1u << 3,
  kNoDetection = 1u << 4,
};

std::string flags_to_string(unsigned flags);

struct FittedPeak {
  std::size_t start = 0;
  std::size_t apex = 0;
  std::size_t end = 0;
  std::size_t detected_at = 0;  // apex + 1: the zero crossing is seen one step late
  double height = 0.0;
  PeakShapeModel shape;
  Polarity polarity = Polarity::Maximum;
  unsigned flags = 0;
};

// ---- fitting --------------------------------------------------------------

struct Region {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::optional<std::size_t> reference_apex;  // defaults to argmax |y|
};

struct FitOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
  double max_apex_shift = 2.0;
  std::size_t max_samples = 128;  // longer regions are fitted on block means
};

struct RegionFit {
  Region region;
  PeakShapeModel shape;
  double centre = 0.0;
  double height = 0.0;
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct FitResult {
  std::vector<double> fitted;
  std::vector<RegionFit> regions;
  std::size_t diverged = 0;
};

// Damped least squares fit of one shape to y over the region.
RegionFit fit_region(std::span<const double> y, const Region& region, ShapeVariant variant,
                     const FitOptions& opts = {});

// Smoothing plus a robust noise estimate (MAD of first differences); regions
// are runs beyond 4 sigma widened to where the signal falls back to 1 sigma,
// each anchored at the extremum of the smoothed signal.
std::vector<Region> candidate_regions(std::span<const double> y, int smoothing_width = 5);

// Fits every region with each model and keeps the lowest residual. Outside
// the regions the output is the median background level, so a flat input is
// returned unchanged. Regions whose fit does not converge are copied through
// and counted in `diverged`.
FitResult fit_curve(std::span<const double> y, std::span<const Region> regions,
                    std::span<const ShapeVariant> models = kAllShapes, const FitOptions& opts = {});
FitResult fit_curve(std::span<const double> y, std::span<const ShapeVariant> models = kAllShapes,
                    const FitOptions& opts = {});

// ---- baseline -------------------------------------------------------------

struct BaselineOptions {
  double k = 3.0;
  std::size_t window = 720;  // trailing samples, one hour at 5 s
  double sigma_floor = 0.0;
  OperatorMode mode = OperatorMode::Banded;
};

struct BaselineResult {
  std::vector<double> corrected;  // 0 on baseline samples, x - mean elsewhere
  std::vector<double> mean;
  std::vector<double> sigma;
  std::vector<bool> is_baseline;
};

// Streaming: the statistics at sample i use only baseline-classified samples
// in the trailing window before i, except that the first window is taken in
// whole to warm up. When the window holds no baseline samples the statistics
// stay frozen.
BaselineResult baseline(std::span<const double> x, const BaselineOptions& opts = {});

// Median absolute rank gap between a cell and its eight neighbours.
double neighbour_rank_gap(geo::CellId cell);

// ---- derivatives and detection ---------------------------------------------

// Central difference (one-sided at the ends) followed by a width-w mean
// filter with edge replication. Length preserved.
std::vector<double> smooth_derivative(std::span<const double> x, int width = 5,
                                      OperatorMode mode = OperatorMode::Banded);

struct DetectOptions {
  int width = 5;  // must match the smoothing width used for d1/d2
  // Require a positive second difference for every peak, as the curvature
  // inequality is literally written, instead of the polarity-matched sign.
  bool literal_curvature = false;
};

std::vector<FittedPeak> detect_peaks(std::span<const double> corrected, std::span<const double> d1,
                                     std::span<const double> d2, const DetectOptions& opts = {});

// Chain for noisy input: fit_curve, derivatives of the fitted curve, and
// detection kept to the fitted regions (the background between peaks can
// hold shallow extrema left by the shape tails).
std::vector<FittedPeak> find_peaks(std::span<const double> y, const DetectOptions& opts = {},
                                   const FitOptions& fit = {});

struct Bounds {
  std::size_t start = 0;
  std::size_t end = 0;
  unsigned flags = 0;
};

// Start: walking out from the rising edge, the first sample where |d1| drops
// to 3e^-4 of its peak. End: past the falling edge, the first sample where
// |d2| drops to 8e^-4.5 of its peak. For a Gaussian both land at 3 sigma.
// The search is confined to [lo, hi].
Bounds peak_bounds(const FittedPeak& peak, std::span<const double> d1, std::span<const double> d2,
                   std::size_t lo = 0, std::optional<std::size_t> hi = {});

struct ShapeClass {
  ShapeVariant variant = ShapeVariant::RectGaussian;
  bool ambiguous = false;
};

ShapeClass classify_shape(const FittedPeak& peak, std::span<const double> d1, std::span<const double> d2);

// ---- isolation ------------------------------------------------------------

// 1 where the rank recurs within +-horizon samples, 0 otherwise.
std::vector<std::uint8_t> recurrence(std::span<const std::uint64_t> ranks, int horizon);

// Rate-of-change proxy on a rank signal: mean filter of (1 - recurrence).
// Near 0 while the user stays put, near 1 while moving.
std::vector<double> activity(std::span<const std::uint64_t> ranks, int width = 5, int horizon = 12);

struct IsolateOptions {
  double slope_tolerance = 0.25;
  int width = 5;
  int horizon = 12;
};

struct Visit {
  std::set<geo::CellId> roi_cells;
  std::vector<geo::CellId> transition_in;
  std::vector<geo::CellId> transition_out;
  Timestamp entry_time = 0.0;
  Timestamp exit_time = 0.0;
  Timestamp apex_time = 0.0;
  double slope_constant = 0.0;
  std::size_t entry_index = 0;
  std::size_t exit_index = 0;
  geo::CellId entry_cell;  // first and last ROI samples
  geo::CellId exit_cell;
  FittedPeak peak;
  bool basecamp = false;
  std::vector<Visit> sub_visits;
};

// Splits the peak into transition edges and the static run around the apex.
// Returns nothing when the static run is shorter than two samples.
std::optional<Visit> isolate_visit(const signal::SpaceTimeSignal& signal, std::span<const double> corrected,
                                   const FittedPeak& peak, std::span<const double> activity,
                                   const IsolateOptions& opts = {});

// CSV `visit_id,entry,apex,exit,shape,height,n_roi_cells,n_transition_cells,flags`.
void write_visits_csv(std::ostream& out, const std::vector<Visit>& visits);

}  // namespace capstone::peaks
