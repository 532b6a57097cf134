#pragma once

// Scoring against planted truth, visit-consistency statistics, a synthetic
// trajectory generator with known ROIs, and runtime scaling benchmarks.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "capstone/geocell.hpp"
#include "capstone/ingest.hpp"
#include "capstone/model.hpp"
#include "capstone/peaks.hpp"
#include "capstone/trajectory.hpp"

namespace capstone::eval {

// ---- scoring --------------------------------------------------------------

struct Match {
  int predicted = 0;
  std::size_t truth = 0;  // index into the truth list
  double dice = 0.0;
};

struct ScoreReport {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  bool precision_defined = true;  // false when nothing was predicted
  bool recall_defined = true;     // false when there is no truth
  std::vector<Match> matching;

  // Recomputes the ratios from the counts.
  void finish();
  ScoreReport& operator+=(const ScoreReport& other);  // pooled counts
};

// Greedy maximum-Dice matching: pairs in order of decreasing overlap, each
// prediction and truth used once, any overlap counts. Throws InputError when
// a truth ROI is recorded at another level.
ScoreReport score(const std::vector<model::Roi>& predicted, const std::vector<ingest::GroundTruthRoi>& truth,
                  int level);

// Plain-text summary and CSV `tp,fp,fn,precision,recall,accuracy`.
void write_score_text(std::ostream& out, const ScoreReport& r);
void write_score_csv(std::ostream& out, const ScoreReport& r);

// ---- visit consistency ----------------------------------------------------

struct Consistency {
  std::size_t roi_count = 0;
  std::size_t days = 0;  // calendar days spanned by the visits
  std::vector<std::size_t> daily_visits;
  double max_stay_s = 0.0;
  std::size_t short_10 = 0, short_15 = 0, short_30 = 0;  // visits under 10/15/30 min
  double stay_s = 0.0;    // time in top-level visits away from the basecamp
  double travel_s = 0.0;  // time between consecutive top-level visits
  double stay_fraction() const { return stay_s + travel_s > 0.0 ? stay_s / (stay_s + travel_s) : 0.0; }
};

// Top-level visits only; sub-visits are part of their parent's stay.
Consistency visit_consistency(const model::MobilityModel& model, const std::vector<peaks::Visit>& visits);

// Percent of users per bucket, in the layout of the published summary:
// ROI count 2-5 / 6-9 / 10-12, max stay 5-8 / 9-10 / 11-26 h, short visits
// <10 / <15 / <30 min (users whose shortest visit falls there), stay:travel
// nearest to 3:2 / 4:1 / 2:3. Users outside every bucket are counted in
// `other`.
struct ConsistencyTable {
  std::size_t users = 0;
  std::array<double, 4> roi_count{};  // last entry: other
  std::array<double, 4> max_stay{};
  std::array<double, 4> short_visits{};
  std::array<double, 3> stay_travel{};
};
ConsistencyTable tabulate(const std::vector<Consistency>& users);
void write_consistency_text(std::ostream& out, const ConsistencyTable& t);

// ---- synthetic generator --------------------------------------------------

struct SynthProfile {
  geo::GeoPoint home{47.3769, 8.5417};
  std::size_t roi_count = 5;      // besides home
  std::size_t nested_count = 0;   // sub-ROIs attached to the first ROIs
  double days = 14.0;
  double interval_s = 5.0;
  double noise_m = 5.0;           // per-axis Gaussian position noise
  double jitter_s = 0.0;          // uniform sampling jitter, < interval / 2
  double min_separation_m = 400.0;
  double max_distance_m = 4000.0;
  double min_speed_mps = 8.0;
  double max_speed_mps = 14.0;
  double walk_speed_mps = 2.0;    // hops between an ROI and its sub-ROI
  double min_dwell_s = 1800.0;
  double max_dwell_s = 4.0 * 3600.0;
  double chain_probability = 0.3;  // an outing continues to a second ROI
  // Destination weights from home; empty means uniform. Missing entries
  // count as zero.
  std::vector<double> branch_weights;
  std::size_t zero_dwell_stops = 0;  // stops on the way, not part of the truth
  double stop_dwell_s = 20.0;
  int level = geo::kDefaultLevel;
  Timestamp start = 1704067200.0;  // 2024-01-01T00:00:00Z

  void validate() const;  // throws InputError on an infeasible profile
};

struct PlantedRoi {
  std::string id;
  geo::GeoPoint centre;
  std::optional<std::size_t> parent;  // for sub-ROIs, index of the parent
};

struct PlantedVisit {
  std::size_t roi = 0;  // index into rois
  Timestamp entry = 0.0;
  Timestamp exit = 0.0;
};

struct SynthOutput {
  Trajectory trajectory;
  std::vector<PlantedRoi> rois;        // rois[0] is home
  std::vector<PlantedVisit> visits;    // time-ordered, sub-visits included
  std::vector<ingest::GroundTruthRoi> truth;  // sub-ROIs folded into parents; unvisited ROIs left out
  std::vector<std::size_t> destinations;      // ROI index of each outing's first stop
};

// Cells of a planted ROI: its centre cell and the eight around it.
std::set<geo::CellId> planted_cells(const geo::GeoPoint& centre, int level);

SynthOutput synth_generate(const SynthProfile& profile, std::uint64_t seed);

// Home and one workplace, a fixed daily schedule: `work_s` at work and
// `commute_s` each way.
SynthProfile commuter_profile(double work_s = 3.0 * 3600.0, double commute_s = 3600.0);
SynthOutput synth_commuter(double work_s, double commute_s, std::uint64_t seed);

// ---- runtime ---------------------------------------------------------------

struct BenchPipeline {
  std::string name;
  // Builds the input for size n and returns the timed call.
  std::function<std::function<void()>(std::size_t n)> prepare;
};

struct BenchRow {
  std::string pipeline;
  std::size_t n = 0;
  double median_ms = 0.0;
  bool rejected = false;  // at or below the clock resolution
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<std::pair<std::string, std::optional<double>>> slopes;  // per pipeline; nothing below two sizes
};

// `repetitions` timed runs per size after one discarded warm-up; the runs
// cycle through the sizes.
BenchResult runtime_bench(const std::vector<std::size_t>& sizes, const std::vector<BenchPipeline>& pipelines,
                          int repetitions = 10);

// Least-squares slope of log(time) against log(n).
std::optional<double> loglog_slope(const std::vector<std::pair<double, double>>& n_time);

// Pairwise sum of |xi - xj| over n values: exactly n^2 inner steps, tiled
// so the cost does not depend on the cache level the data fits in.
BenchPipeline quadratic_workload();

// Pipelines built on one synthetic trace (`days` long, 5 s sampling),
// preprocessed once and truncated to n samples outside the timed call:
// "capstone" (visit detection with dense operators), "capstone-banded", and
// the "dj", "dt", "zoi" baselines at their published defaults.
std::vector<BenchPipeline> standard_pipelines(std::uint64_t seed = 5, double days = 7.0);

// CSV `pipeline,n,median_ms,slope`; the slope repeats on every row of its
// pipeline, `n/a` when undefined, rejected sizes show `rejected`.
void write_bench_csv(std::ostream& out, const BenchResult& r);

}  // namespace capstone::eval
