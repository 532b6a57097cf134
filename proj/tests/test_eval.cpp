#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "capstone/errors.hpp"
#include "capstone/eval.hpp"

using namespace capstone;
using namespace capstone::eval;

namespace {

constexpr int kLevel = 12;

model::Roi roi(int id, std::initializer_list<std::uint64_t> ranks) {
  model::Roi r;
  r.id = id;
  for (const auto k : ranks) r.cells.insert(geo::from_rank(k, geo::CellLevel{kLevel}));
  return r;
}

ingest::GroundTruthRoi truth(std::string id, std::initializer_list<std::uint64_t> ranks) {
  ingest::GroundTruthRoi t;
  t.id = std::move(id);
  t.level = kLevel;
  for (const auto k : ranks) t.cells.insert(geo::from_rank(k, geo::CellLevel{kLevel}));
  return t;
}

}  // namespace

// ---- scoring ----------------------------------------------------------------

TEST(Score, FormulaArithmetic) {
  // Three overlaps, one stray prediction, one missed truth.
  const std::vector<model::Roi> pred{roi(0, {1, 2}), roi(1, {10}), roi(2, {20, 21}), roi(3, {99})};
  const std::vector<ingest::GroundTruthRoi> gt{truth("a", {2, 3}), truth("b", {10, 11}), truth("c", {21}),
                                               truth("d", {50})};
  const auto r = score(pred, gt, kLevel);
  EXPECT_EQ(r.tp, 3u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.75);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
}

TEST(Score, PerfectPrediction) {
  const std::vector<ingest::GroundTruthRoi> gt{truth("a", {1, 2}), truth("b", {5})};
  const std::vector<model::Roi> pred{roi(0, {1, 2}), roi(1, {5})};
  const auto r = score(pred, gt, kLevel);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (const auto& m : r.matching) EXPECT_DOUBLE_EQ(m.dice, 1.0);
}

TEST(Score, EmptyPredictionsFlagPrecision) {
  const std::vector<ingest::GroundTruthRoi> gt{truth("a", {1}), truth("b", {2}), truth("c", {3})};
  const auto r = score({}, gt, kLevel);
  EXPECT_FALSE(r.precision_defined);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.accuracy, 0.0);
  std::ostringstream text;
  write_score_text(text, r);
  EXPECT_NE(text.str().find("undefined"), std::string::npos);
}

TEST(Score, GreedyTakesLargestOverlapFirst) {
  // Prediction 0 touches both truths; truth b is its better match, which
  // leaves truth a to prediction 1.
  const std::vector<model::Roi> pred{roi(0, {1, 2, 3}), roi(1, {1, 7})};
  const std::vector<ingest::GroundTruthRoi> gt{truth("a", {1, 7}), truth("b", {2, 3})};
  const auto r = score(pred, gt, kLevel);
  ASSERT_EQ(r.tp, 2u);
  EXPECT_EQ(r.matching[0].predicted, 1);
  EXPECT_EQ(r.matching[0].truth, 0u);
  EXPECT_DOUBLE_EQ(r.matching[0].dice, 1.0);
  EXPECT_EQ(r.matching[1].predicted, 0);
  EXPECT_EQ(r.matching[1].truth, 1u);
}

TEST(Score, LevelMismatchThrows) {
  auto t = truth("a", {1});
  t.level = kLevel + 1;
  EXPECT_THROW(score({roi(0, {1})}, {t}, kLevel), InputError);
}

TEST(Score, PropertiesOnRandomSets) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> cell(0, 60);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<model::Roi> pred;
    std::vector<ingest::GroundTruthRoi> gt;
    const int np = count(rng), nt = count(rng);
    for (int k = 0; k < np; ++k) pred.push_back(roi(k, {cell(rng), cell(rng), cell(rng)}));
    for (int k = 0; k < nt; ++k) gt.push_back(truth(std::to_string(k), {cell(rng), cell(rng)}));
    const auto r = score(pred, gt, kLevel);
    EXPECT_EQ(r.tp + r.fp, pred.size());
    EXPECT_EQ(r.tp + r.fn, gt.size());
    for (const double v : {r.precision, r.recall, r.accuracy}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(r.accuracy, std::min(r.precision_defined ? r.precision : 1.0, r.recall_defined ? r.recall : 1.0) + 1e-15);

    // Relabelling and reordering the predictions changes nothing but the ids.
    auto shuffled = pred;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& p : shuffled) p.id += 100;
    const auto s = score(shuffled, gt, kLevel);
    EXPECT_EQ(s.tp, r.tp);
    EXPECT_EQ(s.fp, r.fp);
    EXPECT_EQ(s.fn, r.fn);
  }
}

TEST(Score, PoolingAddsCounts) {
  ScoreReport a, b;
  a.tp = 3;
  a.fp = 1;
  b.tp = 1;
  b.fn = 3;
  a += b;
  EXPECT_EQ(a.tp, 4u);
  EXPECT_DOUBLE_EQ(a.precision, 0.8);
  EXPECT_DOUBLE_EQ(a.recall, 4.0 / 7.0);
  std::ostringstream csv;
  write_score_csv(csv, a);
  EXPECT_EQ(csv.str(), "tp,fp,fn,precision,recall,accuracy\n4,1,3,0.800000,0.571429,0.500000\n");
}

// ---- visit consistency --------------------------------------------------------

TEST(Consistency, SingleAllDayStay) {
  model::MobilityModel m;
  m.rois.resize(1);
  peaks::Visit v;
  v.entry_time = 86400.0 * 100 + 60.0;
  v.exit_time = 86400.0 * 101 - 60.0;
  const auto c = visit_consistency(m, {v});
  ASSERT_EQ(c.days, 1u);
  EXPECT_EQ(c.daily_visits[0], 1u);
  EXPECT_DOUBLE_EQ(c.stay_fraction(), 1.0);
  EXPECT_DOUBLE_EQ(c.max_stay_s, 86400.0 - 120.0);
  const auto t = tabulate({c});
  EXPECT_DOUBLE_EQ(t.stay_travel[1], 100.0);  // closest to 4:1
  EXPECT_DOUBLE_EQ(t.max_stay[2], 100.0);     // 11-26 h
}

TEST(Consistency, BucketsAndTravel) {
  model::MobilityModel m;
  m.rois.resize(7);
  std::vector<peaks::Visit> vs(3);
  vs[0].basecamp = true;
  vs[0].entry_time = 0.0;
  vs[0].exit_time = 3600.0;
  vs[1].entry_time = 4200.0;  // 10 min travel
  vs[1].exit_time = 4200.0 + 500.0;
  vs[2].entry_time = 5300.0;  // 10 min travel
  vs[2].exit_time = 5300.0 + 6.0 * 3600.0;
  const auto c = visit_consistency(m, vs);
  EXPECT_DOUBLE_EQ(c.travel_s, 1200.0);
  EXPECT_DOUBLE_EQ(c.stay_s, 500.0 + 6.0 * 3600.0);
  EXPECT_EQ(c.short_10, 1u);
  EXPECT_EQ(c.short_30, 1u);
  const auto t = tabulate({c, c});
  EXPECT_DOUBLE_EQ(t.roi_count[1], 100.0);
  EXPECT_DOUBLE_EQ(t.max_stay[0], 100.0);
  EXPECT_DOUBLE_EQ(t.short_visits[0], 100.0);
  std::ostringstream out;
  write_consistency_text(out, t);
  EXPECT_NE(out.str().find("stay:travel"), std::string::npos);
}

// ---- generator ---------------------------------------------------------------

TEST(Synth, SameSeedSameOutput) {
  SynthProfile p;
  p.days = 2.0;
  p.roi_count = 3;
  const auto a = synth_generate(p, 11);
  const auto b = synth_generate(p, 11);
  const auto c = synth_generate(p, 12);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_NE(a.trajectory, c.trajectory);
}

TEST(Synth, ZeroNoiseDwellsInPlantedCell) {
  SynthProfile p;
  p.days = 1.0;
  p.roi_count = 1;
  p.noise_m = 0.0;
  const auto s = synth_generate(p, 3);
  ASSERT_FALSE(s.visits.empty());
  const geo::CellLevel level{p.level};
  for (const auto& v : s.visits) {
    const auto planted = geo::cell_id(s.rois[v.roi].centre, level);
    for (const auto& pt : s.trajectory.points)
      if (pt.t >= v.entry && pt.t <= v.exit) EXPECT_EQ(geo::cell_id(pt.loc, level), planted);
  }
}

TEST(Synth, TruthIsConsistent) {
  SynthProfile p;
  p.roi_count = 6;
  p.nested_count = 2;
  p.days = 7.0;
  const auto s = synth_generate(p, 5);
  EXPECT_TRUE(s.trajectory.is_uniform(p.interval_s));
  EXPECT_NO_THROW(s.trajectory.validate());
  // Planted visits do not overlap, except sub-visits inside their parent.
  for (std::size_t k = 1; k < s.visits.size(); ++k) {
    const auto& prev = s.visits[k - 1];
    const auto& cur = s.visits[k];
    if (s.rois[cur.roi].parent) {
      EXPECT_EQ(*s.rois[cur.roi].parent, prev.roi);
      EXPECT_GE(cur.entry, prev.entry);
      EXPECT_LE(cur.exit, prev.exit);
    } else if (!s.rois[prev.roi].parent) {
      EXPECT_LE(prev.exit, cur.entry);
    }
  }
  // Truth ROIs are disjoint and sub-ROI cells sit inside the parent.
  for (std::size_t a = 0; a < s.truth.size(); ++a)
    for (std::size_t b = a + 1; b < s.truth.size(); ++b) EXPECT_EQ(model::dice(s.truth[a].cells, s.truth[b].cells), 0.0);
  for (const auto& r : s.rois) {
    if (!r.parent) continue;
    const auto& parent_id = s.rois[*r.parent].id;
    const auto it = std::find_if(s.truth.begin(), s.truth.end(), [&](const auto& t) { return t.id == parent_id; });
    ASSERT_NE(it, s.truth.end());
    for (const auto c : planted_cells(r.centre, p.level)) EXPECT_TRUE(it->cells.count(c));
  }
  EXPECT_EQ(s.truth.size(), 7u);  // every ROI is visited in a week, plus home
}

TEST(Synth, InfeasibleProfilesThrow) {
  SynthProfile p;
  p.roi_count = 0;
  EXPECT_THROW(synth_generate(p, 1), InputError);
  p = {};
  p.jitter_s = p.interval_s;
  EXPECT_THROW(synth_generate(p, 1), InputError);
  p = {};
  p.roi_count = 40;
  p.max_distance_m = 800.0;  // no room for 40 ROIs 400 m apart
  EXPECT_THROW(synth_generate(p, 1), InputError);
}

// Fraction of Gaussian position noise that stays inside the 3x3 block of
// cells around the planted one, for a centre uniformly placed in its cell of
// side a. Per axis: mean over u of Phi((1.5a - u)/s) - Phi((-1.5a - u)/s).
double block_fraction(double a, double sigma) {
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const int steps = 2000;
  double axis = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double u = -0.5 * a + (k + 0.5) * a / steps;
    axis += cdf((1.5 * a - u) / sigma) - cdf((-1.5 * a - u) / sigma);
  }
  axis /= steps;
  return axis * axis;
}

TEST(Synth, NoiseStaysNearPlantedCells) {
  for (const int level : {19, geo::kDefaultLevel}) {
    SynthProfile p;
    p.level = level;
    p.roi_count = 8;
    p.days = 3.0;
    const auto s = synth_generate(p, 21);
    std::size_t inside = 0, total = 0;
    double side = 0.0;
    std::size_t visits = 0;
    for (const auto& v : s.visits) {
      const auto cells = planted_cells(s.rois[v.roi].centre, level);
      side += std::sqrt(geo::exact_area_m2(geo::cell_id(s.rois[v.roi].centre, geo::CellLevel{level})));
      ++visits;
      for (const auto& pt : s.trajectory.points) {
        if (pt.t < v.entry || pt.t > v.exit) continue;
        // Skip the walk to and from a sub-ROI inside a parent stay.
        if (!s.rois[v.roi].parent && std::any_of(s.visits.begin(), s.visits.end(), [&](const PlantedVisit& w) {
              return s.rois[w.roi].parent == v.roi && pt.t >= w.entry - 300.0 && pt.t <= w.exit + 300.0;
            }))
          continue;
        ++total;
        inside += cells.count(geo::cell_id(pt.loc, geo::CellLevel{level})) != 0;
      }
    }
    const double measured = static_cast<double>(inside) / static_cast<double>(total);
    const double expected = block_fraction(side / static_cast<double>(visits), p.noise_m);
    EXPECT_NEAR(measured, expected, 0.02) << "level " << level;
    if (level == 19) EXPECT_GE(measured, 0.99);
  }
}

TEST(Synth, BranchWeightsSteerDestinations) {
  SynthProfile p;
  p.roi_count = 2;
  p.chain_probability = 0.0;
  p.branch_weights = {0.7, 0.3};
  p.days = 60.0;
  const auto s = synth_generate(p, 9);
  ASSERT_GE(s.destinations.size(), 100u);
  const double first = static_cast<double>(std::count(s.destinations.begin(), s.destinations.end(), 1u)) /
                       static_cast<double>(s.destinations.size());
  EXPECT_NEAR(first, 0.7, 0.1);
}

// ---- runtime -----------------------------------------------------------------

TEST(Bench, SingleSizeHasNoSlope) {
  const auto r = runtime_bench({2000}, {quadratic_workload()});
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_FALSE(r.slopes[0].second.has_value());
  std::ostringstream out;
  write_bench_csv(out, r);
  EXPECT_NE(out.str().find(",n/a\n"), std::string::npos);
  EXPECT_EQ(out.str().rfind("pipeline,n,median_ms,slope\n", 0), 0u);
}

TEST(Bench, QuadraticCalibration) {
  const auto r = runtime_bench({2000, 4000, 8000, 16000}, {quadratic_workload()});
  ASSERT_TRUE(r.slopes[0].second.has_value());
  EXPECT_NEAR(*r.slopes[0].second, 2.0, 0.1);
}

TEST(Bench, RejectsBadArguments) {
  EXPECT_THROW(runtime_bench({100}, {quadratic_workload()}, 5), InputError);
  EXPECT_THROW(runtime_bench({200, 100}, {quadratic_workload()}), InputError);
}

TEST(Bench, SlopeOfExactPowerLaw) {
  EXPECT_NEAR(*loglog_slope({{10.0, 3.0}, {100.0, 300.0}, {1000.0, 30000.0}}), 2.0, 1e-12);
  EXPECT_FALSE(loglog_slope({{10.0, 1.0}}).has_value());
}

TEST(Bench, CsvMarksRejectedSizes) {
  BenchResult r;
  r.rows = {{"p", 10, 0.0, true}, {"p", 100, 2.5, false}};
  r.slopes = {{"p", std::nullopt}};
  std::ostringstream out;
  write_bench_csv(out, r);
  EXPECT_EQ(out.str(), "pipeline,n,median_ms,slope\np,10,rejected,n/a\np,100,2.500000,n/a\n");
}
