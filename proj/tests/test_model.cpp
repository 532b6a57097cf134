#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "capstone/errors.hpp"
#include "capstone/model.hpp"

using namespace capstone;
using namespace capstone::model;

namespace {

constexpr int kLevel = 12;

geo::CellId cell(std::uint64_t r) { return geo::from_rank(1000 + r, geo::CellLevel(kLevel)); }

CellSet cells(std::initializer_list<std::uint64_t> rs) {
  CellSet s;
  for (const auto r : rs) s.insert(cell(r));
  return s;
}

peaks::Visit visit(CellSet roi, double entry, double exit) {
  peaks::Visit v;
  v.roi_cells = std::move(roi);
  v.entry_time = entry;
  v.exit_time = exit;
  v.entry_cell = *v.roi_cells.begin();
  v.exit_cell = *v.roi_cells.rbegin();
  return v;
}

}  // namespace

TEST(Dice, ExhaustiveOverSixElements) {
  for (unsigned a = 0; a < 64; ++a)
    for (unsigned b = 0; b < 64; ++b) {
      CellSet sa, sb;
      for (unsigned k = 0; k < 6; ++k) {
        if (a >> k & 1u) sa.insert(cell(k));
        if (b >> k & 1u) sb.insert(cell(k));
      }
      const double d = dice(sa, sb);
      ASSERT_EQ(d, dice(sb, sa));
      ASSERT_GE(d, 0.0);
      ASSERT_LE(d, 1.0);
      if (a == b && a != 0) ASSERT_EQ(d, 1.0);
      const double inter = __builtin_popcount(a & b), total = __builtin_popcount(a) + __builtin_popcount(b);
      ASSERT_DOUBLE_EQ(d, total == 0 ? 0.0 : 2 * inter / total);
    }
}

TEST(Dice, HandValues) {
  EXPECT_NEAR(dice(cells({1, 2, 3}), cells({2, 3, 4})), 4.0 / 6.0, 1e-15);
  EXPECT_EQ(dice(cells({1}), cells({2})), 0.0);
  EXPECT_EQ(dice({}, {}), 0.0);
}

TEST(Assemble, IdenticalVisitsShareRoi) {
  const auto a = assemble({visit(cells({1, 2}), 0, 10), visit(cells({1, 2}), 20, 40)}, kLevel);
  ASSERT_EQ(a.rois.size(), 1u);
  EXPECT_EQ(a.rois[0].visit_count, 2u);
  EXPECT_DOUBLE_EQ(a.rois[0].mean_stay_s, 15.0);
  EXPECT_DOUBLE_EQ(a.rois[0].area_m2, 2 * geo::average_area_m2(kLevel));
}

TEST(Assemble, RepeatedVisitByAnotherRoute) {
  const auto a = assemble({visit(cells({1, 2, 3}), 0, 10), visit(cells({3, 7, 8}), 20, 30)}, kLevel);
  ASSERT_EQ(a.rois.size(), 1u);
  EXPECT_EQ(a.rois[0].cells, cells({1, 2, 3, 7, 8}));
}

TEST(Assemble, NestedVisitIsSubVisit) {
  const auto a = assemble({visit(cells({1, 2}), 0, 100), visit(cells({50}), 30, 60), visit(cells({9}), 200, 300)},
                          kLevel);
  ASSERT_EQ(a.rois.size(), 2u);
  EXPECT_TRUE(a.nested[1]);
  EXPECT_EQ(a.assignment[1], 0);
  EXPECT_EQ(a.rois[0].sub_visit_count, 1u);
  EXPECT_EQ(a.rois[0].visit_count, 1u);
  EXPECT_EQ(a.rois[0].cells, cells({1, 2, 50}));
}

TEST(Assemble, BridgingVisitMergesRois) {
  const auto a = assemble(
      {visit(cells({1}), 0, 1), visit(cells({2}), 2, 3), visit(cells({5}), 4, 5), visit(cells({1, 2}), 6, 7)}, kLevel);
  ASSERT_EQ(a.rois.size(), 2u);
  EXPECT_EQ(a.rois[0].cells, cells({1, 2}));
  EXPECT_EQ(a.assignment, (std::vector<int>{0, 0, 1, 0}));
}

TEST(Assemble, BasecampFlag) {
  auto home = visit(cells({1}), 0, 5);
  home.basecamp = true;
  const auto a = assemble({visit(cells({3}), 0, 1), home}, kLevel);
  EXPECT_EQ(a.basecamp_id, 1);
}

TEST(Assemble, RandomStreamsKeepInvariants) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::uint64_t> pick(0, 40);
    std::uniform_int_distribution<int> size(1, 4);
    std::vector<peaks::Visit> visits;
    double t = 0;
    for (int k = 0; k < 30; ++k) {
      CellSet s;
      for (int j = size(rng); j > 0; --j) s.insert(cell(pick(rng)));
      auto v = visit(s, t, t + 10);
      v.transition_out = {cell(100 + pick(rng))};
      visits.push_back(v);
      t += 20;
    }
    const auto m1 = build_model(visits, kLevel);
    const auto m2 = build_model(visits, kLevel);
    ASSERT_EQ(m1, m2);
    CellSet seen;
    for (const auto& r : m1.rois)
      for (const auto c : r.cells) ASSERT_TRUE(seen.insert(c).second);
    std::map<int, double> rows;
    for (const auto& tr : m1.transitions) rows[tr.from] += tr.probability;
    for (const auto& [from, sum] : rows) ASSERT_NEAR(sum, 1.0, 1e-12);
    for (const auto& tr : m1.transitions) {
      ASSERT_FALSE(tr.path.empty());
      ASSERT_TRUE(m1.rois[static_cast<std::size_t>(tr.from)].cells.count(tr.path.front()));
      ASSERT_TRUE(m1.rois[static_cast<std::size_t>(tr.to)].cells.count(tr.path.back()));
    }
  }
}

TEST(RepresentativePath, SingleAndMajority) {
  const std::vector<geo::CellId> p{cell(1), cell(2), cell(3)};
  EXPECT_EQ(representative_path({p}), p);
  const std::vector<geo::CellId> odd{cell(1), cell(9), cell(3)};
  EXPECT_EQ(representative_path({p, odd, p, p}), p);
  EXPECT_THROW(representative_path({}), InputError);
}

TEST(RepresentativePath, SeventyThirtySplit) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution major(0.7);
  const std::vector<geo::CellId> a{cell(1), cell(2), cell(3), cell(4), cell(5)};
  const std::vector<geo::CellId> b{cell(1), cell(12), cell(13), cell(14), cell(5)};
  std::vector<std::vector<geo::CellId>> paths;
  for (int k = 0; k < 50; ++k) paths.push_back(major(rng) ? a : b);
  EXPECT_EQ(representative_path(paths), a);
}

TEST(RepresentativePath, TiesGoToLowerRank) {
  EXPECT_EQ(representative_path({{cell(4)}, {cell(2)}}), std::vector<geo::CellId>{cell(2)});
}

TEST(TransitionMatrix, CountArithmetic) {
  const std::vector<int> abab{0, 1, 0, 1};
  const auto t = transition_matrix(abab);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].probability, 1.0);
  EXPECT_EQ(t[1].probability, 1.0);
  const std::vector<int> aa{0, 0};
  const auto s = transition_matrix(aa);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].from, 0);
  EXPECT_EQ(s[0].to, 0);
  EXPECT_TRUE(transition_matrix(std::vector<int>{3}).empty());
}

TEST(TransitionMatrix, PlantedBranching) {
  std::mt19937_64 rng(99);
  std::bernoulli_distribution to_a(0.7);
  std::vector<int> seq;
  for (int k = 0; k < 100; ++k) {
    seq.push_back(0);
    seq.push_back(to_a(rng) ? 1 : 2);
  }
  seq.push_back(0);
  double p01 = 0.0, p02 = 0.0;
  for (const auto& tr : transition_matrix(seq)) {
    if (tr.from == 0 && tr.to == 1) p01 = tr.probability;
    if (tr.from == 0 && tr.to == 2) p02 = tr.probability;
  }
  EXPECT_NEAR(p01, 0.7, 0.1);
  EXPECT_NEAR(p02, 0.3, 0.1);
}

namespace {

MobilityModel two_roi_model() {
  MobilityModel m;
  m.level = kLevel;
  m.basecamp_id = 0;
  Roi home;
  home.id = 0;
  home.cells = cells({1, 2});
  home.area_m2 = 2 * geo::average_area_m2(kLevel);
  home.visit_count = 3;
  home.mean_stay_s = 36000.0;
  home.first_entry = 1700000000.0;
  home.last_exit = 1700200000.0;
  Roi work;
  work.id = 1;
  work.cells = cells({30});
  work.area_m2 = geo::average_area_m2(kLevel);
  work.visit_count = 2;
  work.sub_visit_count = 1;
  work.mean_stay_s = 28800.0 / 3.0;
  work.first_entry = 1700030000.0;
  work.last_exit = 1700150000.0;
  m.rois = {home, work};
  m.transitions = {{0, 1, {cell(2), cell(10), cell(30)}, 1.0, 2}, {1, 0, {cell(30), cell(11), cell(1)}, 1.0, 2}};
  return m;
}

}  // namespace

TEST(Serialize, RoundtripIsExact) {
  const auto doc = serialize(two_roi_model());
  const auto back = deserialize(doc);
  EXPECT_EQ(serialize(back), doc);
  EXPECT_EQ(back.rois[0].cells, two_roi_model().rois[0].cells);
  EXPECT_EQ(back.transitions[0].path, two_roi_model().transitions[0].path);
  EXPECT_NEAR(back.rois[1].mean_stay_s, 9600.0, 1e-9);
}

TEST(Serialize, EmptyModel) {
  MobilityModel m;
  const auto back = deserialize(serialize(m));
  EXPECT_EQ(back, m);
}

TEST(Serialize, GoldenFile) {
  std::ifstream in(CAPSTONE_TEST_DATA "/golden_model.json");
  ASSERT_TRUE(in) << "missing golden file";
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(serialize(two_roi_model()), ss.str());
}

TEST(Deserialize, SchemaViolations) {
  EXPECT_THROW(deserialize("not json"), InputError);
  EXPECT_THROW(deserialize("{}"), InputError);
  EXPECT_THROW(deserialize(R"({"level": 12, "basecamp": null, "rois": [], "transitions": [{"from": 0}]})"),
               InputError);
  const auto c = cell(1).to_hex();
  const std::string shared = R"({"level": 12, "basecamp": null, "rois": [)"
                             R"({"id": 0, "cells": [")" + c + R"("], "stats": {"area_m2": 1, "visit_count": 1, "sub_visit_count": 0, "mean_stay_s": 1, "first_entry": 0, "last_exit": 1}},)"
                             R"({"id": 1, "cells": [")" + c + R"("], "stats": {"area_m2": 1, "visit_count": 1, "sub_visit_count": 0, "mean_stay_s": 1, "first_entry": 0, "last_exit": 1}}],)"
                             R"("transitions": []})";
  EXPECT_THROW(deserialize(shared), InputError);
  EXPECT_THROW(deserialize(R"({"level": 13, "basecamp": null, "rois": [{"id": 0, "cells": [")" + c +
                           R"("], "stats": {}}], "transitions": []})"),
               InputError);
}
