#include <gtest/gtest.h>

#include <sstream>

#include "capstone/errors.hpp"
#include "capstone/ingest.hpp"

using namespace capstone;
using namespace capstone::ingest;

TEST(Iso8601, ParseAndFormat) {
  EXPECT_DOUBLE_EQ(parse_iso8601("1970-01-01T00:00:00Z"), 0.0);
  EXPECT_DOUBLE_EQ(parse_iso8601("2008-01-01T00:00:00Z"), 1199145600.0);
  EXPECT_EQ(format_iso8601(1199145600.0 + 3661.0), "2008-01-01T01:01:01Z");
  EXPECT_THROW(parse_iso8601("2008-13-01T00:00:00Z"), InputError);
  EXPECT_THROW(parse_iso8601("2008-02-30T00:00:00Z"), InputError);
  EXPECT_THROW(parse_iso8601("2008-01-01T00:00:00+02:00"), InputError);
}

TEST(ReadCsv, ThreeRows) {
  std::istringstream in("lat,lon,timestamp\n1.0,2.0,10\n1.5,2.5,15\n2.0,3.0,20\n");
  const auto t = read_csv(in);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_DOUBLE_EQ(t[1].loc.lat, 1.5);
  EXPECT_DOUBLE_EQ(t[2].t, 20.0);
  EXPECT_NO_THROW(t.validate());
}

TEST(ReadCsv, ColumnOrderAndAccuracy) {
  std::istringstream in("timestamp,accuracy,lon,lat\n10,4.5,2.0,1.0\n11,,2.0,1.0\n");
  const auto t = read_csv(in);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(*t[0].accuracy_m, 4.5);
  EXPECT_FALSE(t[1].accuracy_m.has_value());
}

TEST(ReadCsv, LatitudeOutOfRangeNamesRow) {
  std::istringstream in("lat,lon,timestamp\n1.0,2.0,10\n91.0,2.0,20\n");
  try {
    read_csv(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ReadCsv, DuplicateTimestampDropped) {
  std::istringstream in("lat,lon,timestamp\n1.0,2.0,10\n1.1,2.1,10\n1.2,2.2,11\n");
  Warnings w;
  const auto t = read_csv(in, {}, &w);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t[0].loc.lat, 1.0);
  EXPECT_EQ(w.duplicate_timestamps, 1u);
}

TEST(ReadCsv, OutOfOrderPolicy) {
  const std::string text = "lat,lon,timestamp\n1.0,2.0,10\n1.1,2.1,5\n1.2,2.2,11\n";
  std::istringstream strict_in(text);
  EXPECT_THROW(read_csv(strict_in), ParseError);

  std::istringstream lax_in(text);
  CsvColumns cols;
  cols.strict = false;
  Warnings w;
  const auto t = read_csv(lax_in, cols, &w);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(w.out_of_order, 1u);
}

TEST(ReadCsv, EmptyInputs) {
  std::istringstream none("");
  EXPECT_THROW(read_csv(none), InputError);
  std::istringstream header_only("lat,lon,timestamp\n");
  try {
    read_csv(header_only);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_STREQ(e.what(), "empty trajectory");
  }
  std::istringstream missing("lat,lon\n1,2\n");
  EXPECT_THROW(read_csv(missing), ParseError);
}

TEST(ReadCsv, MalformedNumber) {
  std::istringstream in("lat,lon,timestamp\n1.0x,2.0,10\n");
  EXPECT_THROW(read_csv(in), ParseError);
}

TEST(WriteCsv, RoundtripIsByteStable) {
  const std::string text =
      "lat,lon,timestamp\n"
      "48.8566140,2.3522219,1700000000\n"
      "-33.8688197,151.2092955,1700000005\n"
      "0.0000001,-179.9999999,1700000010\n";
  std::istringstream in(text);
  std::ostringstream out;
  write_csv(out, read_csv(in));
  EXPECT_EQ(out.str(), text);

  std::istringstream again(out.str());
  std::ostringstream out2;
  write_csv(out2, read_csv(again));
  EXPECT_EQ(out2.str(), text);
}

namespace {
const char* kPltHeader =
    "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";
}

TEST(ReadPlt, SinglePoint) {
  std::istringstream in(std::string(kPltHeader) + "39.984702,116.318417,0,492,39448.0,2008-01-01,00:00:00\n");
  const auto t = read_plt(in);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].loc.lat, 39.984702);
  EXPECT_DOUBLE_EQ(t[0].t, 1199145600.0);
}

TEST(ReadPlt, DayCountMatchesDateFields) {
  // 39448.5 days after 1899-12-30 is noon on 2008-01-01.
  const double expected = (39448.5 - 25569.0) * 86400.0;
  std::istringstream in(std::string(kPltHeader) + "39.9,116.3,0,492,39448.5,2008-01-01,12:00:00\n");
  const auto t = read_plt(in);
  EXPECT_DOUBLE_EQ(t[0].t, expected);

  std::istringstream bad(std::string(kPltHeader) + "39.9,116.3,0,492,39449.5,2008-01-01,12:00:00\n");
  EXPECT_THROW(read_plt(bad), ParseError);
}

TEST(ReadPlt, ShortHeader) {
  std::istringstream in("a\nb\nc\nd\ne\n");
  EXPECT_THROW(read_plt(in), ParseError);
}

TEST(ReadPlt, MalformedNumeric) {
  std::istringstream in(std::string(kPltHeader) + "39.9,abc,0,492,39448.0,2008-01-01,00:00:00\n");
  EXPECT_THROW(read_plt(in), ParseError);
}

namespace {

std::string two_roi_file() {
  const auto a = geo::cell_id({48.0, 2.0}, geo::CellLevel(21)).to_hex();
  const auto b = geo::cell_id({48.01, 2.0}, geo::CellLevel(21)).to_hex();
  const auto c = geo::cell_id({48.02, 2.0}, geo::CellLevel(21)).to_hex();
  return "# truth\n"
         "roi home level=21\n"
         "cells: " + a + "," + b + "\n"
         "window: 2024-01-01T00:00:00Z 2024-01-01T08:00:00Z\n"
         "window: 2024-01-01T18:00:00Z 2024-01-02T08:00:00Z\n"
         "\n"
         "roi work level=21\n"
         "cells: " + c + "\n"
         "window: 2024-01-01T09:00:00Z 2024-01-01T17:00:00Z\n";
}

}  // namespace

TEST(GroundTruth, ReadsTwoRois) {
  std::istringstream in(two_roi_file());
  const auto rois = read_ground_truth(in, 21);
  ASSERT_EQ(rois.size(), 2u);
  EXPECT_EQ(rois[0].id, "home");
  EXPECT_EQ(rois[0].cells.size(), 2u);
  EXPECT_EQ(rois[0].windows.size(), 2u);
  EXPECT_DOUBLE_EQ(rois[1].area_m2, geo::average_area_m2(21));
}

TEST(GroundTruth, RoundtripThroughWriter) {
  std::istringstream in(two_roi_file());
  const auto rois = read_ground_truth(in);
  std::ostringstream out;
  write_ground_truth(out, rois);
  std::istringstream back(out.str());
  const auto again = read_ground_truth(back);
  ASSERT_EQ(again.size(), rois.size());
  for (std::size_t k = 0; k < rois.size(); ++k) {
    EXPECT_EQ(again[k].cells, rois[k].cells);
    EXPECT_EQ(again[k].windows, rois[k].windows);
    EXPECT_NEAR(again[k].area_m2, rois[k].area_m2, 1e-3);
  }
}

TEST(GroundTruth, LevelMismatch) {
  std::istringstream in(two_roi_file());
  EXPECT_THROW(read_ground_truth(in, 20), ParseError);
}

TEST(GroundTruth, SharedCellWarns) {
  const auto a = geo::cell_id({48.0, 2.0}, geo::CellLevel(21)).to_hex();
  std::istringstream in("roi x level=21\ncells: " + a + "\n\nroi y level=21\ncells: " + a + "\n");
  Warnings w;
  const auto rois = read_ground_truth(in, {}, &w);
  EXPECT_EQ(rois.size(), 2u);
  EXPECT_EQ(w.shared_cells, 1u);
}

TEST(GroundTruth, ExitBeforeEntry) {
  const auto a = geo::cell_id({48.0, 2.0}, geo::CellLevel(21)).to_hex();
  std::istringstream in("roi x level=21\ncells: " + a +
                        "\nwindow: 2024-01-01T10:00:00Z 2024-01-01T09:00:00Z\n");
  EXPECT_THROW(read_ground_truth(in), ParseError);
}

TEST(GroundTruth, OverlappingWindows) {
  const auto a = geo::cell_id({48.0, 2.0}, geo::CellLevel(21)).to_hex();
  std::istringstream in("roi x level=21\ncells: " + a +
                        "\nwindow: 2024-01-01T08:00:00Z 2024-01-01T10:00:00Z"
                        "\nwindow: 2024-01-01T09:00:00Z 2024-01-01T11:00:00Z\n");
  EXPECT_THROW(read_ground_truth(in), InputError);
}
