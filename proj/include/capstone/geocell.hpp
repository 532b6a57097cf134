#pragma once

// Hierarchical decomposition of the sphere into cells.
//
// A point is projected onto one of the six faces of the enclosing cube,
// the face coordinates (u,v) go through a quadratic area-equalising
// transform to (s,t), and the resulting quadtree cell is enumerated along
// a Hilbert curve. Cell ids are 64-bit: 3 face bits, 2 bits per level of
// Hilbert position, then a single marker bit whose position encodes the
// level. Integer order of ids equals Hilbert order.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace capstone::geo {

inline constexpr int kMaxLevel = 30;
inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  bool valid() const noexcept;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Throws InputError when the coordinates are not finite or out of range.
GeoPoint make_point(double lat, double lon);

class CellLevel {
 public:
  constexpr CellLevel() = default;
  explicit CellLevel(int level);

  constexpr int value() const noexcept { return level_; }
  friend constexpr auto operator<=>(CellLevel, CellLevel) = default;

 private:
  int level_ = 0;
};

struct FaceUV {
  int face = 0;
  double u = 0.0;
  double v = 0.0;
};

struct FaceIJ {
  int face = 0;
  std::uint32_t i = 0;
  std::uint32_t j = 0;
};

class CellId {
 public:
  constexpr CellId() = default;
  constexpr explicit CellId(std::uint64_t raw) : raw_(raw) {}

  constexpr std::uint64_t raw() const noexcept { return raw_; }

  // Marker bit present at an even offset and face in range.
  bool is_valid() const noexcept;
  int face() const noexcept { return static_cast<int>(raw_ >> 61); }
  int level() const noexcept;
  std::uint64_t lsb() const noexcept { return raw_ & (~raw_ + 1); }
  // Hilbert position within the face at this cell's level (2*level bits).
  std::uint64_t position() const noexcept;

  std::string to_hex() const;
  static CellId from_hex(std::string_view hex);  // throws InputError

  friend constexpr auto operator<=>(CellId, CellId) = default;

 private:
  std::uint64_t raw_ = 0;
};

struct DecodedCell {
  int face = 0;
  int level = 0;
  GeoPoint center;
};

std::array<double, 3> to_xyz(const GeoPoint& p);
GeoPoint from_xyz(const std::array<double, 3>& xyz);

FaceUV project_to_face(const GeoPoint& p);
GeoPoint unproject(const FaceUV& fuv);

// Quadratic transform between cube-face coordinates and cell-space
// coordinates. uv_to_st throws InputError outside [-1, 1].
double uv_to_st(double u);
double st_to_uv(double s);

CellId cell_id(const GeoPoint& p, CellLevel level);
CellId from_face_ij(const FaceIJ& fij, CellLevel level);
// Face plus (i,j) at the cell's own level.
FaceIJ to_face_ij(CellId c);

DecodedCell decode(CellId c);  // throws InputError on malformed ids
CellId parent(CellId c, CellLevel level);  // throws InputError if level > c.level()
std::array<CellId, 4> children(CellId c);

// Position along the six-face Hilbert traversal at the cell's level:
// face * 4^level + position.
std::uint64_t rank(CellId c);
CellId from_rank(std::uint64_t rank, CellLevel level);

// Cells sharing an edge (first four) or a corner. Neighbours that fall off
// the face are re-projected onto the adjacent face.
std::array<CellId, 8> neighbors(CellId c);

// Four corners of the cell on the sphere, counter-clockwise in (s,t).
std::array<GeoPoint, 4> vertices(CellId c);
double exact_area_m2(CellId c);

// Sphere area divided evenly over 6 * 4^level cells.
constexpr double average_area_m2(int level) {
  constexpr double kPi = 3.14159265358979323846;
  double cells = 6.0;
  for (int l = 0; l < level; ++l) cells *= 4.0;
  return 4.0 * kPi * kEarthRadiusM * kEarthRadiusM / cells;
}

// Level whose average cell area is closest to `target_m2`.
constexpr int level_for_area(double target_m2) {
  int best = 0;
  double best_err = 1e300;
  for (int l = 0; l <= kMaxLevel; ++l) {
    const double err = average_area_m2(l) > target_m2 ? average_area_m2(l) - target_m2
                                                      : target_m2 - average_area_m2(l);
    if (err < best_err) {
      best_err = err;
      best = l;
    }
  }
  return best;
}

inline constexpr double kTargetCellAreaM2 = 38.0;
inline constexpr int kDefaultLevel = level_for_area(kTargetCellAreaM2);

double haversine_m(const GeoPoint& a, const GeoPoint& b);

}  // namespace capstone::geo
