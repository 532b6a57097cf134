#include "capstone/geocell.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::geo {

namespace {

constexpr int kSwapMask = 1;
constexpr int kInvertMask = 2;

// Hilbert automaton: (orientation, ij quadrant) -> position, and back.
// Quadrant index is (i_bit << 1) | j_bit.
constexpr int kIJtoPos[4][4] = {
    {0, 1, 3, 2},
    {0, 3, 1, 2},
    {2, 3, 1, 0},
    {2, 1, 3, 0},
};
constexpr int kPosToIJ[4][4] = {
    {0, 1, 3, 2},
    {0, 2, 3, 1},
    {3, 2, 0, 1},
    {3, 1, 0, 2},
};
constexpr int kPosToOrientation[4] = {kSwapMask, 0, 0, kInvertMask | kSwapMask};

constexpr double kDeg = std::numbers::pi / 180.0;

std::array<double, 3> face_uv_to_xyz(int face, double u, double v) {
  switch (face) {
    case 0: return {1.0, u, v};
    case 1: return {-u, 1.0, v};
    case 2: return {-u, -v, 1.0};
    case 3: return {-1.0, -v, -u};
    case 4: return {v, -1.0, -u};
    default: return {v, u, -1.0};
  }
}

void face_xyz_to_uv(int face, const std::array<double, 3>& p, double& u, double& v) {
  const auto [x, y, z] = p;
  switch (face) {
    case 0: u = y / x; v = z / x; break;
    case 1: u = -x / y; v = z / y; break;
    case 2: u = -x / z; v = -y / z; break;
    case 3: u = z / x; v = y / x; break;
    case 4: u = z / y; v = -x / y; break;
    default: u = -y / z; v = -x / z; break;
  }
}

int face_of(const std::array<double, 3>& p) {
  int axis = 0;
  if (std::fabs(p[1]) > std::fabs(p[axis])) axis = 1;
  if (std::fabs(p[2]) > std::fabs(p[axis])) axis = 2;
  return p[axis] < 0 ? axis + 3 : axis;
}

// Unclamped inverse transform; valid for s outside [0,1] as well, which
// neighbour wrapping relies on.
double st_to_uv_unchecked(double s) {
  if (s >= 0.5) return (4.0 * s * s - 1.0) / 3.0;
  const double r = 1.0 - s;
  return (1.0 - 4.0 * r * r) / 3.0;
}

std::uint32_t st_to_ij(double s, int level) {
  const double scale = std::ldexp(1.0, level);
  const double limit = scale - 1.0;
  return static_cast<std::uint32_t>(std::clamp(std::floor(s * scale), 0.0, limit));
}

std::uint64_t encode_position(int face, std::uint32_t i, std::uint32_t j, int level) {
  int orientation = face & kSwapMask;
  std::uint64_t pos = 0;
  for (int k = level - 1; k >= 0; --k) {
    const int ij = static_cast<int>((((i >> k) & 1u) << 1) | ((j >> k) & 1u));
    const int bits = kIJtoPos[orientation][ij];
    pos = (pos << 2) | static_cast<std::uint64_t>(bits);
    orientation ^= kPosToOrientation[bits];
  }
  return pos;
}

CellId make_cell(int face, std::uint64_t pos, int level) {
  const int shift = 61 - 2 * level;
  const std::uint64_t raw = (static_cast<std::uint64_t>(face) << 61) | (pos << shift) |
                            (std::uint64_t{1} << (shift - 1));
  return CellId(raw);
}

void require_valid(CellId c) {
  if (!c.is_valid()) throw InputError(fmt::format("malformed cell id {}", c.to_hex()));
}

GeoPoint st_point(int face, double s, double t) {
  return from_xyz(face_uv_to_xyz(face, st_to_uv_unchecked(s), st_to_uv_unchecked(t)));
}

std::array<double, 3> unit(const GeoPoint& p) { return to_xyz(p); }

double triangle_excess(const std::array<double, 3>& a, const std::array<double, 3>& b,
                       const std::array<double, 3>& c) {
  const std::array<double, 3> bxc = {b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2],
                                     b[0] * c[1] - b[1] * c[0]};
  const double triple = a[0] * bxc[0] + a[1] * bxc[1] + a[2] * bxc[2];
  const auto dot = [](const auto& x, const auto& y) {
    return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
  };
  const double denom = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
  return 2.0 * std::atan2(std::fabs(triple), denom);
}

}  // namespace

bool GeoPoint::valid() const noexcept {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

GeoPoint make_point(double lat, double lon) {
  GeoPoint p{lat, lon};
  if (!p.valid()) throw InputError(fmt::format("coordinate out of range: lat={} lon={}", lat, lon));
  return p;
}

CellLevel::CellLevel(int level) : level_(level) {
  if (level < 0 || level > kMaxLevel)
    throw InputError(fmt::format("cell level {} outside [0, {}]", level, kMaxLevel));
}

bool CellId::is_valid() const noexcept {
  if (raw_ == 0 || face() > 5) return false;
  const int tz = std::countr_zero(raw_);
  return tz % 2 == 0 && tz <= 60;
}

int CellId::level() const noexcept { return (60 - std::countr_zero(raw_)) / 2; }

std::uint64_t CellId::position() const noexcept {
  const int lvl = level();
  if (lvl == 0) return 0;
  const std::uint64_t body = raw_ & ((std::uint64_t{1} << 61) - 1);
  return body >> (61 - 2 * lvl);
}

std::string CellId::to_hex() const { return fmt::format("{:016x}", raw_); }

CellId CellId::from_hex(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) throw InputError(fmt::format("bad cell id '{}'", hex));
  std::uint64_t raw = 0;
  for (char ch : hex) {
    int d;
    if (ch >= '0' && ch <= '9') d = ch - '0';
    else if (ch >= 'a' && ch <= 'f') d = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') d = ch - 'A' + 10;
    else throw InputError(fmt::format("bad cell id '{}'", hex));
    raw = (raw << 4) | static_cast<std::uint64_t>(d);
  }
  CellId c(raw);
  require_valid(c);
  return c;
}

std::array<double, 3> to_xyz(const GeoPoint& p) {
  const double phi = p.lat * kDeg;
  const double lam = p.lon * kDeg;
  return {std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi)};
}

GeoPoint from_xyz(const std::array<double, 3>& xyz) {
  const auto [x, y, z] = xyz;
  return {std::atan2(z, std::hypot(x, y)) / kDeg, std::atan2(y, x) / kDeg};
}

FaceUV project_to_face(const GeoPoint& p) {
  const auto xyz = to_xyz(p);
  FaceUV out;
  out.face = face_of(xyz);
  face_xyz_to_uv(out.face, xyz, out.u, out.v);
  return out;
}

GeoPoint unproject(const FaceUV& fuv) { return from_xyz(face_uv_to_xyz(fuv.face, fuv.u, fuv.v)); }

double uv_to_st(double u) {
  if (!(u >= -1.0 && u <= 1.0)) throw InputError(fmt::format("u={} outside [-1, 1]", u));
  if (u >= 0.0) return 0.5 * std::sqrt(1.0 + 3.0 * u);
  return 1.0 - 0.5 * std::sqrt(1.0 - 3.0 * u);
}

double st_to_uv(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw InputError(fmt::format("s={} outside [0, 1]", s));
  return st_to_uv_unchecked(s);
}

CellId from_face_ij(const FaceIJ& fij, CellLevel level) {
  return make_cell(fij.face, encode_position(fij.face, fij.i, fij.j, level.value()), level.value());
}

CellId cell_id(const GeoPoint& p, CellLevel level) {
  const FaceUV fuv = project_to_face(p);
  // Projection can land a hair outside [-1,1] on face edges.
  const double s = uv_to_st(std::clamp(fuv.u, -1.0, 1.0));
  const double t = uv_to_st(std::clamp(fuv.v, -1.0, 1.0));
  return from_face_ij({fuv.face, st_to_ij(s, level.value()), st_to_ij(t, level.value())}, level);
}

FaceIJ to_face_ij(CellId c) {
  const int face = c.face();
  const int level = c.level();
  const std::uint64_t pos = c.position();
  int orientation = face & kSwapMask;
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  for (int k = level - 1; k >= 0; --k) {
    const int bits = static_cast<int>((pos >> (2 * k)) & 3u);
    const int ij = kPosToIJ[orientation][bits];
    i |= static_cast<std::uint32_t>(ij >> 1) << k;
    j |= static_cast<std::uint32_t>(ij & 1) << k;
    orientation ^= kPosToOrientation[bits];
  }
  return {face, i, j};
}

DecodedCell decode(CellId c) {
  require_valid(c);
  const FaceIJ fij = to_face_ij(c);
  const int level = c.level();
  const double scale = std::ldexp(1.0, -level);
  const double s = (fij.i + 0.5) * scale;
  const double t = (fij.j + 0.5) * scale;
  return {fij.face, level, st_point(fij.face, s, t)};
}

CellId parent(CellId c, CellLevel level) {
  require_valid(c);
  if (level.value() > c.level())
    throw InputError(fmt::format("parent level {} finer than cell level {}", level.value(), c.level()));
  const std::uint64_t new_lsb = std::uint64_t{1} << (60 - 2 * level.value());
  return CellId((c.raw() & (~new_lsb + 1)) | new_lsb);
}

std::array<CellId, 4> children(CellId c) {
  require_valid(c);
  if (c.level() == kMaxLevel) throw InputError("leaf cell has no children");
  const std::uint64_t lsb = c.lsb();
  const std::uint64_t child_lsb = lsb >> 2;
  std::array<CellId, 4> out;
  for (std::uint64_t k = 0; k < 4; ++k) out[k] = CellId(c.raw() - lsb + (2 * k + 1) * child_lsb);
  return out;
}

std::uint64_t rank(CellId c) { return c.raw() >> (61 - 2 * c.level()); }

CellId from_rank(std::uint64_t r, CellLevel level) {
  const int l = level.value();
  const int face = static_cast<int>(r >> (2 * l));
  if (face > 5) throw InputError(fmt::format("rank {} out of range at level {}", r, l));
  const std::uint64_t pos = l == 0 ? 0 : (r & ((std::uint64_t{1} << (2 * l)) - 1));
  return make_cell(face, pos, l);
}

std::array<CellId, 8> neighbors(CellId c) {
  require_valid(c);
  const FaceIJ fij = to_face_ij(c);
  const int level = c.level();
  const std::int64_t size = std::int64_t{1} << level;
  constexpr int kOffsets[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                  {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  std::array<CellId, 8> out;
  for (int n = 0; n < 8; ++n) {
    const std::int64_t ni = static_cast<std::int64_t>(fij.i) + kOffsets[n][0];
    const std::int64_t nj = static_cast<std::int64_t>(fij.j) + kOffsets[n][1];
    if (ni >= 0 && nj >= 0 && ni < size && nj < size) {
      out[n] = from_face_ij({fij.face, static_cast<std::uint32_t>(ni), static_cast<std::uint32_t>(nj)},
                            CellLevel(level));
    } else {
      const double scale = std::ldexp(1.0, -level);
      out[n] = cell_id(st_point(fij.face, (ni + 0.5) * scale, (nj + 0.5) * scale), CellLevel(level));
    }
  }
  return out;
}

std::array<GeoPoint, 4> vertices(CellId c) {
  require_valid(c);
  const FaceIJ fij = to_face_ij(c);
  const double scale = std::ldexp(1.0, -c.level());
  const double s0 = fij.i * scale, s1 = (fij.i + 1.0) * scale;
  const double t0 = fij.j * scale, t1 = (fij.j + 1.0) * scale;
  return {st_point(fij.face, s0, t0), st_point(fij.face, s1, t0), st_point(fij.face, s1, t1),
          st_point(fij.face, s0, t1)};
}

double exact_area_m2(CellId c) {
  const auto v = vertices(c);
  const auto a = unit(v[0]), b = unit(v[1]), cc = unit(v[2]), d = unit(v[3]);
  const double excess = triangle_excess(a, b, cc) + triangle_excess(a, cc, d);
  return excess * kEarthRadiusM * kEarthRadiusM;
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace capstone::geo
