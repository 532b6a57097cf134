#include "capstone/baselines.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

#include "capstone/errors.hpp"

namespace capstone::baselines {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

// Equirectangular plane around the trajectory's mean position. Linear in
// lat/lon, so means computed in the plane map back to lat/lon means.
struct LocalFrame {
  double lat0 = 0.0, lon0 = 0.0, kx = 0.0, ky = 0.0;

  explicit LocalFrame(const Trajectory& traj) {
    for (const auto& p : traj.points) {
      lat0 += p.loc.lat;
      lon0 += p.loc.lon;
    }
    if (!traj.empty()) {
      lat0 /= static_cast<double>(traj.size());
      lon0 /= static_cast<double>(traj.size());
    }
    ky = geo::kEarthRadiusM * kDeg;
    kx = ky * std::cos(lat0 * kDeg);
  }
  Point2 to_xy(const geo::GeoPoint& g) const { return {(g.lon - lon0) * kx, (g.lat - lat0) * ky}; }
  geo::GeoPoint from_xy(const Point2& p) const { return {p[1] / ky + lat0, p[0] / kx + lon0}; }
};

double dist2(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

ClusterRoi make_cluster(const Trajectory& traj, const std::vector<Point2>& xy, const LocalFrame& frame,
                        std::vector<std::size_t> members, std::size_t episodes) {
  std::sort(members.begin(), members.end());
  ClusterRoi c;
  Point2 mean{0.0, 0.0};
  for (const auto i : members) {
    mean[0] += xy[i][0];
    mean[1] += xy[i][1];
  }
  mean[0] /= static_cast<double>(members.size());
  mean[1] /= static_cast<double>(members.size());
  c.centroid = frame.from_xy(mean);
  for (const auto i : members) c.radius_m = std::max(c.radius_m, geo::haversine_m(c.centroid, traj[i].loc));
  c.first_seen = traj[members.front()].t;
  c.last_seen = traj[members.back()].t;
  c.members = std::move(members);
  c.episodes = episodes;
  return c;
}

double require(const std::optional<double>& v, const char* algo, const char* name) {
  if (!v) throw InputError(fmt::format("{} needs {}", algo, name));
  return *v;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

const char* canonical(std::string_view name) {
  static constexpr std::pair<std::string_view, const char*> kNames[] = {
      {"max_dist", "max_dist"},   {"min_time", "min_time"},   {"max_time", "max_time"},
      {"min_points", "min_points"}, {"min_visit", "min_visit"}, {"min_speed", "min_speed"},
      {"cluster_radius", "cluster_radius"}};
  for (const auto& [k, v] : kNames)
    if (k == name) return v;
  return nullptr;
}

constexpr std::string_view kExtraNames[] = {"num_eigenvectors", "gradient_threshold", "seed_number", "vector_length",
                                            "max_point_separation", "grid_size", "p_value", "height"};

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::DJ: return "dj";
    case Algorithm::DT: return "dt";
    case Algorithm::ZOI: return "zoi";
  }
  return "?";
}

Algorithm algorithm_from_string(std::string_view name) {
  if (name == "dj" || name == "dj_cluster") return Algorithm::DJ;
  if (name == "dt" || name == "dt_cluster") return Algorithm::DT;
  if (name == "zoi" || name == "zoi_detect") return Algorithm::ZOI;
  throw InputError(fmt::format("unknown baseline algorithm '{}' (expected dj, dt or zoi)", name));
}

ClusterParams ClusterParams::defaults(Algorithm a) {
  ClusterParams p;
  switch (a) {
    case Algorithm::DJ:
      p.min_speed_kmh = 0.4;
      p.cluster_radius_m = 60.0;
      p.min_points = 10;
      break;
    case Algorithm::DT:
      p.max_dist_m = 60.0;
      p.min_time_s = 900.0;
      break;
    case Algorithm::ZOI:
      p.max_dist_m = 60.0;
      p.min_time_s = 900.0;
      p.min_visit = 6;
      break;
  }
  return p;
}

void ClusterParams::set(std::string_view name, double value) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw InputError(fmt::format("parameter {} must be positive, got {}", name, value));
  const char* c = canonical(name);
  if (!c) {
    if (std::find(std::begin(kExtraNames), std::end(kExtraNames), name) == std::end(kExtraNames))
      throw InputError(fmt::format("unknown clustering parameter '{}'", name));
    extra[std::string(name)] = value;
    return;
  }
  const std::string_view n(c);
  if (n == "max_dist") max_dist_m = value;
  else if (n == "min_time") min_time_s = value;
  else if (n == "max_time") max_time_s = value;
  else if (n == "min_points") min_points = value;
  else if (n == "min_visit") min_visit = value;
  else if (n == "min_speed") min_speed_kmh = value;
  else cluster_radius_m = value;
}

std::optional<double> ClusterParams::get(std::string_view name) const {
  const char* c = canonical(name);
  if (!c) {
    const auto it = extra.find(std::string(name));
    return it == extra.end() ? std::nullopt : std::optional<double>(it->second);
  }
  const std::string_view n(c);
  if (n == "max_dist") return max_dist_m;
  if (n == "min_time") return min_time_s;
  if (n == "max_time") return max_time_s;
  if (n == "min_points") return min_points;
  if (n == "min_visit") return min_visit;
  if (n == "min_speed") return min_speed_kmh;
  return cluster_radius_m;
}

void ClusterParams::validate() const {
  for (const auto& v : {max_dist_m, min_time_s, max_time_s, min_points, min_visit, min_speed_kmh, cluster_radius_m})
    if (v && !(*v > 0.0)) throw InputError("clustering parameters must be positive");
  for (const auto& [k, v] : extra)
    if (!(v > 0.0)) throw InputError(fmt::format("parameter {} must be positive", k));
}

std::vector<ClusterRoi> dj_cluster(const Trajectory& traj, const ClusterParams& params) {
  params.validate();
  const double radius = require(params.cluster_radius_m, "dj_cluster", "cluster_radius");
  const double min_points = require(params.min_points, "dj_cluster", "min_points");
  const double min_speed = require(params.min_speed_kmh, "dj_cluster", "min_speed") / 3.6;
  const std::size_t n = traj.size();
  if (n == 0) return {};
  const LocalFrame frame(traj);
  std::vector<Point2> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = frame.to_xy(traj[i].loc);

  std::vector<std::size_t> slow;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i > 0 ? i - 1 : i, b = i + 1 < n ? i + 1 : i;
    const double dt = traj[b].t - traj[a].t;
    const double speed = dt > 0.0 ? geo::haversine_m(traj[a].loc, traj[b].loc) / dt : 0.0;
    if (speed < min_speed) slow.push_back(i);
  }

  const auto key = [&](double x, double y) {
    const auto gx = static_cast<std::int64_t>(std::floor(x / radius));
    const auto gy = static_cast<std::int64_t>(std::floor(y / radius));
    return std::pair{gx, gy};
  };
  const auto hash = [](std::int64_t gx, std::int64_t gy) {
    return static_cast<std::uint64_t>(gx) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(gy);
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
  for (std::size_t s = 0; s < slow.size(); ++s) {
    const auto [gx, gy] = key(xy[slow[s]][0], xy[slow[s]][1]);
    grid[hash(gx, gy)].push_back(s);
  }

  UnionFind uf(slow.size());
  std::vector<bool> in_cluster(slow.size(), false);
  std::vector<std::size_t> nb;
  const double r2 = radius * radius;
  for (std::size_t s = 0; s < slow.size(); ++s) {
    const auto& p = xy[slow[s]];
    const auto [gx, gy] = key(p[0], p[1]);
    nb.clear();
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = grid.find(hash(gx + dx, gy + dy));
        if (it == grid.end()) continue;
        for (const auto o : it->second)
          if (dist2(p, xy[slow[o]]) <= r2) nb.push_back(o);
      }
    if (static_cast<double>(nb.size()) < min_points) continue;
    for (const auto o : nb) {
      uf.unite(s, o);
      in_cluster[o] = true;
    }
    in_cluster[s] = true;
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t s = 0; s < slow.size(); ++s)
    if (in_cluster[s]) groups[uf.find(s)].push_back(slow[s]);
  std::vector<ClusterRoi> out;
  for (auto& [root, members] : groups) out.push_back(make_cluster(traj, xy, frame, std::move(members), 1));
  std::sort(out.begin(), out.end(), [](const ClusterRoi& a, const ClusterRoi& b) { return a.members < b.members; });
  return out;
}

std::vector<ClusterRoi> dt_cluster(const Trajectory& traj, const ClusterParams& params) {
  params.validate();
  const double max_dist = require(params.max_dist_m, "dt_cluster", "max_dist");
  const double min_time = require(params.min_time_s, "dt_cluster", "min_time");
  const std::size_t n = traj.size();
  if (n == 0) return {};
  const LocalFrame frame(traj);
  std::vector<Point2> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = frame.to_xy(traj[i].loc);

  std::vector<ClusterRoi> out;
  const double d2max = max_dist * max_dist;
  std::size_t i = 0;
  while (i < n) {
    Point2 c = xy[i];
    std::size_t j = i + 1;
    for (; j < n; ++j) {
      if (params.max_time_s && traj[j].t - traj[j - 1].t > *params.max_time_s) break;
      if (dist2(xy[j], c) > d2max) break;
      const double k = static_cast<double>(j - i + 1);
      c[0] += (xy[j][0] - c[0]) / k;
      c[1] += (xy[j][1] - c[1]) / k;
    }
    if (traj[j - 1].t - traj[i].t >= min_time) {
      std::vector<std::size_t> members(j - i);
      std::iota(members.begin(), members.end(), i);
      out.push_back(make_cluster(traj, xy, frame, std::move(members), 1));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<ClusterRoi> zoi_detect(const Trajectory& traj, const ClusterParams& params) {
  const double min_visit = require(params.min_visit, "zoi_detect", "min_visit");
  auto clusters = dt_cluster(traj, params);
  if (clusters.empty()) return {};
  const LocalFrame frame(traj);
  std::vector<Point2> xy(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) xy[i] = frame.to_xy(traj[i].loc);

  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t a = 0; a < clusters.size() && !merged; ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double d = geo::haversine_m(clusters[a].centroid, clusters[b].centroid);
        if (d > clusters[a].radius_m + clusters[b].radius_m) continue;
        auto members = clusters[a].members;
        members.insert(members.end(), clusters[b].members.begin(), clusters[b].members.end());
        clusters[a] = make_cluster(traj, xy, frame, std::move(members), clusters[a].episodes + clusters[b].episodes);
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(b));
        merged = true;
        break;
      }
  }
  std::vector<ClusterRoi> out;
  for (auto& c : clusters)
    if (static_cast<double>(c.episodes) >= min_visit) out.push_back(std::move(c));
  return out;
}

std::vector<ClusterRoi> run(Algorithm a, const Trajectory& traj, const ClusterParams& params) {
  switch (a) {
    case Algorithm::DJ: return dj_cluster(traj, params);
    case Algorithm::DT: return dt_cluster(traj, params);
    case Algorithm::ZOI: return zoi_detect(traj, params);
  }
  return {};
}

KMeansResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed, int max_iterations) {
  const std::size_t n = points.size();
  if (k == 0) throw InputError("k must be at least 1");
  if (k > n) throw InputError(fmt::format("k = {} exceeds the number of points ({})", k, n));
  std::mt19937_64 rng(seed);
  KMeansResult r;

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  r.centroids.push_back(points[first]);
  chosen[first] = true;
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], dist2(points[i], r.centroids.back()));
      if (!chosen[i]) total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        pick = i;
        u -= d2[i];
        if (u <= 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    r.centroids.push_back(points[pick]);
  }

  r.labels.assign(n, k);
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = dist2(points[i], r.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = dist2(points[i], r.centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.labels[i] != best) {
        r.labels[i] = best;
        changed = true;
      }
    }
    std::vector<Point2> sum(k, Point2{0.0, 0.0});
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[r.labels[i]][0] += points[i][0];
      sum[r.labels[i]][1] += points[i][1];
      ++cnt[r.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cnt[c] == 0) {
        // Reseed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = dist2(points[i], r.centroids[r.labels[i]]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        r.centroids[c] = points[far];
        r.labels[far] = c;
        changed = true;
        continue;
      }
      r.centroids[c] = {sum[c][0] / static_cast<double>(cnt[c]), sum[c][1] / static_cast<double>(cnt[c])};
    }
    if (!changed) break;
  }
  r.iterations = std::min(r.iterations, max_iterations);
  return r;
}

std::vector<SweepPoint> knee_sweep(const Trajectory& traj, Algorithm a, std::string_view param,
                                   std::span<const double> values, std::optional<ClusterParams> base) {
  std::string name(param);
  if (name == "radius") name = a == Algorithm::DJ ? "cluster_radius" : "max_dist";
  static const std::map<Algorithm, std::vector<std::string_view>> accepted = {
      {Algorithm::DJ, {"cluster_radius", "min_points", "min_speed"}},
      {Algorithm::DT, {"max_dist", "min_time", "max_time"}},
      {Algorithm::ZOI, {"max_dist", "min_time", "max_time", "min_visit"}}};
  const auto& ok = accepted.at(a);
  if (std::find(ok.begin(), ok.end(), name) == ok.end())
    throw InputError(fmt::format("{} has no parameter '{}'", to_string(a), param));
  ClusterParams p = base ? *base : ClusterParams::defaults(a);
  std::vector<SweepPoint> out;
  for (const double v : values) {
    p.set(name, v);
    out.push_back({v, run(a, traj, p).size()});
  }
  return out;
}

void write_clusters_csv(std::ostream& out, Algorithm a, const std::vector<ClusterRoi>& clusters) {
  out << "algo,lat,lon,radius_m,members,first_seen,last_seen\n";
  for (const auto& c : clusters)
    fmt::print(out, "{},{:.7f},{:.7f},{:.3f},{},{},{}\n", to_string(a), c.centroid.lat, c.centroid.lon, c.radius_m,
               c.member_count(), format_iso8601(c.first_seen), format_iso8601(c.last_seen));
}

void write_sweep_csv(std::ostream& out, std::string_view param, const std::vector<SweepPoint>& sweep) {
  out << "param,value,count\n";
  for (const auto& s : sweep) fmt::print(out, "{},{:.12g},{}\n", param, s.value, s.count);
}

}  // namespace capstone::baselines
