#pragma once

// Distance/time-threshold clustering used for comparison: DJ Cluster,
// DT Cluster, ZOI Detect, plain k-means, and one-parameter sweeps.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capstone/trajectory.hpp"

namespace capstone::baselines {

enum class Algorithm { DJ, DT, ZOI };

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);  // throws InputError

struct ClusterParams {
  std::optional<double> max_dist_m;
  std::optional<double> min_time_s;
  std::optional<double> max_time_s;  // gap that breaks a DT run
  std::optional<double> min_points;
  std::optional<double> min_visit;
  std::optional<double> min_speed_kmh;
  std::optional<double> cluster_radius_m;
  // Remaining catalogue entries (num_eigenvectors, gradient_threshold,
  // seed_number, vector_length, max_point_separation, grid_size, p_value,
  // height). Carried for completeness; nothing reads them.
  std::map<std::string, double> extra;

  // Published defaults for each algorithm.
  static ClusterParams defaults(Algorithm a);

  // By catalogue name, e.g. "max_dist" or "min_time". Unknown names and
  // non-positive values throw InputError.
  void set(std::string_view name, double value);
  std::optional<double> get(std::string_view name) const;
  void validate() const;
};

struct ClusterRoi {
  geo::GeoPoint centroid;
  double radius_m = 0.0;  // farthest member from the centroid
  std::vector<std::size_t> members;  // trajectory indices, ascending
  Timestamp first_seen = 0.0;
  Timestamp last_seen = 0.0;
  std::size_t episodes = 1;  // dwell runs merged into this cluster

  std::size_t member_count() const noexcept { return members.size(); }
};

// Density-joinable clustering over slow samples: each sample with at least
// min_points slow samples (itself included) within cluster_radius seeds a
// neighbourhood; neighbourhoods sharing a sample are joined.
std::vector<ClusterRoi> dj_cluster(const Trajectory& traj, const ClusterParams& params);

// Sequential dwell detection: a run whose points each lie within max_dist of
// the run's running centroid and which lasts at least min_time is a cluster.
// After a cluster the scan resumes at the first point that broke the run,
// otherwise at the next point.
std::vector<ClusterRoi> dt_cluster(const Trajectory& traj, const ClusterParams& params);

// DT clusters whose circles intersect are merged until nothing changes;
// clusters built from fewer than min_visit dwell runs are dropped.
std::vector<ClusterRoi> zoi_detect(const Trajectory& traj, const ClusterParams& params);

std::vector<ClusterRoi> run(Algorithm a, const Trajectory& traj, const ClusterParams& params);

using Point2 = std::array<double, 2>;

struct KMeansResult {
  std::vector<Point2> centroids;
  std::vector<std::size_t> labels;
  int iterations = 0;
};

// Lloyd iterations from a k-means++ start drawn with `seed`.
// Throws InputError if k is 0 or exceeds the number of points.
KMeansResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed, int max_iterations = 300);

struct SweepPoint {
  double value = 0.0;
  std::size_t count = 0;
};

// One run per value with `param` overridden (others at their defaults or as
// given in `base`); the count is the number of clusters emitted.
std::vector<SweepPoint> knee_sweep(const Trajectory& traj, Algorithm a, std::string_view param,
                                   std::span<const double> values, std::optional<ClusterParams> base = {});

// CSV `algo,lat,lon,radius_m,members,first_seen,last_seen`.
void write_clusters_csv(std::ostream& out, Algorithm a, const std::vector<ClusterRoi>& clusters);

// CSV `param,value,count`.
void write_sweep_csv(std::ostream& out, std::string_view param, const std::vector<SweepPoint>& sweep);

}  // namespace capstone::baselines
