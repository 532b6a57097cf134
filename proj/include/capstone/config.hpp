#pragma once

// Session configuration for the command-line tool: a line-oriented file of
// `key = value` pairs, `#` starting a comment.
//
//   level = 21
//   preprocess.interval_s = 5
//   baseline.algo = dt
//   baseline.max_dist = 100
//
// Unknown keys, repeated keys and malformed values are ParseErrors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "capstone/baselines.hpp"
#include "capstone/ingest.hpp"
#include "capstone/pipeline.hpp"

namespace capstone::config {

struct SessionConfig {
  pipeline::Options pipeline;
  ingest::CsvColumns columns;
  double spectral_window_h = 24.0;
  std::string algorithm = "dt";  // dj, dt, zoi or kmeans
  // Catalogue overrides on top of the algorithm's published defaults.
  std::vector<std::pair<std::string, double>> cluster_overrides;
  std::size_t kmeans_k = 5;
  std::uint64_t seed = 1;
  int threads = 1;
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> truth;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> plot_dir;

  int level() const noexcept { return pipeline.level; }
  baselines::ClusterParams cluster_params(baselines::Algorithm a) const;

  // Option ranges, then that every referenced input file exists.
  void validate() const;
};

// Keys recognised by `apply`, in documentation order.
const std::vector<std::string>& known_keys();

// Sets one key; throws InputError on an unknown key or bad value.
void apply(SessionConfig& cfg, const std::string& key, const std::string& value);

SessionConfig parse(std::istream& in, SessionConfig base = {});
SessionConfig load(const std::filesystem::path& path, SessionConfig base = {});

}  // namespace capstone::config
