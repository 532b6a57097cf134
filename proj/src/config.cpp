#include "capstone/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    throw InputError(fmt::format("{}: expected a number, got '{}'", key, v));
  return out;
}

long long as_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw InputError(fmt::format("{}: expected an integer, got '{}'", key, v));
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

using Setter = std::function<void(SessionConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = [] {
    std::vector<std::pair<std::string, Setter>> t;
    const auto num = [&](std::string key, auto field) {
      t.emplace_back(std::move(key), [field](SessionConfig& c, const std::string& k, const std::string& v) {
        field(c) = as_double(k, v);
      });
    };
    const auto integer = [&](std::string key, auto field) {
      t.emplace_back(std::move(key), [field](SessionConfig& c, const std::string& k, const std::string& v) {
        field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(as_int(k, v));
      });
    };
    const auto flag = [&](std::string key, auto field) {
      t.emplace_back(std::move(key), [field](SessionConfig& c, const std::string& k, const std::string& v) {
        field(c) = as_bool(k, v);
      });
    };
    const auto text = [&](std::string key, auto field) {
      t.emplace_back(std::move(key), [field](SessionConfig& c, const std::string&, const std::string& v) { field(c) = v; });
    };

    integer("level", [](SessionConfig& c) -> int& { return c.pipeline.level; });
    num("preprocess.interval_s", [](SessionConfig& c) -> double& { return c.pipeline.resample.interval_s; });
    integer("preprocess.kernel_width", [](SessionConfig& c) -> int& { return c.pipeline.kernel_width; });
    integer("preprocess.semivar_window", [](SessionConfig& c) -> int& { return c.pipeline.resample.semivariance_window; });
    num("preprocess.max_gap_s", [](SessionConfig& c) -> double& { return c.pipeline.resample.max_gap_s; });
    num("peaks.baseline_k", [](SessionConfig& c) -> double& { return c.pipeline.baseline_k; });
    num("peaks.baseline_window_s", [](SessionConfig& c) -> double& { return c.pipeline.baseline_window_s; });
    integer("peaks.smoothing_width", [](SessionConfig& c) -> int& { return c.pipeline.smoothing_width; });
    integer("peaks.recurrence_horizon", [](SessionConfig& c) -> int& { return c.pipeline.recurrence_horizon; });
    num("peaks.slope_tolerance", [](SessionConfig& c) -> double& { return c.pipeline.slope_tolerance; });
    num("peaks.min_stay_s", [](SessionConfig& c) -> double& { return c.pipeline.min_stay_s; });
    flag("peaks.literal_curvature", [](SessionConfig& c) -> bool& { return c.pipeline.literal_curvature; });
    flag("peaks.fit_curves", [](SessionConfig& c) -> bool& { return c.pipeline.fit_curves; });
    integer("peaks.fit_iterations", [](SessionConfig& c) -> int& { return c.pipeline.fit.max_iterations; });
    num("peaks.fit_tolerance", [](SessionConfig& c) -> double& { return c.pipeline.fit.relative_tolerance; });
    t.emplace_back("peaks.operator", [](SessionConfig& c, const std::string& k, const std::string& v) {
      if (v == "banded") c.pipeline.mode = peaks::OperatorMode::Banded;
      else if (v == "dense") c.pipeline.mode = peaks::OperatorMode::Dense;
      else throw InputError(fmt::format("{}: expected banded or dense, got '{}'", k, v));
    });
    num("spectral.window_h", [](SessionConfig& c) -> double& { return c.spectral_window_h; });
    text("ingest.lat", [](SessionConfig& c) -> std::string& { return c.columns.lat; });
    text("ingest.lon", [](SessionConfig& c) -> std::string& { return c.columns.lon; });
    text("ingest.timestamp", [](SessionConfig& c) -> std::string& { return c.columns.timestamp; });
    text("ingest.accuracy", [](SessionConfig& c) -> std::string& { return c.columns.accuracy; });
    flag("ingest.strict", [](SessionConfig& c) -> bool& { return c.columns.strict; });
    t.emplace_back("baseline.algo", [](SessionConfig& c, const std::string& k, const std::string& v) {
      if (v != "kmeans") baselines::algorithm_from_string(v);
      (void)k;
      c.algorithm = v;
    });
    integer("baseline.k", [](SessionConfig& c) -> std::size_t& { return c.kmeans_k; });
    integer("seed", [](SessionConfig& c) -> std::uint64_t& { return c.seed; });
    integer("threads", [](SessionConfig& c) -> int& { return c.threads; });
    const auto path = [&](std::string key, auto field) {
      t.emplace_back(std::move(key), [field](SessionConfig& c, const std::string&, const std::string& v) {
        field(c) = std::filesystem::path(v);
      });
    };
    path("path.input", [](SessionConfig& c) -> std::optional<std::filesystem::path>& { return c.input; });
    path("path.truth", [](SessionConfig& c) -> std::optional<std::filesystem::path>& { return c.truth; });
    path("path.output", [](SessionConfig& c) -> std::optional<std::filesystem::path>& { return c.output; });
    path("path.plots", [](SessionConfig& c) -> std::optional<std::filesystem::path>& { return c.plot_dir; });
    return t;
  }();
  return table;
}

constexpr std::string_view kClusterPrefix = "baseline.";

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    k.push_back("baseline.<parameter>");
    return k;
  }();
  return keys;
}

void apply(SessionConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, fn] : setters())
    if (name == key) {
      fn(cfg, key, value);
      return;
    }
  if (key.starts_with(kClusterPrefix)) {
    const auto name = key.substr(kClusterPrefix.size());
    const double v = as_double(key, value);
    baselines::ClusterParams probe;
    probe.set(name, v);  // rejects unknown names and bad values
    cfg.cluster_overrides.emplace_back(name, v);
    return;
  }
  throw InputError(fmt::format("unknown key '{}'", key));
}

SessionConfig parse(std::istream& in, SessionConfig base) {
  std::set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const auto text = trim(std::string_view(raw).substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(fmt::format("expected 'key = value', got '{}'", text), line);
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ParseError("missing key", line);
    if (value.empty()) throw ParseError(fmt::format("missing value for '{}'", key), line);
    if (!seen.insert(key).second) throw ParseError(fmt::format("key '{}' given twice", key), line);
    try {
      apply(base, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(e.what(), line);
    }
  }
  return base;
}

SessionConfig load(const std::filesystem::path& path, SessionConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open config '{}'", path.string()));
  return parse(in, std::move(base));
}

baselines::ClusterParams SessionConfig::cluster_params(baselines::Algorithm a) const {
  auto p = baselines::ClusterParams::defaults(a);
  for (const auto& [name, v] : cluster_overrides) p.set(name, v);
  return p;
}

void SessionConfig::validate() const {
  pipeline.validate();
  if (!(spectral_window_h > 0.0)) throw InputError("spectral.window_h must be positive");
  if (threads < 1) throw InputError("threads must be at least 1");
  if (kmeans_k < 1) throw InputError("baseline.k must be at least 1");
  if (algorithm != "kmeans") cluster_params(baselines::algorithm_from_string(algorithm)).validate();
  for (const auto* p : {&input, &truth})
    if (*p && !std::filesystem::exists(**p)) throw InputError(fmt::format("no such file '{}'", (*p)->string()));
}

}  // namespace capstone::config
