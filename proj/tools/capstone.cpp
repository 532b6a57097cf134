// capstone: GPS trajectories in, mobility models and evaluation reports out.
//
//   capstone model <trajectory> [-o model.json] [--visits v.csv] [--signal s.csv] [--periods p.csv] [--plots dir]
//   capstone baseline <trajectory> [--algo dt] [--param max_dist=100 ...] [-o clusters.csv]
//   capstone eval [<trajectory>] --truth truth.txt [--model model.json] [--csv]
//   capstone bench [--sizes 1000,10000,100000] [--reps 10] [--calibrate] [-o bench.csv]
//   capstone sweep <trajectory> --algo dt --param max_dist --values 10,20,50 [-o sweep.csv] [--plot knee.svg]
//   capstone synth [--profile default|commuter] [--rois 5] [--days 14] -o trajectory.csv [--truth truth.txt]
//   capstone plot signal|knee|compare ...
//
// Exit codes: 0 success, 2 bad input or usage, 1 internal failure.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "capstone/baselines.hpp"
#include "capstone/config.hpp"
#include "capstone/errors.hpp"
#include "capstone/eval.hpp"
#include "capstone/ingest.hpp"
#include "capstone/model.hpp"
#include "capstone/pipeline.hpp"
#include "capstone/plot.hpp"
#include "capstone/preprocess.hpp"
#include "capstone/spectral.hpp"

using namespace capstone;

namespace {

// Failure inside a named stage; keeps the input/internal distinction.
struct StageFailure {
  std::string stage;
  std::string message;
  bool input = false;
};

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError& e) {
    throw StageFailure{name, e.what(), true};
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure{name, e.what(), false};
  }
}

void emit(const std::optional<std::filesystem::path>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path->string()));
  out << text;
}

template <class Writer>
std::string render(Writer&& w) {
  std::ostringstream out;
  w(out);
  return out.str();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) throw InputError(fmt::format("'{}' is not a number", item));
    out.push_back(v);
  }
  if (out.empty()) throw InputError("empty value list");
  return out;
}

Trajectory load_trajectory(const config::SessionConfig& cfg) {
  if (!cfg.input) throw InputError("no input trajectory given");
  return stage("ingest", [&] {
    ingest::Warnings w;
    auto t = ingest::read_any(*cfg.input, cfg.columns, &w);
    for (const auto& m : w.messages) std::cerr << "warning: " << m << '\n';
    return t;
  });
}

// Lowpassed and resampled fixes, segments joined back in time order.
Trajectory preprocessed(const Trajectory& traj, const config::SessionConfig& cfg) {
  return stage("preprocess", [&] {
    if (traj.empty()) throw InputError("empty trajectory");
    Trajectory out;
    for (const auto& seg : preprocess::resample(traj, cfg.pipeline.resample, cfg.pipeline.kernel_width))
      out.points.insert(out.points.end(), seg.points.begin(), seg.points.end());
    return out;
  });
}

pipeline::Result run_pipeline(const Trajectory& traj, const config::SessionConfig& cfg) {
  return stage("pipeline", [&] { return pipeline::run(traj, cfg.pipeline); });
}

std::string signal_svg(const pipeline::Result& r) {
  plot::Series raw{"offset", {}, {}}, corrected{"corrected", {}, {}}, fitted{"fitted", {}, {}};
  const double t0 = r.segments.front().signal.start_time;
  for (const auto& seg : r.segments)
    for (std::size_t i = 0; i < seg.signal.size(); ++i) {
      const double h = (seg.signal.time_at(i) - t0) / 3600.0;
      raw.x.push_back(h);
      raw.y.push_back(seg.offsets[i]);
      corrected.x.push_back(h);
      corrected.y.push_back(seg.corrected[i]);
      if (seg.fitted.size() == seg.signal.size()) {
        fitted.x.push_back(h);
        fitted.y.push_back(seg.fitted[i]);
      }
    }
  std::vector<plot::Series> series{raw, corrected};
  if (!fitted.x.empty()) series.push_back(fitted);
  return plot::line_chart({"space-time signal", "hours", "rank offset from basecamp", 1200, 420}, series);
}

std::vector<baselines::ClusterRoi> run_baseline(const Trajectory& pre, const config::SessionConfig& cfg,
                                                const std::string& algo) {
  return stage("baseline", [&] {
    const auto a = baselines::algorithm_from_string(algo);
    return baselines::run(a, pre, cfg.cluster_params(a));
  });
}

std::string kmeans_csv(const Trajectory& pre, const config::SessionConfig& cfg) {
  return stage("baseline", [&] {
    if (pre.empty()) throw InputError("empty trajectory");
    const double lat0 = pre[0].loc.lat, c = std::cos(lat0 * 3.14159265358979323846 / 180.0);
    std::vector<baselines::Point2> pts;
    for (const auto& p : pre.points) pts.push_back({p.loc.lon * c, p.loc.lat});
    const auto km = baselines::kmeans(pts, cfg.kmeans_k, cfg.seed);
    std::vector<std::size_t> members(km.centroids.size(), 0);
    for (const auto l : km.labels) ++members[l];
    std::string out = "algo,lat,lon,members\n";
    for (std::size_t k = 0; k < km.centroids.size(); ++k)
      out += fmt::format("kmeans,{:.7f},{:.7f},{}\n", km.centroids[k][1], km.centroids[k][0] / c, members[k]);
    return out;
  });
}

struct Common {
  std::optional<std::filesystem::path> config_path;
  std::optional<int> level;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> output;
};

config::SessionConfig session(const Common& c) {
  return stage("config", [&] {
    auto cfg = c.config_path ? config::load(*c.config_path) : config::SessionConfig{};
    if (c.level) cfg.pipeline.level = *c.level;
    if (c.threads) cfg.threads = *c.threads;
    if (c.seed) cfg.seed = *c.seed;
    if (c.input) cfg.input = c.input;
    if (c.output) cfg.output = c.output;
    cfg.validate();
    return cfg;
  });
}

std::vector<plot::Series> read_sweeps(const std::vector<std::filesystem::path>& files) {
  std::vector<plot::Series> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw InputError(fmt::format("cannot open '{}'", f.string()));
    std::string line;
    if (!std::getline(in, line) || line != "param,value,count")
      throw InputError(fmt::format("'{}' is not a sweep CSV", f.string()));
    plot::Series s{f.stem().string(), {}, {}};
    std::size_t n = 1;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) throw ParseError("expected param,value,count", n);
      try {
        s.x.push_back(std::stod(line.substr(a + 1, b - a - 1)));
        s.y.push_back(std::stod(line.substr(b + 1)));
      } catch (const std::exception&) {
        throw ParseError("malformed sweep row", n);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobility models from GPS trajectories"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--cell-level", common.level, "cell level, 0-30 (default: level nearest a 38 m2 mean cell, 21)");
  app.add_option("--threads", common.threads, "worker cap");
  app.add_option("--seed", common.seed, "seed for kmeans and synth");

  // model
  auto* model_cmd = app.add_subcommand("model", "detect visits and build the mobility model");
  std::optional<std::filesystem::path> visits_csv, signal_csv, periods_csv;
  model_cmd->add_option("input", common.input, "trajectory (.csv or .plt)");
  model_cmd->add_option("-o,--output", common.output, "model JSON (default stdout)");
  model_cmd->add_option("--visits", visits_csv, "visit CSV");
  model_cmd->add_option("--signal", signal_csv, "signal CSV");
  model_cmd->add_option("--periods", periods_csv, "candidate periods CSV");
  std::optional<std::filesystem::path> plots;
  model_cmd->add_option("--plots", plots, "directory for SVG figures");

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "run a clustering baseline");
  std::optional<std::string> algo;
  std::vector<std::string> params;
  std::optional<std::size_t> k;
  base_cmd->add_option("input", common.input, "trajectory");
  base_cmd->add_option("--algo", algo, "dj, dt, zoi or kmeans");
  base_cmd->add_option("--param", params, "name=value override, repeatable");
  base_cmd->add_option("--k", k, "clusters for kmeans");
  base_cmd->add_option("-o,--output", common.output, "cluster CSV (default stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a model against ground truth");
  std::optional<std::filesystem::path> truth_path, model_path;
  bool csv = false;
  eval_cmd->add_option("input", common.input, "trajectory (ignored with --model)");
  eval_cmd->add_option("--truth", truth_path, "ground-truth ROI file")->required();
  eval_cmd->add_option("--model", model_path, "score this model document instead of running the pipeline");
  eval_cmd->add_flag("--csv", csv, "CSV instead of text");
  eval_cmd->add_option("-o,--output", common.output, "report file (default stdout)");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "runtime scaling");
  std::string sizes = "1000,10000,100000";
  int reps = 10;
  bool calibrate = false;
  std::vector<std::string> only;
  bench_cmd->add_option("--sizes", sizes, "ascending sample counts");
  bench_cmd->add_option("--reps", reps, "timed repetitions per size (>= 10)");
  bench_cmd->add_option("--pipelines", only, "subset of capstone, capstone-banded, dj, dt, zoi");
  bench_cmd->add_flag("--calibrate", calibrate, "include the quadratic calibration workload");
  bench_cmd->add_option("-o,--output", common.output, "CSV (default stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "one-parameter sweep of a baseline");
  std::string sweep_param, sweep_values;
  std::optional<std::filesystem::path> sweep_plot;
  sweep_cmd->add_option("input", common.input, "trajectory");
  sweep_cmd->add_option("--algo", algo, "dj, dt or zoi");
  sweep_cmd->add_option("--param", sweep_param, "parameter name")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep_cmd->add_option("--plot", sweep_plot, "knee curve SVG");
  sweep_cmd->add_option("-o,--output", common.output, "CSV (default stdout)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic trajectory with planted ROIs");
  std::string profile_name = "default";
  eval::SynthProfile profile;
  std::optional<std::filesystem::path> synth_truth;
  synth_cmd->add_option("--profile", profile_name, "default or commuter");
  synth_cmd->add_option("--rois", profile.roi_count, "ROIs besides home");
  synth_cmd->add_option("--nested", profile.nested_count, "sub-ROIs");
  synth_cmd->add_option("--days", profile.days, "simulated days");
  synth_cmd->add_option("--noise", profile.noise_m, "position noise sigma, metres");
  synth_cmd->add_option("--interval", profile.interval_s, "sampling interval, seconds");
  synth_cmd->add_option("--stops", profile.zero_dwell_stops, "short stops on the way");
  synth_cmd->add_option("-o,--output", common.output, "trajectory CSV (default stdout)");
  synth_cmd->add_option("--truth", synth_truth, "ground-truth file to write");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "SVG figures");
  plot_cmd->require_subcommand(1);
  auto* plot_signal = plot_cmd->add_subcommand("signal", "signal, corrected and fitted curves");
  plot_signal->add_option("input", common.input, "trajectory");
  plot_signal->add_option("-o,--output", common.output, "SVG (default stdout)");
  auto* plot_knee = plot_cmd->add_subcommand("knee", "knee curves from sweep CSVs");
  std::vector<std::filesystem::path> sweep_files;
  plot_knee->add_option("sweeps", sweep_files, "sweep CSV files")->required()->check(CLI::ExistingFile);
  plot_knee->add_option("-o,--output", common.output, "SVG (default stdout)");
  auto* plot_compare = plot_cmd->add_subcommand("compare", "ROI counts per method against truth");
  plot_compare->add_option("input", common.input, "trajectory");
  plot_compare->add_option("--truth", truth_path, "ground-truth ROI file");
  plot_compare->add_option("-o,--output", common.output, "SVG (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto cfg = session(common);
    if (plots) cfg.plot_dir = plots;

    if (model_cmd->parsed()) {
      const auto traj = load_trajectory(cfg);
      const auto r = run_pipeline(traj, cfg);
      emit(cfg.output, model::serialize(r.model) + "\n");
      if (visits_csv) emit(visits_csv, render([&](std::ostream& o) { peaks::write_visits_csv(o, r.visits); }));
      if (signal_csv)
        emit(signal_csv, render([&](std::ostream& o) {
               for (std::size_t s = 0; s < r.segments.size(); ++s) {
                 std::ostringstream part;
                 signal::write_signal_csv(part, r.segments[s].signal);
                 auto text = part.str();
                 if (s > 0) text.erase(0, text.find('\n') + 1);  // one header
                 o << text;
               }
             }));
      if (periods_csv)
        emit(periods_csv, stage("spectral", [&] {
               std::vector<double> x;
               for (const auto& seg : r.segments) x.insert(x.end(), seg.offsets.begin(), seg.offsets.end());
               const auto periods = spectral::candidate_periods(x, cfg.pipeline.resample.interval_s);
               return render([&](std::ostream& o) { spectral::write_periods_csv(o, periods); });
             }));
      if (cfg.plot_dir) {
        std::filesystem::create_directories(*cfg.plot_dir);
        emit(*cfg.plot_dir / "signal.svg", stage("plot", [&] { return signal_svg(r); }));
      }
    } else if (base_cmd->parsed()) {
      auto c = cfg;
      if (algo) c.algorithm = *algo;
      if (k) c.kmeans_k = *k;
      for (const auto& p : params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw StageFailure{"config", fmt::format("--param expects name=value, got '{}'", p), true};
        stage("config", [&] { config::apply(c, "baseline." + p.substr(0, eq), p.substr(eq + 1)); });
      }
      if (c.algorithm != "kmeans") stage("config", [&] { baselines::algorithm_from_string(c.algorithm); });
      const auto pre = preprocessed(load_trajectory(c), c);
      if (c.algorithm == "kmeans") {
        emit(c.output, kmeans_csv(pre, c));
      } else {
        const auto clusters = run_baseline(pre, c, c.algorithm);
        emit(c.output, render([&](std::ostream& o) {
               baselines::write_clusters_csv(o, baselines::algorithm_from_string(c.algorithm), clusters);
             }));
      }
    } else if (eval_cmd->parsed()) {
      const auto truth = stage("ingest", [&] { return ingest::read_ground_truth(*truth_path, cfg.level()); });
      model::MobilityModel m;
      if (model_path) {
        m = stage("ingest", [&] {
          std::ifstream in(*model_path);
          if (!in) throw InputError(fmt::format("cannot open '{}'", model_path->string()));
          std::stringstream buf;
          buf << in.rdbuf();
          return model::deserialize(buf.str());
        });
      } else {
        m = run_pipeline(load_trajectory(cfg), cfg).model;
      }
      const auto report = stage("eval", [&] { return eval::score(m.rois, truth, m.level); });
      emit(cfg.output, render([&](std::ostream& o) {
             if (csv) eval::write_score_csv(o, report);
             else eval::write_score_text(o, report);
           }));
    } else if (bench_cmd->parsed()) {
      const auto result = stage("bench", [&] {
        std::vector<std::size_t> ns;
        for (const double v : parse_list(sizes)) {
          if (!(v >= 1.0) || v != std::floor(v)) throw InputError(fmt::format("bad size {}", v));
          ns.push_back(static_cast<std::size_t>(v));
        }
        // Enough synthetic days for the largest size.
        const double days = std::max(7.0, std::ceil(static_cast<double>(ns.back()) * 5.0 / 86400.0) + 2.0);
        std::vector<eval::BenchPipeline> chosen;
        for (auto& p : eval::standard_pipelines(cfg.seed, days))
          if (only.empty() || std::find(only.begin(), only.end(), p.name) != only.end()) chosen.push_back(std::move(p));
        for (const auto& name : only)
          if (std::none_of(chosen.begin(), chosen.end(), [&](const auto& p) { return p.name == name; }))
            throw InputError(fmt::format("unknown pipeline '{}'", name));
        if (calibrate) chosen.push_back(eval::quadratic_workload());
        return eval::runtime_bench(ns, chosen, reps);
      });
      emit(cfg.output, render([&](std::ostream& o) { eval::write_bench_csv(o, result); }));
    } else if (sweep_cmd->parsed()) {
      const auto a = stage("config", [&] { return baselines::algorithm_from_string(algo.value_or(cfg.algorithm)); });
      const auto values = stage("config", [&] { return parse_list(sweep_values); });
      const auto pre = preprocessed(load_trajectory(cfg), cfg);
      const auto sweep = stage("sweep", [&] {
        return baselines::knee_sweep(pre, a, sweep_param, values, cfg.cluster_params(a));
      });
      emit(cfg.output, render([&](std::ostream& o) { baselines::write_sweep_csv(o, sweep_param, sweep); }));
      if (sweep_plot) {
        plot::Series s{std::string(baselines::to_string(a)), {}, {}};
        for (const auto& p : sweep) {
          s.x.push_back(p.value);
          s.y.push_back(static_cast<double>(p.count));
        }
        emit(sweep_plot, stage("plot", [&] { return plot::line_chart({"knee curve", sweep_param, "clusters"}, {s}); }));
      }
    } else if (synth_cmd->parsed()) {
      auto p = profile;
      if (profile_name == "commuter") {
        const auto days = p.days;
        p = eval::commuter_profile();
        p.days = days;
      } else if (profile_name != "default") {
        throw StageFailure{"config", fmt::format("unknown profile '{}'", profile_name), true};
      }
      p.level = cfg.level();
      const auto s = stage("synth", [&] { return eval::synth_generate(p, cfg.seed); });
      emit(cfg.output, render([&](std::ostream& o) { ingest::write_csv(o, s.trajectory); }));
      if (synth_truth) emit(synth_truth, render([&](std::ostream& o) { ingest::write_ground_truth(o, s.truth); }));
    } else if (plot_signal->parsed()) {
      const auto r = run_pipeline(load_trajectory(cfg), cfg);
      emit(cfg.output, stage("plot", [&] { return signal_svg(r); }));
    } else if (plot_knee->parsed()) {
      const auto series = stage("ingest", [&] { return read_sweeps(sweep_files); });
      emit(cfg.output, stage("plot", [&] { return plot::line_chart({"knee curves", "parameter value", "clusters"}, series); }));
    } else if (plot_compare->parsed()) {
      const auto traj = load_trajectory(cfg);
      const auto r = run_pipeline(traj, cfg);
      const auto pre = preprocessed(traj, cfg);
      std::vector<plot::BarGroup> groups{{"capstone", {static_cast<double>(r.model.rois.size())}}};
      for (const char* a : {"dj", "dt", "zoi"})
        groups.push_back({a, {static_cast<double>(run_baseline(pre, cfg, a).size())}});
      if (truth_path) {
        const auto truth = stage("ingest", [&] { return ingest::read_ground_truth(*truth_path, cfg.level()); });
        groups.push_back({"truth", {static_cast<double>(truth.size())}});
      }
      emit(cfg.output, stage("plot", [&] { return plot::bar_chart({"ROIs found", "", "count"}, {"ROIs"}, groups); }));
    }
    return 0;
  } catch (const StageFailure& f) {
    std::cerr << "error: " << f.stage << ": " << f.message << '\n';
    return f.input ? 2 : 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
