#include "capstone/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "capstone/baselines.hpp"
#include "capstone/errors.hpp"
#include "capstone/pipeline.hpp"
#include "capstone/preprocess.hpp"
#include "capstone/signal.hpp"

namespace capstone::eval {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;
constexpr double kDay = 86400.0;

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

}  // namespace

// ---- scoring ------------------------------------------------------------------

void ScoreReport::finish() {
  precision_defined = tp + fp > 0;
  recall_defined = tp + fn > 0;
  precision = ratio(tp, tp + fp);
  recall = ratio(tp, tp + fn);
  accuracy = ratio(tp, tp + fp + fn);
}

ScoreReport& ScoreReport::operator+=(const ScoreReport& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  finish();
  return *this;
}

ScoreReport score(const std::vector<model::Roi>& predicted, const std::vector<ingest::GroundTruthRoi>& truth,
                  int level) {
  for (const auto& t : truth)
    if (t.level != level)
      throw InputError(fmt::format("truth ROI '{}' is at level {}, predictions at level {}", t.id, t.level, level));

  struct Pair {
    double dice;
    std::size_t p, t;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p)
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double d = model::dice(predicted[p].cells, truth[t].cells);
      if (d > 0.0) pairs.push_back({d, p, t});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dice != b.dice) return a.dice > b.dice;
    if (a.p != b.p) return a.p < b.p;
    return a.t < b.t;
  });

  ScoreReport r;
  std::vector<bool> used_p(predicted.size(), false), used_t(truth.size(), false);
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_t[pr.t]) continue;
    used_p[pr.p] = used_t[pr.t] = true;
    r.matching.push_back({predicted[pr.p].id, pr.t, pr.dice});
  }
  r.tp = r.matching.size();
  r.fp = predicted.size() - r.tp;
  r.fn = truth.size() - r.tp;
  r.finish();
  return r;
}

void write_score_text(std::ostream& out, const ScoreReport& r) {
  out << fmt::format("tp {}  fp {}  fn {}\n", r.tp, r.fp, r.fn);
  out << fmt::format("precision {:.4f}{}\n", r.precision, r.precision_defined ? "" : " (undefined: no predictions)");
  out << fmt::format("recall    {:.4f}{}\n", r.recall, r.recall_defined ? "" : " (undefined: no truth)");
  out << fmt::format("accuracy  {:.4f}\n", r.accuracy);
}

void write_score_csv(std::ostream& out, const ScoreReport& r) {
  out << "tp,fp,fn,precision,recall,accuracy\n";
  out << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f}\n", r.tp, r.fp, r.fn, r.precision, r.recall, r.accuracy);
}

// ---- visit consistency ----------------------------------------------------------

Consistency visit_consistency(const model::MobilityModel& model, const std::vector<peaks::Visit>& visits) {
  Consistency c;
  c.roi_count = model.rois.size();
  if (visits.empty()) return c;
  const auto day_of = [](Timestamp t) { return static_cast<long long>(std::floor(t / kDay)); };
  const long long first = day_of(visits.front().entry_time);
  long long last = first;
  for (const auto& v : visits) last = std::max(last, day_of(v.entry_time));
  c.days = static_cast<std::size_t>(last - first + 1);
  c.daily_visits.assign(c.days, 0);

  for (std::size_t k = 0; k < visits.size(); ++k) {
    const auto& v = visits[k];
    ++c.daily_visits[static_cast<std::size_t>(day_of(v.entry_time) - first)];
    if (k > 0) c.travel_s += std::max(0.0, v.entry_time - visits[k - 1].exit_time);
    if (v.basecamp) continue;
    const double stay = v.exit_time - v.entry_time;
    c.stay_s += stay;
    c.max_stay_s = std::max(c.max_stay_s, stay);
    c.short_10 += stay < 600.0;
    c.short_15 += stay < 900.0;
    c.short_30 += stay < 1800.0;
  }
  return c;
}

ConsistencyTable tabulate(const std::vector<Consistency>& users) {
  ConsistencyTable t;
  t.users = users.size();
  if (users.empty()) return t;
  const double unit = 100.0 / static_cast<double>(users.size());
  for (const auto& u : users) {
    const auto n = u.roi_count;
    t.roi_count[n >= 2 && n <= 5 ? 0 : n >= 6 && n <= 9 ? 1 : n >= 10 && n <= 12 ? 2 : 3] += unit;
    const double h = u.max_stay_s / 3600.0;
    t.max_stay[h >= 5.0 && h < 9.0 ? 0 : h >= 9.0 && h < 11.0 ? 1 : h >= 11.0 && h <= 26.0 ? 2 : 3] += unit;
    t.short_visits[u.short_10 > 0 ? 0 : u.short_15 > 0 ? 1 : u.short_30 > 0 ? 2 : 3] += unit;
    const double f = u.stay_fraction();
    const std::array<double, 3> targets{0.6, 0.8, 0.4};
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (std::fabs(f - targets[k]) < std::fabs(f - targets[best])) best = k;
    t.stay_travel[best] += unit;
  }
  return t;
}

void write_consistency_text(std::ostream& out, const ConsistencyTable& t) {
  out << fmt::format("users {}\n", t.users);
  out << fmt::format("num ROIs        2-5 {:5.1f}%  6-9 {:5.1f}%  10-12 {:5.1f}%  other {:5.1f}%\n", t.roi_count[0],
                     t.roi_count[1], t.roi_count[2], t.roi_count[3]);
  out << fmt::format("max stay        5-8h {:5.1f}%  9-10h {:5.1f}%  11-26h {:5.1f}%  other {:5.1f}%\n", t.max_stay[0],
                     t.max_stay[1], t.max_stay[2], t.max_stay[3]);
  out << fmt::format("short visits    <10m {:5.1f}%  <15m {:5.1f}%  <30m {:5.1f}%  none {:5.1f}%\n",
                     t.short_visits[0], t.short_visits[1], t.short_visits[2], t.short_visits[3]);
  out << fmt::format("stay:travel     3:2 {:5.1f}%  4:1 {:5.1f}%  2:3 {:5.1f}%\n", t.stay_travel[0], t.stay_travel[1],
                     t.stay_travel[2]);
}

// ---- synthetic generator ----------------------------------------------------------

void SynthProfile::validate() const {
  if (!home.valid()) throw InputError("synth home is not a valid position");
  if (!(days > 0.0)) throw InputError("synth days must be positive");
  if (!(interval_s > 0.0)) throw InputError("synth interval must be positive");
  if (!(noise_m >= 0.0)) throw InputError("synth noise must be non-negative");
  if (!(jitter_s >= 0.0) || jitter_s >= interval_s / 2.0) throw InputError("synth jitter must be below half the interval");
  if (!(min_separation_m > 0.0) || max_distance_m < min_separation_m)
    throw InputError("synth separation must be positive and below the maximum distance");
  if (!(min_speed_mps > 0.0) || max_speed_mps < min_speed_mps) throw InputError("synth speeds are inconsistent");
  if (!(walk_speed_mps > 0.0)) throw InputError("synth walking speed must be positive");
  if (!(min_dwell_s > 0.0) || max_dwell_s < min_dwell_s) throw InputError("synth dwell range is inconsistent");
  if (max_dwell_s > 10.0 * 3600.0) throw InputError("synth dwell cannot exceed 10 h: the day would not fit");
  if (chain_probability < 0.0 || chain_probability > 1.0) throw InputError("synth chain probability outside [0, 1]");
  if (roi_count == 0) throw InputError("synth needs at least one ROI besides home");
  if (nested_count > roi_count) throw InputError("synth cannot nest more sub-ROIs than there are ROIs");
  for (const double w : branch_weights)
    if (!(w >= 0.0)) throw InputError("synth branch weights must be non-negative");
  if (!branch_weights.empty() &&
      std::all_of(branch_weights.begin(), branch_weights.end(), [](double w) { return w == 0.0; }))
    throw InputError("synth branch weights are all zero");
  if (!(stop_dwell_s >= 0.0)) throw InputError("synth stop dwell must be non-negative");
  geo::CellLevel{level};
}

std::set<geo::CellId> planted_cells(const geo::GeoPoint& centre, int level) {
  const auto c = geo::cell_id(centre, geo::CellLevel{level});
  std::set<geo::CellId> out{c};
  for (const auto nb : geo::neighbors(c)) out.insert(nb);
  return out;
}

namespace {

struct Xy {
  double e = 0.0, n = 0.0;
};

double distance(const Xy& a, const Xy& b) { return std::hypot(a.e - b.e, a.n - b.n); }

// Piecewise-linear motion in a local east/north frame around home.
class Timeline {
 public:
  Timeline(const SynthProfile& p, std::mt19937_64& rng) : p_(p), rng_(rng), t_(p.start) {}

  Timestamp now() const { return t_; }
  const Xy& here() const { return pos_; }

  void stay_until(Timestamp t) {
    if (t > t_) legs_.push_back({t_, t, pos_, pos_});
    t_ = std::max(t_, t);
  }
  void move_to(const Xy& to, double speed) {
    const double dur = distance(pos_, to) / speed;
    legs_.push_back({t_, t_ + dur, pos_, to});
    t_ += dur;
    pos_ = to;
  }

  Trajectory sample(Timestamp end) const {
    const geo::GeoPoint home = p_.home;
    const double ky = geo::kEarthRadiusM * kDeg;
    const double kx = ky * std::cos(home.lat * kDeg);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> jitter(-p_.jitter_s, p_.jitter_s);
    Trajectory out;
    std::size_t leg = 0;
    for (std::size_t k = 0;; ++k) {
      double t = p_.start + static_cast<double>(k) * p_.interval_s;
      if (t > end) break;
      if (p_.jitter_s > 0.0 && k > 0) t += jitter(rng_);
      while (leg + 1 < legs_.size() && legs_[leg].t1 < t) ++leg;
      Xy at = pos_;
      if (!legs_.empty()) {
        const auto& l = legs_[leg];
        const double f = l.t1 > l.t0 ? std::clamp((t - l.t0) / (l.t1 - l.t0), 0.0, 1.0) : 1.0;
        at = {l.a.e + f * (l.b.e - l.a.e), l.a.n + f * (l.b.n - l.a.n)};
      }
      at.e += p_.noise_m * noise(rng_);
      at.n += p_.noise_m * noise(rng_);
      out.points.push_back({geo::make_point(home.lat + at.n / ky, home.lon + at.e / kx), t, std::nullopt});
    }
    return out;
  }

 private:
  struct Leg {
    Timestamp t0, t1;
    Xy a, b;
  };
  const SynthProfile& p_;
  std::mt19937_64& rng_;
  Timestamp t_;
  Xy pos_{};
  std::vector<Leg> legs_;
};

geo::GeoPoint to_geo(const geo::GeoPoint& home, const Xy& xy) {
  const double ky = geo::kEarthRadiusM * kDeg;
  const double kx = ky * std::cos(home.lat * kDeg);
  return geo::make_point(home.lat + xy.n / ky, home.lon + xy.e / kx);
}

std::vector<ingest::GroundTruthRoi> build_truth(const SynthProfile& p, const std::vector<PlantedRoi>& rois,
                                                const std::vector<PlantedVisit>& visits) {
  std::vector<ingest::GroundTruthRoi> truth;
  std::map<std::size_t, std::size_t> slot;  // top-level ROI -> truth index
  for (const auto& v : visits) {
    const std::size_t top = rois[v.roi].parent.value_or(v.roi);
    if (!slot.count(top)) {
      slot[top] = truth.size();
      ingest::GroundTruthRoi g;
      g.id = rois[top].id;
      g.level = p.level;
      g.cells = planted_cells(rois[top].centre, p.level);
      for (std::size_t s = 0; s < rois.size(); ++s)
        if (rois[s].parent == top) {
          const auto sub = planted_cells(rois[s].centre, p.level);
          g.cells.insert(sub.begin(), sub.end());
        }
      g.area_m2 = geo::average_area_m2(p.level) * static_cast<double>(g.cells.size());
      truth.push_back(std::move(g));
    }
    if (rois[v.roi].parent) continue;  // inside the parent's window
    truth[slot[top]].windows.push_back({v.entry, v.exit});
  }
  return truth;
}

}  // namespace

SynthOutput synth_generate(const SynthProfile& p, std::uint64_t seed) {
  p.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  // ROI and stop placement.
  SynthOutput out;
  std::vector<Xy> where{{0.0, 0.0}};
  out.rois.push_back({"home", p.home, std::nullopt});
  const auto far_enough = [&](const Xy& c, double sep, std::optional<std::size_t> except) {
    for (std::size_t k = 0; k < where.size(); ++k)
      if ((!except || k != *except) && distance(where[k], c) < sep) return false;
    return true;
  };
  for (std::size_t r = 0; r < p.roi_count; ++r) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double d = uniform(p.min_separation_m, p.max_distance_m);
      const double a = uniform(0.0, 2.0 * kPi);
      const Xy c{d * std::cos(a), d * std::sin(a)};
      if (!far_enough(c, p.min_separation_m, std::nullopt)) continue;
      where.push_back(c);
      out.rois.push_back({fmt::format("roi{}", r + 1), to_geo(p.home, c), std::nullopt});
      placed = true;
    }
    if (!placed) throw InputError("synth cannot place the ROIs with the requested separation");
  }
  // Sub-ROIs sit 120-200 m from their parent, away from everything else.
  for (std::size_t s = 0; s < p.nested_count; ++s) {
    const std::size_t parent = 1 + s;
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double d = uniform(120.0, 200.0);
      const double a = uniform(0.0, 2.0 * kPi);
      const Xy c{where[parent].e + d * std::cos(a), where[parent].n + d * std::sin(a)};
      bool ok = true;
      for (std::size_t k = 0; k < where.size(); ++k)
        if (k != parent && distance(where[k], c) < p.min_separation_m / 2.0) ok = false;
      if (!ok) continue;
      where.push_back(c);
      out.rois.push_back({fmt::format("roi{}.sub", parent), to_geo(p.home, c), parent});
      placed = true;
    }
    if (!placed) throw InputError("synth cannot place a sub-ROI");
  }
  std::map<std::size_t, std::size_t> sub_of;
  for (std::size_t k = 0; k < out.rois.size(); ++k)
    if (out.rois[k].parent) sub_of[*out.rois[k].parent] = k;

  // Stops: each lies beside the straight route to one ROI.
  std::map<std::size_t, Xy> stop_on_route;
  for (std::size_t s = 0; s < p.zero_dwell_stops; ++s) {
    const std::size_t roi = 1 + s % p.roi_count;
    const Xy& dst = where[roi];
    const double f = uniform(0.3, 0.7);
    const double len = distance({}, dst);
    const double side = uniform(-0.15, 0.15) * len;
    stop_on_route[roi] = {f * dst.e - side * dst.n / len, f * dst.n + side * dst.e / len};
  }

  Timeline tl(p, rng);
  const Timestamp end = p.start + p.days * kDay;
  std::vector<bool> visited(out.rois.size(), false);
  std::discrete_distribution<std::size_t> branch;
  if (!p.branch_weights.empty()) {
    std::vector<double> w(p.roi_count, 0.0);
    for (std::size_t k = 0; k < std::min(w.size(), p.branch_weights.size()); ++k) w[k] = p.branch_weights[k];
    branch = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }
  const auto pick = [&](std::optional<std::size_t> not_this) {
    if (!p.branch_weights.empty() && !not_this) return 1 + branch(rng);
    for (std::size_t r = 1; r <= p.roi_count; ++r)
      if (!visited[r] && r != not_this) return r;
    while (true) {
      const std::size_t r = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(p.roi_count)) % p.roi_count;
      if (r != not_this || p.roi_count == 1) return r;
    }
  };
  const auto speed = [&] { return uniform(p.min_speed_mps, p.max_speed_mps); };
  const auto record = [&](std::size_t roi, Timestamp a, Timestamp b) {
    out.visits.push_back({roi, a, b});
    visited[roi] = true;
  };
  Timestamp home_since = p.start;
  const auto dwell_at = [&](std::size_t roi, double dur) {
    const Timestamp entry = tl.now();
    if (sub_of.count(roi) && dur >= 3600.0) {
      const std::size_t sub = sub_of[roi];
      tl.stay_until(tl.now() + 0.4 * dur);
      tl.move_to(where[sub], p.walk_speed_mps);
      const Timestamp sub_entry = tl.now();
      tl.stay_until(tl.now() + 0.3 * dur);
      const Timestamp sub_exit = tl.now();
      tl.move_to(where[roi], p.walk_speed_mps);
      tl.stay_until(entry + dur);
      record(roi, entry, tl.now());
      record(sub, sub_entry, sub_exit);
      return;
    }
    tl.stay_until(entry + dur);
    record(roi, entry, tl.now());
  };

  for (std::size_t day = 0; p.start + static_cast<double>(day) * kDay < end; ++day) {
    const Timestamp day0 = p.start + static_cast<double>(day) * kDay;
    Timestamp leave = day0 + uniform(7.0, 9.0) * 3600.0;
    while (true) {
      const std::size_t a = pick(std::nullopt);
      const bool chain = p.roi_count > 1 && unit(rng) < p.chain_probability;
      const std::size_t b = chain ? pick(a) : a;
      const double da = uniform(p.min_dwell_s, p.max_dwell_s);
      const double db = chain ? uniform(p.min_dwell_s, p.max_dwell_s) : 0.0;
      const double travel = (distance({}, where[a]) + distance(where[a], where[b]) + distance(where[b], {})) /
                                p.min_speed_mps + 2.0 * p.stop_dwell_s;
      // The outing and an hour at home afterwards must fit before 23:00.
      if (leave + da + db + travel + 3600.0 > day0 + 23.0 * 3600.0 || leave + da + db + travel > end) break;
      tl.stay_until(leave);
      record(0, home_since, tl.now());
      if (stop_on_route.count(a)) {
        tl.move_to(stop_on_route[a], speed());
        tl.stay_until(tl.now() + p.stop_dwell_s);
      }
      tl.move_to(where[a], speed());
      out.destinations.push_back(a);
      dwell_at(a, da);
      if (chain) {
        tl.move_to(where[b], speed());
        dwell_at(b, db);
      }
      tl.move_to({0.0, 0.0}, speed());
      home_since = tl.now();
      leave = tl.now() + uniform(3600.0, 3.0 * 3600.0);
    }
  }
  tl.stay_until(end);
  record(0, home_since, end);
  std::stable_sort(out.visits.begin(), out.visits.end(),
                   [](const PlantedVisit& x, const PlantedVisit& y) { return x.entry < y.entry; });

  out.trajectory = tl.sample(end);
  out.truth = build_truth(p, out.rois, out.visits);
  return out;
}

SynthProfile commuter_profile(double work_s, double commute_s) {
  SynthProfile p;
  p.roi_count = 1;
  p.chain_probability = 0.0;
  p.min_dwell_s = p.max_dwell_s = work_s;
  const double v = 0.5 * (p.min_speed_mps + p.max_speed_mps);
  p.min_speed_mps = p.max_speed_mps = v;
  p.min_separation_m = p.max_distance_m = v * commute_s;
  return p;
}

SynthOutput synth_commuter(double work_s, double commute_s, std::uint64_t seed) {
  return synth_generate(commuter_profile(work_s, commute_s), seed);
}

// ---- runtime ----------------------------------------------------------------------

namespace {

volatile double bench_sink = 0.0;

double clock_resolution_ms() {
  using Clock = std::chrono::steady_clock;
  double best = 1e300;
  for (int k = 0; k < 1000; ++k) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(b - a).count());
  }
  return best;
}

}  // namespace

std::optional<double> loglog_slope(const std::vector<std::pair<double, double>>& n_time) {
  if (n_time.size() < 2) return std::nullopt;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [n, t] : n_time) {
    const double x = std::log(n), y = std::log(t);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(n_time.size());
  const double den = m * sxx - sx * sx;
  if (den <= 0.0) return std::nullopt;
  return (m * sxy - sx * sy) / den;
}

BenchResult runtime_bench(const std::vector<std::size_t>& sizes, const std::vector<BenchPipeline>& pipelines,
                          int repetitions) {
  if (repetitions < 10) throw InputError("runtime_bench needs at least 10 repetitions");
  if (!std::is_sorted(sizes.begin(), sizes.end()) || std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end())
    throw InputError("benchmark sizes must be strictly ascending");
  using Clock = std::chrono::steady_clock;
  const double resolution = clock_resolution_ms();
  BenchResult out;
  for (const auto& pl : pipelines) {
    std::vector<std::function<void()>> calls;
    for (const auto n : sizes) {
      calls.push_back(pl.prepare(n));
      calls.back()();  // warm-up, discarded
    }
    // Repetitions cycle through the sizes so slow drift in machine speed
    // lands on every size alike instead of bending the slope.
    std::vector<std::vector<double>> ms(sizes.size());
    for (int r = 0; r < repetitions; ++r)
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        const auto a = Clock::now();
        calls[k]();
        ms[k].push_back(std::chrono::duration<double, std::milli>(Clock::now() - a).count());
      }
    std::vector<std::pair<double, double>> points;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& t = ms[k];
      std::sort(t.begin(), t.end());
      const std::size_t h = t.size() / 2;
      const double median = t.size() % 2 ? t[h] : 0.5 * (t[h - 1] + t[h]);
      BenchRow row{pl.name, sizes[k], median, median <= resolution};
      if (!row.rejected) points.emplace_back(static_cast<double>(sizes[k]), median);
      out.rows.push_back(row);
    }
    out.slopes.emplace_back(pl.name, loglog_slope(points));
  }
  return out;
}

BenchPipeline quadratic_workload() {
  return {"quadratic", [](std::size_t n) {
            auto v = std::make_shared<std::vector<double>>(n);
            for (std::size_t i = 0; i < n; ++i) (*v)[i] = std::sin(static_cast<double>(i));
            return std::function<void()>([v] {
              // Tiled so each block of x stays in L1 for every row.
              constexpr std::size_t kTile = 1024;
              const double* x = v->data();
              const std::size_t m = v->size();
              double total = 0.0;
              for (std::size_t jb = 0; jb < m; jb += kTile) {
                const std::size_t je = std::min(m, jb + kTile);
                for (std::size_t i = 0; i < m; ++i) {
                  double s = 0.0;
                  const double xi = x[i];
#pragma omp simd reduction(+ : s)
                  for (std::size_t j = jb; j < je; ++j) s += std::fabs(xi - x[j]);
                  total += s;
                }
              }
              bench_sink = total;
            });
          }};
}

std::vector<BenchPipeline> standard_pipelines(std::uint64_t seed, double days) {
  SynthProfile profile;
  profile.days = days;
  const pipeline::Options defaults;
  auto trace = std::make_shared<Trajectory>();
  const auto ensure = [=] {
    if (trace->empty()) {
      const auto pieces =
          preprocess::resample(synth_generate(profile, seed).trajectory, defaults.resample, defaults.kernel_width);
      *trace = *std::max_element(pieces.begin(), pieces.end(),
                                 [](const Trajectory& a, const Trajectory& b) { return a.size() < b.size(); });
    }
  };
  const auto prefix = [=](std::size_t n) {
    ensure();
    if (n > trace->size()) throw InputError(fmt::format("bench size {} exceeds the {} samples available", n, trace->size()));
    Trajectory t;
    t.points.assign(trace->points.begin(), trace->points.begin() + static_cast<std::ptrdiff_t>(n));
    return t;
  };
  const auto detect = [=](peaks::OperatorMode mode) {
    return [=](std::size_t n) {
      auto opts = std::make_shared<pipeline::Options>();
      opts->mode = mode;
      const auto sig = signal::to_signal(prefix(n), geo::CellLevel{opts->level}, opts->resample.interval_s);
      auto rebased = std::make_shared<signal::SpaceTimeSignal>(signal::rebase(sig, signal::basecamp(sig)));
      return std::function<void()>([=] { bench_sink = static_cast<double>(pipeline::detect_visits(*rebased, *opts).size()); });
    };
  };
  const auto cluster = [=](baselines::Algorithm a) {
    return [=](std::size_t n) {
      auto t = std::make_shared<Trajectory>(prefix(n));
      const auto params = baselines::ClusterParams::defaults(a);
      return std::function<void()>([=] { bench_sink = static_cast<double>(baselines::run(a, *t, params).size()); });
    };
  };
  return {{"capstone", detect(peaks::OperatorMode::Dense)},
          {"capstone-banded", detect(peaks::OperatorMode::Banded)},
          {"dj", cluster(baselines::Algorithm::DJ)},
          {"dt", cluster(baselines::Algorithm::DT)},
          {"zoi", cluster(baselines::Algorithm::ZOI)}};
}

void write_bench_csv(std::ostream& out, const BenchResult& r) {
  out << "pipeline,n,median_ms,slope\n";
  std::map<std::string, std::optional<double>> slope(r.slopes.begin(), r.slopes.end());
  for (const auto& row : r.rows) {
    const auto s = slope[row.pipeline];
    out << fmt::format("{},{},{},{}\n", row.pipeline, row.n, row.rejected ? "rejected" : fmt::format("{:.6f}", row.median_ms),
                       s ? fmt::format("{:.4f}", *s) : "n/a");
  }
}

}  // namespace capstone::eval
