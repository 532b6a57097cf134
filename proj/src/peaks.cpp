#include "capstone/peaks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "capstone/errors.hpp"

namespace capstone::peaks {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double phi(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double big_phi(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

// Ramp convolved with a unit-area Gaussian of width s.
double ramp_gauss(double u, double s) { return u * big_phi(u / s) + s * phi(u / s); }

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

std::vector<double> mean_filter(std::span<const double> x, int width) {
  const int n = static_cast<int>(x.size());
  const int h = width / 2;
  std::vector<double> out(x.size());
  if (n == 0) return out;
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -h; k <= h; ++k) acc += x[static_cast<std::size_t>(std::clamp(i + k, 0, n - 1))];
    out[static_cast<std::size_t>(i)] = acc / width;
  }
  return out;
}

// y_i = sum_j kernel[j - i + centre] * xp[j] over the whole padded input.
// Written as a full-length dot product on purpose; see OperatorMode.
std::vector<double> dense_toeplitz(std::span<const double> xp, std::span<const double> taps, std::size_t n,
                                   std::size_t pad) {
  const std::size_t len = xp.size();
  // kernel[len - 1 + d] holds the tap for offset d = j - (i + pad).
  std::vector<double> kernel(2 * len - 1, 0.0);
  const int h = static_cast<int>(taps.size() / 2);
  for (int d = -h; d <= h; ++d)
    kernel[static_cast<std::size_t>(static_cast<long>(len) - 1 + d)] = taps[static_cast<std::size_t>(d + h)];
  std::vector<double> y(n);
  const double* xs = xp.data();
  // Rows are taken 32 at a time so x and the kernel are streamed once per
  // block; every row is still a full-length product. Accumulator q belongs
  // to row i + kRows - 1 - q, which makes the taps of one sample contiguous.
  constexpr std::size_t kRows = 32;
  std::size_t i = 0;
  for (; i + kRows <= n; i += kRows) {
    const double* base = kernel.data() + (len - 1) - (i + pad) - (kRows - 1);
    double acc[kRows] = {};
    for (std::size_t j = 0; j < len; ++j) {
      const double v = xs[j];
      const double* tap = base + j;
#pragma omp simd
      for (std::size_t q = 0; q < kRows; ++q) acc[q] += tap[q] * v;
    }
    for (std::size_t q = 0; q < kRows; ++q) y[i + kRows - 1 - q] = acc[q];
  }
  for (; i < n; ++i) {
    const double* row = kernel.data() + (len - 1) - (i + pad);
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = 0; j < len; ++j) acc += row[j] * xs[j];
    y[i] = acc;
  }
  return y;
}

template <typename T>
int sign_of(T v) {
  return (v > T(0)) - (v < T(0));
}

}  // namespace

std::string_view to_string(ShapeVariant v) {
  switch (v) {
    case ShapeVariant::RectGaussian: return "rect_gaussian";
    case ShapeVariant::RectLorentzian: return "rect_lorentzian";
    case ShapeVariant::TriGaussian: return "tri_gaussian";
  }
  return "unknown";
}

ShapeVariant shape_from_string(std::string_view name) {
  for (const auto v : kAllShapes)
    if (to_string(v) == name) return v;
  throw InputError(fmt::format("unknown peak shape '{}'", name));
}

std::string flags_to_string(unsigned flags) {
  std::string out;
  const auto add = [&](unsigned bit, const char* name) {
    if (!(flags & bit)) return;
    if (!out.empty()) out += '|';
    out += name;
  };
  add(kStartClamped, "start_clamped");
  add(kEndClamped, "end_clamped");
  add(kShapeAmbiguous, "shape_ambiguous");
  add(kFitDiverged, "fit_diverged");
  add(kNoDetection, "no_detection");
  return out;
}

double shape_profile(const PeakShapeModel& shape, double x) {
  const double s = shape.spread;
  const double p = shape.plateau;
  const double ax = std::fabs(x);
  switch (shape.variant) {
    case ShapeVariant::RectGaussian: {
      if (p < 1e-6 * s) return std::exp(-0.5 * ax * ax / (s * s));
      const double a = 0.5 * p;
      const double f = std::erfc((ax - a) / (s * kSqrt2)) - std::erfc((ax + a) / (s * kSqrt2));
      return f / (2.0 * std::erf(a / (s * kSqrt2)));
    }
    case ShapeVariant::RectLorentzian: {
      if (p < 1e-6 * s) return 1.0 / (1.0 + (ax / s) * (ax / s));
      const double a = 0.5 * p;
      return (std::atan((ax + a) / s) - std::atan((ax - a) / s)) / (2.0 * std::atan(a / s));
    }
    case ShapeVariant::TriGaussian: {
      if (p < 1e-3 * s) return std::exp(-0.5 * ax * ax / (s * s));
      // Evaluate on the negative side where the ramp terms are small.
      const double u = -ax;
      const double f = ramp_gauss(u + p, s) - 2.0 * ramp_gauss(u, s) + ramp_gauss(u - p, s);
      const double f0 = ramp_gauss(p, s) - 2.0 * ramp_gauss(0.0, s) + ramp_gauss(-p, s);
      return f / f0;
    }
  }
  return 0.0;
}

// ---- fitting ----------------------------------------------------------------

namespace {

struct Params {
  double height, centre, plateau, spread;
};

double region_rss(std::span<const double> y, std::span<const double> xs, const Params& p, ShapeVariant v) {
  const PeakShapeModel shape{v, p.plateau, p.spread};
  double rss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - p.height * shape_profile(shape, xs[i] - p.centre);
    rss += r * r;
  }
  return rss;
}

struct LmOutcome {
  Params params;
  double rss;
  int iterations;
  bool converged;
};

LmOutcome levenberg_marquardt(std::span<const double> y, std::span<const double> xs, Params p, ShapeVariant v,
                              double centre_lo, double centre_hi, const FitOptions& opts) {
  const std::size_t m = y.size();
  double energy = 0.0;
  for (const double v2 : y) energy += v2 * v2;
  const auto clamp_params = [&](Params q) {
    q.centre = std::clamp(q.centre, centre_lo, centre_hi);
    q.plateau = std::max(0.0, q.plateau);
    q.spread = std::max(0.05, q.spread);
    return q;
  };
  const auto model = [&](const Params& q, std::size_t i) {
    return q.height * shape_profile({v, q.plateau, q.spread}, xs[i] - q.centre);
  };

  p = clamp_params(p);
  double rss = region_rss(y, xs, p, v);
  double lambda = 1e-3;
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), 4);
  Eigen::VectorXd res(static_cast<Eigen::Index>(m));
  int it = 0;
  bool converged = rss <= 1e-28 * std::max(energy, 1e-300);
  while (!converged && it < opts.max_iterations) {
    ++it;
    for (std::size_t i = 0; i < m; ++i) {
      res[static_cast<Eigen::Index>(i)] = y[i] - model(p, i);
      jac(static_cast<Eigen::Index>(i), 0) = shape_profile({v, p.plateau, p.spread}, xs[i] - p.centre);
    }
    double* fields[3] = {&p.centre, &p.plateau, &p.spread};
    for (int k = 0; k < 3; ++k) {
      double& ref = *fields[k];
      const double h = 1e-6 * std::max(1.0, std::fabs(ref));
      const double saved = ref;
      const bool one_sided = (k == 1 && saved < h) || (k == 2 && saved - h < 0.05);
      ref = saved + h;
      std::vector<double> up(m);
      for (std::size_t i = 0; i < m; ++i) up[i] = model(p, i);
      ref = one_sided ? saved : saved - h;
      for (std::size_t i = 0; i < m; ++i)
        jac(static_cast<Eigen::Index>(i), k + 1) = (up[i] - model(p, i)) / (one_sided ? h : 2.0 * h);
      ref = saved;
    }
    const Eigen::Matrix4d a = jac.transpose() * jac;
    const Eigen::Vector4d g = jac.transpose() * res;

    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix4d damped = a;
      for (int d = 0; d < 4; ++d) damped(d, d) += lambda * std::max(a(d, d), 1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(g);
      const Params trial = clamp_params({p.height + step[0], p.centre + step[1], p.plateau + step[2], p.spread + step[3]});
      const double trial_rss = region_rss(y, xs, trial, v);
      if (std::isfinite(trial_rss) && trial_rss < rss) {
        const double rel = (rss - trial_rss) / std::max(rss, 1e-300);
        p = trial;
        rss = trial_rss;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (rss <= 1e-28 * std::max(energy, 1e-300) || rel < opts.relative_tolerance) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    // No step reduces the residual any more: we sit in a minimum.
    if (!improved) converged = true;
  }
  return {p, rss, it, converged};
}

std::size_t argmax_abs(std::span<const double> y, std::size_t begin, std::size_t end) {
  std::size_t best = begin;
  for (std::size_t i = begin; i < end; ++i)
    if (std::fabs(y[i]) > std::fabs(y[best])) best = i;
  return best;
}

}  // namespace

RegionFit fit_region(std::span<const double> y, const Region& region, ShapeVariant variant, const FitOptions& opts) {
  if (region.end > y.size() || region.begin >= region.end) throw InputError("fit region out of range");
  RegionFit out;
  out.region = region;
  out.shape.variant = variant;
  const std::size_t ref = region.reference_apex.value_or(argmax_abs(y, region.begin, region.end));
  const auto seg = y.subspan(region.begin, region.end - region.begin);

  double scale = 0.0;
  for (const double v : seg) scale = std::max(scale, std::fabs(v));
  out.centre = static_cast<double>(ref);
  if (scale == 0.0) {
    out.converged = true;
    return out;
  }
  std::vector<double> norm(seg.begin(), seg.end());
  for (auto& v : norm) v /= scale;

  // Width at half height around the reference apex seeds the shape.
  const double h0 = norm[ref - region.begin];
  std::size_t lo = ref, hi = ref;
  while (lo > region.begin && std::fabs(norm[lo - 1 - region.begin]) >= 0.5 * std::fabs(h0)) --lo;
  while (hi + 1 < region.end && std::fabs(norm[hi + 1 - region.begin]) >= 0.5 * std::fabs(h0)) ++hi;
  const double w50 = static_cast<double>(hi - lo + 1);

  const double centre_lo = static_cast<double>(ref) - opts.max_apex_shift;
  const double centre_hi = static_cast<double>(ref) + opts.max_apex_shift;
  const double mid = std::clamp(0.5 * static_cast<double>(lo + hi), centre_lo, centre_hi);
  const double plateau_guess = variant == ShapeVariant::TriGaussian ? w50 : 0.6 * w50;
  const Params starts[] = {
      {h0, mid, plateau_guess, std::max(0.5, 0.25 * w50)},
      {h0, mid, 0.0, std::max(0.5, 0.42 * w50)},
  };

  // Long regions are fitted on block means; the shapes are smooth on the
  // scale of a block, and the cost stays bounded.
  std::vector<double> xs, ys;
  const std::size_t len = norm.size();
  const std::size_t block = std::max<std::size_t>(1, (len + opts.max_samples - 1) / std::max<std::size_t>(opts.max_samples, 1));
  for (std::size_t b = 0; b < len; b += block) {
    const std::size_t e = std::min(len, b + block);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      sx += static_cast<double>(region.begin + i);
      sy += norm[i];
    }
    xs.push_back(sx / static_cast<double>(e - b));
    ys.push_back(sy / static_cast<double>(e - b));
  }

  LmOutcome best{};
  bool have = false;
  for (const auto& s : starts) {
    const auto r = levenberg_marquardt(ys, xs, s, variant, centre_lo, centre_hi, opts);
    if (!have || r.rss < best.rss) {
      best = r;
      have = true;
    }
  }
  out.shape = {variant, best.params.plateau, best.params.spread};
  out.centre = best.params.centre;
  out.height = best.params.height * scale;
  double rss = best.rss;
  if (block > 1) {
    std::vector<double> full(len);
    for (std::size_t i = 0; i < len; ++i) full[i] = static_cast<double>(region.begin + i);
    rss = region_rss(norm, full, best.params, variant);
  }
  out.rms = std::sqrt(rss / static_cast<double>(seg.size())) * scale;
  out.iterations = best.iterations;
  out.converged = best.converged;
  return out;
}

std::vector<Region> candidate_regions(std::span<const double> y, int smoothing_width) {
  const std::size_t n = y.size();
  std::vector<Region> regions;
  if (n < 3) return regions;
  const double background = median_of({y.begin(), y.end()});
  std::vector<double> diffs(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) diffs[i] = y[i + 1] - y[i];
  const double dmed = median_of(diffs);
  for (auto& d : diffs) d = std::fabs(d - dmed);
  const double sigma = 1.4826 * median_of(diffs) / kSqrt2;
  const auto s = mean_filter(y, smoothing_width);
  double peak = 0.0;
  for (const double v : s) peak = std::max(peak, std::fabs(v - background));
  if (peak == 0.0) return regions;
  const double sigma_s = sigma / std::sqrt(static_cast<double>(smoothing_width));
  const double core = std::max(4.0 * sigma_s, 1e-9 * peak);
  const double tail = std::max(sigma_s, 1e-9 * peak);

  std::size_t i = 0;
  while (i < n) {
    if (std::fabs(s[i] - background) <= core) {
      ++i;
      continue;
    }
    std::size_t b = i, e = i;
    while (e < n && std::fabs(s[e] - background) > core) ++e;
    const int sign = sign_of(s[i] - background);
    while (b > 0 && sign_of(s[b - 1] - background) == sign && std::fabs(s[b - 1] - background) > tail) --b;
    while (e < n && sign_of(s[e] - background) == sign && std::fabs(s[e] - background) > tail) ++e;
    // The smoothed extremum anchors the fit; the raw one wanders on flat tops.
    std::size_t ref = b;
    for (std::size_t j = b; j < e; ++j)
      if (std::fabs(s[j] - background) > std::fabs(s[ref] - background)) ref = j;
    if (!regions.empty() && b <= regions.back().end) {
      auto& last = regions.back();
      last.end = std::max(last.end, e);
      if (std::fabs(s[ref] - background) > std::fabs(s[*last.reference_apex] - background)) last.reference_apex = ref;
    } else {
      regions.push_back({b, e, ref});
    }
    i = e;
  }
  return regions;
}

FitResult fit_curve(std::span<const double> y, std::span<const Region> regions, std::span<const ShapeVariant> models,
                    const FitOptions& opts) {
  FitResult out;
  std::vector<bool> inside(y.size(), false);
  for (const auto& r : regions)
    for (std::size_t i = r.begin; i < std::min(r.end, y.size()); ++i) inside[i] = true;
  std::vector<double> outside;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!inside[i]) outside.push_back(y[i]);
  const double background = outside.empty() ? median_of({y.begin(), y.end()}) : median_of(std::move(outside));

  out.fitted.assign(y.size(), background);
  std::vector<double> shifted(y.begin(), y.end());
  for (auto& v : shifted) v -= background;

  for (const auto& r : regions) {
    if (r.end - r.begin < 4) {
      for (std::size_t i = r.begin; i < r.end; ++i) out.fitted[i] = y[i];
      continue;
    }
    std::optional<RegionFit> best;
    for (const auto v : models) {
      auto f = fit_region(shifted, r, v, opts);
      if (!best || (f.converged && (!best->converged || f.rms < best->rms))) best = f;
    }
    if (!best->converged) {
      ++out.diverged;
      for (std::size_t i = r.begin; i < r.end; ++i) out.fitted[i] = y[i];
    } else {
      for (std::size_t i = r.begin; i < r.end; ++i)
        out.fitted[i] = background + best->height * shape_profile(best->shape, static_cast<double>(i) - best->centre);
    }
    out.regions.push_back(*best);
  }
  return out;
}

FitResult fit_curve(std::span<const double> y, std::span<const ShapeVariant> models, const FitOptions& opts) {
  const auto regions = candidate_regions(y);
  return fit_curve(y, regions, models, opts);
}

// ---- baseline -----------------------------------------------------------------

double neighbour_rank_gap(geo::CellId cell) {
  const auto r = static_cast<double>(geo::rank(cell));
  std::vector<double> gaps;
  for (const auto nb : geo::neighbors(cell)) gaps.push_back(std::fabs(static_cast<double>(geo::rank(nb)) - r));
  return median_of(std::move(gaps));
}

BaselineResult baseline(std::span<const double> x, const BaselineOptions& opts) {
  if (opts.window == 0) throw InputError("baseline window must be positive");
  const std::size_t n = x.size();
  const std::size_t w = opts.window;
  BaselineResult out;
  out.corrected.assign(n, 0.0);
  out.mean.assign(n, 0.0);
  out.sigma.assign(n, 0.0);
  out.is_baseline.assign(n, false);
  std::vector<double> mask(n, 0.0);

  // Sums are kept relative to a shift so the variance does not cancel.
  double shift = 0.0;
  double cnt = 0.0, s1 = 0.0, s2 = 0.0;
  double mu = 0.0, sd = 0.0;
  std::vector<double> indicator;
  if (opts.mode == OperatorMode::Dense) {
    // indicator[n + d] == 1 for d in [-w, -1]: row i of the causal window.
    indicator.assign(2 * n + 1, 0.0);
    for (std::size_t d = 1; d <= std::min(w, n); ++d) indicator[n - d] = 1.0;
  }

  // Dense rows are evaluated eight at a time: one sweep over the samples
  // already classified serves the whole block, the few samples inside the
  // block are added row by row once their classification is known.
  constexpr std::size_t kRows = 8;
  std::array<double, kRows> bc{}, b1{}, b2{};
  std::size_t block = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (opts.mode == OperatorMode::Dense) {
      if (i % kRows == 0) {
        block = i;
        shift = mu;
        bc.fill(0.0);
        b1.fill(0.0);
        b2.fill(0.0);
        const double* row = indicator.data() + n - i;
        const double* mk = mask.data();
        const double* xs = x.data();
        const std::size_t rows = std::min(kRows, n - i);
        double c[kRows] = {}, a1[kRows] = {}, a2[kRows] = {};
        if (rows == kRows) {
          // Accumulator q belongs to row kRows - 1 - q, so the eight
          // indicator taps for one sample are a contiguous load.
          double qc[kRows] = {}, q1[kRows] = {}, q2[kRows] = {};
          const double* base = row - (kRows - 1);
          for (std::size_t j = 0; j < i; ++j) {
            const double m = mk[j];
            const double d = xs[j] - shift;
            const double md = m * d;
            const double mdd = md * d;
            const double* ind = base + j;
#pragma omp simd
            for (std::size_t q = 0; q < kRows; ++q) {
              qc[q] += ind[q] * m;
              q1[q] += ind[q] * md;
              q2[q] += ind[q] * mdd;
            }
          }
          for (std::size_t q = 0; q < kRows; ++q) {
            c[kRows - 1 - q] = qc[q];
            a1[kRows - 1 - q] = q1[q];
            a2[kRows - 1 - q] = q2[q];
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < i; ++j) {
              const double wgt = row[j - r] * mk[j];
              const double d = xs[j] - shift;
              c[r] += wgt;
              a1[r] += wgt * d;
              a2[r] += wgt * d * d;
            }
        }
        for (std::size_t r = 0; r < rows; ++r) {
          bc[r] = c[r];
          b1[r] = a1[r];
          b2[r] = a2[r];
        }
      }
      const std::size_t r = i - block;
      cnt = bc[r];
      s1 = b1[r];
      s2 = b2[r];
      const double* row = indicator.data() + n - i;
      for (std::size_t j = block; j < i; ++j) {
        const double wgt = row[j] * mask[j];
        const double d = x[j] - shift;
        cnt += wgt;
        s1 += wgt * d;
        s2 += wgt * d * d;
      }
    } else if (i % w == 0) {
      // Periodic exact recomputation keeps the running sums honest.
      shift = mu;
      cnt = s1 = s2 = 0.0;
      for (std::size_t j = i > w ? i - w : 0; j < i; ++j)
        if (mask[j] != 0.0) {
          const double d = x[j] - shift;
          cnt += 1.0;
          s1 += d;
          s2 += d * d;
        }
    }
    if (cnt > 0.0) {
      const double m1 = s1 / cnt;
      mu = shift + m1;
      sd = std::sqrt(std::max(0.0, s2 / cnt - m1 * m1));
    }
    const double band = opts.k * std::max(sd, opts.sigma_floor);
    const bool base = i == 0 || std::fabs(x[i] - mu) <= band;
    out.mean[i] = mu;
    out.sigma[i] = sd;
    out.is_baseline[i] = base;
    out.corrected[i] = base ? 0.0 : x[i] - mu;
    // The first window warms the statistics up and is taken in whole.
    mask[i] = base || i < w ? 1.0 : 0.0;

    if (opts.mode == OperatorMode::Banded) {
      if (mask[i] != 0.0) {
        const double d = x[i] - shift;
        cnt += 1.0;
        s1 += d;
        s2 += d * d;
      }
      if (i >= w && mask[i - w] != 0.0) {
        const double d = x[i - w] - shift;
        cnt -= 1.0;
        s1 -= d;
        s2 -= d * d;
      }
    }
  }
  return out;
}

// ---- derivatives and detection ------------------------------------------------

std::vector<double> smooth_derivative(std::span<const double> x, int width, OperatorMode mode) {
  if (width < 1 || width % 2 == 0) throw InputError(fmt::format("smoothing width must be odd, got {}", width));
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n == 1) return {0.0};
  const int h = width / 2;

  // Linear extrapolation by one sample turns the central difference into a
  // one-sided difference at both ends.
  std::vector<double> xp(n + 2);
  xp[0] = 2.0 * x[0] - x[1];
  std::copy(x.begin(), x.end(), xp.begin() + 1);
  xp[n + 1] = 2.0 * x[n - 1] - x[n - 2];

  std::vector<double> d(n);
  if (mode == OperatorMode::Dense) {
    const double taps[3] = {-0.5, 0.0, 0.5};
    d = dense_toeplitz(xp, taps, n, 1);
  } else {
    for (std::size_t i = 0; i < n; ++i) d[i] = 0.5 * (xp[i + 2] - xp[i]);
  }

  std::vector<double> dp(n + 2 * static_cast<std::size_t>(h));
  for (std::size_t i = 0; i < dp.size(); ++i)
    dp[i] = d[static_cast<std::size_t>(std::clamp(static_cast<long>(i) - h, 0L, static_cast<long>(n) - 1))];
  if (mode == OperatorMode::Dense) {
    std::vector<double> taps(static_cast<std::size_t>(width), 1.0 / width);
    return dense_toeplitz(dp, taps, n, static_cast<std::size_t>(h));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < width; ++k) acc += (1.0 / width) * dp[i + static_cast<std::size_t>(k)];
    out[i] = acc;
  }
  return out;
}

std::vector<FittedPeak> detect_peaks(std::span<const double> corrected, std::span<const double> d1,
                                     std::span<const double> d2, const DetectOptions& opts) {
  const std::size_t n = corrected.size();
  if (d1.size() != n || d2.size() != n) throw InputError("detect_peaks inputs are not aligned");
  const std::size_t h = static_cast<std::size_t>(opts.width / 2);
  std::vector<FittedPeak> peaks;

  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < n; ++i) {
    if (d1[i] == 0.0) continue;
    if (last && sign_of(d1[i]) != sign_of(d1[*last])) {
      const std::size_t p = *last, q = i;
      const Polarity pol = d1[p] > 0.0 ? Polarity::Maximum : Polarity::Minimum;
      // Smoothing can move the crossing by up to half the filter width.
      const std::size_t lo = p > h ? p - h : 0;
      const std::size_t hi = std::min(n - 1, q + h);
      const auto better = [&](double a, double b) { return pol == Polarity::Maximum ? a > b : a < b; };

      double extreme = corrected[lo];
      for (std::size_t j = lo; j <= hi; ++j)
        if (better(corrected[j], extreme)) extreme = corrected[j];
      std::vector<std::size_t> ties;
      for (std::size_t j = lo; j <= hi; ++j)
        if (corrected[j] == extreme) ties.push_back(j);
      std::size_t apex;
      if (ties.back() - ties.front() + 1 == ties.size()) {
        apex = (ties.front() + ties.back()) / 2;
      } else {
        const double mid = 0.5 * static_cast<double>(p + q);
        apex = *std::min_element(ties.begin(), ties.end(), [&](std::size_t a, std::size_t b) {
          return std::fabs(static_cast<double>(a) - mid) < std::fabs(static_cast<double>(b) - mid);
        });
      }

      bool curved = false;
      for (std::size_t j = lo; j <= hi && !curved; ++j) {
        if (opts.literal_curvature) curved = d2[j] > 0.0;
        else curved = pol == Polarity::Maximum ? d2[j] < 0.0 : d2[j] > 0.0;
      }
      if (curved) {
        FittedPeak pk;
        pk.apex = apex;
        pk.start = apex;
        pk.end = apex;
        pk.detected_at = std::min(apex + 1, n - 1);
        pk.height = corrected[apex];
        pk.polarity = pol;
        peaks.push_back(pk);
      }
    }
    last = i;
  }
  return peaks;
}

std::vector<FittedPeak> find_peaks(std::span<const double> y, const DetectOptions& opts, const FitOptions& fit) {
  const auto f = fit_curve(y, kAllShapes, fit);
  const auto d1 = smooth_derivative(f.fitted, opts.width);
  const auto d2 = smooth_derivative(d1, opts.width);
  std::vector<FittedPeak> out;
  for (auto& p : detect_peaks(f.fitted, d1, d2, opts))
    for (const auto& r : f.regions)
      if (p.apex >= r.region.begin && p.apex < r.region.end) {
        p.shape = r.shape;
        out.push_back(p);
        break;
      }
  return out;
}

Bounds peak_bounds(const FittedPeak& peak, std::span<const double> d1, std::span<const double> d2, std::size_t lo,
                   std::optional<std::size_t> hi_opt) {
  const std::size_t n = d1.size();
  if (n == 0 || d2.size() != n) throw InputError("peak_bounds inputs are not aligned");
  const std::size_t hi = std::min(hi_opt.value_or(n - 1), n - 1);
  const std::size_t a = peak.apex;
  if (a < lo || a > hi) throw InputError("peak apex outside the search range");
  static const double kStartRatio = 3.0 * std::exp(-4.0);
  static const double kEndRatio = 8.0 * std::exp(-4.5);

  Bounds b;
  if (a == lo) {
    b.start = lo;
    b.flags |= kStartClamped;
  } else {
    std::size_t ir = lo;
    for (std::size_t j = lo; j < a; ++j)
      if (std::fabs(d1[j]) >= std::fabs(d1[ir])) ir = j;
    const double thr = kStartRatio * std::fabs(d1[ir]);
    std::size_t j = ir;
    while (j > lo && std::fabs(d1[j]) > thr) --j;
    if (std::fabs(d1[j]) > thr || (j == lo && std::fabs(d1[ir]) == 0.0)) {
      b.start = lo;
      b.flags |= kStartClamped;
    } else {
      b.start = j;
    }
  }

  if (a == hi) {
    b.end = hi;
    b.flags |= kEndClamped;
  } else {
    std::size_t jf = a + 1;
    for (std::size_t j = a + 1; j <= hi; ++j)
      if (std::fabs(d1[j]) > std::fabs(d1[jf])) jf = j;
    double m2 = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) m2 = std::max(m2, std::fabs(d2[j]));
    std::size_t i2 = jf;
    for (std::size_t j = jf; j <= hi; ++j)
      if (std::fabs(d2[j]) > std::fabs(d2[i2])) i2 = j;
    const double thr = kEndRatio * m2;
    std::size_t j = i2;
    while (j < hi && std::fabs(d2[j]) > thr) ++j;
    if (std::fabs(d2[j]) > thr || m2 == 0.0) {
      b.end = hi;
      b.flags |= kEndClamped;
    } else {
      b.end = j;
    }
  }
  if (b.start >= a && a > lo) b.start = a - 1;
  if (b.end <= a && a < hi) b.end = a + 1;
  return b;
}

namespace {

struct EdgeSignature {
  double shoulder = 0.0;  // samples with |d1| >= 0.8 max on this side
  double decay = 0.0;     // outermost 0.8 sample to the 0.05 level
  double w50 = 0.0;       // bump centre to the 0.5 level, outward
  double w05 = 0.0;       // bump centre to the 0.05 level, outward
  bool valid = false;
};

// `step` is +1 for the falling side, -1 for the rising side. The bump is
// searched up to `limit`; the decay walks may continue to the signal edge but
// stop at a local minimum of |d1| so a neighbouring peak is not measured.
EdgeSignature edge_signature(std::span<const double> d1, std::size_t apex, std::size_t limit, int step) {
  EdgeSignature e;
  const auto in_range = [&](long j) {
    return step > 0 ? j <= static_cast<long>(limit) : j >= static_cast<long>(limit);
  };
  long ibump = -1;
  double m = 0.0;
  for (long j = static_cast<long>(apex) + step; in_range(j); j += step)
    if (std::fabs(d1[static_cast<std::size_t>(j)]) > m) {
      m = std::fabs(d1[static_cast<std::size_t>(j)]);
      ibump = j;
    }
  if (ibump < 0 || m == 0.0) return e;
  long outer80 = ibump;
  for (long j = static_cast<long>(apex) + step; in_range(j); j += step) {
    if (std::fabs(d1[static_cast<std::size_t>(j)]) >= 0.8 * m) {
      e.shoulder += 1.0;
      outer80 = j;
    }
  }
  const long last = step > 0 ? static_cast<long>(d1.size()) - 1 : 0;
  const auto distance_to = [&](long from, double level) {
    long j = from;
    while (j != last && std::fabs(d1[static_cast<std::size_t>(j)]) >= level * m) {
      const double next = std::fabs(d1[static_cast<std::size_t>(j + step)]);
      if (next > std::fabs(d1[static_cast<std::size_t>(j)]) && !in_range(j + step)) break;
      j += step;
    }
    return static_cast<double>(std::labs(j - from));
  };
  e.decay = distance_to(outer80, 0.05);
  e.w50 = distance_to(ibump, 0.5);
  e.w05 = distance_to(ibump, 0.05);
  e.valid = true;
  return e;
}

}  // namespace

ShapeClass classify_shape(const FittedPeak& peak, std::span<const double> d1, std::span<const double> d2) {
  (void)d2;
  const std::size_t n = d1.size();
  const std::size_t a = peak.apex;
  const std::size_t lo = peak.start;
  const std::size_t hi = std::min(peak.end, n - 1);
  const auto fall = edge_signature(d1, a, hi, +1);
  const auto rise = a > lo ? edge_signature(d1, a, lo, -1) : EdgeSignature{};
  if (!fall.valid && !rise.valid) return {ShapeVariant::RectGaussian, true};

  double m = 0.0;
  for (std::size_t j = lo; j <= hi; ++j) m = std::max(m, std::fabs(d1[j]));
  std::size_t zl = a, zr = a;
  while (zl > lo && std::fabs(d1[zl - 1]) <= 0.05 * m) --zl;
  while (zr < hi && std::fabs(d1[zr + 1]) <= 0.05 * m) ++zr;
  const std::size_t zero_run = std::fabs(d1[a]) <= 0.05 * m ? zr - zl + 1 : 0;

  const auto avg = [&](double EdgeSignature::*f) {
    double s = 0.0;
    int k = 0;
    for (const auto* e : {&fall, &rise})
      if (e->valid) {
        s += e->*f;
        ++k;
      }
    return s / k;
  };
  const double shoulder = avg(&EdgeSignature::shoulder);
  const double decay = avg(&EdgeSignature::decay);
  const double heavy = avg(&EdgeSignature::w05) / std::max(1.0, avg(&EdgeSignature::w50));

  if (zero_run < 3 && shoulder >= 4.0 && shoulder >= 1.25 * decay)
    return {ShapeVariant::TriGaussian, shoulder < 1.5 * decay};
  if (heavy >= 3.0) return {ShapeVariant::RectLorentzian, heavy < 3.3};
  return {ShapeVariant::RectGaussian, heavy > 2.7};
}

// ---- isolation -------------------------------------------------------------------

std::vector<std::uint8_t> recurrence(std::span<const std::uint64_t> ranks, int horizon) {
  const std::size_t n = ranks.size();
  const auto hz = static_cast<std::size_t>(std::max(horizon, 1));
  std::vector<std::uint8_t> rec(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > hz ? i - hz : 0;
    const std::size_t hi = std::min(n - 1, i + hz);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i && ranks[j] == ranks[i]) {
        rec[i] = 1;
        break;
      }
  }
  return rec;
}

std::vector<double> activity(std::span<const std::uint64_t> ranks, int width, int horizon) {
  const auto rec = recurrence(ranks, horizon);
  std::vector<double> moving(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) moving[i] = rec[i] ? 0.0 : 1.0;
  return mean_filter(moving, width);
}

std::optional<Visit> isolate_visit(const signal::SpaceTimeSignal& sig, std::span<const double> corrected,
                                   const FittedPeak& peak, std::span<const double> act, const IsolateOptions& opts) {
  const std::size_t n = sig.size();
  if (corrected.size() != n || act.size() != n) throw InputError("isolate_visit inputs are not aligned");
  const std::size_t lo = peak.start, hi = std::min(peak.end, n - 1);
  const std::size_t a = peak.apex;
  if (a < lo || a > hi) return std::nullopt;

  // Transition slope: trimmed mean of the activity on the moving samples.
  std::vector<double> edges;
  for (std::size_t j = lo; j <= hi; ++j)
    if (act[j] >= 0.5) edges.push_back(act[j]);
  double m = 1.0;
  if (!edges.empty()) {
    std::sort(edges.begin(), edges.end());
    const std::size_t trim = edges.size() / 10;
    m = std::accumulate(edges.begin() + static_cast<std::ptrdiff_t>(trim),
                        edges.end() - static_cast<std::ptrdiff_t>(trim), 0.0) /
        static_cast<double>(edges.size() - 2 * trim);
  }
  const auto transition_like = [&](std::size_t j) { return std::fabs(act[j] - m) <= opts.slope_tolerance * m; };
  const int want = peak.polarity == Polarity::Maximum ? 1 : -1;
  const auto same_side = [&](std::size_t j) { return sign_of(corrected[j]) == want; };

  const std::size_t first = lo;
  const std::span<const std::uint64_t> vals(sig.values.data() + first, hi - first + 1);
  const auto rec = recurrence(vals, opts.horizon);
  const auto recurrent = [&](std::size_t j) { return rec[j - first] != 0; };
  const auto candidate = [&](std::size_t j) { return same_side(j) && !transition_like(j) && recurrent(j); };

  // Seed at the nearest static sample within half a filter width.
  const std::size_t h = static_cast<std::size_t>(opts.width / 2);
  std::optional<std::size_t> seed;
  for (std::size_t d = 0; d <= h && !seed; ++d) {
    if (a >= lo + d && candidate(a - d)) seed = a - d;
    else if (a + d <= hi && candidate(a + d)) seed = a + d;
  }
  if (!seed) return std::nullopt;

  // Grow over non-transition samples, stepping across transition bursts
  // shorter than the filter width.
  const auto grow = [&](std::size_t from, int step) {
    std::size_t edge = from;
    long j = static_cast<long>(from);
    while (true) {
      long k = j + step;
      std::size_t burst = 0;
      while (k >= static_cast<long>(lo) && k <= static_cast<long>(hi) && same_side(static_cast<std::size_t>(k)) &&
             transition_like(static_cast<std::size_t>(k))) {
        ++burst;
        k += step;
      }
      if (k < static_cast<long>(lo) || k > static_cast<long>(hi) || !same_side(static_cast<std::size_t>(k)) ||
          burst >= static_cast<std::size_t>(opts.width))
        break;
      j = k;
      edge = static_cast<std::size_t>(k);
    }
    return edge;
  };
  std::size_t entry = grow(*seed, -1);
  std::size_t exit = grow(*seed, +1);
  while (entry < exit && !recurrent(entry)) ++entry;
  while (exit > entry && !recurrent(exit)) --exit;
  if (exit <= entry) return std::nullopt;

  Visit v;
  for (std::size_t j = entry; j <= exit; ++j) v.roi_cells.insert(sig.cells[j]);
  const auto collect = [&](std::size_t from, std::size_t to, std::vector<geo::CellId>& dst) {
    for (std::size_t j = from; j < to; ++j) {
      const auto c = sig.cells[j];
      if (v.roi_cells.count(c)) continue;
      if (dst.empty() || dst.back() != c) dst.push_back(c);
    }
  };
  collect(lo, entry, v.transition_in);
  collect(exit + 1, hi + 1, v.transition_out);
  v.entry_index = entry;
  v.exit_index = exit;
  v.entry_cell = sig.cells[entry];
  v.exit_cell = sig.cells[exit];
  v.entry_time = sig.time_at(entry);
  v.exit_time = sig.time_at(exit);
  v.apex_time = sig.time_at(a);
  v.slope_constant = m;
  v.peak = peak;
  return v;
}

void write_visits_csv(std::ostream& out, const std::vector<Visit>& visits) {
  out << "visit_id,entry,apex,exit,shape,height,n_roi_cells,n_transition_cells,flags\n";
  std::size_t id = 0;
  for (const auto& v : visits) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", id++, format_iso8601(v.entry_time),
                       format_iso8601(v.apex_time), format_iso8601(v.exit_time), to_string(v.peak.shape.variant),
                       v.peak.height, v.roi_cells.size(), v.transition_in.size() + v.transition_out.size(),
                       flags_to_string(v.peak.flags));
  }
}

}  // namespace capstone::peaks
