#include "capstone/spectral.hpp"

#include <fftw3.h>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <ostream>

#include "capstone/errors.hpp"

namespace capstone::spectral {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Owns an fftw buffer.
struct FftwBuffer {
  double* p = nullptr;
  explicit FftwBuffer(std::size_t n) : p(fftw_alloc_real(std::max<std::size_t>(n, 1))) {}
  ~FftwBuffer() { fftw_free(p); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

struct Dct4 {
  std::size_t m;
  FftwBuffer in, out;
  fftw_plan plan;
  explicit Dct4(std::size_t m_)
      : m(m_), in(m_), out(m_),
        plan(fftw_plan_r2r_1d(static_cast<int>(m_), in.p, out.p, FFTW_REDFT11, FFTW_ESTIMATE)) {}
  ~Dct4() { fftw_destroy_plan(plan); }
  Dct4(const Dct4&) = delete;
  Dct4& operator=(const Dct4&) = delete;
};

std::vector<double> sine_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::sin(kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return w;
}

// Power spectrum |X_k|^2 for k = 0..n/2 of the mean-removed signal, and the
// spectrum itself.
std::vector<double> power_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  FftwBuffer in(n);
  auto* out = fftw_alloc_complex(n / 2 + 1);
  const fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.p, out, FFTW_ESTIMATE);
  for (std::size_t i = 0; i < n; ++i) in.p[i] = x[i] - mean;
  fftw_execute(plan);
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  fftw_destroy_plan(plan);
  fftw_free(out);
  return p;
}

// Circular autocorrelation from the power spectrum, r[0] == 1.
std::vector<double> autocorrelation(std::span<const double> power, std::size_t n) {
  auto* in = fftw_alloc_complex(n / 2 + 1);
  FftwBuffer out(n);
  const fftw_plan plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), in, out.p, FFTW_ESTIMATE);
  for (std::size_t k = 0; k < power.size(); ++k) {
    in[k][0] = power[k];
    in[k][1] = 0.0;
  }
  fftw_execute(plan);
  std::vector<double> r(out.p, out.p + n);
  fftw_destroy_plan(plan);
  fftw_free(in);
  if (r[0] > 0.0)
    for (auto& v : r) v /= r[0];
  return r;
}

double prominence(std::span<const double> r, std::size_t peak, std::size_t hi) {
  const double h = r[peak];
  double left_min = h, right_min = h;
  for (std::size_t j = peak; j-- > 0;) {
    if (r[j] > h) break;
    left_min = std::min(left_min, r[j]);
  }
  for (std::size_t j = peak + 1; j <= hi; ++j) {
    if (r[j] > h) break;
    right_min = std::min(right_min, r[j]);
  }
  return h - std::max(left_min, right_min);
}

bool is_local_max(std::span<const double> p, std::size_t j) {
  if (j == 0 || j >= p.size()) return false;
  const bool left = p[j] >= p[j - 1];
  const bool right = j + 1 >= p.size() || p[j] >= p[j + 1];
  return left && right && p[j] > 0.0;
}

}  // namespace

double SpectralDecomposition::window_start_time(std::size_t w) const {
  return start_time + (static_cast<double>(w) - 1.0) * static_cast<double>(hop) * interval;
}

std::size_t window_length_for(double hours, double interval_s) {
  if (!(hours > 0.0) || !(interval_s > 0.0)) throw InputError("window length needs positive hours and interval");
  const auto n = static_cast<std::size_t>(std::llround(hours * 3600.0 / interval_s / 4.0)) * 4;
  return std::max<std::size_t>(n, 4);
}

SpectralDecomposition mdct(std::span<const double> x, std::size_t window_length, std::optional<std::size_t> hop,
                           double interval) {
  if (window_length == 0 || window_length % 4 != 0)
    throw InputError(fmt::format("window length {} must be a positive multiple of 4", window_length));
  const std::size_t m = window_length / 2;
  if (hop && *hop != m) throw InputError(fmt::format("hop must be half the window ({}), got {}", m, *hop));
  if (x.size() < 2 * window_length)
    throw InputError(fmt::format("signal too short: {} samples, need {}", x.size(), 2 * window_length));

  SpectralDecomposition dec;
  dec.interval = interval;
  dec.window_length = window_length;
  dec.hop = m;
  dec.signal_length = x.size();
  const std::size_t frames = (x.size() + m - 1) / m + 1;
  std::vector<double> padded((frames + 1) * m, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(m));

  const auto win = sine_window(window_length);
  Dct4 dct(m);
  const std::size_t h = m / 2;
  const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(m));
  std::vector<double> z(window_length);
  dec.coefficients.assign(frames, std::vector<double>(m));
  dec.reference_energy.assign(frames, 0.0);
  dec.kept.assign(frames, 0);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = padded.data() + f * m;
    for (std::size_t i = 0; i < window_length; ++i) z[i] = src[i] * win[i];
    // (a, b, c, d) -> (-c_r - d, a - b_r)
    for (std::size_t i = 0; i < h; ++i) {
      dct.in.p[i] = -z[3 * h - 1 - i] - z[3 * h + i];
      dct.in.p[h + i] = z[i] - z[m - 1 - i];
    }
    fftw_execute(dct.plan);
    auto& c = dec.coefficients[f];
    double e = 0.0;
    std::size_t nz = 0;
    for (std::size_t k = 0; k < m; ++k) {
      c[k] = dct.out.p[k] * scale;
      e += c[k] * c[k];
      nz += c[k] != 0.0;
    }
    dec.reference_energy[f] = e;
    dec.kept[f] = nz;
  }
  return dec;
}

std::vector<double> imdct(const SpectralDecomposition& dec) {
  const std::size_t m = dec.hop;
  const std::size_t n2 = dec.window_length;
  if (m == 0 || n2 != 2 * m || m % 2 != 0) throw InputError("malformed decomposition");
  const std::size_t frames = dec.window_count();
  std::vector<double> padded((frames + 1) * m, 0.0);
  const auto win = sine_window(n2);
  Dct4 dct(m);
  const std::size_t h = m / 2;
  const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(m));
  for (std::size_t f = 0; f < frames; ++f) {
    const auto& c = dec.coefficients[f];
    if (c.size() != m) throw InputError("malformed decomposition");
    std::copy(c.begin(), c.end(), dct.in.p);
    fftw_execute(dct.plan);
    const double* u = dct.out.p;
    double* dst = padded.data() + f * m;
    // Transpose of the fold: (u2, -u2_r, -u1_r, -u1).
    for (std::size_t i = 0; i < h; ++i) {
      dst[i] += win[i] * u[h + i] * scale;
      dst[h + i] += -win[h + i] * u[m - 1 - i] * scale;
      dst[m + i] += -win[m + i] * u[h - 1 - i] * scale;
      dst[3 * h + i] += -win[3 * h + i] * u[i] * scale;
    }
  }
  const auto first = padded.begin() + static_cast<std::ptrdiff_t>(m);
  return {first, first + static_cast<std::ptrdiff_t>(dec.signal_length)};
}

SpectralDecomposition compact(const SpectralDecomposition& dec, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError(fmt::format("energy fraction {} not in (0, 1]", fraction));
  SpectralDecomposition out = dec;
  if (fraction == 1.0) return out;
  std::vector<std::size_t> order;
  for (std::size_t f = 0; f < out.window_count(); ++f) {
    auto& c = out.coefficients[f];
    order.resize(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::fabs(c[a]) > std::fabs(c[b]); });
    const double target = fraction * out.reference_energy[f];
    double acc = 0.0;
    std::size_t keep = 0;
    while (keep < order.size() && acc < target && c[order[keep]] != 0.0) {
      acc += c[order[keep]] * c[order[keep]];
      ++keep;
    }
    for (std::size_t i = keep; i < order.size(); ++i) c[order[i]] = 0.0;
    out.kept[f] = keep;
  }
  return out;
}

double total_energy(const SpectralDecomposition& dec) {
  double e = 0.0;
  for (const auto& c : dec.coefficients)
    for (const double v : c) e += v * v;
  return e;
}

double dominant_period_s(const SpectralDecomposition& dec) {
  if (dec.window_count() == 0) throw InputError("empty decomposition");
  std::vector<double> e(dec.hop, 0.0);
  for (const auto& c : dec.coefficients)
    for (std::size_t k = 0; k < c.size(); ++k) e[k] += c[k] * c[k];
  const auto k = static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
  return dec.bin_period_s(static_cast<double>(k));
}

std::vector<Periodicity> candidate_periods(std::span<const double> x, double interval_s, const PeriodOptions& opts) {
  if (!(interval_s > 0.0)) throw InputError("sampling interval must be positive");
  const std::size_t n = x.size();
  if (n < 8 || static_cast<double>(n) * interval_s < opts.min_days * 86400.0) return {};

  const auto power = power_spectrum(x);
  const double total = std::accumulate(power.begin() + 1, power.end(), 0.0);
  if (total <= 0.0) return {};
  const auto r = autocorrelation(power, n);
  const std::size_t half = n / 2;
  const double nd = static_cast<double>(n);

  const auto band_power = [&](std::size_t j) {
    double s = 0.0;
    for (std::size_t b = j > 1 ? j - 1 : 1; b <= std::min(j + 1, power.size() - 1); ++b) s += power[b];
    return s;
  };
  const auto make = [&](double period_samples, std::size_t bin) {
    Periodicity p;
    const double bp = band_power(bin);
    p.period_h = period_samples * interval_s / 3600.0;
    p.energy = std::clamp(bp / total, 0.0, 1.0);
    p.mean_abs_offset = 2.0 / kPi * 2.0 * std::sqrt(bp) / nd;
    return p;
  };

  // Fundamentals: prominent autocorrelation peaks confirmed by a spectral
  // maximum within half a bin of the same frequency.
  std::map<std::size_t, Periodicity> by_bin;
  std::map<std::size_t, double> lag_of;
  for (std::size_t lag = 2; lag + 1 <= half; ++lag) {
    if (!(r[lag] > r[lag - 1] && r[lag] >= r[lag + 1])) continue;
    if (prominence(r, lag, half) < opts.prominence) continue;
    const auto bin = static_cast<std::size_t>(std::llround(nd / static_cast<double>(lag)));
    if (!is_local_max(power, bin) || by_bin.count(bin)) continue;
    by_bin[bin] = make(static_cast<double>(lag), bin);
    lag_of[bin] = static_cast<double>(lag);
  }

  // Harmonics, strongest fundamental first.
  std::vector<std::size_t> fundamentals;
  for (const auto& [bin, p] : by_bin) fundamentals.push_back(bin);
  std::stable_sort(fundamentals.begin(), fundamentals.end(),
                   [&](std::size_t a, std::size_t b) { return by_bin[a].energy > by_bin[b].energy; });
  for (const std::size_t f : fundamentals) {
    if (by_bin[f].harmonic_of) continue;
    const double lag = lag_of[f];
    for (int m = 2; m <= opts.max_harmonic; ++m) {
      const auto bin = static_cast<std::size_t>(std::llround(m * nd / lag));
      if (bin >= power.size()) break;
      const auto it = by_bin.find(bin);
      if (it != by_bin.end()) {
        if (!it->second.harmonic_of && it->second.energy < by_bin[f].energy) it->second.harmonic_of = by_bin[f].period_h;
        continue;
      }
      if (!is_local_max(power, bin) || power[bin] < opts.harmonic_floor * power[f]) continue;
      auto p = make(lag / m, bin);
      p.harmonic_of = by_bin[f].period_h;
      by_bin[bin] = p;
    }
  }

  std::vector<Periodicity> out;
  for (const auto& [bin, p] : by_bin) out.push_back(p);
  std::stable_sort(out.begin(), out.end(), [](const Periodicity& a, const Periodicity& b) {
    if (a.energy != b.energy) return a.energy > b.energy;
    return a.period_h > b.period_h;
  });
  return out;
}

void write_decomposition_csv(std::ostream& out, const SpectralDecomposition& dec) {
  out << "window_start,coef_index,value\n";
  for (std::size_t f = 0; f < dec.window_count(); ++f) {
    const double t = dec.window_start_time(f);
    for (std::size_t k = 0; k < dec.coefficients[f].size(); ++k)
      if (dec.coefficients[f][k] != 0.0) fmt::print(out, "{:.12g},{},{:.12g}\n", t, k, dec.coefficients[f][k]);
  }
}

void write_periods_csv(std::ostream& out, const std::vector<Periodicity>& periods) {
  out << "period_h,energy,harmonic_of\n";
  for (const auto& p : periods) {
    fmt::print(out, "{:.12g},{:.12g},", p.period_h, p.energy);
    if (p.harmonic_of) fmt::print(out, "{:.12g}", *p.harmonic_of);
    out << '\n';
  }
}

}  // namespace capstone::spectral
