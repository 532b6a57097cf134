#pragma once

// Frequency-domain view of a space-time signal: lapped MDCT over day-long
// windows, energy compaction, and candidate visitation periods from the
// autocorrelation checked against the power spectrum.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace capstone::spectral {

// Sine-windowed MDCT with 50% overlap. The signal is padded with hop zeros on
// both sides (and at the end up to a whole number of hops), so every sample
// is covered by two windows. Coefficients are scaled by sqrt(2 / hop), which
// makes the transform orthogonal over the whole signal: the sum of squared
// coefficients across all windows equals the sum of squared samples. A single
// window is not an orthogonal piece on its own, so per-window energies only
// match in aggregate.
//
// Bin k of a window of N samples sits at frequency (k + 1/2) / N cycles per
// sample, i.e. period N * interval / (k + 1/2).
struct SpectralDecomposition {
  int level = 0;
  double start_time = 0.0;  // time of signal sample 0
  double interval = 1.0;    // seconds per sample
  std::size_t window_length = 0;
  std::size_t hop = 0;
  std::size_t signal_length = 0;
  std::vector<std::vector<double>> coefficients;  // [window][bin], hop bins each
  std::vector<double> reference_energy;           // per window, as transformed
  std::vector<std::size_t> kept;                  // non-zero coefficients per window

  std::size_t window_count() const noexcept { return coefficients.size(); }
  double bin_period_s(double bin) const { return static_cast<double>(window_length) * interval / (bin + 0.5); }
  double period_bin(double period_s) const { return static_cast<double>(window_length) * interval / period_s - 0.5; }
  double window_start_time(std::size_t w) const;
};

// Window length in samples for `hours` at the given sampling interval, rounded
// to the nearest multiple of 4 (the fold into a DCT-IV works on quarters).
std::size_t window_length_for(double hours, double interval_s);

// Throws InputError when window_length is not a positive multiple of 4, when
// hop is anything other than window_length / 2, or when the signal is shorter
// than two windows.
SpectralDecomposition mdct(std::span<const double> x, std::size_t window_length, std::optional<std::size_t> hop = {},
                           double interval = 1.0);

// Overlap-add reconstruction, cropped to the original signal length.
std::vector<double> imdct(const SpectralDecomposition& dec);

// Per window, keep the fewest largest-magnitude coefficients whose squared sum
// reaches `fraction` of the window's reference energy; zero the rest. Measured
// against the reference energy, so compacting twice changes nothing.
SpectralDecomposition compact(const SpectralDecomposition& dec, double fraction);

double total_energy(const SpectralDecomposition& dec);

// Period (seconds) of the bin with the most energy summed over all windows.
double dominant_period_s(const SpectralDecomposition& dec);

struct Periodicity {
  double period_h = 0.0;
  double energy = 0.0;  // fraction of the non-DC spectral power
  std::optional<double> harmonic_of;  // period_h of the parent candidate
  double mean_abs_offset = 0.0;       // mean |.| of this component alone
};

struct PeriodOptions {
  double prominence = 0.1;       // autocorrelation peak prominence, fraction of lag 0
  int max_harmonic = 6;
  double harmonic_floor = 0.01;  // harmonic power relative to its fundamental
  double min_days = 2.0;
};

// Autocorrelation peaks whose period also shows as a power-spectrum maximum,
// plus the significant harmonics of each. Sorted by energy, strongest first.
// Shorter signals than `min_days` give an empty list. Both the
// autocorrelation and the spectrum are circular, so rotating the signal in
// time leaves the result unchanged.
std::vector<Periodicity> candidate_periods(std::span<const double> x, double interval_s,
                                           const PeriodOptions& opts = {});

// CSV `window_start,coef_index,value`, zero coefficients omitted.
void write_decomposition_csv(std::ostream& out, const SpectralDecomposition& dec);

// CSV `period_h,energy,harmonic_of`.
void write_periods_csv(std::ostream& out, const std::vector<Periodicity>& periods);

}  // namespace capstone::spectral
