#pragma once

// Frame-level spectral analysis: zero-phase windowed DFT frames and
// parabolically refined peak picking.

#include <algorithm>
#include <complex>
#include <span>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/fft.hpp"
#include "hprvae/window.hpp"

namespace hprvae {

struct AnalysisConfig {
  int sample_rate_hz = 44100;
  WindowKind window_kind = WindowKind::blackman_harris;
  int window_size = 1023;
  int fft_size = 2048;
  int hop_size = 256;
  double peak_threshold_db = -90.0;
  double f0_min_hz = 120.0;
  double f0_max_hz = 1200.0;
  double twm_error_max = 5.0;
  double harmonic_dev_fraction = 0.2;
  int max_harmonics = 60;
  double mag_floor_db = kMagFloorDb;

  void validate() const {
    if (sample_rate_hz <= 0) throw std::invalid_argument("config: sample_rate_hz must be positive");
    if (window_size < 3 || window_size % 2 == 0)
      throw std::invalid_argument("config: window_size must be odd and >= 3");
    if (!is_power_of_two(std::size_t(fft_size)))
      throw std::invalid_argument("config: fft_size must be a power of two");
    if (fft_size < window_size)
      throw std::invalid_argument("config: fft_size must be >= window_size");
    if (hop_size < 1 || 2 * hop_size > window_size)
      throw std::invalid_argument("config: hop_size must satisfy 1 <= hop and 2*hop <= window_size");
    if (peak_threshold_db <= mag_floor_db)
      throw std::invalid_argument("config: peak_threshold_db must exceed mag_floor_db");
    if (!(f0_min_hz > 0.0) || !(f0_max_hz > f0_min_hz) || !(f0_max_hz < sample_rate_hz / 2.0))
      throw std::invalid_argument("config: need 0 < f0_min < f0_max < Nyquist");
    if (!(twm_error_max > 0.0)) throw std::invalid_argument("config: twm_error_max must be positive");
    if (!(harmonic_dev_fraction > 0.0) || harmonic_dev_fraction > 0.5)
      throw std::invalid_argument("config: harmonic_dev_fraction must be in (0, 0.5]");
    if (max_harmonics < 1) throw std::invalid_argument("config: max_harmonics must be >= 1");
  }
};

// One-sided spectrum of one frame. mag_db and phase hold fft_size/2 + 1 bins;
// mag_db is clamped at the floor, phase holds principal values in (-pi, pi].
struct SpectralFrame {
  long center_sample = 0;
  std::vector<double> mag_db;
  std::vector<double> phase;

  int fft_size() const { return int(2 * (mag_db.size() - 1)); }
};

struct Peak {
  double freq_hz = 0.0;
  double mag_db = kMagFloorDb;
  double phase = 0.0;
};

inline double principal_angle(double x) {
  return x - kTwoPi * std::round(x / kTwoPi);
}

// Windowed zero-phase DFT of one frame. samples and window must have equal
// odd length <= fft_size; the window center lands on buffer index 0 so bin
// phases are measured relative to the frame center.
inline SpectralFrame dft_frame(std::span<const double> samples,
                               std::span<const double> window, int fft_size,
                               double mag_floor_db = kMagFloorDb,
                               long center_sample = 0) {
  const std::size_t m = samples.size();
  if (m != window.size()) throw std::invalid_argument("dft_frame: samples/window size mismatch");
  if (m < 3 || m % 2 == 0) throw std::invalid_argument("dft_frame: frame length must be odd and >= 3");
  if (!is_power_of_two(std::size_t(fft_size)) || std::size_t(fft_size) < m)
    throw std::invalid_argument("dft_frame: fft_size must be a power of two >= frame length");

  const std::size_t n = std::size_t(fft_size);
  const std::size_t half = m / 2;  // window center index
  std::vector<std::complex<double>> buf(n, 0.0);
  for (std::size_t i = half; i < m; ++i) buf[i - half] = samples[i] * window[i];
  for (std::size_t i = 0; i < half; ++i) buf[n - half + i] = samples[i] * window[i];
  fft_inplace(buf, false);

  SpectralFrame frame;
  frame.center_sample = center_sample;
  frame.mag_db.resize(n / 2 + 1);
  frame.phase.resize(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    frame.mag_db[k] = lin_to_db(std::abs(buf[k]), mag_floor_db);
    frame.phase[k] = std::atan2(buf[k].imag(), buf[k].real());
  }
  return frame;
}

// Local maxima above threshold_db, refined by parabolic interpolation on the
// dB magnitudes. Peaks on the first/last bin and flat plateaus are skipped.
// Returned in ascending frequency order.
inline std::vector<Peak> detect_peaks(const SpectralFrame& frame, double threshold_db,
                                      double sample_rate_hz) {
  if (frame.mag_db.size() < 3 || frame.mag_db.size() != frame.phase.size())
    throw std::invalid_argument("detect_peaks: malformed frame");
  if (sample_rate_hz <= 0.0) throw std::invalid_argument("detect_peaks: bad sample rate");

  const int n = frame.fft_size();
  const double bin_hz = sample_rate_hz / double(n);
  std::vector<Peak> peaks;
  for (std::size_t k = 1; k + 1 < frame.mag_db.size(); ++k) {
    const double alpha = frame.mag_db[k - 1];
    const double beta = frame.mag_db[k];
    const double gamma = frame.mag_db[k + 1];
    if (beta < threshold_db) continue;
    if (!(beta > alpha && beta > gamma)) continue;

    const double denom = alpha - 2.0 * beta + gamma;
    const double p = (denom != 0.0) ? 0.5 * (alpha - gamma) / denom : 0.0;
    Peak peak;
    peak.freq_hz = (double(k) + p) * bin_hz;
    peak.mag_db = beta - 0.25 * (alpha - gamma) * p;
    const std::size_t nb = (p >= 0.0) ? k + 1 : k - 1;
    const double dphi = principal_angle(frame.phase[nb] - frame.phase[k]);
    peak.phase = principal_angle(frame.phase[k] + std::abs(p) * dphi);
    peaks.push_back(peak);
  }
  return peaks;
}

}  // namespace hprvae
