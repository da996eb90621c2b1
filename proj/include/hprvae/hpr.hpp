#pragma once

// Harmonic-plus-residual frame decomposition and resynthesis.
//
// The harmonic part of a frame is a set of (freq, mag, phase) triples at
// near-integer multiples of f0. Its spectrum is regenerated with the exact
// closed-form transform of the zero-phase analysis window (a short sum of
// Dirichlet kernels), so subtracting it from the frame spectrum leaves a
// residual that is free of harmonic energy down to numerical precision
// instead of a main-lobe-notched approximation.
//
// Level convention for the residual: analysis magnitudes are taken through a
// sum-normalized window, so a white source of RMS sigma reads
// 20*log10(sigma) + 10*log10(sum w^2) per bin. Synthesis subtracts that
// window power term and scales the inverse transform by sqrt(N), which makes
// a stored flat 0 dB envelope regenerate unit mean power per sample and
// round trips level-true.

#include <algorithm>
#include <complex>
#include <span>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/fft.hpp"
#include "hprvae/rng.hpp"
#include "hprvae/spectral.hpp"
#include "hprvae/window.hpp"

namespace hprvae {

struct HarmonicFrame {
  double f0_hz = 0.0;
  std::vector<double> freqs_hz;
  std::vector<double> mags_db;
  std::vector<double> phases;

  std::size_t size() const { return freqs_hz.size(); }
};

struct ResidualFrame {
  std::vector<double> mag_db;  // one-sided, fft_size/2 + 1 bins, floored
};

// Phase of a frame at an arbitrary frequency, linearly interpolated between
// neighbouring bins with local unwrapping.
inline double frame_phase_at(const SpectralFrame& frame, double freq_hz,
                             double sample_rate_hz) {
  const int n = frame.fft_size();
  const double b = freq_hz * double(n) / sample_rate_hz;
  const std::size_t k = std::size_t(std::clamp<double>(std::floor(b), 0.0,
                                                       double(frame.mag_db.size() - 2)));
  const double frac = b - double(k);
  const double dphi = principal_angle(frame.phase[k + 1] - frame.phase[k]);
  return principal_angle(frame.phase[k] + frac * dphi);
}

// Assign detected peaks to harmonic slots 1..R of f0. R is capped by
// max_harmonics and by Nyquist. A slot with no peak within
// dev_fraction * f0 keeps its nominal frequency r*f0, the magnitude floor,
// and a phase interpolated from the frame spectrum.
inline HarmonicFrame match_harmonics(std::span<const Peak> peaks,
                                     const SpectralFrame& frame, double f0,
                                     const AnalysisConfig& cfg) {
  if (!(f0 > 0.0)) throw std::invalid_argument("match_harmonics: f0 must be positive");
  const double nyquist = double(cfg.sample_rate_hz) / 2.0;
  const int r_max = std::min<int>(cfg.max_harmonics, int(std::floor(nyquist / f0 - 1e-9)));

  HarmonicFrame hf;
  hf.f0_hz = f0;
  const double dev = cfg.harmonic_dev_fraction * f0;
  for (int r = 1; r <= r_max; ++r) {
    const double target = f0 * double(r);
    const Peak* best = nullptr;
    double best_df = dev;
    for (const auto& pk : peaks) {
      const double df = std::abs(pk.freq_hz - target);
      if (df <= best_df) {
        best_df = df;
        best = &pk;
      }
    }
    if (best != nullptr) {
      hf.freqs_hz.push_back(best->freq_hz);
      hf.mags_db.push_back(best->mag_db);
      hf.phases.push_back(best->phase);
    } else {
      hf.freqs_hz.push_back(target);
      hf.mags_db.push_back(cfg.mag_floor_db);
      hf.phases.push_back(frame_phase_at(frame, target, double(cfg.sample_rate_hz)));
    }
  }
  return hf;
}

namespace detail {

// Closed-form transform of the zero-phase, sum-normalized analysis window,
// evaluated on the FFT bin grid for one sinusoid frequency at a time.
// W(w) = (1/norm) * sum_m (-1)^m a_m/2 * [D(w - d_m) + D(w + d_m)] with
// d_m = 2 pi m / (M - 1) and D(t) = sin(M t / 2) / sin(t / 2).
//
// For bins w_k = 2 pi k / N and a fixed offset o, both sines expand over
// precomputed tables of sin/cos(M w_k / 2) and sin/cos(w_k / 2), leaving two
// fused multiply-adds and one divide per bin per offset.
class WindowTransform {
 public:
  WindowTransform(WindowKind kind, int window_size, int fft_size)
      : m_(window_size), n_(fft_size),
        norm_(window_norm_constant(kind, window_size)) {
    const auto terms = window_cosine_terms(kind);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      // Zero-phase recentering flips the sign of every odd cosine term, so
      // the alternating window signs cancel and all coefficients are positive.
      coeffs_.push_back(terms[t] / (2.0 * norm_));
      deltas_.push_back(kTwoPi * double(t) / double(window_size - 1));
    }
    const std::size_t bins = std::size_t(fft_size) / 2 + 1;
    sin_mk_.resize(bins);
    cos_mk_.resize(bins);
    sin_k_.resize(bins);
    cos_k_.resize(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const double half_wk = kPi * double(k) / double(fft_size);
      sin_mk_[k] = std::sin(double(m_) * half_wk);
      cos_mk_[k] = std::cos(double(m_) * half_wk);
      sin_k_[k] = std::sin(half_wk);
      cos_k_[k] = std::cos(half_wk);
    }
  }

  int fft_size() const { return n_; }

  // Adds  amp * (e^{+j phase} W(w_k - w0) + e^{-j phase} W(w_k + w0))  to the
  // one-sided accumulator (size N/2 + 1).
  void accumulate(std::span<std::complex<double>> acc, double w0, double amp,
                  double phase) const {
    const std::complex<double> rot_pos = amp * std::polar(1.0, phase);
    const std::complex<double> rot_neg = amp * std::polar(1.0, -phase);
    for (std::size_t t = 0; t < coeffs_.size(); ++t) {
      const double c = coeffs_[t];
      // W(w - w0) needs D at offsets -w0 +- d_t; W(w + w0) at +w0 +- d_t.
      accumulate_offset(acc, -w0 - deltas_[t], c, rot_pos);
      accumulate_offset(acc, -w0 + deltas_[t], c, rot_pos);
      accumulate_offset(acc, w0 - deltas_[t], c, rot_neg);
      accumulate_offset(acc, w0 + deltas_[t], c, rot_neg);
    }
  }

 private:
  void accumulate_offset(std::span<std::complex<double>> acc, double offset,
                         double coeff, std::complex<double> rot) const {
    const double half = 0.5 * offset;
    const double sin_mo = std::sin(double(m_) * half);
    const double cos_mo = std::cos(double(m_) * half);
    const double sin_o = std::sin(half);
    const double cos_o = std::cos(half);
    const std::size_t bins = sin_k_.size();
    for (std::size_t k = 0; k < bins; ++k) {
      const double den = sin_k_[k] * cos_o + cos_k_[k] * sin_o;
      double d;
      if (std::abs(den) < 1e-12) {
        d = double(m_);  // D -> M at every multiple of 2 pi (M odd)
      } else {
        const double num = sin_mk_[k] * cos_mo + cos_mk_[k] * sin_mo;
        d = num / den;
      }
      acc[k] += rot * (coeff * d);
    }
  }

  int m_;
  int n_;
  double norm_;
  std::vector<double> coeffs_;
  std::vector<double> deltas_;
  std::vector<double> sin_mk_, cos_mk_, sin_k_, cos_k_;
};

}  // namespace detail

// One-sided spectrum (N/2 + 1 bins) of the windowed harmonic sum, exact on
// the bin grid up to rounding. Harmonics at or above Nyquist are rejected.
inline std::vector<std::complex<double>> synth_harmonic_spectrum(
    const HarmonicFrame& hf, const AnalysisConfig& cfg) {
  if (hf.freqs_hz.size() != hf.mags_db.size() || hf.freqs_hz.size() != hf.phases.size())
    throw std::invalid_argument("synth_harmonic_spectrum: ragged harmonic frame");
  std::vector<std::complex<double>> acc(std::size_t(cfg.fft_size) / 2 + 1,
                                        std::complex<double>(0.0, 0.0));
  const detail::WindowTransform wt(cfg.window_kind, cfg.window_size, cfg.fft_size);
  const double fs = double(cfg.sample_rate_hz);
  const double floor_lin = db_to_lin(cfg.mag_floor_db);
  for (std::size_t i = 0; i < hf.size(); ++i) {
    if (!(hf.freqs_hz[i] > 0.0) || hf.freqs_hz[i] >= fs / 2.0)
      throw std::invalid_argument("synth_harmonic_spectrum: harmonic outside (0, Nyquist)");
    const double amp = db_to_lin(hf.mags_db[i]);
    if (amp <= floor_lin) continue;  // floored slot: silent placeholder
    wt.accumulate(acc, kTwoPi * hf.freqs_hz[i] / fs, amp, hf.phases[i]);
  }
  return acc;
}

// Rebuild the one-sided complex spectrum of an analyzed frame from its
// stored magnitudes and phases.
inline std::vector<std::complex<double>> frame_spectrum(const SpectralFrame& frame) {
  std::vector<std::complex<double>> x(frame.mag_db.size());
  for (std::size_t k = 0; k < x.size(); ++k)
    x[k] = std::polar(db_to_lin(frame.mag_db[k]), frame.phase[k]);
  return x;
}

// Complex residual X - Yh on the one-sided bin grid.
inline std::vector<std::complex<double>> residual_spectrum(
    const SpectralFrame& frame, std::span<const std::complex<double>> harmonic) {
  if (harmonic.size() != frame.mag_db.size())
    throw std::invalid_argument("residual_spectrum: bin count mismatch");
  auto x = frame_spectrum(frame);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] -= harmonic[k];
  return x;
}

// Residual magnitudes in dB, floored.
inline ResidualFrame compute_residual(const SpectralFrame& frame,
                                      std::span<const std::complex<double>> harmonic,
                                      double floor_db = kMagFloorDb) {
  const auto r = residual_spectrum(frame, harmonic);
  ResidualFrame out;
  out.mag_db.resize(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) out.mag_db[k] = lin_to_db(std::abs(r[k]), floor_db);
  return out;
}

// Random-phase spectrum whose magnitude equals the given one-sided envelope
// (linear units per bin). Bins 0 and N/2 are real with a random sign; bins at
// or below the floor are exactly silent. Returns the full two-sided spectrum.
inline std::vector<std::complex<double>> synth_residual_spectrum(
    std::span<const double> env_db, Rng& rng, double floor_db = kMagFloorDb) {
  if (env_db.size() < 2) throw std::invalid_argument("synth_residual_spectrum: too few bins");
  const std::size_t half = env_db.size() - 1;
  const std::size_t n = 2 * half;
  if (!is_power_of_two(n))
    throw std::invalid_argument("synth_residual_spectrum: envelope must cover 2^k/2 + 1 bins");
  std::vector<std::complex<double>> spec(n, std::complex<double>(0.0, 0.0));
  for (std::size_t k = 0; k <= half; ++k) {
    const bool floored = env_db[k] <= floor_db + 1e-9;
    const double amp = floored ? 0.0 : db_to_lin(env_db[k]);
    if (k == 0 || k == half) {
      const double sign = (rng.uniform01() < 0.5) ? -1.0 : 1.0;
      spec[k] = amp * sign;
    } else {
      const double phi = rng.uniform(0.0, kTwoPi);
      spec[k] = std::polar(amp, phi);
      spec[n - k] = std::conj(spec[k]);
    }
  }
  return spec;
}

namespace detail {

// Real time frame of a full two-sided zero-phase spectrum, cut to the
// central `length` samples around the frame center.
inline std::vector<double> central_time_slice(std::vector<std::complex<double>> spec,
                                              int length, double scale) {
  const std::size_t n = spec.size();
  fft_inplace(spec, true);
  std::vector<double> out(std::size_t(length), 0.0);
  const int half = length / 2;
  for (int i = 0; i < length; ++i) {
    const long t = long(i) - long(half);
    const std::size_t idx = std::size_t((t + long(n)) % long(n));
    out[std::size_t(i)] = spec[idx].real() * scale;
  }
  return out;
}

inline std::vector<std::complex<double>> two_sided(std::span<const std::complex<double>> one_sided) {
  const std::size_t half = one_sided.size() - 1;
  const std::size_t n = 2 * half;
  std::vector<std::complex<double>> spec(n);
  spec[0] = one_sided[0];
  spec[half] = one_sided[half];
  for (std::size_t k = 1; k < half; ++k) {
    spec[k] = one_sided[k];
    spec[n - k] = std::conj(one_sided[k]);
  }
  return spec;
}

}  // namespace detail

// Mean power transmitted by the 50%-overlap Hann crossfade for statistically
// independent segments. Callers feeding residual segments into overlap_add
// divide by sqrt of this so noise levels stay unbiased; coherent (harmonic)
// segments pass through the crossfade at unit gain and need no compensation.
inline constexpr double kNoiseOlaPower = 0.75;

// Time-domain synthesis segment of one harmonic frame: inverse transform of
// the exact windowed spectrum with the analysis window divided back out over
// the central 2*hop samples.
inline std::vector<double> harmonic_time_segment(const HarmonicFrame& hf,
                                                 const AnalysisConfig& cfg) {
  const auto spec = detail::two_sided(synth_harmonic_spectrum(hf, cfg));
  const int length = 2 * cfg.hop_size;
  auto seg = detail::central_time_slice(std::move(spec), length, 1.0);
  const auto w = make_window(cfg.window_kind, cfg.window_size);
  const int wc = cfg.window_size / 2;
  for (int i = 0; i < length; ++i) {
    const int t = i - length / 2;
    seg[std::size_t(i)] /= w[std::size_t(wc + t)];
  }
  return seg;
}

// Time-domain synthesis segment of one residual envelope given in
// analysis-domain dB on the one-sided bin grid.
inline std::vector<double> residual_time_segment(std::span<const double> env_analysis_db,
                                                 const AnalysisConfig& cfg, Rng& rng) {
  if (env_analysis_db.size() != std::size_t(cfg.fft_size) / 2 + 1)
    throw std::invalid_argument("residual_time_segment: envelope must cover fft_size/2 + 1 bins");
  const auto w = make_window(cfg.window_kind, cfg.window_size);
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  const double calib_db = 10.0 * std::log10(w2);
  std::vector<double> env(env_analysis_db.size());
  for (std::size_t k = 0; k < env.size(); ++k) {
    const bool floored = env_analysis_db[k] <= cfg.mag_floor_db + 1e-9;
    env[k] = floored ? cfg.mag_floor_db : env_analysis_db[k] - calib_db;
  }
  auto spec = synth_residual_spectrum(env, rng, cfg.mag_floor_db);
  const double scale = std::sqrt(double(cfg.fft_size));
  return detail::central_time_slice(std::move(spec), 2 * cfg.hop_size, scale);
}

// Weighted overlap-add of equal-length segments at arbitrary non-decreasing
// sample offsets. Each segment is shaped by a periodic Hann and the output is
// normalized by the accumulated window sum (exact COLA in the interior when
// offsets step by half the segment length, gentle normalization at edges and
// across gaps).
inline std::vector<double> overlap_add_at(const std::vector<std::vector<double>>& segments,
                                          std::span<const long> offsets) {
  if (segments.empty()) return {};
  if (offsets.size() != segments.size())
    throw std::invalid_argument("overlap_add_at: one offset per segment required");
  const std::size_t len = segments[0].size();
  if (len < 2) throw std::invalid_argument("overlap_add_at: segments too short");
  for (const auto& s : segments)
    if (s.size() != len) throw std::invalid_argument("overlap_add_at: segment length mismatch");
  for (std::size_t i = 0; i < offsets.size(); ++i)
    if (offsets[i] < 0 || (i > 0 && offsets[i] < offsets[i - 1]))
      throw std::invalid_argument("overlap_add_at: offsets must be non-negative and sorted");

  const auto w = periodic_hann(int(len));
  const std::size_t total = std::size_t(offsets.back()) + len;
  std::vector<double> num(total, 0.0);
  std::vector<double> den(total, 0.0);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t base = std::size_t(offsets[i]);
    for (std::size_t j = 0; j < len; ++j) {
      num[base + j] += segments[i][j] * w[j];
      den[base + j] += w[j];
    }
  }
  for (std::size_t i = 0; i < total; ++i) num[i] = num[i] / std::max(den[i], 1e-8);
  return num;
}

// Fixed-hop convenience form of overlap_add_at.
inline std::vector<double> overlap_add(const std::vector<std::vector<double>>& segments,
                                       int hop) {
  if (segments.empty()) return {};
  if (hop < 1) throw std::invalid_argument("overlap_add: hop must be positive");
  std::vector<long> offsets(segments.size(), 0);
  for (std::size_t i = 0; i < segments.size(); ++i) offsets[i] = long(i) * hop;
  return overlap_add_at(segments, offsets);
}

}  // namespace hprvae
