#pragma once

// Two-way mismatch fundamental estimation over detected spectral peaks.
// Candidates are the peak frequencies and their integer submultiples inside
// the search band; the candidate with the lowest mismatch error wins, with a
// log-frequency continuity penalty toward the previous frame's estimate.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/spectral.hpp"

namespace hprvae {

struct TwmParams {
  double p = 0.5;   // frequency-distance exponent
  double q = 1.4;   // distance scale
  double r = 0.5;   // magnitude-factor weight
  double rho = 0.33;  // measured-to-predicted term weight
  int max_partials = 10;
  double continuity_weight = 0.5;
};

// Mismatch error for one candidate f0. Both directions use up to
// min(max_partials, #peaks) terms; with a fixed partial count, series
// shorter than max_partials would bias the error toward submultiples.
inline double twm_error(std::span<const Peak> peaks, double f0,
                        const TwmParams& params = {}) {
  if (peaks.empty()) throw std::invalid_argument("twm_error: no peaks");
  if (!(f0 > 0.0)) throw std::invalid_argument("twm_error: f0 must be positive");

  double a_max = peaks[0].mag_db;
  for (const auto& pk : peaks) a_max = std::max(a_max, pk.mag_db);

  const int n_terms = std::min<int>(params.max_partials, int(peaks.size()));

  // Predicted-to-measured: each predicted harmonic seeks its nearest peak.
  double err_pm = 0.0;
  for (int h = 1; h <= n_terms; ++h) {
    const double fh = f0 * double(h);
    double best_df = std::abs(peaks[0].freq_hz - fh);
    double best_mag = peaks[0].mag_db;
    for (const auto& pk : peaks) {
      const double df = std::abs(pk.freq_hz - fh);
      if (df < best_df) {
        best_df = df;
        best_mag = pk.mag_db;
      }
    }
    const double fpow = std::pow(fh, -params.p);
    const double mag_factor = std::pow(10.0, (best_mag - a_max) / 20.0);
    err_pm += best_df * fpow + mag_factor * (params.q * best_df * fpow - params.r);
  }

  // Measured-to-predicted: each of the strongest peaks seeks the nearest
  // predicted harmonic.
  std::vector<std::size_t> order(peaks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return peaks[a].mag_db > peaks[b].mag_db;
  });

  double err_mp = 0.0;
  for (int i = 0; i < n_terms; ++i) {
    const auto& pk = peaks[order[std::size_t(i)]];
    const double harm = std::max(1.0, std::round(pk.freq_hz / f0));
    const double df = std::abs(pk.freq_hz - harm * f0);
    const double fpow = std::pow(pk.freq_hz, -params.p);
    const double mag_factor = std::pow(10.0, (pk.mag_db - a_max) / 20.0);
    err_mp += df * fpow + mag_factor * (params.q * df * fpow - params.r);
  }

  return err_pm / double(n_terms) + params.rho * err_mp / double(n_terms);
}

// Candidate grid: every peak frequency and its integer submultiples that land
// inside [f0_min, f0_max].
inline std::vector<double> twm_candidates(std::span<const Peak> peaks, double f0_min,
                                          double f0_max) {
  std::vector<double> cands;
  for (const auto& pk : peaks) {
    for (int div = 1; div <= 10; ++div) {
      const double c = pk.freq_hz / double(div);
      if (c < f0_min * 0.999) break;
      if (c >= f0_min && c <= f0_max) cands.push_back(c);
    }
  }
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-6 * a; }),
              cands.end());
  return cands;
}

// Best f0 in [f0_min, f0_max], or nullopt when there are no peaks, no
// candidates, or the winning error exceeds error_max. prev_f0 adds
// continuity_weight * |log2(candidate / prev_f0)| to each candidate.
inline std::optional<double> twm_f0(std::span<const Peak> peaks, double f0_min,
                                    double f0_max, std::optional<double> prev_f0,
                                    double error_max, const TwmParams& params = {}) {
  if (!(f0_min > 0.0) || !(f0_max > f0_min))
    throw std::invalid_argument("twm_f0: need 0 < f0_min < f0_max");
  if (peaks.empty()) return std::nullopt;

  const auto cands = twm_candidates(peaks, f0_min, f0_max);
  double best_err = 0.0;
  double best_f0 = -1.0;
  for (const double c : cands) {
    double err = twm_error(peaks, c, params);
    if (prev_f0) err += params.continuity_weight * std::abs(std::log2(c / *prev_f0));
    if (best_f0 < 0.0 || err < best_err) {
      best_err = err;
      best_f0 = c;
    }
  }
  if (best_f0 < 0.0 || best_err > error_max) return std::nullopt;
  return best_f0;
}

inline std::optional<double> twm_f0(std::span<const Peak> peaks, const AnalysisConfig& cfg,
                                    std::optional<double> prev_f0 = std::nullopt) {
  TwmParams params;
  return twm_f0(peaks, cfg.f0_min_hz, cfg.f0_max_hz, prev_f0, cfg.twm_error_max, params);
}

}  // namespace hprvae
