#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hprvae/dataset.hpp"
#include "hprvae/envelope.hpp"
#include "hprvae/features.hpp"
#include "hprvae/hpr.hpp"
#include "hprvae/rng.hpp"
#include "hprvae/spectral.hpp"
#include "hprvae/twm.hpp"

namespace hprvae {

struct AnalyzedFrame {
  long center_sample = 0;
  HarmonicFrame harm;
  ResidualFrame residual;
  CepstralEnvelope env_h;  // order chosen per f0
  CepstralEnvelope env_r;  // fixed residual order
  int tae_iters_h = 0;
  int tae_iters_r = 0;
};

struct NoteAnalysis {
  std::string note_id;
  long sustain_start = 0;
  long sustain_end = 0;
  std::vector<AnalyzedFrame> frames;
  std::vector<long> skipped_centers;  // sustain grid points with no trackable f0
};

// Full per-note analysis: sustain segmentation, then per frame the windowed
// spectrum, pitch track with continuity, harmonic matching, residual
// spectrum, and both cepstral envelopes.
inline NoteAnalysis analyze_note(const NoteRecord& rec, const AnalysisConfig& cfg) {
  cfg.validate();
  if (rec.sample_rate_hz != cfg.sample_rate_hz)
    throw DataError("analyze_note: sample rate mismatch for " + rec.note_id);

  const auto span = segment_sustain(rec.samples, cfg);
  NoteAnalysis na;
  na.note_id = rec.note_id;
  na.sustain_start = span.first;
  na.sustain_end = span.second;

  const auto window = make_window(cfg.window_kind, cfg.window_size);
  const int half = cfg.window_size / 2;
  const double fs = double(cfg.sample_rate_hz);
  std::optional<double> prev;

  for (long center = span.first; center <= span.second; center += cfg.hop_size) {
    std::span<const double> slice(rec.samples.data() + (center - half),
                                  std::size_t(cfg.window_size));
    const auto frame = dft_frame(slice, window, cfg.fft_size, cfg.mag_floor_db, center);
    const auto peaks = detect_peaks(frame, cfg.peak_threshold_db, fs);
    const auto f0 = twm_f0(peaks, cfg, prev);
    if (!f0) {
      na.skipped_centers.push_back(center);
      continue;
    }
    prev = f0;

    AnalyzedFrame af;
    af.center_sample = center;
    af.harm = match_harmonics(peaks, frame, *f0, cfg);
    const auto yh = synth_harmonic_spectrum(af.harm, cfg);
    af.residual = compute_residual(frame, yh, cfg.mag_floor_db);

    const auto tae_h = tae_fit(harmonic_samples(af.harm), choose_K_harmonic(*f0, fs), fs);
    af.env_h = tae_h.envelope;
    af.tae_iters_h = tae_h.iterations;

    const auto res_samples = subsample_residual(af.residual.mag_db, kResidualStepHz, fs);
    const auto tae_r = tae_fit(res_samples, kResidualOrder, fs);
    af.env_r = tae_r.envelope;
    af.tae_iters_r = tae_r.iterations;

    na.frames.push_back(std::move(af));
  }
  if (na.frames.empty())
    throw SegmentationError("analyze_note: no trackable frames in sustain of " + rec.note_id);
  return na;
}

inline FeatureTable to_features(const NoteAnalysis& na) {
  FeatureTable rows;
  int idx = 0;
  for (const auto& f : na.frames)
    rows.push_back(make_frame_features(na.note_id, idx++, f.harm.f0_hz, f.env_h, f.env_r));
  return rows;
}

struct ResynthesisResult {
  std::vector<double> samples;   // harmonic + residual, aligned at start_sample
  std::vector<double> harmonic;  // harmonic part alone
  std::vector<double> residual;  // shaped-noise part alone
  long start_sample = 0;
};

// Resynthesis from the parametric representation: per frame, harmonics are
// given envelope-sampled amplitudes at their measured frequencies and phases;
// the residual is random-phase noise shaped by its envelope (compensated for
// the crossfade power loss). When cc_h/cc_r are given (one column per frame)
// they replace the stored envelopes, which is the network-reconstruction
// path; passing nullptr keeps the analysis envelopes (pass-through path).
inline ResynthesisResult resynthesize(const NoteAnalysis& na, const AnalysisConfig& cfg,
                                      std::uint64_t seed,
                                      const Eigen::MatrixXd* cc_h = nullptr,
                                      const Eigen::MatrixXd* cc_r = nullptr) {
  cfg.validate();
  const std::size_t nf = na.frames.size();
  if (nf == 0) throw std::invalid_argument("resynthesize: no frames");
  if (cc_h && std::size_t(cc_h->cols()) != nf)
    throw std::invalid_argument("resynthesize: cc_h column count mismatch");
  if (cc_r && std::size_t(cc_r->cols()) != nf)
    throw std::invalid_argument("resynthesize: cc_r column count mismatch");

  const double fs = double(cfg.sample_rate_hz);
  Rng rng(derive_seed(seed, 0x0e51d0a1));

  std::vector<double> bin_freqs(std::size_t(cfg.fft_size) / 2 + 1, 0.0);
  for (std::size_t k = 0; k < bin_freqs.size(); ++k)
    bin_freqs[k] = double(k) * fs / double(cfg.fft_size);

  auto column_env = [](const Eigen::MatrixXd& m, std::size_t col) {
    CepstralEnvelope env;
    env.coeffs.assign(m.col(Eigen::Index(col)).data(),
                      m.col(Eigen::Index(col)).data() + m.rows());
    return env;
  };

  std::vector<std::vector<double>> harm_segments, noise_segments;
  std::vector<long> offsets;
  const double noise_comp = 1.0 / std::sqrt(kNoiseOlaPower);
  for (std::size_t i = 0; i < nf; ++i) {
    const auto& af = na.frames[i];
    const CepstralEnvelope env_h = cc_h ? column_env(*cc_h, i) : af.env_h;
    const CepstralEnvelope env_r = cc_r ? column_env(*cc_r, i) : af.env_r;

    HarmonicFrame hf;
    hf.f0_hz = af.harm.f0_hz;
    hf.freqs_hz = af.harm.freqs_hz;
    hf.phases = af.harm.phases;
    hf.mags_db = envelope_eval(env_h, hf.freqs_hz, fs);
    harm_segments.push_back(harmonic_time_segment(hf, cfg));

    const auto env_bins = envelope_eval(env_r, bin_freqs, fs);
    auto noise_seg = residual_time_segment(env_bins, cfg, rng);
    for (double& v : noise_seg) v *= noise_comp;
    noise_segments.push_back(std::move(noise_seg));

    offsets.push_back(af.center_sample - na.frames[0].center_sample);
  }

  ResynthesisResult out;
  out.harmonic = overlap_add_at(harm_segments, offsets);
  out.residual = overlap_add_at(noise_segments, offsets);
  out.samples.resize(out.harmonic.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = out.harmonic[i] + out.residual[i];
  out.start_sample = na.frames[0].center_sample - cfg.hop_size;
  return out;
}

// Signal-to-noise ratio of an estimate against a reference, in dB.
inline double snr_db(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size() || reference.empty())
    throw std::invalid_argument("snr_db: size mismatch");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    sig += reference[i] * reference[i];
    const double d = reference[i] - estimate[i];
    err += d * d;
  }
  if (err == 0.0) return 300.0;  // exact match, report a finite ceiling
  return 10.0 * std::log10(sig / err);
}

}  // namespace hprvae
