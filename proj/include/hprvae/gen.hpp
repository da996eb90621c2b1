#pragma once

// Synthetic bowed-string note generator used to build test corpora.
//
// Source model: a 1/r partial series with slow vibrato and a shared
// bow-pressure wobble, plus white bow noise, both shaped by one fixed
// "body" filter bank (parallel biquad resonances over a weak direct path).
// Loud notes get more force and a brighter source (high shelf). Attacked
// notes start with a noisy, pitch-unstable transient. Nothing is normalized
// per note, so loudness differences survive into the files.
//
// Every filter is a biquad cascade/bank whose exact complex response is
// available, so the generator can report the true harmonic amplitudes and
// the true noise magnitude envelope it used; round-trip tests compare
// analysis output against those instead of against other DSP code.

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/dataset.hpp"
#include "hprvae/rng.hpp"
#include "hprvae/wav.hpp"

namespace hprvae {

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;  // already normalized by a0
  double a1 = 0.0, a2 = 0.0;

  static Biquad bandpass(double freq_hz, double q, double fs) {
    const double w0 = kTwoPi * freq_hz / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad f;
    f.b0 = alpha / a0;
    f.b1 = 0.0;
    f.b2 = -alpha / a0;
    f.a1 = -2.0 * std::cos(w0) / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }

  static Biquad high_shelf(double freq_hz, double gain_db, double fs, double slope = 1.0) {
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = kTwoPi * freq_hz / fs;
    const double cw = std::cos(w0);
    const double alpha = std::sin(w0) / 2.0 * std::sqrt((a + 1.0 / a) * (1.0 / slope - 1.0) + 2.0);
    const double two_sqrt_a_alpha = 2.0 * std::sqrt(a) * alpha;
    const double a0 = (a + 1.0) - (a - 1.0) * cw + two_sqrt_a_alpha;
    Biquad f;
    f.b0 = a * ((a + 1.0) + (a - 1.0) * cw + two_sqrt_a_alpha) / a0;
    f.b1 = -2.0 * a * ((a - 1.0) + (a + 1.0) * cw) / a0;
    f.b2 = a * ((a + 1.0) + (a - 1.0) * cw - two_sqrt_a_alpha) / a0;
    f.a1 = 2.0 * ((a - 1.0) - (a + 1.0) * cw) / a0;
    f.a2 = ((a + 1.0) - (a - 1.0) * cw - two_sqrt_a_alpha) / a0;
    return f;
  }

  std::complex<double> response(double freq_hz, double fs) const {
    const std::complex<double> z1 = std::polar(1.0, -kTwoPi * freq_hz / fs);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }

  void process(std::span<const double> x, std::span<double> y) const {
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double v = b0 * x[n] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x[n];
      y2 = y1;
      y1 = v;
      y[n] = v;
    }
  }
};

// Parallel resonance bank over a weak direct path.
struct BodyFilter {
  struct Mode {
    Biquad biquad;
    double gain = 1.0;
  };
  std::vector<Mode> modes;
  double direct_gain = 0.0316;  // ~ -30 dB
  double fs = 44100.0;

  std::complex<double> response(double freq_hz) const {
    std::complex<double> h = direct_gain;
    for (const auto& m : modes) h += m.gain * m.biquad.response(freq_hz, fs);
    return h;
  }

  double gain_at(double freq_hz) const { return std::abs(response(freq_hz)); }

  std::vector<double> process(std::span<const double> x) const {
    std::vector<double> acc(x.size(), 0.0);
    std::vector<double> tmp(x.size(), 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = direct_gain * x[i];
    for (const auto& m : modes) {
      m.biquad.process(x, tmp);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.gain * tmp[i];
    }
    return acc;
  }
};

// Eight sharp resonances, log-spaced with jitter between 280 Hz and 8 kHz.
// Sharp Q makes the sampled envelope vary strongly from note to note, which
// is what couples pitch to timbre in this corpus.
inline BodyFilter make_body_filter(std::uint64_t seed, double fs = 44100.0) {
  Rng rng(derive_seed(seed, 0xb0d7));
  BodyFilter body;
  body.fs = fs;
  const int n_modes = 8;
  for (int i = 0; i < n_modes; ++i) {
    const double log_lo = std::log(280.0);
    const double log_hi = std::log(8000.0);
    const double center =
        std::exp(log_lo + (log_hi - log_lo) * (double(i) + 0.5) / double(n_modes));
    const double freq = center * (1.0 + rng.uniform(-0.08, 0.08));
    const double q = rng.uniform(20.0, 80.0);
    const double gain = rng.uniform(0.6, 1.5) * std::pow(280.0 / freq, 0.15);
    body.modes.push_back({Biquad::bandpass(freq, q, fs), gain});
  }
  return body;
}

// Exact per-note synthesis report: the stationary amplitudes and shaping
// gains that generated the sustain portion.
struct NoteTruth {
  double f0_hz = 0.0;
  std::vector<double> harm_freqs_hz;
  std::vector<double> harm_amps;  // linear sinusoid amplitudes in the sustain
  double noise_sigma = 0.0;       // white source RMS before shaping
  BodyFilter body;
  bool has_shelf = false;
  Biquad shelf;

  // True magnitude envelope of the shaped noise at freq, as source-domain
  // sqrt-PSD in dB: 20 log10(sigma * |H(f)|).
  double noise_env_db(double freq_hz) const {
    double g = body.gain_at(freq_hz);
    if (has_shelf) g *= std::abs(shelf.response(freq_hz, body.fs));
    return 20.0 * std::log10(std::max(noise_sigma * g, 1e-15));
  }
};

struct GenParams {
  double duration_s = 2.5;
  double tonic_hz = kDefaultTonicHz;
  double fs = 44100.0;
  double force_soft = 0.08;       // loud doubles this
  double noise_ratio = 0.05;      // bow noise RMS relative to force
  double shelf_freq_hz = 1500.0;  // loud-note brightness shelf
  double shelf_gain_db = 4.0;
  double vibrato_cents_lo = 4.0, vibrato_cents_hi = 8.0;
  double vibrato_rate_lo = 4.5, vibrato_rate_hi = 5.5;
  double wobble_db = 0.8;         // shared bow-pressure AM depth
  double attack_s = 0.15;
  double fade_s = 0.010;
};

struct GeneratedNote {
  NoteRecord record;
  NoteTruth truth;
  std::vector<double> harmonic_part;  // record.samples minus the bow noise
  std::vector<double> noise_part;
};

// Deterministic synthesis of one note. The same (meta, body, seed, params)
// always produces identical samples.
inline GeneratedNote synth_note(const NoteMeta& meta, const BodyFilter& body,
                                std::uint64_t seed, const GenParams& params = {}) {
  Rng rng(seed);
  const double fs = params.fs;
  const long total = long(std::llround(params.duration_s * fs));
  if (total < long(fs) / 4) throw std::invalid_argument("synth_note: duration too short");

  const double f0 = note_frequency(meta, params.tonic_hz);
  const bool loud = meta.loudness == Loudness::loud;
  const double force =
      (loud ? 2.0 : 1.0) * params.force_soft * db_to_lin(rng.uniform(-0.5, 0.5));

  Biquad shelf = Biquad::high_shelf(params.shelf_freq_hz, params.shelf_gain_db, fs);

  // Partial amplitudes: 1/r rolloff through the body (and shelf when loud),
  // sampled at the nominal harmonic frequencies.
  const int max_r = std::min(60, int(std::floor(0.45 * fs / f0)));
  std::vector<double> amps, freqs, phases;
  for (int r = 1; r <= max_r; ++r) {
    const double fr = f0 * double(r);
    double a = force / double(r) * body.gain_at(fr);
    if (loud) a *= std::abs(shelf.response(fr, fs));
    amps.push_back(a);
    freqs.push_back(fr);
    phases.push_back(rng.uniform(0.0, kTwoPi));
  }

  const double vib_cents = rng.uniform(params.vibrato_cents_lo, params.vibrato_cents_hi);
  const double vib_rate = rng.uniform(params.vibrato_rate_lo, params.vibrato_rate_hi);
  const double vib_phase = rng.uniform(0.0, kTwoPi);
  const double am_rate = rng.uniform(0.4, 0.8);
  const double am_phase = rng.uniform(0.0, kTwoPi);

  // Octave-dependent bow-noise emphasis.
  double noise_emph = 1.0;
  if (meta.octave == Octave::upper) noise_emph = 1.6;
  if (meta.octave == Octave::lower) noise_emph = 0.8;
  const double sigma = params.noise_ratio * force * noise_emph;

  const bool attacked = meta.style == Style::attacked;

  // White bow noise, shaped.
  std::vector<double> white(std::size_t(total), 0.0);
  for (auto& v : white) v = sigma * rng.normal();
  std::vector<double> noise = body.process(white);
  if (loud) {
    std::vector<double> tmp(noise.size(), 0.0);
    shelf.process(noise, tmp);
    noise.swap(tmp);
  }

  std::vector<double> out(std::size_t(total), 0.0);
  std::vector<double> harm_part(std::size_t(total), 0.0);
  std::vector<double> noise_part(std::size_t(total), 0.0);
  double base_phase = 0.0;
  for (long n = 0; n < total; ++n) {
    const double t = double(n) / fs;
    const double vib = vib_cents * std::sin(kTwoPi * vib_rate * t + vib_phase);
    double inst_cents = vib;
    double harm_gate = 1.0;
    double noise_gate = 1.0;
    if (attacked && t < params.attack_s) {
      // Pitch-unstable, noise-heavy transient.
      inst_cents += 220.0 * (1.0 - t / params.attack_s) *
                    std::sin(kTwoPi * 23.0 * t + 1.3);
      harm_gate = 0.5 * (1.0 - std::cos(kPi * t / params.attack_s));
      noise_gate = 1.0 + 5.0 * std::exp(-t / 0.04);
    }
    const double f_inst = f0 * std::pow(2.0, inst_cents / 1200.0);
    base_phase += kTwoPi * f_inst / fs;
    const double wobble = db_to_lin(params.wobble_db * std::sin(kTwoPi * am_rate * t + am_phase));

    double harm = 0.0;
    for (std::size_t r = 0; r < amps.size(); ++r)
      harm += amps[r] * std::cos(double(r + 1) * base_phase + phases[r]);

    harm_part[std::size_t(n)] = wobble * harm_gate * harm;
    noise_part[std::size_t(n)] = wobble * noise_gate * noise[std::size_t(n)];
    out[std::size_t(n)] = harm_part[std::size_t(n)] + noise_part[std::size_t(n)];
  }

  // Click-free edges.
  const long fade = long(params.fade_s * fs);
  for (long n = 0; n < fade && n < total; ++n) {
    const double g = 0.5 * (1.0 - std::cos(kPi * double(n) / double(fade)));
    for (auto* v : {&out, &harm_part, &noise_part}) {
      (*v)[std::size_t(n)] *= g;
      (*v)[std::size_t(total - 1 - n)] *= g;
    }
  }

  GeneratedNote gen;
  gen.record.meta = meta;
  gen.record.note_id = note_stem(format_note_filename(meta));
  gen.record.samples = std::move(out);
  gen.record.sample_rate_hz = int(fs);
  gen.truth.f0_hz = f0;
  gen.truth.harm_freqs_hz = std::move(freqs);
  gen.truth.harm_amps = std::move(amps);
  gen.truth.noise_sigma = sigma;
  gen.truth.body = body;
  gen.truth.has_shelf = loud;
  gen.truth.shelf = shelf;
  gen.harmonic_part = std::move(harm_part);
  gen.noise_part = std::move(noise_part);
  return gen;
}

struct CorpusSpec {
  std::vector<NoteName> notes;        // empty = all 12
  std::vector<Octave> octaves{Octave::middle};
  std::vector<Style> styles{Style::smooth};
  std::vector<Loudness> loudnesses{Loudness::soft, Loudness::loud};
  int instances = 2;
  double duration_lo_s = 2.0;
  double duration_hi_s = 3.0;
  double tonic_hz = kDefaultTonicHz;
  double sample_rate_hz = 44100.0;
  std::uint64_t seed = 12345;
};

struct CorpusEntry {
  std::string filename;
  NoteMeta meta;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
};

inline std::string corpus_manifest_header() {
  return "filename,index,octave,svara,style,loudness,duration_s,seed";
}

inline void write_corpus_manifest(const std::string& path,
                                  const std::vector<CorpusEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << corpus_manifest_header() << "\n";
  char buf[32];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.9g", e.duration_s);
    out << e.filename << "," << e.meta.index << "," << to_string(e.meta.octave) << ","
        << to_string(e.meta.note) << "," << to_string(e.meta.style) << ","
        << to_string(e.meta.loudness) << "," << buf << "," << e.seed << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

// Synthesize every combination in the spec into out_dir (WAV files plus a
// manifest.csv). One body filter, derived from the corpus seed, is shared by
// all notes. Returns the manifest entries in generation order.
inline std::vector<CorpusEntry> build_corpus(const CorpusSpec& spec,
                                             const std::string& out_dir) {
  std::vector<NoteName> notes = spec.notes;
  if (notes.empty())
    for (int i = 0; i < kNumSvara; ++i) notes.push_back(NoteName(i));
  if (spec.instances < 1) throw std::invalid_argument("build_corpus: instances must be >= 1");
  if (!(spec.duration_lo_s > 0.3) || spec.duration_hi_s < spec.duration_lo_s)
    throw std::invalid_argument("build_corpus: bad duration range");

  std::filesystem::create_directories(out_dir);
  const BodyFilter body = make_body_filter(spec.seed, spec.sample_rate_hz);

  std::vector<CorpusEntry> entries;
  int index = 1;
  for (const Octave octave : spec.octaves)
    for (const NoteName note : notes)
      for (const Style style : spec.styles)
        for (const Loudness loudness : spec.loudnesses)
          for (int inst = 0; inst < spec.instances; ++inst, ++index) {
            NoteMeta meta;
            meta.index = index;
            meta.octave = octave;
            meta.note = note;
            meta.style = style;
            meta.loudness = loudness;

            const std::uint64_t note_seed = derive_seed(spec.seed, std::uint64_t(index));
            Rng dur_rng(derive_seed(note_seed, 0xd0));
            GenParams params;
            params.duration_s =
                std::round(dur_rng.uniform(spec.duration_lo_s, spec.duration_hi_s) * 1000.0) /
                1000.0;
            params.tonic_hz = spec.tonic_hz;
            params.fs = spec.sample_rate_hz;

            const auto gen = synth_note(meta, body, note_seed, params);
            const std::string filename = format_note_filename(meta);
            write_wav((std::filesystem::path(out_dir) / filename).string(),
                      gen.record.samples, int(spec.sample_rate_hz));
            entries.push_back({filename, meta, params.duration_s, note_seed});
          }

  write_corpus_manifest((std::filesystem::path(out_dir) / "manifest.csv").string(), entries);
  return entries;
}

}  // namespace hprvae
