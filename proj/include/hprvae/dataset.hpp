#pragma once

// Note metadata grammar, filename parsing, pitch mapping and sustain
// segmentation.
//
// A note is named by svara (12 per octave), octave register (L/M/U), playing
// style (Sm smooth, At attacked) and loudness (So soft, Lo loud). Filenames
// follow  <index>_<octave>_<svara>_<style>_<loudness>.wav  with a zero-padded
// two-digit minimum index, e.g. 02_M_Sa_Sm_So.wav.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/features.hpp"
#include "hprvae/rng.hpp"
#include "hprvae/spectral.hpp"
#include "hprvae/twm.hpp"
#include "hprvae/window.hpp"

namespace hprvae {

enum class NoteName { Sa, Ri1, Ri2, Ga2, Ga3, Ma1, Ma2, Pa, Da1, Da2, Ni2, Ni3 };
enum class Octave { lower, middle, upper };
enum class Style { smooth, attacked };
enum class Loudness { soft, loud };

inline constexpr int kNumSvara = 12;
inline constexpr double kDefaultTonicHz = 328.0;

inline const char* to_string(NoteName n) {
  static const char* names[kNumSvara] = {"Sa",  "Ri1", "Ri2", "Ga2", "Ga3", "Ma1",
                                         "Ma2", "Pa",  "Da1", "Da2", "Ni2", "Ni3"};
  return names[int(n)];
}

inline const char* to_string(Octave o) {
  switch (o) {
    case Octave::lower: return "L";
    case Octave::middle: return "M";
    case Octave::upper: return "U";
  }
  throw std::invalid_argument("unknown octave");
}

inline const char* to_string(Style s) { return s == Style::smooth ? "Sm" : "At"; }
inline const char* to_string(Loudness l) { return l == Loudness::soft ? "So" : "Lo"; }

inline NoteName note_name_from_string(const std::string& s) {
  for (int i = 0; i < kNumSvara; ++i)
    if (s == to_string(NoteName(i))) return NoteName(i);
  throw DataError("unknown svara: " + s);
}

inline Octave octave_from_string(const std::string& s) {
  if (s == "L") return Octave::lower;
  if (s == "M") return Octave::middle;
  if (s == "U") return Octave::upper;
  throw DataError("unknown octave: " + s);
}

inline Style style_from_string(const std::string& s) {
  if (s == "Sm") return Style::smooth;
  if (s == "At") return Style::attacked;
  throw DataError("unknown style: " + s);
}

inline Loudness loudness_from_string(const std::string& s) {
  if (s == "So") return Loudness::soft;
  if (s == "Lo") return Loudness::loud;
  throw DataError("unknown loudness: " + s);
}

struct NoteMeta {
  int index = 0;
  Octave octave = Octave::middle;
  NoteName note = NoteName::Sa;
  Style style = Style::smooth;
  Loudness loudness = Loudness::soft;
};

inline int semitone_of(NoteName n) { return int(n); }

inline int octave_shift(Octave o) {
  switch (o) {
    case Octave::lower: return -1;
    case Octave::middle: return 0;
    case Octave::upper: return 1;
  }
  throw std::invalid_argument("unknown octave");
}

// Equal-tempered pitch relative to the tonic.
inline double note_frequency(const NoteMeta& meta, double tonic_hz = kDefaultTonicHz) {
  if (!(tonic_hz > 0.0)) throw std::invalid_argument("note_frequency: tonic must be positive");
  return tonic_hz * std::pow(2.0, double(semitone_of(meta.note)) / 12.0 +
                                      double(octave_shift(meta.octave)));
}

inline std::string format_note_filename(const NoteMeta& meta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02d_%s_%s_%s_%s.wav", meta.index,
                to_string(meta.octave), to_string(meta.note), to_string(meta.style),
                to_string(meta.loudness));
  return buf;
}

// Stem without directory or .wav suffix; used as the note id everywhere.
inline std::string note_stem(const std::string& filename) {
  std::string stem = filename;
  const auto slash = stem.find_last_of("/\\");
  if (slash != std::string::npos) stem = stem.substr(slash + 1);
  if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".wav")
    stem = stem.substr(0, stem.size() - 4);
  return stem;
}

inline NoteMeta parse_note_filename(const std::string& filename) {
  const std::string stem = note_stem(filename);
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto us = stem.find('_', start);
    if (us == std::string::npos) {
      parts.push_back(stem.substr(start));
      break;
    }
    parts.push_back(stem.substr(start, us - start));
    start = us + 1;
  }
  if (parts.size() != 5)
    throw DataError("bad note filename (want index_octave_svara_style_loudness): " + filename);
  NoteMeta meta;
  if (parts[0].empty() || parts[0].find_first_not_of("0123456789") != std::string::npos)
    throw DataError("bad note index in filename: " + filename);
  meta.index = std::stoi(parts[0]);
  meta.octave = octave_from_string(parts[1]);
  meta.note = note_name_from_string(parts[2]);
  meta.style = style_from_string(parts[3]);
  meta.loudness = loudness_from_string(parts[4]);
  return meta;
}

struct NoteRecord {
  NoteMeta meta;
  std::string note_id;
  std::vector<double> samples;
  int sample_rate_hz = 44100;
  long sustain_start = 0;  // filled by segmentation
  long sustain_end = 0;
};

// Sustained region of a note: the longest run of analysis frames that are
// within 12 dB of the loudest frame, carry a trackable f0, and stay within
// one semitone of the run's median f0. The span runs between the first and
// last qualifying frame centers. Throws SegmentationError when nothing
// qualifies.
inline std::pair<long, long> segment_sustain(std::span<const double> samples,
                                             const AnalysisConfig& cfg) {
  cfg.validate();
  const int half_win = cfg.window_size / 2;
  if (long(samples.size()) < long(cfg.window_size))
    throw SegmentationError("segment_sustain: signal shorter than one window");

  const auto window = make_window(cfg.window_kind, cfg.window_size);
  const double fs = double(cfg.sample_rate_hz);

  struct FrameInfo {
    long center;
    double rms;
    std::optional<double> f0;
  };
  std::vector<FrameInfo> frames;
  std::optional<double> prev;
  for (long center = half_win; center + half_win < long(samples.size());
       center += cfg.hop_size) {
    std::span<const double> slice(samples.data() + center - half_win,
                                  std::size_t(cfg.window_size));
    double acc = 0.0;
    for (double v : slice) acc += v * v;
    FrameInfo info;
    info.center = center;
    info.rms = std::sqrt(acc / double(cfg.window_size));
    const auto frame = dft_frame(slice, window, cfg.fft_size, cfg.mag_floor_db, center);
    const auto peaks = detect_peaks(frame, cfg.peak_threshold_db, fs);
    info.f0 = twm_f0(peaks, cfg, prev);
    if (info.f0) prev = info.f0;
    frames.push_back(info);
  }
  if (frames.empty()) throw SegmentationError("segment_sustain: no analysis frames fit");

  double max_rms = 0.0;
  for (const auto& f : frames) max_rms = std::max(max_rms, f.rms);
  const double rms_floor = max_rms * db_to_lin(-12.0);

  auto qualifies = [&](const FrameInfo& f) { return f.f0.has_value() && f.rms >= rms_floor; };

  long best_lo = -1, best_hi = -1;  // frame index range, inclusive
  for (std::size_t i = 0; i < frames.size();) {
    if (!qualifies(frames[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < frames.size() && qualifies(frames[j + 1])) ++j;

    // Median f0 of the run, then the longest sub-run within one semitone.
    std::vector<double> f0s;
    for (std::size_t k = i; k <= j; ++k) f0s.push_back(*frames[k].f0);
    std::sort(f0s.begin(), f0s.end());
    const double median = f0s[f0s.size() / 2];
    std::size_t k = i;
    while (k <= j) {
      if (std::abs(cents_between(*frames[k].f0, median)) > 100.0) {
        ++k;
        continue;
      }
      std::size_t e = k;
      while (e + 1 <= j && std::abs(cents_between(*frames[e + 1].f0, median)) <= 100.0) ++e;
      if (best_lo < 0 || long(e - k) > best_hi - best_lo) {
        best_lo = long(k);
        best_hi = long(e);
      }
      k = e + 1;
    }
    i = j + 1;
  }

  if (best_lo < 0) throw SegmentationError("segment_sustain: no sustained region found");
  return {frames[std::size_t(best_lo)].center, frames[std::size_t(best_hi)].center};
}

// Frame split specification for model training.
struct SplitSpec {
  double train_fraction = 0.5;
  std::uint64_t seed = 1;
  enum class Unit { frame, instance } unit = Unit::frame;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Deterministic train/test partition of feature rows. Frame unit shuffles
// rows individually; instance unit keeps each note's frames together and
// shuffles the notes.
inline SplitIndices make_split(const FeatureTable& rows, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0))
    throw std::invalid_argument("make_split: train_fraction must be inside (0, 1)");
  Rng rng(spec.seed);
  SplitIndices out;
  if (spec.unit == SplitSpec::Unit::frame) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_train = std::size_t(std::llround(spec.train_fraction * double(rows.size())));
    out.train.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
    out.test.assign(order.begin() + std::ptrdiff_t(n_train), order.end());
  } else {
    std::vector<std::string> ids;
    for (const auto& row : rows)
      if (std::find(ids.begin(), ids.end(), row.note_id) == ids.end())
        ids.push_back(row.note_id);
    rng.shuffle(ids);
    const std::size_t n_train_ids =
        std::size_t(std::llround(spec.train_fraction * double(ids.size())));
    std::vector<std::string> train_ids(ids.begin(), ids.begin() + std::ptrdiff_t(n_train_ids));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const bool in_train = std::find(train_ids.begin(), train_ids.end(), rows[i].note_id) !=
                            train_ids.end();
      (in_train ? out.train : out.test).push_back(i);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace hprvae
