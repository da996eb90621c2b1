#pragma once

// Per-frame feature rows and their CSV serialization. One row carries the
// padded harmonic cepstrum (60 values), the residual cepstrum (51 values),
// the frame f0 and provenance (note id + frame index). Floats are written
// with %.9g, which round-trips the information the models consume and keeps
// files byte-stable across runs.

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/envelope.hpp"

namespace hprvae {

struct FrameFeatures {
  std::string note_id;
  int frame_index = 0;
  double f0_hz = 0.0;
  std::vector<double> cc_h;  // kHarmonicWidth values
  std::vector<double> cc_r;  // kResidualWidth values

  void validate() const {
    if (int(cc_h.size()) != kHarmonicWidth)
      throw std::invalid_argument("FrameFeatures: cc_h must hold 60 values");
    if (int(cc_r.size()) != kResidualWidth)
      throw std::invalid_argument("FrameFeatures: cc_r must hold 51 values");
    if (!(f0_hz > 0.0)) throw std::invalid_argument("FrameFeatures: f0 must be positive");
    if (note_id.empty()) throw std::invalid_argument("FrameFeatures: empty note id");
  }
};

using FeatureTable = std::vector<FrameFeatures>;

inline FrameFeatures make_frame_features(const std::string& note_id, int frame_index,
                                         double f0_hz, const CepstralEnvelope& harmonic,
                                         const CepstralEnvelope& residual) {
  FrameFeatures row;
  row.note_id = note_id;
  row.frame_index = frame_index;
  row.f0_hz = f0_hz;
  row.cc_h = pad_coeffs(harmonic, kHarmonicWidth);
  row.cc_r = pad_coeffs(residual, kResidualWidth);
  row.validate();
  return row;
}

inline std::string format_float(double v) {
  std::array<char, 32> buf{};
  const int len = std::snprintf(buf.data(), buf.size(), "%.9g", v);
  return std::string(buf.data(), std::size_t(len));
}

inline std::string features_csv_header() {
  std::string h = "note_id,frame_index,f0_hz";
  std::array<char, 16> buf{};
  for (int i = 0; i < kHarmonicWidth; ++i) {
    std::snprintf(buf.data(), buf.size(), ",cc_h_%02d", i);
    h += buf.data();
  }
  for (int i = 0; i < kResidualWidth; ++i) {
    std::snprintf(buf.data(), buf.size(), ",cc_r_%02d", i);
    h += buf.data();
  }
  return h;
}

inline void write_features_csv(const std::string& path, const FeatureTable& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << features_csv_header() << "\n";
  for (const auto& row : rows) {
    row.validate();
    out << row.note_id << "," << row.frame_index << "," << format_float(row.f0_hz);
    for (double v : row.cc_h) out << "," << format_float(v);
    for (double v : row.cc_r) out << "," << format_float(v);
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError("bad float '" + s + "' in " + context);
  return v;
}

inline FeatureTable read_features_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty features file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != features_csv_header())
    throw DataError("unexpected features header in " + path);

  FeatureTable rows;
  const std::size_t expected = 3 + std::size_t(kHarmonicWidth) + std::size_t(kResidualWidth);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != expected)
      throw DataError(path + ":" + std::to_string(line_no) + ": wrong column count");
    FrameFeatures row;
    row.note_id = fields[0];
    row.frame_index = int(parse_double(fields[1], path));
    row.f0_hz = parse_double(fields[2], path);
    row.cc_h.reserve(std::size_t(kHarmonicWidth));
    row.cc_r.reserve(std::size_t(kResidualWidth));
    for (int i = 0; i < kHarmonicWidth; ++i)
      row.cc_h.push_back(parse_double(fields[std::size_t(3 + i)], path));
    for (int i = 0; i < kResidualWidth; ++i)
      row.cc_r.push_back(parse_double(fields[std::size_t(3 + kHarmonicWidth + i)], path));
    row.validate();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hprvae
