#pragma once

// Minimal RIFF/WAVE reader and writer. Reads PCM 16/24-bit and IEEE float 32
// (plus the WAVE_FORMAT_EXTENSIBLE wrappers around them), averages
// multi-channel files down to mono, and normalizes to [-1, 1). Writes mono
// 16-bit PCM. Anything structurally unexpected raises DataError.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hprvae/common.hpp"

namespace hprvae {

struct WavData {
  std::vector<double> samples;  // mono
  int sample_rate_hz = 0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

}  // namespace detail

inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  int format = 0, channels = 0, bits = 0, rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = detail::read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size())
      throw DataError("truncated chunk in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("short fmt chunk in " + path);
      format = detail::read_u16(bytes.data() + body);
      channels = detail::read_u16(bytes.data() + body + 2);
      rate = int(detail::read_u32(bytes.data() + body + 4));
      bits = detail::read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        if (len < 40) throw DataError("short extensible fmt chunk in " + path);
        format = detail::read_u16(bytes.data() + body + 24);  // subformat GUID head
      }
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len % 2);  // chunks are word aligned
  }

  if (rate <= 0 || channels <= 0) throw DataError("missing fmt chunk in " + path);
  if (data == nullptr) throw DataError("missing data chunk in " + path);

  const bool pcm16 = format == 1 && bits == 16;
  const bool pcm24 = format == 1 && bits == 24;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !pcm24 && !f32)
    throw DataError("unsupported sample format (" + std::to_string(format) + "/" +
                    std::to_string(bits) + " bit) in " + path);

  const std::size_t bytes_per = std::size_t(bits) / 8;
  const std::size_t stride = bytes_per * std::size_t(channels);
  const std::size_t frames = data_len / stride;

  WavData out;
  out.sample_rate_hz = rate;
  out.samples.resize(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * stride + std::size_t(c) * bytes_per;
      double v = 0.0;
      if (pcm16) {
        const std::int16_t s = std::int16_t(detail::read_u16(p));
        v = double(s) / 32768.0;
      } else if (pcm24) {
        std::int32_t s = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) |
                         (std::int32_t(p[2]) << 16);
        if (s & 0x800000) s |= std::int32_t(0xFF000000);
        v = double(s) / 8388608.0;
      } else {
        float fv = 0.0f;
        std::memcpy(&fv, p, 4);
        v = double(fv);
      }
      acc += v;
    }
    out.samples[f] = acc / double(channels);
  }
  return out;
}

inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw std::invalid_argument("write_wav: bad sample rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);

  const std::uint32_t data_len = std::uint32_t(samples.size() * 2);
  auto put_u32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>((v >> 8) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };

  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(std::uint32_t(sample_rate_hz));
  put_u32(std::uint32_t(sample_rate_hz) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double x : samples) {
    double v = std::round(x * 32768.0);
    v = std::min(32767.0, std::max(-32768.0, v));
    put_u16(std::uint16_t(std::int16_t(v)));
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace hprvae
