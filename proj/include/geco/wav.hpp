// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "geco/common.hpp"

namespace geco {

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1] for integer PCM sources
  int sample_rate = 0;
  int source_channels = 1;

  size_t size() const { return samples.size(); }
};

namespace detail {

inline uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Reads a RIFF/WAVE file. Integer PCM (8/16/24/32 bit) and IEEE float
// (32/64 bit) are supported; multi-channel input is averaged to mono.
// Throws IoError naming the path on anything malformed or truncated.
inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  auto fail = [&](const char* why) -> Waveform {
    throw IoError(std::string("bad WAV file (") + why + "): " + path);
  };

  if (bytes.size() < 12) return fail("truncated header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    return fail("not RIFF/WAVE");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* ch = bytes.data() + pos;
    uint32_t chunk_len = detail::read_u32le(ch + 4);
    size_t body = pos + 8;
    if (std::memcmp(ch, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size() || chunk_len < 16) return fail("truncated fmt chunk");
      format = detail::read_u16le(&bytes[body]);
      channels = detail::read_u16le(&bytes[body + 2]);
      sample_rate = detail::read_u32le(&bytes[body + 4]);
      bits = detail::read_u16le(&bytes[body + 14]);
      if (format == 0xfffe && chunk_len >= 40 && body + 26 <= bytes.size()) {
        // WAVE_FORMAT_EXTENSIBLE: actual format lives in the sub-format GUID.
        format = detail::read_u16le(&bytes[body + 24]);
      }
      have_fmt = true;
    } else if (std::memcmp(ch, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      if (data_off + data_len > bytes.size()) return fail("truncated data chunk");
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) return fail("missing fmt chunk");
  if (data_off == 0) return fail("missing data chunk");
  if (channels == 0 || sample_rate == 0) return fail("bad fmt fields");

  const size_t bytes_per_sample = bits / 8;
  if (bytes_per_sample == 0) return fail("bad bits per sample");
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n_frames = data_len / frame_bytes;
  if (n_frames == 0) return fail("empty data chunk");

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.source_channels = channels;
  w.samples.resize(n_frames);

  const unsigned char* d = bytes.data() + data_off;
  auto decode = [&](size_t idx) -> double {
    const unsigned char* s = d + idx * bytes_per_sample;
    if (format == 1) {  // integer PCM
      switch (bits) {
        case 8:
          return (static_cast<int>(s[0]) - 128) / 128.0;
        case 16: {
          int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
          return v / 32768.0;
        }
        case 24: {
          int32_t v = static_cast<int32_t>((s[0] << 8) | (s[1] << 16) | (s[2] << 24)) >> 8;
          return v / 8388608.0;
        }
        case 32: {
          int32_t v = static_cast<int32_t>(detail::read_u32le(s));
          return v / 2147483648.0;
        }
        default:
          fail("unsupported PCM bit depth");
      }
    } else if (format == 3) {  // IEEE float
      if (bits == 32) {
        float v;
        std::memcpy(&v, s, 4);
        return v;
      }
      if (bits == 64) {
        double v;
        std::memcpy(&v, s, 8);
        return v;
      }
      fail("unsupported float bit depth");
    }
    fail("unsupported format tag");
    return 0.0;
  };

  for (size_t t = 0; t < n_frames; ++t) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) acc += decode(t * channels + c);
    w.samples[t] = acc / channels;
  }
  return w;
}

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1].
inline void write_wav_pcm16(const std::string& path, const std::vector<double>& samples,
                            int sample_rate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write WAV file: " + path);

  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
  };

  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<uint32_t>(sample_rate));
  put_u32(static_cast<uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  f.write("data", 4);
  put_u32(data_len);
  for (double s : samples) {
    double c = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    auto v = static_cast<int16_t>(std::lrint(c * 32767.0));
    put_u16(static_cast<uint16_t>(v));
  }
  if (!f) throw IoError("short write on WAV file: " + path);
}

}  // namespace geco
