// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "geco/common.hpp"
#include "geco/wav.hpp"

namespace geco {

struct FeatureConfig {
  int n_mels = 128;
  int frame_win = 1024;
  int frame_hop = 512;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;       // 0 means sample_rate / 2
  double log_floor = 1e-10;   // applied inside the log: log(P + eps)
  bool power = true;          // squared-magnitude spectrum before the mel bank

  uint64_t hash() const {
    std::string s = strformat("mels=%d win=%d hop=%d fmin=%.9g fmax=%.9g floor=%.9g power=%d",
                              n_mels, frame_win, frame_hop, fmin_hz, fmax_hz, log_floor,
                              power ? 1 : 0);
    return fnv1a64(s);
  }
};

struct LogMelSpectrogram {
  Matrix values;  // [n_frames x n_mels]
  FeatureConfig config;
  int sample_rate = 0;

  int n_frames() const { return static_cast<int>(values.rows()); }
  int n_mels() const { return static_cast<int>(values.cols()); }
};

namespace detail {

// In-place iterative radix-2 FFT. n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

// Triangular mel filterbank over FFT bins [0, n_fft/2]. Rows are nonnegative
// and each covers one contiguous frequency band.
inline Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin_hz,
                             double fmax_hz) {
  if (fmax_hz <= 0.0) fmax_hz = sample_rate / 2.0;
  if (n_mels < 1 || fmin_hz < 0.0 || fmax_hz <= fmin_hz)
    throw ConfigError("mel_filterbank: bad mel configuration");
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = detail::hz_to_mel(fmin_hz);
  const double mel_hi = detail::hz_to_mel(fmax_hz);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  Matrix fb = Matrix::Zero(n_mels, n_bins);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int m = 0; m < n_mels; ++m) {
    double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      double f = b * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      if (w > 0.0) fb(m, b) = w;
    }
  }
  return fb;
}

// Center frequencies of the filterbank triangles, for locating a tone's bin.
inline std::vector<double> mel_center_frequencies(int n_mels, int sample_rate, double fmin_hz,
                                                  double fmax_hz) {
  if (fmax_hz <= 0.0) fmax_hz = sample_rate / 2.0;
  const double mel_lo = detail::hz_to_mel(fmin_hz);
  const double mel_hi = detail::hz_to_mel(fmax_hz);
  std::vector<double> centers(n_mels);
  for (int m = 0; m < n_mels; ++m)
    centers[m] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (n_mels + 1));
  return centers;
}

// Log-mel spectrogram: Hann-windowed frames, magnitude (or power) spectrum on
// an FFT zero-padded to the next power of two, mel filterbank, log with floor.
// Frame count is 1 + floor((len - win) / hop); no padding is applied.
inline LogMelSpectrogram log_mel(const Waveform& wave, const FeatureConfig& cfg) {
  const int win = cfg.frame_win, hop = cfg.frame_hop;
  if (win <= 0 || hop <= 0 || cfg.n_mels <= 0) throw ConfigError("log_mel: bad frame config");
  if (static_cast<int>(wave.samples.size()) < win)
    throw InvalidArgument(strformat("log_mel: waveform has %zu samples, need at least %d",
                                    wave.samples.size(), win));
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw NumericError("log_mel: non-finite sample");

  const int n_frames = 1 + static_cast<int>((wave.samples.size() - win) / hop);
  const size_t n_fft = detail::next_pow2(static_cast<size_t>(win));
  const int n_bins = static_cast<int>(n_fft / 2 + 1);

  // periodic Hann
  std::vector<double> window(win);
  for (int i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

  Matrix fb = mel_filterbank(cfg.n_mels, static_cast<int>(n_fft), wave.sample_rate, cfg.fmin_hz,
                             cfg.fmax_hz);

  LogMelSpectrogram out;
  out.config = cfg;
  out.sample_rate = wave.sample_rate;
  out.values.resize(n_frames, cfg.n_mels);

  std::vector<std::complex<double>> buf(n_fft);
  Eigen::VectorXd spec(n_bins);
  for (int t = 0; t < n_frames; ++t) {
    const double* src = wave.samples.data() + static_cast<size_t>(t) * hop;
    for (int i = 0; i < win; ++i) buf[i] = std::complex<double>(src[i] * window[i], 0.0);
    for (size_t i = win; i < n_fft; ++i) buf[i] = {0.0, 0.0};
    detail::fft_radix2(buf);
    for (int b = 0; b < n_bins; ++b) {
      double mag2 = std::norm(buf[b]);
      spec(b) = cfg.power ? mag2 : std::sqrt(mag2);
    }
    Eigen::VectorXd mel = fb * spec;
    for (int m = 0; m < cfg.n_mels; ++m) out.values(t, m) = std::log(mel(m) + cfg.log_floor);
  }
  return out;
}

// Contiguous crop of exactly `length` frames; start uniform over valid range.
inline LogMelSpectrogram crop_frames(const LogMelSpectrogram& spec, int length, Rng& rng) {
  if (length <= 0) throw InvalidArgument("crop_frames: length must be positive");
  if (spec.n_frames() < length)
    throw InvalidArgument(strformat("crop_frames: clip has %d frames, need at least %d",
                                    spec.n_frames(), length));
  int start = rng.uniform_int(spec.n_frames() - length + 1);
  LogMelSpectrogram out;
  out.config = spec.config;
  out.sample_rate = spec.sample_rate;
  out.values = spec.values.middleRows(start, length);
  return out;
}

// ---------------------------------------------------------------------------
// Per-dataset normalization (per-mel-bin mean / stddev over training frames)

struct FeatureStats {
  Vector mean;    // [n_mels]
  Vector stddev;  // [n_mels], floored at 1e-8

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw InvalidArgument("FeatureStats: mel dimension mismatch");
    Matrix out = x;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= stddev.transpose().array();
    return out;
  }
};

inline FeatureStats compute_feature_stats(const std::vector<Matrix>& clips) {
  if (clips.empty()) throw InvalidArgument("compute_feature_stats: no clips");
  const auto n_mels = clips.front().cols();
  Vector sum = Vector::Zero(n_mels), sum_sq = Vector::Zero(n_mels);
  double n = 0.0;
  for (const Matrix& c : clips) {
    if (c.cols() != n_mels) throw InvalidArgument("compute_feature_stats: mel dim mismatch");
    sum += c.colwise().sum().transpose();
    sum_sq += c.array().square().colwise().sum().matrix().transpose();
    n += static_cast<double>(c.rows());
  }
  FeatureStats st;
  st.mean = sum / n;
  st.stddev = ((sum_sq / n).array() - st.mean.array().square()).max(0.0).sqrt().max(1e-8);
  return st;
}

// ---------------------------------------------------------------------------
// Feature cache: per-clip binary matrix with a header carrying the feature
// config hash, so cached features invalidate when the config changes.

namespace detail {
constexpr char kFeatureMagic[4] = {'G', 'F', 'C', '1'};
}

inline void write_feature_cache(const std::string& path, const LogMelSpectrogram& spec) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write feature cache: " + path);
  f.write(detail::kFeatureMagic, 4);
  uint64_t h = spec.config.hash();
  uint32_t rows = static_cast<uint32_t>(spec.values.rows());
  uint32_t cols = static_cast<uint32_t>(spec.values.cols());
  int32_t sr = spec.sample_rate;
  f.write(reinterpret_cast<const char*>(&h), 8);
  f.write(reinterpret_cast<const char*>(&rows), 4);
  f.write(reinterpret_cast<const char*>(&cols), 4);
  f.write(reinterpret_cast<const char*>(&sr), 4);
  f.write(reinterpret_cast<const char*>(spec.values.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!f) throw IoError("short write on feature cache: " + path);
}

inline LogMelSpectrogram read_feature_cache(const std::string& path, const FeatureConfig& cfg) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open feature cache: " + path);
  char magic[4];
  uint64_t h = 0;
  uint32_t rows = 0, cols = 0;
  int32_t sr = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&h), 8);
  f.read(reinterpret_cast<char*>(&rows), 4);
  f.read(reinterpret_cast<char*>(&cols), 4);
  f.read(reinterpret_cast<char*>(&sr), 4);
  if (!f || std::memcmp(magic, detail::kFeatureMagic, 4) != 0)
    throw IoError("bad feature cache header: " + path);
  if (h != cfg.hash())
    throw ConfigError(strformat("feature cache %s was built with a different feature config "
                                "(hash %s, expected %s)",
                                path.c_str(), hash_hex(h).c_str(), hash_hex(cfg.hash()).c_str()));
  LogMelSpectrogram spec;
  spec.config = cfg;
  spec.sample_rate = sr;
  spec.values.resize(rows, cols);
  f.read(reinterpret_cast<char*>(spec.values.data()),
         static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!f) throw IoError("truncated feature cache: " + path);
  return spec;
}

}  // namespace geco
