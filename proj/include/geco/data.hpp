// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "geco/common.hpp"
#include "geco/wav.hpp"

namespace geco {

enum class Split { kTrain, kTest };
enum class Label { kNormal, kAnomaly, kUnknown };

inline const char* to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }
inline const char* to_string(Label l) {
  switch (l) {
    case Label::kNormal: return "normal";
    case Label::kAnomaly: return "anomaly";
    default: return "unknown";
  }
}

struct ClipRecord {
  std::string path;
  std::string machine_type;
  int machine_id = 0;
  Split split = Split::kTrain;
  Label label = Label::kNormal;
  int class_index = 0;          // bijection over (machine_type, machine_id)
  int sample_rate = 0;          // 0 until the clip is decoded
  bool nonstandard_rate = false;  // flagged (not converted) when != 16 kHz
};

// ---------------------------------------------------------------------------
// DCASE2020 Task2 layout
//
//   root/<machine_type>/{train,test}/{normal|anomaly}_id_NN_*.wav
//
// Anything that does not match the filename grammar is an error, not a
// warning; silent misparsing would corrupt class labels.

namespace detail {

struct ParsedName {
  Label label;
  int machine_id;
};

inline ParsedName parse_clip_name(const std::string& stem, const std::string& full_path) {
  auto fail = [&]() -> ParsedName {
    throw ParseError("file name does not match {normal|anomaly}_id_NN_*.wav: " + full_path);
  };
  Label label;
  size_t pos;
  if (stem.rfind("normal_id_", 0) == 0) {
    label = Label::kNormal;
    pos = 10;
  } else if (stem.rfind("anomaly_id_", 0) == 0) {
    label = Label::kAnomaly;
    pos = 11;
  } else {
    return fail();
  }
  if (pos + 2 > stem.size() || !std::isdigit(stem[pos]) || !std::isdigit(stem[pos + 1]))
    return fail();
  if (pos + 2 >= stem.size() || stem[pos + 2] != '_') return fail();
  int id = (stem[pos] - '0') * 10 + (stem[pos + 1] - '0');
  return {label, id};
}

}  // namespace detail

// Scans a DCASE-layout directory tree into ClipRecords. Pure function of the
// directory listing: directories and files are visited in sorted order, and
// class_index is assigned by sorting (machine_type, machine_id)
// lexicographically so labels are reproducible across runs and machines.
inline std::vector<ClipRecord> scan_dcase(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);

  std::vector<std::string> machine_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) machine_dirs.push_back(e.path().filename().string());
  std::sort(machine_dirs.begin(), machine_dirs.end());

  std::vector<ClipRecord> records;
  for (const std::string& mt : machine_dirs) {
    for (Split split : {Split::kTrain, Split::kTest}) {
      fs::path dir = fs::path(root) / mt / to_string(split);
      if (!fs::is_directory(dir)) continue;
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        if (e.path().extension() != ".wav") continue;
        files.push_back(e.path().filename().string());
      }
      std::sort(files.begin(), files.end());
      for (const std::string& name : files) {
        std::string stem = name.substr(0, name.size() - 4);
        auto parsed = detail::parse_clip_name(stem, (dir / name).string());
        if (split == Split::kTrain && parsed.label != Label::kNormal)
          throw ParseError("train split must contain only normal clips: " + (dir / name).string());
        ClipRecord r;
        r.path = (dir / name).string();
        r.machine_type = mt;
        r.machine_id = parsed.machine_id;
        r.split = split;
        r.label = parsed.label;
        records.push_back(std::move(r));
      }
    }
  }
  if (records.empty()) throw IoError("no WAV clips found under dataset root: " + root);

  // class_index: contiguous integers over sorted (machine_type, machine_id)
  std::map<std::pair<std::string, int>, int> classes;
  for (const auto& r : records) classes[{r.machine_type, r.machine_id}] = 0;
  int next = 0;
  for (auto& [key, idx] : classes) idx = next++;
  for (auto& r : records) r.class_index = classes[{r.machine_type, r.machine_id}];
  return records;
}

inline int num_classes(const std::vector<ClipRecord>& records) {
  int c = 0;
  for (const auto& r : records) c = std::max(c, r.class_index + 1);
  return c;
}

// Decodes a clip to a mono waveform at its native rate.
inline Waveform load_waveform(const ClipRecord& record) { return read_wav(record.path); }

// ---------------------------------------------------------------------------
// Synthetic dataset
//
// Each pseudo-class is a distinct tone stack (fundamental + 3 harmonics) with
// class-specific tremolo and low-passed noise. Test-split anomalies perturb
// the signal according to anomaly_kind; train data is always normal.

enum class AnomalyKind { kHarmonicShift, kBroadbandBurst, kToneDropout };

inline const char* to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::kHarmonicShift: return "harmonic_shift";
    case AnomalyKind::kBroadbandBurst: return "broadband_burst";
    default: return "tone_dropout";
  }
}

inline AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "harmonic_shift") return AnomalyKind::kHarmonicShift;
  if (s == "broadband_burst") return AnomalyKind::kBroadbandBurst;
  if (s == "tone_dropout") return AnomalyKind::kToneDropout;
  throw ConfigError("unknown anomaly_kind: " + s);
}

struct SynthSpec {
  int n_classes = 4;
  int clips_per_class = 50;     // train clips per class
  double clip_seconds = 3.0;
  AnomalyKind anomaly_kind = AnomalyKind::kHarmonicShift;
  uint64_t seed = 0;
  int sample_rate = 16000;
  double noise_level = 0.02;    // lowpassed-noise sigma relative to tone peak
  double anomaly_strength = 1.0;  // scales the perturbation
  std::string machine_type = "synth";
};

namespace detail {

inline std::vector<double> synth_clip(const SynthSpec& spec, int cls, bool anomaly, Rng& rng) {
  const int n = static_cast<int>(spec.clip_seconds * spec.sample_rate);
  const double sr = spec.sample_rate;
  // half-octave spacing between class fundamentals
  double f0 = 180.0 * std::pow(2.0, cls / 2.0);
  double harmonic_ratio = 1.0;
  if (anomaly && spec.anomaly_kind == AnomalyKind::kHarmonicShift)
    harmonic_ratio = 1.0 + 0.25 * spec.anomaly_strength;

  const double amps[4] = {1.0, 0.5, 0.33, 0.25};
  double phases[4];
  for (double& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);
  double gain = 0.25 * (1.0 + 0.2 * (2.0 * rng.uniform() - 1.0));  // per-clip jitter
  double trem_rate = 3.0 + cls;                                    // class-specific tremolo
  double trem_phase = rng.uniform(0.0, 2.0 * M_PI);

  // tone_dropout / broadband_burst segment plan
  struct Segment { int start, len; };
  std::vector<Segment> segments;
  if (anomaly && spec.anomaly_kind != AnomalyKind::kHarmonicShift) {
    int count = 4 + rng.uniform_int(5);
    for (int s = 0; s < count; ++s) {
      int len = static_cast<int>(sr * rng.uniform(0.05, 0.15));
      int start = rng.uniform_int(std::max(1, n - len));
      segments.push_back({start, len});
    }
  }
  auto in_segment = [&](int i) {
    for (const auto& s : segments)
      if (i >= s.start && i < s.start + s.len) return true;
    return false;
  };

  std::vector<double> x(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = i / sr;
    double tone = 0.0;
    for (int k = 0; k < 4; ++k)
      tone += amps[k] * std::sin(2.0 * M_PI * (k + 1) * f0 * harmonic_ratio * t + phases[k]);
    tone *= 1.0 + 0.3 * std::sin(2.0 * M_PI * trem_rate * t + trem_phase);
    if (anomaly && spec.anomaly_kind == AnomalyKind::kToneDropout && in_segment(i)) tone = 0.0;
    x[i] = gain * tone;
  }

  // low-passed noise floor (one-pole smoother over white noise)
  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    lp = 0.7 * lp + 0.3 * rng.normal();
    x[i] += spec.noise_level * lp;
  }

  if (anomaly && spec.anomaly_kind == AnomalyKind::kBroadbandBurst) {
    for (const auto& s : segments)
      for (int i = s.start; i < std::min(n, s.start + s.len); ++i)
        x[i] += 0.5 * spec.anomaly_strength * rng.normal();
  }

  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return x;
}

}  // namespace detail

// Deterministic under seed: each clip draws from its own derived stream, so
// the same spec yields byte-identical sample vectors regardless of ordering.
// Test split is half normal, half anomaly (clips_per_class / 4 of each).
inline std::vector<std::pair<ClipRecord, Waveform>> generate_synthetic(const SynthSpec& spec) {
  if (spec.n_classes < 2) throw InvalidArgument("generate_synthetic: n_classes must be >= 2");
  if (spec.clips_per_class < 1)
    throw InvalidArgument("generate_synthetic: clips_per_class must be >= 1");

  const int n_test_each = std::max(1, spec.clips_per_class / 4);
  std::vector<std::pair<ClipRecord, Waveform>> out;
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    auto make = [&](Split split, Label label, int index) {
      Rng rng(derive_seed(spec.seed,
                          {static_cast<uint64_t>(cls), split == Split::kTrain ? 0ULL : 1ULL,
                           label == Label::kAnomaly ? 1ULL : 0ULL, static_cast<uint64_t>(index)}));
      ClipRecord r;
      r.machine_type = spec.machine_type;
      r.machine_id = cls;
      r.split = split;
      r.label = label;
      r.class_index = cls;
      r.sample_rate = spec.sample_rate;
      r.path = strformat("%s/%s/%s_id_%02d_%08d.wav", spec.machine_type.c_str(),
                         to_string(split), to_string(label), cls, index);
      Waveform w;
      w.sample_rate = spec.sample_rate;
      w.samples = detail::synth_clip(spec, cls, label == Label::kAnomaly, rng);
      out.emplace_back(std::move(r), std::move(w));
    };
    for (int i = 0; i < spec.clips_per_class; ++i) make(Split::kTrain, Label::kNormal, i);
    for (int i = 0; i < n_test_each; ++i) make(Split::kTest, Label::kNormal, i);
    for (int i = 0; i < n_test_each; ++i) make(Split::kTest, Label::kAnomaly, i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest CSV

inline void write_manifest(const std::string& path, const std::vector<ClipRecord>& records,
                           uint64_t config_hash) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << "# config_hash=" << hash_hex(config_hash) << "\n";
  f << "path,machine_type,machine_id,split,label,class_index\n";
  for (const auto& r : records) {
    f << r.path << ',' << r.machine_type << ',' << r.machine_id << ',' << to_string(r.split)
      << ',' << to_string(r.label) << ',' << r.class_index;
    if (r.nonstandard_rate) f << "  # sample_rate=" << r.sample_rate;
    f << '\n';
  }
  if (!f) throw IoError("short write on manifest: " + path);
}

inline std::vector<ClipRecord> read_manifest(const std::string& path, uint64_t* config_hash_out) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  std::string line;
  std::vector<ClipRecord> records;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.rfind("# config_hash=", 0) == 0) {
      if (config_hash_out)
        *config_hash_out = std::stoull(line.substr(std::string("# config_hash=").size()), nullptr, 16);
      continue;
    }
    if (!header_seen && line.rfind("path,", 0) == 0) {
      header_seen = true;
      continue;
    }
    size_t comment = line.find("  #");
    std::string body = comment == std::string::npos ? line : line.substr(0, comment);
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t pos = body.find(',', start);
      cols.push_back(body.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (cols.size() != 6) throw ParseError("bad manifest row in " + path + ": " + line);
    ClipRecord r;
    r.path = cols[0];
    r.machine_type = cols[1];
    r.machine_id = std::stoi(cols[2]);
    r.split = cols[3] == "train" ? Split::kTrain : Split::kTest;
    r.label = cols[4] == "normal" ? Label::kNormal
                                  : (cols[4] == "anomaly" ? Label::kAnomaly : Label::kUnknown);
    r.class_index = std::stoi(cols[5]);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ParseError("manifest has no rows: " + path);
  return records;
}

}  // namespace geco
