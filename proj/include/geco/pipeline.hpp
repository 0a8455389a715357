// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geco/common.hpp"
#include "geco/data.hpp"
#include "geco/features.hpp"
#include "geco/geco.hpp"
#include "geco/metrics.hpp"
#include "geco/pae.hpp"
#include "geco/scoring.hpp"
#include "geco/svgplot.hpp"
#include "geco/wav.hpp"

namespace geco {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration. One JSON file describes the whole pipeline; its hash is
// stamped into every artifact so stale or mismatched inputs are refused.

struct RunConfig {
  uint64_t seed = 1234;
  std::string out = "out";

  std::string data_kind = "synthetic";  // "synthetic" | "dcase"
  std::string data_root;                // dcase dataset root
  SynthSpec synth;

  FeatureConfig features;
  PAEConfig pae_arch;
  PAETrainConfig pae_train;
  GecoArch geco_arch;
  GeCoTrainConfig geco_train;
  RampSchedule ramp;
  FusionConfig fusion;

  double fpr_max = 0.1;
  int crop_stride = 32;

  uint64_t hash() const {
    std::string s = strformat("run|seed=%llu|data=%s|root=%s",
                              static_cast<unsigned long long>(seed), data_kind.c_str(),
                              data_root.c_str());
    if (data_kind == "synthetic")
      s += strformat("|synth=%d,%d,%.17g,%s,%d,%.17g,%.17g,%s", synth.n_classes,
                     synth.clips_per_class, synth.clip_seconds, to_string(synth.anomaly_kind),
                     synth.sample_rate, synth.noise_level, synth.anomaly_strength,
                     synth.machine_type.c_str());
    s += strformat("|feat=%s|pae=%s,%s|geco=%s,%s",
                   hash_hex(features.hash()).c_str(), hash_hex(pae_arch.hash()).c_str(),
                   hash_hex(pae_train.hash()).c_str(), hash_hex(geco_arch.hash()).c_str(),
                   hash_hex(geco_train.hash()).c_str());
    s += strformat("|ramp=%d,%d,%d,%.17g", ramp.warmup_end, ramp.ramp_end, ramp.total,
                   ramp.lambda_max);
    s += strformat("|fusion=%.17g", fusion.gamma);
    for (const auto& [k, v] : fusion.per_type) s += strformat(",%s:%.17g", k.c_str(), v);
    s += strformat("|eval=%.17g,%d", fpr_max, crop_stride);
    return fnv1a64(s);
  }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!allowed.count(k))
      throw ConfigError("invalid config key \"" + k + "\" in " + where);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  // config_hash appears in resolved configs written by run_stage; it is
  // informational and recomputed, so inputs may carry it.
  detail::check_keys(
      j, {"seed", "out", "data", "features", "pae", "geco", "fusion", "eval", "config_hash"},
      "top level");
  detail::maybe(j, "seed", cfg.seed);
  detail::maybe(j, "out", cfg.out);

  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::check_keys(d, {"kind", "root", "synth"}, "data");
    detail::maybe(d, "kind", cfg.data_kind);
    detail::maybe(d, "root", cfg.data_root);
    if (cfg.data_kind != "synthetic" && cfg.data_kind != "dcase")
      throw ConfigError("data.kind must be \"synthetic\" or \"dcase\", got " + cfg.data_kind);
    if (d.contains("synth")) {
      const json& s = d.at("synth");
      detail::check_keys(s,
                         {"n_classes", "clips_per_class", "clip_seconds", "anomaly_kind",
                          "sample_rate", "noise_level", "anomaly_strength", "machine_type"},
                         "data.synth");
      detail::maybe(s, "n_classes", cfg.synth.n_classes);
      detail::maybe(s, "clips_per_class", cfg.synth.clips_per_class);
      detail::maybe(s, "clip_seconds", cfg.synth.clip_seconds);
      if (s.contains("anomaly_kind"))
        cfg.synth.anomaly_kind = anomaly_kind_from_string(s.at("anomaly_kind").get<std::string>());
      detail::maybe(s, "sample_rate", cfg.synth.sample_rate);
      detail::maybe(s, "noise_level", cfg.synth.noise_level);
      detail::maybe(s, "anomaly_strength", cfg.synth.anomaly_strength);
      detail::maybe(s, "machine_type", cfg.synth.machine_type);
    }
  }

  if (j.contains("features")) {
    const json& f = j.at("features");
    detail::check_keys(f, {"n_mels", "frame_win", "frame_hop", "fmin_hz", "fmax_hz", "log_floor"},
                       "features");
    detail::maybe(f, "n_mels", cfg.features.n_mels);
    detail::maybe(f, "frame_win", cfg.features.frame_win);
    detail::maybe(f, "frame_hop", cfg.features.frame_hop);
    detail::maybe(f, "fmin_hz", cfg.features.fmin_hz);
    detail::maybe(f, "fmax_hz", cfg.features.fmax_hz);
    detail::maybe(f, "log_floor", cfg.features.log_floor);
  }

  if (j.contains("pae")) {
    const json& p = j.at("pae");
    detail::check_keys(p, {"arch", "train"}, "pae");
    if (p.contains("arch")) {
      const json& a = p.at("arch");
      detail::check_keys(a,
                         {"window", "enc_width", "enc_blocks", "dec_width", "dec_blocks",
                          "bottleneck_dim", "heads", "mlp_ratio"},
                         "pae.arch");
      detail::maybe(a, "window", cfg.pae_arch.window);
      detail::maybe(a, "enc_width", cfg.pae_arch.enc_width);
      detail::maybe(a, "enc_blocks", cfg.pae_arch.enc_blocks);
      detail::maybe(a, "dec_width", cfg.pae_arch.dec_width);
      detail::maybe(a, "dec_blocks", cfg.pae_arch.dec_blocks);
      detail::maybe(a, "bottleneck_dim", cfg.pae_arch.bottleneck_dim);
      detail::maybe(a, "heads", cfg.pae_arch.heads);
      detail::maybe(a, "mlp_ratio", cfg.pae_arch.mlp_ratio);
    }
    if (p.contains("train")) {
      const json& t = p.at("train");
      detail::check_keys(t, {"epochs", "batch", "lr_initial", "lr_final", "lr_drop_epoch"},
                         "pae.train");
      detail::maybe(t, "epochs", cfg.pae_train.epochs);
      detail::maybe(t, "batch", cfg.pae_train.batch);
      detail::maybe(t, "lr_initial", cfg.pae_train.lr_initial);
      detail::maybe(t, "lr_final", cfg.pae_train.lr_final);
      detail::maybe(t, "lr_drop_epoch", cfg.pae_train.lr_drop_epoch);
    }
  }

  if (j.contains("geco")) {
    const json& g = j.at("geco");
    detail::check_keys(g, {"arch", "train", "ramp"}, "geco");
    if (g.contains("arch")) {
      const json& a = g.at("arch");
      detail::check_keys(a,
                         {"stem_channels", "stem_stride", "stage_channels", "stage_blocks",
                          "embed_dim", "crop_frames", "temperature"},
                         "geco.arch");
      detail::maybe(a, "stem_channels", cfg.geco_arch.extractor.stem_channels);
      detail::maybe(a, "stem_stride", cfg.geco_arch.extractor.stem_stride);
      detail::maybe(a, "stage_channels", cfg.geco_arch.extractor.stage_channels);
      detail::maybe(a, "stage_blocks", cfg.geco_arch.extractor.stage_blocks);
      detail::maybe(a, "embed_dim", cfg.geco_arch.extractor.embed_dim);
      detail::maybe(a, "crop_frames", cfg.geco_arch.crop_frames);
      detail::maybe(a, "temperature", cfg.geco_arch.temperature);
    }
    if (g.contains("train")) {
      const json& t = g.at("train");
      detail::check_keys(t,
                         {"epochs", "batch", "lr", "lr_steps", "lr_step_factor", "momentum",
                          "weight_decay", "loss_form", "use_reconstruction", "drop_last"},
                         "geco.train");
      detail::maybe(t, "epochs", cfg.geco_train.epochs);
      detail::maybe(t, "batch", cfg.geco_train.batch);
      detail::maybe(t, "lr", cfg.geco_train.lr);
      detail::maybe(t, "lr_steps", cfg.geco_train.lr_steps);
      detail::maybe(t, "lr_step_factor", cfg.geco_train.lr_step_factor);
      detail::maybe(t, "momentum", cfg.geco_train.momentum);
      detail::maybe(t, "weight_decay", cfg.geco_train.weight_decay);
      if (t.contains("loss_form"))
        cfg.geco_train.loss_form = parse_loss_form(t.at("loss_form").get<std::string>());
      detail::maybe(t, "use_reconstruction", cfg.geco_train.use_reconstruction);
      detail::maybe(t, "drop_last", cfg.geco_train.drop_last);
    }
    if (g.contains("ramp")) {
      const json& r = g.at("ramp");
      detail::check_keys(r, {"warmup_end", "ramp_end", "lambda_max"}, "geco.ramp");
      detail::maybe(r, "warmup_end", cfg.ramp.warmup_end);
      detail::maybe(r, "ramp_end", cfg.ramp.ramp_end);
      detail::maybe(r, "lambda_max", cfg.ramp.lambda_max);
    }
  }
  cfg.ramp.total = cfg.geco_train.epochs;

  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    detail::check_keys(f, {"gamma", "per_type"}, "fusion");
    detail::maybe(f, "gamma", cfg.fusion.gamma);
    if (f.contains("per_type")) {
      for (const auto& [k, v] : f.at("per_type").items()) {
        std::string key = k;
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        cfg.fusion.per_type[key] = v.get<double>();
      }
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::check_keys(e, {"fpr_max", "crop_stride"}, "eval");
    detail::maybe(e, "fpr_max", cfg.fpr_max);
    detail::maybe(e, "crop_stride", cfg.crop_stride);
  }

  // Dimensions shared across modules follow the feature config.
  cfg.pae_arch.n_mels = cfg.features.n_mels;
  cfg.geco_arch.n_mels = cfg.features.n_mels;
  cfg.synth.seed = cfg.seed;
  if (cfg.geco_arch.crop_frames % cfg.pae_arch.window != 0)
    throw ConfigError(strformat("crop_frames (%d) must be a multiple of the window (%d)",
                                cfg.geco_arch.crop_frames, cfg.pae_arch.window));
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(strformat("config %s is not valid JSON: %s", path.c_str(), e.what()));
  }
  return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// Stages and artifact layout.

enum class Stage {
  kSynthData,
  kExtractFeatures,
  kTrainPae,
  kTrainGeco,
  kComputeCenters,
  kScore,
  kGridGamma,
  kEvaluate,
  kPlot,
  kAblateLambda,
};

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::kSynthData: return "synth-data";
    case Stage::kExtractFeatures: return "extract-features";
    case Stage::kTrainPae: return "train-pae";
    case Stage::kTrainGeco: return "train-geco";
    case Stage::kComputeCenters: return "compute-centers";
    case Stage::kScore: return "score";
    case Stage::kGridGamma: return "grid-gamma";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kPlot: return "plot";
    case Stage::kAblateLambda: return "ablate-lambda";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::kSynthData, Stage::kExtractFeatures, Stage::kTrainPae, Stage::kTrainGeco,
                   Stage::kComputeCenters, Stage::kScore, Stage::kGridGamma, Stage::kEvaluate,
                   Stage::kPlot, Stage::kAblateLambda})
    if (s == to_string(st)) return st;
  throw ConfigError("unknown stage: " + s);
}

struct RunPaths {
  fs::path out;
  explicit RunPaths(const RunConfig& cfg) : out(cfg.out) {}

  fs::path manifest() const { return out / "manifest.csv"; }
  fs::path data_dir() const { return out / "data"; }
  fs::path features_dir() const { return out / "features"; }
  fs::path feature_index() const { return out / "features" / "index.csv"; }
  fs::path feature_cache(const std::string& clip_path) const {
    return features_dir() / (hash_hex(fnv1a64(clip_path)) + ".gfc");
  }
  fs::path models_dir() const { return out / "models"; }
  fs::path pae_ckpt(const std::string& machine_type) const {
    return models_dir() / machine_type / "pae.ckpt";
  }
  fs::path pae_log(const std::string& machine_type) const {
    return models_dir() / machine_type / "pae_train_log.csv";
  }
  fs::path geco_ckpt() const { return models_dir() / "geco.ckpt"; }
  fs::path geco_log() const { return models_dir() / "geco_train_log.csv"; }
  fs::path centers_ckpt() const { return models_dir() / "centers.ckpt"; }
  fs::path scores_csv() const { return out / "scores.csv"; }
  fs::path scores_dir() const { return out / "scores"; }
  fs::path gamma_csv() const { return out / "gamma.csv"; }
  fs::path metrics_csv() const { return out / "metrics.csv"; }
  fs::path summary_json() const { return out / "summary.json"; }
  fs::path plots_dir() const { return out / "plots"; }
  fs::path ablation_csv() const { return out / "ablation.csv"; }
  fs::path config_json() const { return out / "config.json"; }
};

namespace detail {

inline void require_artifact(const fs::path& p, const char* producing_stage) {
  if (!fs::exists(p))
    throw DependencyError(strformat("missing %s; run the %s stage first", p.string().c_str(),
                                    producing_stage));
}

// Serializes the resolved config next to the artifacts (written by every
// stage; idempotent).
inline void write_resolved_config(const RunConfig& cfg, const RunPaths& paths) {
  fs::create_directories(paths.out);
  json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["config_hash"] = hash_hex(cfg.hash());
  j["data"]["kind"] = cfg.data_kind;
  if (cfg.data_kind == "dcase") j["data"]["root"] = cfg.data_root;
  if (cfg.data_kind == "synthetic") {
    j["data"]["synth"] = {{"n_classes", cfg.synth.n_classes},
                          {"clips_per_class", cfg.synth.clips_per_class},
                          {"clip_seconds", cfg.synth.clip_seconds},
                          {"anomaly_kind", to_string(cfg.synth.anomaly_kind)},
                          {"sample_rate", cfg.synth.sample_rate},
                          {"noise_level", cfg.synth.noise_level},
                          {"anomaly_strength", cfg.synth.anomaly_strength},
                          {"machine_type", cfg.synth.machine_type}};
  }
  j["features"] = {{"n_mels", cfg.features.n_mels},       {"frame_win", cfg.features.frame_win},
                   {"frame_hop", cfg.features.frame_hop}, {"fmin_hz", cfg.features.fmin_hz},
                   {"fmax_hz", cfg.features.fmax_hz},     {"log_floor", cfg.features.log_floor}};
  j["pae"]["arch"] = {{"window", cfg.pae_arch.window},
                      {"enc_width", cfg.pae_arch.enc_width},
                      {"enc_blocks", cfg.pae_arch.enc_blocks},
                      {"dec_width", cfg.pae_arch.dec_width},
                      {"dec_blocks", cfg.pae_arch.dec_blocks},
                      {"bottleneck_dim", cfg.pae_arch.bottleneck_dim},
                      {"heads", cfg.pae_arch.heads},
                      {"mlp_ratio", cfg.pae_arch.mlp_ratio}};
  j["pae"]["train"] = {{"epochs", cfg.pae_train.epochs},
                       {"batch", cfg.pae_train.batch},
                       {"lr_initial", cfg.pae_train.lr_initial},
                       {"lr_final", cfg.pae_train.lr_final},
                       {"lr_drop_epoch", cfg.pae_train.lr_drop_epoch}};
  j["geco"]["arch"] = {{"stem_channels", cfg.geco_arch.extractor.stem_channels},
                       {"stem_stride", cfg.geco_arch.extractor.stem_stride},
                       {"stage_channels", cfg.geco_arch.extractor.stage_channels},
                       {"stage_blocks", cfg.geco_arch.extractor.stage_blocks},
                       {"embed_dim", cfg.geco_arch.extractor.embed_dim},
                       {"crop_frames", cfg.geco_arch.crop_frames},
                       {"temperature", cfg.geco_arch.temperature}};
  j["geco"]["train"] = {{"epochs", cfg.geco_train.epochs},
                        {"batch", cfg.geco_train.batch},
                        {"lr", cfg.geco_train.lr},
                        {"lr_steps", cfg.geco_train.lr_steps},
                        {"lr_step_factor", cfg.geco_train.lr_step_factor},
                        {"momentum", cfg.geco_train.momentum},
                        {"weight_decay", cfg.geco_train.weight_decay},
                        {"loss_form", to_string(cfg.geco_train.loss_form)},
                        {"use_reconstruction", cfg.geco_train.use_reconstruction},
                        {"drop_last", cfg.geco_train.drop_last}};
  // ramp.total is derived from geco.train.epochs, so it is not serialized;
  // the resolved file stays loadable as a config.
  j["geco"]["ramp"] = {{"warmup_end", cfg.ramp.warmup_end},
                       {"ramp_end", cfg.ramp.ramp_end},
                       {"lambda_max", cfg.ramp.lambda_max}};
  j["fusion"] = {{"gamma", cfg.fusion.gamma}};
  for (const auto& [k, v] : cfg.fusion.per_type) j["fusion"]["per_type"][k] = v;
  j["eval"] = {{"fpr_max", cfg.fpr_max}, {"crop_stride", cfg.crop_stride}};
  std::ofstream f(paths.config_json());
  if (!f) throw IoError("cannot write " + paths.config_json().string());
  f << j.dump(2) << "\n";
}

inline std::vector<ClipRecord> load_records(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.data_kind == "synthetic") {
    require_artifact(paths.manifest(), "synth-data");
  } else {
    require_artifact(paths.manifest(), "extract-features");
  }
  uint64_t h = 0;
  std::vector<ClipRecord> records = read_manifest(paths.manifest().string(), &h);
  if (h != cfg.hash())
    throw ConfigError(strformat("manifest %s carries config hash %s, current config is %s; "
                                "re-run the data stages",
                                paths.manifest().string().c_str(), hash_hex(h).c_str(),
                                hash_hex(cfg.hash()).c_str()));
  return records;
}

inline LogMelSpectrogram load_features(const RunConfig& cfg, const RunPaths& paths,
                                       const ClipRecord& r) {
  const fs::path p = paths.feature_cache(r.path);
  require_artifact(p, "extract-features");
  return read_feature_cache(p.string(), cfg.features);
}

// Loads every train-split feature matrix once, keyed by manifest order.
struct TrainSet {
  std::vector<ClipRecord> records;            // train split only
  std::vector<Matrix> feats;                  // parallel to records
  std::map<std::string, std::vector<int>> by_type;  // machine_type -> indices
  int n_classes = 0;
};

inline TrainSet load_train_set(const RunConfig& cfg, const RunPaths& paths,
                               const std::vector<ClipRecord>& all) {
  TrainSet t;
  for (const auto& r : all)
    if (r.split == Split::kTrain) t.records.push_back(r);
  t.feats.reserve(t.records.size());
  for (const auto& r : t.records) {
    t.feats.push_back(load_features(cfg, paths, r).values);
    t.by_type[r.machine_type].push_back(static_cast<int>(t.feats.size()) - 1);
  }
  t.n_classes = num_classes(all);
  return t;
}

inline void write_epoch_csv(const fs::path& path, const std::vector<EpochStat>& curve,
                            uint64_t config_hash) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "# config_hash=" << hash_hex(config_hash) << "\n";
  f << "epoch,loss,lr\n";
  for (const auto& e : curve)
    f << e.epoch << ',' << strformat("%.9g", e.loss) << ',' << strformat("%.9g", e.lr) << '\n';
}

inline void write_geco_log(const fs::path& path, const std::vector<GeCoEpochStat>& curve,
                           uint64_t config_hash) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "# config_hash=" << hash_hex(config_hash) << "\n";
  f << "epoch,lr,lambda,loss_ce,loss_con,loss_total\n";
  for (const auto& e : curve)
    f << e.epoch << ',' << strformat("%.9g", e.lr) << ',' << strformat("%.9g", e.lambda) << ','
      << strformat("%.9g", e.loss_ce) << ',' << strformat("%.9g", e.loss_con) << ','
      << strformat("%.9g", e.loss_total) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage implementations.

inline void stage_synth_data(const RunConfig& cfg, const RunPaths& paths) {
  if (cfg.data_kind != "synthetic")
    throw ConfigError("synth-data stage requires data.kind = \"synthetic\"");
  auto clips = generate_synthetic(cfg.synth);
  std::vector<ClipRecord> records;
  records.reserve(clips.size());
  for (auto& [rec, wave] : clips) {
    fs::path p = paths.data_dir() / rec.path;
    fs::create_directories(p.parent_path());
    write_wav_pcm16(p.string(), wave.samples, wave.sample_rate);
    ClipRecord r = rec;
    r.path = p.string();
    records.push_back(std::move(r));
  }
  write_manifest(paths.manifest().string(), records, cfg.hash());
}

inline void stage_extract_features(const RunConfig& cfg, const RunPaths& paths, int workers = 1) {
  std::vector<ClipRecord> records;
  if (cfg.data_kind == "dcase") {
    if (cfg.data_root.empty()) throw ConfigError("data.root is required for data.kind = \"dcase\"");
    records = scan_dcase(cfg.data_root);
    write_manifest(paths.manifest().string(), records, cfg.hash());
  } else {
    records = detail::load_records(cfg, paths);
  }
  fs::create_directories(paths.features_dir());

  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const ClipRecord& r = records[i];
      Waveform w = load_waveform(r);
      LogMelSpectrogram spec = log_mel(w, cfg.features);
      write_feature_cache(paths.feature_cache(r.path).string(), spec);
    }
  };
  const int n_workers = std::max(1, workers);
  if (n_workers == 1 || records.size() < 2) {
    work(0, records.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (records.size() + n_workers - 1) / n_workers;
    for (int t = 0; t < n_workers; ++t) {
      const size_t b = std::min(records.size(), t * chunk);
      const size_t e = std::min(records.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  std::ofstream idx(paths.feature_index());
  if (!idx) throw IoError("cannot write " + paths.feature_index().string());
  idx << "# config_hash=" << hash_hex(cfg.hash()) << "\n";
  idx << "path,cache\n";
  for (const auto& r : records)
    idx << r.path << ',' << paths.feature_cache(r.path).filename().string() << '\n';
}

inline void stage_train_pae(const RunConfig& cfg, const RunPaths& paths) {
  auto records = detail::load_records(cfg, paths);
  detail::TrainSet train = detail::load_train_set(cfg, paths, records);
  for (const auto& [type, indices] : train.by_type) {
    std::vector<Matrix> clips;
    clips.reserve(indices.size());
    for (int i : indices) clips.push_back(train.feats[i]);
    const uint64_t seed = derive_seed(derive_seed(cfg.seed, {"pae"}), {type.c_str()});
    std::vector<EpochStat> curve;
    PAEModel model = train_pae(clips, cfg.pae_arch, cfg.pae_train, seed, &curve);
    fs::create_directories(paths.models_dir() / type);
    save_pae(paths.pae_ckpt(type).string(), model, cfg.hash(), type);
    detail::write_epoch_csv(paths.pae_log(type), curve, cfg.hash());
  }
}

namespace detail {

inline std::map<std::string, std::unique_ptr<PAEModel>> load_paes(const RunConfig& cfg,
                                                                  const RunPaths& paths,
                                                                  const TrainSet& train) {
  std::map<std::string, std::unique_ptr<PAEModel>> paes;
  for (const auto& [type, indices] : train.by_type) {
    (void)indices;
    require_artifact(paths.pae_ckpt(type), "train-pae");
    Rng dummy(0);
    auto model = std::make_unique<PAEModel>(cfg.pae_arch, dummy);
    load_pae(paths.pae_ckpt(type).string(), *model, cfg.hash());
    paes.emplace(type, std::move(model));
  }
  return paes;
}

}  // namespace detail

inline void stage_train_geco(const RunConfig& cfg, const RunPaths& paths,
                             const StepObserver& observer = nullptr) {
  auto records = detail::load_records(cfg, paths);
  detail::TrainSet train = detail::load_train_set(cfg, paths, records);
  auto paes = detail::load_paes(cfg, paths, train);

  FeatureStats stats = compute_feature_stats(train.feats);
  std::vector<TrainClip> clips(train.records.size());
  for (size_t i = 0; i < train.records.size(); ++i) {
    clips[i].features = &train.feats[i];
    clips[i].class_index = train.records[i].class_index;
    clips[i].pae = paes.at(train.records[i].machine_type).get();
  }
  std::vector<GeCoEpochStat> curve;
  GeCoModel model = train_geco(clips, train.n_classes, cfg.geco_arch, cfg.geco_train, cfg.ramp,
                               stats, derive_seed(cfg.seed, {"geco"}), &curve, observer);
  fs::create_directories(paths.models_dir());
  save_geco(paths.geco_ckpt().string(), model, cfg.hash());
  detail::write_geco_log(paths.geco_log(), curve, cfg.hash());
}

namespace detail {

inline GeCoModel load_geco_model(const RunConfig& cfg, const RunPaths& paths, int n_classes) {
  require_artifact(paths.geco_ckpt(), "train-geco");
  Rng dummy(0);
  GeCoModel model(cfg.geco_arch, n_classes, dummy);
  load_geco(paths.geco_ckpt().string(), model, cfg.hash());
  return model;
}

}  // namespace detail

inline void stage_compute_centers(const RunConfig& cfg, const RunPaths& paths) {
  auto records = detail::load_records(cfg, paths);
  detail::TrainSet train = detail::load_train_set(cfg, paths, records);
  GeCoModel model = detail::load_geco_model(cfg, paths, train.n_classes);
  std::vector<std::pair<const Matrix*, int>> clips;
  clips.reserve(train.feats.size());
  for (size_t i = 0; i < train.feats.size(); ++i)
    clips.emplace_back(&train.feats[i], train.records[i].class_index);
  ClassCenters centers = compute_centers(model, clips, cfg.crop_stride);
  save_centers(paths.centers_ckpt().string(), centers, cfg.hash());
}

inline void stage_score(const RunConfig& cfg, const RunPaths& paths) {
  auto records = detail::load_records(cfg, paths);
  detail::TrainSet train = detail::load_train_set(cfg, paths, records);
  auto paes = detail::load_paes(cfg, paths, train);
  GeCoModel model = detail::load_geco_model(cfg, paths, train.n_classes);
  detail::require_artifact(paths.centers_ckpt(), "compute-centers");
  ClassCenters centers;
  load_centers(paths.centers_ckpt().string(), centers, train.n_classes, model.embed_dim(),
               cfg.hash());

  std::vector<ScoredClip> scored;
  for (const auto& r : records) {
    if (r.split != Split::kTest) continue;
    LogMelSpectrogram spec = detail::load_features(cfg, paths, r);
    auto pae_it = paes.find(r.machine_type);
    if (pae_it == paes.end())
      throw DependencyError("no reconstruction model for machine type " + r.machine_type +
                            "; run train-pae first");
    ScoredClip s;
    s.record = r;
    s.mse = frame_anomaly_score(*pae_it->second, spec.values);
    s.cos_simi = clip_cosine(model, centers, spec.values, r.class_index, cfg.crop_stride);
    s.fused = fuse(s.mse, s.cos_simi, cfg.fusion.gamma_for(r.machine_type));
    scored.push_back(std::move(s));
  }
  if (scored.empty()) throw InvalidArgument("score: no test clips in manifest");

  // Paths go in relative to the data root so reports from identical-seed runs
  // in different output directories compare byte-for-byte.
  const fs::path rel_base =
      cfg.data_kind == "synthetic" ? paths.data_dir() : fs::path(cfg.data_root);
  auto rel_path = [&](const std::string& p) {
    fs::path q = fs::path(p).lexically_relative(rel_base);
    if (q.empty() || *q.begin() == "..") q = fs::path(p).filename();
    return q.generic_string();
  };

  std::ofstream f(paths.scores_csv());
  if (!f) throw IoError("cannot write " + paths.scores_csv().string());
  f << "# config_hash=" << hash_hex(cfg.hash()) << "\n";
  f << "path,machine_type,machine_id,label,mse,cos_simi,fused\n";
  for (const auto& s : scored)
    f << rel_path(s.record.path) << ',' << s.record.machine_type << ',' << s.record.machine_id
      << ',' << to_string(s.record.label) << ',' << strformat("%.9g", s.mse) << ','
      << strformat("%.9g", s.cos_simi) << ',' << strformat("%.9g", s.fused) << '\n';
  f.close();

  // Submission-format files, one per (machine_type, machine_id).
  fs::create_directories(paths.scores_dir());
  std::map<std::pair<std::string, int>, std::vector<std::pair<std::string, double>>> groups;
  for (const auto& s : scored)
    groups[{s.record.machine_type, s.record.machine_id}].emplace_back(
        fs::path(s.record.path).filename().string(), s.fused);
  for (const auto& [key, rows] : groups) {
    const auto& [type, id] = key;
    fs::path p = paths.scores_dir() / strformat("anomaly_score_%s_id_%02d.csv", type.c_str(), id);
    write_score_file(p.string(), rows, cfg.hash());
  }
}

namespace detail {

struct ScoreRow {
  std::string path, machine_type;
  int machine_id = 0;
  Label label = Label::kUnknown;
  double mse = 0, cos_simi = 0, fused = 0;
};

inline std::vector<ScoreRow> read_scores_csv(const fs::path& p, uint64_t expected_hash) {
  require_artifact(p, "score");
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  std::string line;
  std::vector<ScoreRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line.rfind("# config_hash=", 0) == 0) {
      uint64_t h = std::stoull(line.substr(14), nullptr, 16);
      if (h != expected_hash)
        throw ConfigError(strformat("%s carries config hash %s, current config is %s; re-run "
                                    "the score stage",
                                    p.string().c_str(), hash_hex(h).c_str(),
                                    hash_hex(expected_hash).c_str()));
      continue;
    }
    if (line.rfind("path,", 0) == 0) continue;
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t pos = line.find(',', start);
      cols.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (cols.size() != 7) throw ParseError("bad score row in " + p.string() + ": " + line);
    ScoreRow r;
    r.path = cols[0];
    r.machine_type = cols[1];
    r.machine_id = std::stoi(cols[2]);
    r.label = cols[3] == "anomaly" ? Label::kAnomaly
                                   : (cols[3] == "normal" ? Label::kNormal : Label::kUnknown);
    r.mse = std::stod(cols[4]);
    r.cos_simi = std::stod(cols[5]);
    r.fused = std::stod(cols[6]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError("no score rows in " + p.string());
  return rows;
}

inline EvalResult evaluate_rows(const std::vector<ScoreRow>& rows, double fpr_max) {
  std::vector<LabeledScore> ls;
  ls.reserve(rows.size());
  for (const auto& r : rows)
    ls.push_back({r.machine_type, r.machine_id, r.label == Label::kAnomaly ? 1 : 0, r.fused});
  return evaluate(ls, fpr_max);
}

inline void write_metrics_csv(const fs::path& p, const EvalResult& res, uint64_t config_hash) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << "# config_hash=" << hash_hex(config_hash) << "\n";
  f << "scope,machine_type,machine_id,auc,pauc\n";
  for (const auto& g : res.per_id) {
    if (!g.defined) continue;
    f << "id," << g.machine_type << ',' << g.machine_id << ',' << strformat("%.9g", g.auc) << ','
      << strformat("%.9g", g.pauc) << '\n';
  }
  for (const auto& [type, m] : res.per_type)
    f << "type_mean," << type << ",," << strformat("%.9g", m.first) << ','
      << strformat("%.9g", m.second) << '\n';
  f << "overall,,," << strformat("%.9g", res.overall_auc) << ','
    << strformat("%.9g", res.overall_pauc) << '\n';
}

}  // namespace detail

inline EvalResult stage_evaluate(const RunConfig& cfg, const RunPaths& paths) {
  auto rows = detail::read_scores_csv(paths.scores_csv(), cfg.hash());
  EvalResult res = detail::evaluate_rows(rows, cfg.fpr_max);
  detail::write_metrics_csv(paths.metrics_csv(), res, cfg.hash());

  json j;
  j["config_hash"] = hash_hex(cfg.hash());
  j["fpr_max"] = cfg.fpr_max;
  j["overall"] = {{"auc", res.overall_auc}, {"pauc", res.overall_pauc}};
  for (const auto& [type, m] : res.per_type)
    j["per_type"][type] = {{"auc", m.first}, {"pauc", m.second}};
  for (const auto& g : res.per_id) {
    if (!g.defined) continue;
    j["per_id"][g.machine_type + strformat("_id_%02d", g.machine_id)] = {{"auc", g.auc},
                                                                         {"pauc", g.pauc}};
  }
  for (const auto& w : res.warnings) j["warnings"].push_back(w);
  std::ofstream f(paths.summary_json());
  if (!f) throw IoError("cannot write " + paths.summary_json().string());
  f << j.dump(2) << "\n";
  return res;
}

inline void stage_grid_gamma(const RunConfig& cfg, const RunPaths& paths) {
  auto rows = detail::read_scores_csv(paths.scores_csv(), cfg.hash());
  std::vector<ScoredClip> scored;
  scored.reserve(rows.size());
  for (const auto& r : rows) {
    ScoredClip s;
    s.record.path = r.path;
    s.record.machine_type = r.machine_type;
    s.record.machine_id = r.machine_id;
    s.record.label = r.label;
    s.mse = r.mse;
    s.cos_simi = r.cos_simi;
    scored.push_back(std::move(s));
  }
  auto choices = grid_search_gamma(scored, default_gamma_grid(), cfg.fpr_max);
  std::ofstream f(paths.gamma_csv());
  if (!f) throw IoError("cannot write " + paths.gamma_csv().string());
  f << "# config_hash=" << hash_hex(cfg.hash()) << "\n";
  f << "machine_type,gamma,auc,pauc\n";
  for (const auto& c : choices)
    f << c.machine_type << ',' << strformat("%.9g", c.gamma) << ',' << strformat("%.9g", c.auc)
      << ',' << strformat("%.9g", c.pauc) << '\n';
}

inline void stage_plot(const RunConfig& cfg, const RunPaths& paths) {
  auto rows = detail::read_scores_csv(paths.scores_csv(), cfg.hash());
  fs::create_directories(paths.plots_dir());

  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_type;
  for (const auto& r : rows) {
    by_type[r.machine_type].first.push_back(r.fused);
    by_type[r.machine_type].second.push_back(r.label == Label::kAnomaly ? 1 : 0);
  }
  for (const auto& [type, sl] : by_type) {
    auto pts = roc_points(sl.first, sl.second);
    SvgSeries roc{"fused", {}, {}};
    for (auto& [x, y] : pts) {
      roc.xs.push_back(x);
      roc.ys.push_back(y);
    }
    SvgSeries diag{"chance", {0.0, 1.0}, {0.0, 1.0}};
    write_svg_plot((paths.plots_dir() / ("roc_" + type + ".svg")).string(), "ROC: " + type,
                   "false positive rate", "true positive rate", {roc, diag});
  }

  // Training curves, if the logs exist.
  if (fs::exists(paths.geco_log())) {
    std::ifstream f(paths.geco_log());
    std::string line;
    SvgSeries ce{"loss_ce", {}, {}}, con{"loss_con", {}, {}}, total{"loss_total", {}, {}};
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
      std::vector<double> v;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
      if (v.size() != 6) continue;
      ce.xs.push_back(v[0]);
      ce.ys.push_back(v[3]);
      con.xs.push_back(v[0]);
      con.ys.push_back(v[4]);
      total.xs.push_back(v[0]);
      total.ys.push_back(v[5]);
    }
    if (!ce.xs.empty())
      write_svg_plot((paths.plots_dir() / "geco_loss.svg").string(), "joint training loss",
                     "epoch", "loss", {ce, con, total});
  }
  for (const auto& [type, sl] : by_type) {
    (void)sl;
    if (!fs::exists(paths.pae_log(type))) continue;
    std::ifstream f(paths.pae_log(type));
    std::string line;
    SvgSeries loss{"loss", {}, {}};
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
      std::vector<double> v;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
      if (v.size() != 3) continue;
      loss.xs.push_back(v[0]);
      loss.ys.push_back(v[1]);
    }
    if (!loss.xs.empty())
      write_svg_plot((paths.plots_dir() / ("pae_loss_" + type + ".svg")).string(),
                     "masked-frame loss: " + type, "epoch", "loss", {loss});
  }
}

// ---------------------------------------------------------------------------
// Lambda ablation: four joint-training configurations sharing the pretrained
// reconstruction models. Runs in memory and emits one row per configuration.

struct AblationRow {
  std::string name;
  double auc = 0.0;
  double pauc = 0.0;
};

inline std::vector<AblationRow> stage_ablate_lambda(const RunConfig& cfg, const RunPaths& paths) {
  auto records = detail::load_records(cfg, paths);
  detail::TrainSet train = detail::load_train_set(cfg, paths, records);
  auto paes = detail::load_paes(cfg, paths, train);
  FeatureStats stats = compute_feature_stats(train.feats);

  std::vector<TrainClip> clips(train.records.size());
  for (size_t i = 0; i < train.records.size(); ++i) {
    clips[i].features = &train.feats[i];
    clips[i].class_index = train.records[i].class_index;
    clips[i].pae = paes.at(train.records[i].machine_type).get();
  }

  struct Variant {
    std::string name;
    RampSchedule ramp;
  };
  const int total = cfg.geco_train.epochs;
  std::vector<Variant> variants = {
      {"lambda=0", {0, 0, total, 0.0}},
      {"lambda=1", {0, 0, total, 1.0}},
      {"lambda=10", {0, 0, total, 10.0}},
      {"lambda=ramp", cfg.ramp},
  };

  std::vector<AblationRow> out;
  for (const auto& v : variants) {
    GeCoModel model = train_geco(clips, train.n_classes, cfg.geco_arch, cfg.geco_train, v.ramp,
                                 stats, derive_seed(cfg.seed, {"geco"}), nullptr, nullptr);
    std::vector<std::pair<const Matrix*, int>> center_clips;
    for (size_t i = 0; i < train.feats.size(); ++i)
      center_clips.emplace_back(&train.feats[i], train.records[i].class_index);
    ClassCenters centers = compute_centers(model, center_clips, cfg.crop_stride);

    std::vector<LabeledScore> scored;
    for (const auto& r : records) {
      if (r.split != Split::kTest) continue;
      LogMelSpectrogram spec = detail::load_features(cfg, paths, r);
      double mse = frame_anomaly_score(*paes.at(r.machine_type), spec.values);
      double cos = clip_cosine(model, centers, spec.values, r.class_index, cfg.crop_stride);
      scored.push_back({r.machine_type, r.machine_id, r.label == Label::kAnomaly ? 1 : 0,
                        fuse(mse, cos, cfg.fusion.gamma_for(r.machine_type))});
    }
    EvalResult res = evaluate(scored, cfg.fpr_max);
    out.push_back({v.name, res.overall_auc, res.overall_pauc});
  }

  std::ofstream f(paths.ablation_csv());
  if (!f) throw IoError("cannot write " + paths.ablation_csv().string());
  f << "# config_hash=" << hash_hex(cfg.hash()) << "\n";
  f << "config,auc,pauc\n";
  for (const auto& r : out)
    f << r.name << ',' << strformat("%.9g", r.auc) << ',' << strformat("%.9g", r.pauc) << '\n';
  return out;
}

// ---------------------------------------------------------------------------

inline void run_stage(Stage stage, const RunConfig& cfg, int workers = 1) {
  RunPaths paths(cfg);
  detail::write_resolved_config(cfg, paths);
  switch (stage) {
    case Stage::kSynthData: stage_synth_data(cfg, paths); break;
    case Stage::kExtractFeatures: stage_extract_features(cfg, paths, workers); break;
    case Stage::kTrainPae: stage_train_pae(cfg, paths); break;
    case Stage::kTrainGeco: stage_train_geco(cfg, paths); break;
    case Stage::kComputeCenters: stage_compute_centers(cfg, paths); break;
    case Stage::kScore: stage_score(cfg, paths); break;
    case Stage::kGridGamma: stage_grid_gamma(cfg, paths); break;
    case Stage::kEvaluate: stage_evaluate(cfg, paths); break;
    case Stage::kPlot: stage_plot(cfg, paths); break;
    case Stage::kAblateLambda: stage_ablate_lambda(cfg, paths); break;
  }
}

// Convenience for tests and full runs: every stage from data to metrics.
inline EvalResult run_full_synthetic(const RunConfig& cfg, int workers = 1) {
  RunPaths paths(cfg);
  detail::write_resolved_config(cfg, paths);
  stage_synth_data(cfg, paths);
  stage_extract_features(cfg, paths, workers);
  stage_train_pae(cfg, paths);
  stage_train_geco(cfg, paths);
  stage_compute_centers(cfg, paths);
  stage_score(cfg, paths);
  return stage_evaluate(cfg, paths);
}

}  // namespace geco
