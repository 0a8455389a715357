// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geco/checkpoint.hpp"
#include "geco/common.hpp"
#include "geco/nn.hpp"

namespace geco {

// Masked-frame predictive autoencoder. A transformer encoder reads a short
// window of log-Mel frames in which one frame has been replaced by a learnable
// mask token; a bottleneck MLP bridges into a narrower transformer decoder
// that predicts the full window. The objective only sees the masked frame.

struct PAEConfig {
  int n_mels = 128;
  int window = 5;
  int enc_width = 512;
  int enc_blocks = 2;
  int dec_width = 256;
  int dec_blocks = 2;
  int bottleneck_dim = 64;
  int heads = 4;
  int mlp_ratio = 4;

  uint64_t hash() const {
    std::string s = strformat("pae|%d|%d|%d|%d|%d|%d|%d|%d|%d", n_mels, window, enc_width,
                              enc_blocks, dec_width, dec_blocks, bottleneck_dim, heads, mlp_ratio);
    return fnv1a64(s);
  }
};

struct MaskedWindow {
  Matrix x;         // [window x n_mels] original frames
  Matrix mask;      // [window x n_mels] ones exactly on the masked frame
  Matrix x_masked;  // x with the masked frame replaced by the mask token
  int target_index = -1;
};

class PAEModel {
 public:
  PAEModel() = default;

  PAEModel(const PAEConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.window < 1 || cfg.n_mels < 1) throw ConfigError("PAEConfig: window and n_mels must be positive");
    in_proj_ = nn::Linear(cfg.n_mels, cfg.enc_width, rng);
    enc_pos_ = nn::PositionalEmbedding(cfg.window, cfg.enc_width, rng);
    for (int i = 0; i < cfg.enc_blocks; ++i)
      enc_.emplace_back(cfg.enc_width, cfg.heads, cfg.window, cfg.mlp_ratio, rng);
    enc_ln_ = nn::LayerNorm(cfg.enc_width);
    bott1_ = nn::Linear(cfg.enc_width, cfg.bottleneck_dim, rng);
    bott2_ = nn::Linear(cfg.bottleneck_dim, cfg.dec_width, rng);
    dec_pos_ = nn::PositionalEmbedding(cfg.window, cfg.dec_width, rng);
    for (int i = 0; i < cfg.dec_blocks; ++i)
      dec_.emplace_back(cfg.dec_width, cfg.heads, cfg.window, cfg.mlp_ratio, rng);
    dec_ln_ = nn::LayerNorm(cfg.dec_width);
    out_proj_ = nn::Linear(cfg.dec_width, cfg.n_mels, rng);
    mask_token = Vector::Zero(cfg.n_mels);
    nn::init_normal(mask_token, 0.02, rng);
    g_mask_token = Vector::Zero(cfg.n_mels);
  }

  const PAEConfig& config() const { return cfg_; }

  // x_masked: one or more windows stacked row-wise, [B*window x n_mels].
  // Returns the predicted windows with the same shape.
  Matrix forward(const Matrix& x_masked) {
    if (x_masked.rows() % cfg_.window != 0 || x_masked.cols() != cfg_.n_mels)
      throw InvalidArgument(strformat("pae_forward: expected [k*%d x %d] input, got [%ld x %ld]",
                                      cfg_.window, cfg_.n_mels, static_cast<long>(x_masked.rows()),
                                      static_cast<long>(x_masked.cols())));
    require_finite(x_masked, "pae_forward input");
    Matrix h = enc_pos_.forward(in_proj_.forward(x_masked));
    for (auto& blk : enc_) h = blk.forward(h);
    h = enc_ln_.forward(h);
    h = bott2_.forward(bott_act_.forward(bott1_.forward(h)));
    h = dec_pos_.forward(h);
    for (auto& blk : dec_) h = blk.forward(h);
    return out_proj_.forward(dec_ln_.forward(h));
  }

  // Gradient w.r.t. the (masked) input; parameter gradients accumulate.
  // The caller routes masked-row input gradients into g_mask_token.
  Matrix backward(const Matrix& drecon) {
    Matrix dh = dec_ln_.backward(out_proj_.backward(drecon));
    for (auto it = dec_.rbegin(); it != dec_.rend(); ++it) dh = it->backward(dh);
    dec_pos_.backward(dh);
    dh = bott1_.backward(bott_act_.backward(bott2_.backward(dh)));
    dh = enc_ln_.backward(dh);
    for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) dh = it->backward(dh);
    enc_pos_.backward(dh);
    return in_proj_.backward(dh);
  }

  nn::Params params() {
    nn::Params out;
    in_proj_.collect(out, "in_proj");
    enc_pos_.collect(out, "enc_pos");
    for (size_t i = 0; i < enc_.size(); ++i) enc_[i].collect(out, strformat("enc%zu", i));
    enc_ln_.collect(out, "enc_ln");
    bott1_.collect(out, "bott1");
    bott2_.collect(out, "bott2");
    dec_pos_.collect(out, "dec_pos");
    for (size_t i = 0; i < dec_.size(); ++i) dec_[i].collect(out, strformat("dec%zu", i));
    dec_ln_.collect(out, "dec_ln");
    out_proj_.collect(out, "out_proj");
    out.push_back({"mask_token", mask_token.data(), g_mask_token.data(),
                   static_cast<size_t>(mask_token.size())});
    return out;
  }

  Vector mask_token;
  Vector g_mask_token;

 private:
  PAEConfig cfg_;
  nn::Linear in_proj_;
  nn::PositionalEmbedding enc_pos_;
  std::vector<nn::TransformerBlock> enc_;
  nn::LayerNorm enc_ln_;
  nn::Linear bott1_;
  nn::Gelu bott_act_;
  nn::Linear bott2_;
  nn::PositionalEmbedding dec_pos_;
  std::vector<nn::TransformerBlock> dec_;
  nn::LayerNorm dec_ln_;
  nn::Linear out_proj_;
};

// ---------------------------------------------------------------------------

inline MaskedWindow mask_window(const Matrix& x, int target_index, const Vector& mask_token) {
  if (target_index < 0 || target_index >= x.rows())
    throw InvalidArgument(strformat("mask_window: target_index %d outside [0, %ld)", target_index,
                                    static_cast<long>(x.rows())));
  if (mask_token.size() != x.cols())
    throw InvalidArgument("mask_window: mask token width does not match n_mels");
  MaskedWindow w;
  w.x = x;
  w.mask = Matrix::Zero(x.rows(), x.cols());
  w.mask.row(target_index).setOnes();
  w.x_masked = x;
  w.x_masked.row(target_index) = mask_token.transpose();
  w.target_index = target_index;
  return w;
}

// Mean squared error over masked entries only.
inline double masked_mse(const Matrix& x, const Matrix& recon, const Matrix& mask) {
  if (x.rows() != recon.rows() || x.cols() != recon.cols() || x.rows() != mask.rows() ||
      x.cols() != mask.cols())
    throw InvalidArgument("masked_mse: shape mismatch");
  const double count = mask.sum();
  if (count <= 0.0) throw InvalidArgument("masked_mse: mask selects no entries");
  return (mask.array() * (x - recon).array().square()).sum() / count;
}

// d masked_mse / d recon.
inline Matrix masked_mse_grad(const Matrix& x, const Matrix& recon, const Matrix& mask) {
  const double count = mask.sum();
  if (count <= 0.0) throw InvalidArgument("masked_mse: mask selects no entries");
  return (2.0 / count) * (mask.array() * (recon - x).array()).matrix();
}

// ---------------------------------------------------------------------------

struct PAETrainConfig {
  int epochs = 60;
  int batch = 512;
  double lr_initial = 1e-3;
  double lr_final = 1e-4;
  int lr_drop_epoch = 30;

  uint64_t hash() const {
    std::string s = strformat("paetrain|%d|%d|%.17g|%.17g|%d", epochs, batch, lr_initial, lr_final,
                              lr_drop_epoch);
    return fnv1a64(s);
  }
};

inline double pae_lr_at(const PAETrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw InvalidArgument(strformat("pae_lr_at: epoch %d outside [0, %d)", epoch, cfg.epochs));
  return epoch < cfg.lr_drop_epoch ? cfg.lr_initial : cfg.lr_final;
}

struct EpochStat {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Trains one PAE on the clips of a single machine type. Clips are matrices
// [frames x n_mels]; each epoch slices them into non-overlapping windows,
// shuffles the window order, and masks one fresh uniformly random frame per
// window.
inline PAEModel train_pae(const std::vector<Matrix>& clips, const PAEConfig& arch,
                          const PAETrainConfig& cfg, uint64_t seed,
                          std::vector<EpochStat>* curve = nullptr) {
  if (clips.empty()) throw InvalidArgument("train_pae: no clips");
  const int w = arch.window;
  std::vector<std::pair<int, int>> windows;  // (clip, start frame)
  for (size_t ci = 0; ci < clips.size(); ++ci) {
    if (clips[ci].cols() != arch.n_mels)
      throw InvalidArgument(strformat("train_pae: clip %zu has %ld mel bins, config says %d", ci,
                                      static_cast<long>(clips[ci].cols()), arch.n_mels));
    const int full = static_cast<int>(clips[ci].rows()) / w;
    for (int k = 0; k < full; ++k) windows.emplace_back(static_cast<int>(ci), k * w);
  }
  if (windows.empty()) throw InvalidArgument("train_pae: no clip is long enough for one window");

  Rng init_rng(derive_seed(seed, {"pae", "init"}));
  Rng train_rng(derive_seed(seed, {"pae", "train"}));
  PAEModel model(arch, init_rng);
  nn::Params params = model.params();
  nn::Adam opt(cfg.lr_initial);

  std::vector<size_t> order(windows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = pae_lr_at(cfg, epoch);
    opt.set_lr(lr);
    train_rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t n_batches = 0;
    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch)) {
      const size_t bsz = std::min(static_cast<size_t>(cfg.batch), order.size() - off);
      Matrix xs(bsz * w, arch.n_mels);
      Matrix xm(bsz * w, arch.n_mels);
      Matrix mask = Matrix::Zero(bsz * w, arch.n_mels);
      std::vector<int> targets(bsz);
      for (size_t b = 0; b < bsz; ++b) {
        const auto& [ci, start] = windows[order[off + b]];
        const int t = static_cast<int>(train_rng.uniform_index(static_cast<size_t>(w)));
        targets[b] = t;
        xs.middleRows(b * w, w) = clips[ci].middleRows(start, w);
        xm.middleRows(b * w, w) = xs.middleRows(b * w, w);
        xm.row(b * w + t) = model.mask_token.transpose();
        mask.row(b * w + t).setOnes();
      }
      nn::zero_grad(params);
      Matrix recon = model.forward(xm);
      const double loss = masked_mse(xs, recon, mask);
      Matrix dr = masked_mse_grad(xs, recon, mask);
      Matrix dxm = model.backward(dr);
      for (size_t b = 0; b < bsz; ++b)
        model.g_mask_token += dxm.row(b * w + targets[b]).transpose();
      opt.step(params);
      epoch_loss += loss;
      ++n_batches;
    }
    if (curve) curve->push_back({epoch, epoch_loss / static_cast<double>(n_batches), lr});
  }
  return model;
}

// Mean center-frame prediction error over all stride-1 window positions.
inline double frame_anomaly_score(PAEModel& model, const Matrix& spec) {
  const int w = model.config().window;
  const int center = w / 2;
  const int frames = static_cast<int>(spec.rows());
  if (frames < w)
    throw InvalidArgument(strformat("frame_anomaly_score: clip has %d frames, need at least %d",
                                    frames, w));
  const int n_windows = frames - w + 1;
  const int chunk = 512;
  double total = 0.0;
  for (int base = 0; base < n_windows; base += chunk) {
    const int b = std::min(chunk, n_windows - base);
    Matrix xs(b * w, spec.cols());
    Matrix xm(b * w, spec.cols());
    Matrix mask = Matrix::Zero(b * w, spec.cols());
    for (int i = 0; i < b; ++i) {
      xs.middleRows(i * w, w) = spec.middleRows(base + i, w);
      xm.middleRows(i * w, w) = xs.middleRows(i * w, w);
      xm.row(i * w + center) = model.mask_token.transpose();
      mask.row(i * w + center).setOnes();
    }
    Matrix recon = model.forward(xm);
    for (int i = 0; i < b; ++i)
      total += masked_mse(xs.middleRows(i * w, w), recon.middleRows(i * w, w),
                          mask.middleRows(i * w, w));
  }
  return total / static_cast<double>(n_windows);
}

// ---------------------------------------------------------------------------

inline void save_pae(const std::string& path, PAEModel& model, uint64_t config_hash,
                     const std::string& machine_type) {
  nn::Params p = model.params();
  save_checkpoint(path, config_hash, machine_type, slices_from_params(p));
}

inline std::string load_pae(const std::string& path, PAEModel& model, uint64_t config_hash) {
  nn::Params p = model.params();
  return load_checkpoint(path, config_hash, slices_from_params(p));
}

}  // namespace geco
