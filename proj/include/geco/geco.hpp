// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "geco/checkpoint.hpp"
#include "geco/common.hpp"
#include "geco/features.hpp"
#include "geco/nn.hpp"
#include "geco/nn_conv.hpp"
#include "geco/pae.hpp"

namespace geco {

// Joint training of a convolutional embedding network on machine-ID
// classification plus a contrastive term that separates original crops from
// their masked-frame reconstructions within each class.

// ---------------------------------------------------------------------------
// Lambda ramp: zero during warmup, linear to lambda_max, then constant.

struct RampSchedule {
  int warmup_end = 30;
  int ramp_end = 90;
  int total = 120;
  double lambda_max = 10.0;
};

inline double lambda_at(const RampSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total)
    throw InvalidArgument(strformat("lambda_at: epoch %d outside [0, %d)", epoch, s.total));
  if (epoch < s.warmup_end) return 0.0;
  if (epoch >= s.ramp_end) return s.lambda_max;
  return s.lambda_max * static_cast<double>(epoch - s.warmup_end) /
         static_cast<double>(s.ramp_end - s.warmup_end);
}

// ---------------------------------------------------------------------------

enum class LossForm { kSoftmaxEq2, kBceProxy };

inline std::string to_string(LossForm f) {
  return f == LossForm::kSoftmaxEq2 ? "softmax_eq2" : "bce_proxy";
}

inline LossForm parse_loss_form(const std::string& s) {
  if (s == "softmax_eq2") return LossForm::kSoftmaxEq2;
  if (s == "bce_proxy") return LossForm::kBceProxy;
  throw ConfigError("unknown loss_form: " + s + " (expected softmax_eq2 or bce_proxy)");
}

struct GecoArch {
  nn::ExtractorArch extractor;
  int n_mels = 128;
  int crop_frames = 65;
  double temperature = 1.0;

  uint64_t hash() const {
    std::string s = strformat("geco|%d|%d|%d|%d|%.17g", extractor.stem_channels,
                              extractor.stem_stride, extractor.embed_dim, n_mels, temperature);
    s += strformat("|crop%d|", crop_frames);
    for (size_t i = 0; i < extractor.stage_channels.size(); ++i)
      s += strformat("%d:%d,", extractor.stage_channels[i], extractor.stage_blocks[i]);
    return fnv1a64(s);
  }
};

class GeCoModel {
 public:
  GeCoModel() = default;

  GeCoModel(const GecoArch& arch, int n_classes, Rng& rng)
      : arch_(arch),
        n_classes_(n_classes),
        extractor_(arch.extractor, rng),
        head_(arch.extractor.embed_dim, n_classes, rng) {
    if (n_classes < 1) throw ConfigError("GeCoModel: need at least one class");
    const int d = arch.extractor.embed_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    proxies_pos.resize(n_classes, d);
    proxies_neg.resize(n_classes, d);
    nn::init_uniform(proxies_pos, bound, rng);
    nn::init_uniform(proxies_neg, bound, rng);
    g_proxies_pos = Matrix::Zero(n_classes, d);
    g_proxies_neg = Matrix::Zero(n_classes, d);
    stats.mean = Vector::Zero(arch.n_mels);
    stats.stddev = Vector::Ones(arch.n_mels);
  }

  const GecoArch& arch() const { return arch_; }
  int n_classes() const { return n_classes_; }
  int embed_dim() const { return arch_.extractor.embed_dim; }
  nn::ResNetExtractor& extractor() { return extractor_; }
  nn::Linear& head() { return head_; }

  // Raw (unnormalized) embeddings [N x d].
  Matrix embed(const nn::Tensor4& x, bool training) { return extractor_.forward(x, training); }

  nn::Params params() {
    nn::Params out;
    extractor_.collect(out, "extractor");
    head_.collect(out, "head");
    out.push_back({"proxies_pos", proxies_pos.data(), g_proxies_pos.data(),
                   static_cast<size_t>(proxies_pos.size())});
    out.push_back({"proxies_neg", proxies_neg.data(), g_proxies_neg.data(),
                   static_cast<size_t>(proxies_neg.size())});
    return out;
  }

  nn::Params buffers() {
    nn::Params out;
    extractor_.collect_buffers(out, "extractor");
    out.push_back({"stats.mean", stats.mean.data(), nullptr, static_cast<size_t>(stats.mean.size())});
    out.push_back({"stats.stddev", stats.stddev.data(), nullptr,
                   static_cast<size_t>(stats.stddev.size())});
    return out;
  }

  Matrix proxies_pos, proxies_neg;
  Matrix g_proxies_pos, g_proxies_neg;
  FeatureStats stats;

 private:
  GecoArch arch_;
  int n_classes_ = 0;
  nn::ResNetExtractor extractor_;
  nn::Linear head_;
};

// ---------------------------------------------------------------------------
// Reconstruction augmentation: the crop's frames partition into consecutive
// groups of `window`; in each group one uniformly random frame is replaced by
// the predictor's output for that frame.
//
// The predictor sees the original (unmasked) group plus the chosen frame index
// and returns a full predicted group; only the chosen row is substituted.

template <typename Predictor>
Matrix reconstruct_augment(const Matrix& x, int window, Predictor&& predict, Rng& rng) {
  if (window < 1 || x.rows() % window != 0)
    throw InvalidArgument(strformat("reconstruct_augment: %ld frames not divisible by window %d",
                                    static_cast<long>(x.rows()), window));
  const int groups = static_cast<int>(x.rows()) / window;
  Matrix out = x;
  for (int g = 0; g < groups; ++g) {
    const int t = rng.uniform_int(window);
    Matrix pred = predict(Matrix(x.middleRows(g * window, window)), t);
    if (pred.rows() != window || pred.cols() != x.cols())
      throw InvalidArgument("reconstruct_augment: predictor returned wrong shape");
    out.row(g * window + t) = pred.row(t);
  }
  return out;
}

inline Matrix reconstruct_augment(const Matrix& x, PAEModel& pae, Rng& rng) {
  const int w = pae.config().window;
  if (w < 1 || x.rows() % w != 0)
    throw InvalidArgument(strformat("reconstruct_augment: %ld frames not divisible by window %d",
                                    static_cast<long>(x.rows()), w));
  const int groups = static_cast<int>(x.rows()) / w;
  Matrix xm = x;
  std::vector<int> targets(groups);
  for (int g = 0; g < groups; ++g) {
    const int t = rng.uniform_int(w);
    targets[g] = t;
    xm.row(g * w + t) = pae.mask_token.transpose();
  }
  Matrix recon = pae.forward(xm);
  Matrix out = x;
  for (int g = 0; g < groups; ++g)
    out.row(g * w + targets[g]) = recon.row(g * w + targets[g]);
  return out;
}

// ---------------------------------------------------------------------------
// Supervised contrastive loss for one anchor (Eq. form with temperature 1 by
// default): L = -(1/|Cp|) sum_p log( exp(z.p/T) / sum_{a in Cp u Cn} exp(z.a/T) ).
// Dot products are taken as given; callers pass L2-normalized embeddings.

struct ContrastiveGrad {
  Vector dz;
  Matrix dCp;
  Matrix dCn;
};

inline double contrastive_loss(const Vector& z, const Matrix& Cp, const Matrix& Cn,
                               double temperature = 1.0, ContrastiveGrad* grad = nullptr) {
  if (Cp.rows() < 1) throw InvalidArgument("contrastive_loss: empty positive set");
  if (temperature <= 0.0) throw InvalidArgument("contrastive_loss: temperature must be positive");
  const auto P = Cp.rows();
  const auto Nn = Cn.rows();
  Vector logits(P + Nn);
  logits.head(P) = Cp * z / temperature;
  if (Nn > 0) logits.tail(Nn) = Cn * z / temperature;
  const double m = logits.maxCoeff();
  Vector ex = (logits.array() - m).exp();
  const double denom = ex.sum();
  const double lse = m + std::log(denom);
  double loss = 0.0;
  for (Eigen::Index p = 0; p < P; ++p) loss += lse - logits(p);
  loss /= static_cast<double>(P);
  if (grad) {
    Vector soft = ex / denom;
    // d loss / d logits
    Vector dlog = soft;
    dlog.head(P).array() -= 1.0 / static_cast<double>(P);
    dlog /= temperature;
    grad->dz = Cp.transpose() * dlog.head(P);
    if (Nn > 0) grad->dz += Cn.transpose() * dlog.tail(Nn);
    grad->dCp = dlog.head(P) * z.transpose();
    grad->dCn = Nn > 0 ? Matrix(dlog.tail(Nn) * z.transpose()) : Matrix(0, z.size());
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Two-proxy binary discrimination: originals are pulled toward the class's
// positive proxy and reconstructions toward the negative one. The logit is
// z.wp - z.wn and the loss is binary cross-entropy with target 1 for
// originals. Inputs are expected L2-normalized.

inline double bce_proxy_loss(const Vector& z, const Vector& wp, const Vector& wn,
                             bool is_reconstruction, Vector* dz = nullptr, Vector* dwp = nullptr,
                             Vector* dwn = nullptr) {
  const double logit = z.dot(wp) - z.dot(wn);
  const double target = is_reconstruction ? 0.0 : 1.0;
  // softplus(x) = log(1 + e^x), stable for both signs
  auto softplus = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const double loss = is_reconstruction ? softplus(logit) : softplus(-logit);
  const double sigma = 1.0 / (1.0 + std::exp(-logit));
  const double dlogit = sigma - target;
  if (dz) *dz = dlogit * (wp - wn);
  if (dwp) *dwp = dlogit * z;
  if (dwn) *dwn = -dlogit * z;
  return loss;
}

// ---------------------------------------------------------------------------
// L2 normalization with backward. The backward maps an upstream gradient on
// the normalized vector to a gradient on the raw vector.

inline Vector l2_normalize(const Vector& v, double eps = 1e-12) {
  const double n = v.norm();
  if (n < eps) throw NumericError("l2_normalize: zero-norm vector");
  return v / n;
}

inline Vector l2_normalize_backward(const Vector& raw, const Vector& dunit, double eps = 1e-12) {
  const double n = raw.norm();
  if (n < eps) throw NumericError("l2_normalize: zero-norm vector");
  const Vector u = raw / n;
  return (dunit - u * u.dot(dunit)) / n;
}

// ---------------------------------------------------------------------------
// Total loss over one assembled batch. Rows [0, n_orig) are originals; rows
// [n_orig, rows) are reconstructions, where reconstruction row n_orig + i is
// paired with original row i. In baseline mode there are no reconstructions.

struct GeCoLoss {
  double ce = 0.0;
  double con = 0.0;
  double total = 0.0;
  int skipped_anchors = 0;
};

inline GeCoLoss geco_total_loss(GeCoModel& model, const nn::Tensor4& x,
                                const std::vector<int>& labels, int n_orig, double lambda,
                                LossForm form, bool training, bool backprop) {
  const int rows = x.n;
  if (static_cast<int>(labels.size()) != rows)
    throw InvalidArgument("geco_total_loss: label count does not match batch rows");
  if (n_orig < 1 || n_orig > rows || (rows != n_orig && rows != 2 * n_orig))
    throw InvalidArgument("geco_total_loss: batch must hold N originals or N+N pairs");
  if (lambda < 0.0) throw InvalidArgument("geco_total_loss: lambda must be nonnegative");
  if (backprop && !training)
    throw InvalidArgument("geco_total_loss: backprop requires a training-mode forward pass");
  const int C = model.n_classes();
  const bool paired = rows == 2 * n_orig;
  const double T = model.arch().temperature;

  Matrix H = model.embed(x, training);
  Matrix logits = model.head().forward(H);

  // Cross-entropy over every row; reconstructions keep their source labels.
  double ce = 0.0;
  Matrix dlogits = Matrix::Zero(rows, C);
  for (int i = 0; i < rows; ++i) {
    if (labels[i] < 0 || labels[i] >= C)
      throw InvalidArgument(strformat("geco_total_loss: label %d outside [0, %d)", labels[i], C));
    const double m = logits.row(i).maxCoeff();
    Vector ex = (logits.row(i).array() - m).exp();
    const double denom = ex.sum();
    ce += std::log(denom) + m - logits(i, labels[i]);
    dlogits.row(i) = ex.transpose() / denom;
    dlogits(i, labels[i]) -= 1.0;
  }
  ce /= static_cast<double>(rows);
  dlogits /= static_cast<double>(rows);
  if (!std::isfinite(ce)) throw NumericError("geco_total_loss: cross-entropy is not finite");

  Matrix dH;
  if (backprop) dH = model.head().backward(dlogits);

  // Normalized embeddings for the contrastive term.
  double con = 0.0;
  int skipped = 0;
  if (paired) {
    Matrix Z(rows, H.cols());
    for (int i = 0; i < rows; ++i) Z.row(i) = l2_normalize(H.row(i).transpose()).transpose();
    Matrix dZ = Matrix::Zero(rows, H.cols());

    if (form == LossForm::kSoftmaxEq2) {
      int anchors_used = 0;
      for (int i = 0; i < n_orig; ++i) {
        std::vector<int> pos_rows;
        for (int j = 0; j < n_orig; ++j)
          if (j != i && labels[j] == labels[i]) pos_rows.push_back(j);
        if (pos_rows.empty()) {
          ++skipped;
          continue;
        }
        Matrix Cp(pos_rows.size(), Z.cols());
        for (size_t k = 0; k < pos_rows.size(); ++k) Cp.row(k) = Z.row(pos_rows[k]);
        Matrix Cn = Z.row(n_orig + i);
        ContrastiveGrad g;
        con += contrastive_loss(Z.row(i).transpose(), Cp, Cn, T, backprop ? &g : nullptr);
        ++anchors_used;
        if (backprop) {
          dZ.row(i) += g.dz.transpose();
          for (size_t k = 0; k < pos_rows.size(); ++k) dZ.row(pos_rows[k]) += g.dCp.row(k);
          dZ.row(n_orig + i) += g.dCn.row(0);
        }
      }
      if (anchors_used > 0) {
        con /= static_cast<double>(anchors_used);
        dZ /= static_cast<double>(anchors_used);
      }
    } else {
      // BCE proxies are normalized per step with gradient flow back to the raw
      // proxy parameters.
      Matrix Wp(C, Z.cols()), Wn(C, Z.cols());
      for (int c = 0; c < C; ++c) {
        Wp.row(c) = l2_normalize(model.proxies_pos.row(c).transpose()).transpose();
        Wn.row(c) = l2_normalize(model.proxies_neg.row(c).transpose()).transpose();
      }
      Matrix dWp = Matrix::Zero(C, Z.cols()), dWn = Matrix::Zero(C, Z.cols());
      for (int i = 0; i < rows; ++i) {
        const int c = labels[i];
        Vector dz, dwp, dwn;
        con += bce_proxy_loss(Z.row(i).transpose(), Wp.row(c).transpose(), Wn.row(c).transpose(),
                              i >= n_orig, backprop ? &dz : nullptr, backprop ? &dwp : nullptr,
                              backprop ? &dwn : nullptr);
        if (backprop) {
          dZ.row(i) += dz.transpose();
          dWp.row(c) += dwp.transpose();
          dWn.row(c) += dwn.transpose();
        }
      }
      con /= static_cast<double>(rows);
      dZ /= static_cast<double>(rows);
      dWp /= static_cast<double>(rows);
      dWn /= static_cast<double>(rows);
      if (backprop && lambda > 0.0) {
        for (int c = 0; c < C; ++c) {
          model.g_proxies_pos.row(c) +=
              lambda * l2_normalize_backward(model.proxies_pos.row(c).transpose(),
                                             dWp.row(c).transpose())
                           .transpose();
          model.g_proxies_neg.row(c) +=
              lambda * l2_normalize_backward(model.proxies_neg.row(c).transpose(),
                                             dWn.row(c).transpose())
                           .transpose();
        }
      }
    }
    if (!std::isfinite(con)) throw NumericError("geco_total_loss: contrastive loss is not finite");

    if (backprop && lambda > 0.0) {
      for (int i = 0; i < rows; ++i)
        dH.row(i) += lambda * l2_normalize_backward(H.row(i).transpose(), dZ.row(i).transpose())
                                 .transpose();
    }
  }

  GeCoLoss out;
  out.ce = ce;
  out.con = con;
  out.total = ce + lambda * con;
  out.skipped_anchors = skipped;
  if (!std::isfinite(out.total)) throw NumericError("geco_total_loss: total loss is not finite");
  if (backprop) model.extractor().backward(dH);
  return out;
}

// ---------------------------------------------------------------------------

struct GeCoTrainConfig {
  int epochs = 120;
  int batch = 32;  // originals per step; losses see 2x this when augmenting
  double lr = 0.1;
  std::vector<int> lr_steps = {50, 90};
  double lr_step_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  LossForm loss_form = LossForm::kBceProxy;
  bool use_reconstruction = true;  // false: plain ID classifier baseline
  bool drop_last = true;

  uint64_t hash() const {
    std::string s = strformat("gecotrain|%d|%d|%.17g|%.17g|%.17g|%.17g|%s|%d|%d", epochs, batch, lr,
                              lr_step_factor, momentum, weight_decay, to_string(loss_form).c_str(),
                              use_reconstruction ? 1 : 0, drop_last ? 1 : 0);
    for (int e : lr_steps) s += strformat("|%d", e);
    return fnv1a64(s);
  }
};

inline double geco_lr_at(const GeCoTrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw InvalidArgument(strformat("geco_lr_at: epoch %d outside [0, %d)", epoch, cfg.epochs));
  double lr = cfg.lr;
  for (int step : cfg.lr_steps)
    if (epoch >= step) lr *= cfg.lr_step_factor;
  return lr;
}

struct TrainClip {
  const Matrix* features = nullptr;  // raw log-Mel [frames x n_mels]
  int class_index = -1;
  PAEModel* pae = nullptr;  // frozen, per machine type
};

struct GeCoEpochStat {
  int epoch = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double loss_ce = 0.0;
  double loss_con = 0.0;
  double loss_total = 0.0;
};

struct GeCoStepInfo {
  int epoch = 0;
  int step = 0;
  int batch_rows = 0;
  int n_orig = 0;
  double lr = 0.0, lambda = 0.0;
  GeCoLoss loss;
  const std::vector<int>* labels = nullptr;       // per batch row
  const std::vector<int>* source_clip = nullptr;  // per batch row, clip index
};

using StepObserver = std::function<void(const GeCoStepInfo&)>;

// Trains the joint model. Clips supply raw features; normalization statistics
// are applied after augmentation so originals and reconstructions share the
// same scaling. PAE models are frozen (inference only).
inline GeCoModel train_geco(const std::vector<TrainClip>& clips, int n_classes,
                            const GecoArch& arch, const GeCoTrainConfig& cfg,
                            const RampSchedule& ramp, const FeatureStats& stats, uint64_t seed,
                            std::vector<GeCoEpochStat>* curve = nullptr,
                            const StepObserver& observer = nullptr) {
  if (clips.empty()) throw InvalidArgument("train_geco: no clips");
  if (ramp.total != cfg.epochs)
    throw ConfigError(strformat("train_geco: ramp covers %d epochs but training runs %d",
                                ramp.total, cfg.epochs));
  std::vector<int> per_class(n_classes, 0);
  for (size_t i = 0; i < clips.size(); ++i) {
    const auto& c = clips[i];
    if (c.class_index < 0 || c.class_index >= n_classes)
      throw InvalidArgument(strformat("train_geco: clip %zu has class %d outside [0, %d)", i,
                                      c.class_index, n_classes));
    if (c.features->rows() < arch.crop_frames)
      throw InvalidArgument(strformat("train_geco: clip %zu has %ld frames, need %d for one crop",
                                      i, static_cast<long>(c.features->rows()), arch.crop_frames));
    if (c.features->cols() != arch.n_mels)
      throw InvalidArgument("train_geco: clip mel dimension does not match arch");
    if (cfg.use_reconstruction && c.pae == nullptr)
      throw InvalidArgument(strformat("train_geco: clip %zu has no reconstruction model", i));
    ++per_class[c.class_index];
  }
  for (int c = 0; c < n_classes; ++c)
    if (per_class[c] == 0)
      throw InvalidArgument(strformat("train_geco: class %d has zero training clips", c));

  Rng init_rng(derive_seed(seed, {"geco", "init"}));
  Rng train_rng(derive_seed(seed, {"geco", "train"}));
  GeCoModel model(arch, n_classes, init_rng);
  model.stats = stats;
  nn::Params params = model.params();
  nn::SgdMomentum opt(cfg.lr, cfg.momentum, cfg.weight_decay);

  const int N = cfg.batch;
  const int mels = arch.n_mels;
  const int crop = arch.crop_frames;
  std::vector<size_t> order(clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = geco_lr_at(cfg, epoch);
    const double lam = cfg.use_reconstruction ? lambda_at(ramp, epoch) : 0.0;
    opt.set_lr(lr);
    train_rng.shuffle(order);
    GeCoEpochStat stat{epoch, lr, lam, 0.0, 0.0, 0.0};
    int steps = 0;
    for (size_t off = 0; off + (cfg.drop_last ? static_cast<size_t>(N) : 1) <= order.size();
         off += static_cast<size_t>(N)) {
      const int bsz = static_cast<int>(std::min(static_cast<size_t>(N), order.size() - off));
      const int rows = cfg.use_reconstruction ? 2 * bsz : bsz;
      nn::Tensor4 x(rows, 1, crop, mels);
      std::vector<int> labels(rows);
      std::vector<int> source(rows);
      for (int b = 0; b < bsz; ++b) {
        const TrainClip& tc = clips[order[off + b]];
        const Matrix& feat = *tc.features;
        const int max_start = static_cast<int>(feat.rows()) - crop;
        const int start =
            max_start == 0 ? 0 : static_cast<int>(train_rng.uniform_index(max_start + 1));
        Matrix raw = feat.middleRows(start, crop);
        Matrix recon;
        if (cfg.use_reconstruction) recon = reconstruct_augment(raw, *tc.pae, train_rng);
        Matrix crop_norm = stats.apply(raw);
        labels[b] = tc.class_index;
        source[b] = static_cast<int>(order[off + b]);
        std::copy(crop_norm.data(), crop_norm.data() + crop_norm.size(),
                  x.v.data() + static_cast<size_t>(b) * x.sample_stride());
        if (cfg.use_reconstruction) {
          Matrix recon_norm = stats.apply(recon);
          labels[bsz + b] = tc.class_index;
          source[bsz + b] = static_cast<int>(order[off + b]);
          std::copy(recon_norm.data(), recon_norm.data() + recon_norm.size(),
                    x.v.data() + static_cast<size_t>(bsz + b) * x.sample_stride());
        }
      }
      nn::zero_grad(params);
      GeCoLoss loss = geco_total_loss(model, x, labels, bsz, lam, cfg.loss_form, true, true);
      opt.step(params);
      stat.loss_ce += loss.ce;
      stat.loss_con += loss.con;
      stat.loss_total += loss.total;
      ++steps;
      if (observer) {
        GeCoStepInfo info;
        info.epoch = epoch;
        info.step = steps - 1;
        info.batch_rows = rows;
        info.n_orig = bsz;
        info.lr = lr;
        info.lambda = lam;
        info.loss = loss;
        info.labels = &labels;
        info.source_clip = &source;
        observer(info);
      }
    }
    if (steps > 0) {
      stat.loss_ce /= steps;
      stat.loss_con /= steps;
      stat.loss_total /= steps;
    }
    if (curve) curve->push_back(stat);
  }
  return model;
}

// ---------------------------------------------------------------------------

inline void save_geco(const std::string& path, GeCoModel& model, uint64_t config_hash) {
  std::vector<NamedSlice> slices = slices_from_params(model.params());
  for (const auto& b : model.buffers()) slices.push_back({b.name, b.value, b.size});
  save_checkpoint(path, config_hash, "geco", slices);
}

inline void load_geco(const std::string& path, GeCoModel& model, uint64_t config_hash) {
  std::vector<NamedSlice> slices = slices_from_params(model.params());
  for (const auto& b : model.buffers()) slices.push_back({b.name, b.value, b.size});
  load_checkpoint(path, config_hash, slices);
}

}  // namespace geco
