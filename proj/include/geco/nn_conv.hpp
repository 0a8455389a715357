// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "geco/nn.hpp"

namespace geco::nn {

// Dense NCHW tensor.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}

  double& at(int in, int ic, int ih, int iw) {
    return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
  }
  double at(int in, int ic, int ih, int iw) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + ih) * w + iw];
  }
  size_t size() const { return v.size(); }
  size_t sample_stride() const { return static_cast<size_t>(c) * h * w; }
};

// ---------------------------------------------------------------------------
// Conv2d via im2col + GEMM. Weight layout [C_out x C_in*kh*kw].

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int c_in, int c_out, int kernel, int stride, int pad, Rng& rng, bool bias = false)
      : c_in_(c_in), c_out_(c_out), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
    W.resize(c_out, c_in * kernel * kernel);
    gW = Matrix::Zero(W.rows(), W.cols());
    double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel * kernel));
    init_uniform(W, bound, rng);
    if (bias) {
      b = Vector::Zero(c_out);
      gb = Vector::Zero(c_out);
      init_uniform(b, bound, rng);
    }
  }

  int out_h(int h) const { return (h + 2 * pad_ - k_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * pad_ - k_) / stride_ + 1; }

  Tensor4 forward(const Tensor4& x, bool keep_cache = true) {
    const int oh = out_h(x.h), ow = out_w(x.w);
    if (oh <= 0 || ow <= 0) throw InvalidArgument("Conv2d: input too small for kernel");
    Tensor4 y(x.n, c_out_, oh, ow);
    if (keep_cache) {
      cols_.assign(x.n, Matrix());
      in_h_ = x.h;
      in_w_ = x.w;
      in_n_ = x.n;
    }
    Matrix col(c_in_ * k_ * k_, oh * ow);
    for (int s = 0; s < x.n; ++s) {
      im2col(x, s, col);
      Matrix out = W * col;
      if (has_bias_) out.colwise() += b;
      double* dst = y.v.data() + s * y.sample_stride();
      for (int c = 0; c < c_out_; ++c)
        std::copy(out.row(c).data(), out.row(c).data() + oh * ow, dst + static_cast<size_t>(c) * oh * ow);
      if (keep_cache) cols_[s] = col;
    }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    const int oh = dy.h, ow = dy.w;
    Tensor4 dx(in_n_, c_in_, in_h_, in_w_);
    for (int s = 0; s < dy.n; ++s) {
      Eigen::Map<const Matrix> dY(dy.v.data() + s * dy.sample_stride(), c_out_, oh * ow);
      gW.noalias() += dY * cols_[s].transpose();
      if (has_bias_) gb += dY.rowwise().sum();
      Matrix dcol = W.transpose() * dY;
      col2im(dcol, s, dx);
    }
    return dx;
  }

  void collect(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", W.data(), gW.data(), static_cast<size_t>(W.size())});
    if (has_bias_)
      out.push_back({prefix + ".bias", b.data(), gb.data(), static_cast<size_t>(b.size())});
  }

  Matrix W, gW;
  Vector b, gb;

 private:
  void im2col(const Tensor4& x, int s, Matrix& col) const {
    const int oh = out_h(x.h), ow = out_w(x.w);
    const double* src = x.v.data() + s * x.sample_stride();
    for (int c = 0; c < c_in_; ++c) {
      const double* plane = src + static_cast<size_t>(c) * x.h * x.w;
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          const int row = (c * k_ + ki) * k_ + kj;
          for (int oi = 0; oi < oh; ++oi) {
            const int ii = oi * stride_ + ki - pad_;
            for (int oj = 0; oj < ow; ++oj) {
              const int jj = oj * stride_ + kj - pad_;
              col(row, oi * ow + oj) = (ii >= 0 && ii < x.h && jj >= 0 && jj < x.w)
                                           ? plane[ii * x.w + jj]
                                           : 0.0;
            }
          }
        }
      }
    }
  }

  void col2im(const Matrix& dcol, int s, Tensor4& dx) const {
    const int oh = out_h(dx.h), ow = out_w(dx.w);
    double* dst = dx.v.data() + s * dx.sample_stride();
    for (int c = 0; c < c_in_; ++c) {
      double* plane = dst + static_cast<size_t>(c) * dx.h * dx.w;
      for (int ki = 0; ki < k_; ++ki) {
        for (int kj = 0; kj < k_; ++kj) {
          const int row = (c * k_ + ki) * k_ + kj;
          for (int oi = 0; oi < oh; ++oi) {
            const int ii = oi * stride_ + ki - pad_;
            if (ii < 0 || ii >= dx.h) continue;
            for (int oj = 0; oj < ow; ++oj) {
              const int jj = oj * stride_ + kj - pad_;
              if (jj < 0 || jj >= dx.w) continue;
              plane[ii * dx.w + jj] += dcol(row, oi * ow + oj);
            }
          }
        }
      }
    }
  }

  int c_in_ = 0, c_out_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  std::vector<Matrix> cols_;
  int in_h_ = 0, in_w_ = 0, in_n_ = 0;
};

// ---------------------------------------------------------------------------
// BatchNorm2d: batch statistics in training, running statistics in eval.

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels) : c_(channels) {
    gamma = Vector::Ones(channels);
    beta = Vector::Zero(channels);
    ggamma = Vector::Zero(channels);
    gbeta = Vector::Zero(channels);
    running_mean = Vector::Zero(channels);
    running_var = Vector::Ones(channels);
  }

  Tensor4 forward(const Tensor4& x, bool training) {
    Tensor4 y(x.n, x.c, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const double m = static_cast<double>(x.n) * plane;
    if (training) {
      xhat_ = Tensor4(x.n, x.c, x.h, x.w);
      inv_std_.resize(c_);
      for (int c = 0; c < c_; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (int s = 0; s < x.n; ++s) {
          const double* p = x.v.data() + s * x.sample_stride() + c * plane;
          for (size_t i = 0; i < plane; ++i) {
            sum += p[i];
            sum_sq += p[i] * p[i];
          }
        }
        double mean = sum / m;
        double var = std::max(0.0, sum_sq / m - mean * mean);
        double inv = 1.0 / std::sqrt(var + kEps);
        inv_std_(c) = inv;
        running_mean(c) = (1.0 - kMomentum) * running_mean(c) + kMomentum * mean;
        running_var(c) = (1.0 - kMomentum) * running_var(c) + kMomentum * var;
        for (int s = 0; s < x.n; ++s) {
          const double* p = x.v.data() + s * x.sample_stride() + c * plane;
          double* ph = xhat_.v.data() + s * xhat_.sample_stride() + c * plane;
          double* py = y.v.data() + s * y.sample_stride() + c * plane;
          for (size_t i = 0; i < plane; ++i) {
            ph[i] = (p[i] - mean) * inv;
            py[i] = gamma(c) * ph[i] + beta(c);
          }
        }
      }
    } else {
      for (int c = 0; c < c_; ++c) {
        double inv = 1.0 / std::sqrt(running_var(c) + kEps);
        for (int s = 0; s < x.n; ++s) {
          const double* p = x.v.data() + s * x.sample_stride() + c * plane;
          double* py = y.v.data() + s * y.sample_stride() + c * plane;
          for (size_t i = 0; i < plane; ++i)
            py[i] = gamma(c) * (p[i] - running_mean(c)) * inv + beta(c);
        }
      }
    }
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    const double m = static_cast<double>(dy.n) * plane;
    Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int s = 0; s < dy.n; ++s) {
        const double* pd = dy.v.data() + s * dy.sample_stride() + c * plane;
        const double* ph = xhat_.v.data() + s * xhat_.sample_stride() + c * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += pd[i];
          sum_dy_xhat += pd[i] * ph[i];
        }
      }
      ggamma(c) += sum_dy_xhat;
      gbeta(c) += sum_dy;
      const double mean_dy = sum_dy / m;
      const double mean_dy_xhat = sum_dy_xhat / m;
      const double g = gamma(c) * inv_std_(c);
      for (int s = 0; s < dy.n; ++s) {
        const double* pd = dy.v.data() + s * dy.sample_stride() + c * plane;
        const double* ph = xhat_.v.data() + s * xhat_.sample_stride() + c * plane;
        double* px = dx.v.data() + s * dx.sample_stride() + c * plane;
        for (size_t i = 0; i < plane; ++i)
          px[i] = g * (pd[i] - mean_dy - ph[i] * mean_dy_xhat);
      }
    }
    return dx;
  }

  void collect(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma.data(), ggamma.data(), static_cast<size_t>(gamma.size())});
    out.push_back({prefix + ".beta", beta.data(), gbeta.data(), static_cast<size_t>(beta.size())});
  }

  // Running statistics are not parameters but must survive checkpointing.
  void collect_buffers(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".running_mean", running_mean.data(), nullptr,
                   static_cast<size_t>(running_mean.size())});
    out.push_back({prefix + ".running_var", running_var.data(), nullptr,
                   static_cast<size_t>(running_var.size())});
  }

  Vector gamma, beta, ggamma, gbeta;
  Vector running_mean, running_var;
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int c_ = 0;
  Tensor4 xhat_;
  Vector inv_std_;
};

// ---------------------------------------------------------------------------

class Relu4 {
 public:
  Tensor4 forward(const Tensor4& x, bool keep_cache = true) {
    Tensor4 y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    if (keep_cache) mask_ = x;
    return y;
  }

  Tensor4 backward(const Tensor4& dy) {
    Tensor4 dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
      if (mask_.v[i] <= 0.0) dx.v[i] = 0.0;
    return dx;
  }

 private:
  Tensor4 mask_;
};

// Global average pooling [N,C,H,W] -> [N,C]
class GlobalAvgPool {
 public:
  Matrix forward(const Tensor4& x) {
    h_ = x.h;
    w_ = x.w;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    Matrix y(x.n, x.c);
    for (int s = 0; s < x.n; ++s)
      for (int c = 0; c < x.c; ++c) {
        const double* p = x.v.data() + s * x.sample_stride() + c * plane;
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) acc += p[i];
        y(s, c) = acc / static_cast<double>(plane);
      }
    return y;
  }

  Tensor4 backward(const Matrix& dy) {
    const size_t plane = static_cast<size_t>(h_) * w_;
    Tensor4 dx(static_cast<int>(dy.rows()), static_cast<int>(dy.cols()), h_, w_);
    for (int s = 0; s < dx.n; ++s)
      for (int c = 0; c < dx.c; ++c) {
        double g = dy(s, c) / static_cast<double>(plane);
        double* p = dx.v.data() + s * dx.sample_stride() + c * plane;
        for (size_t i = 0; i < plane; ++i) p[i] = g;
      }
    return dx;
  }

 private:
  int h_ = 0, w_ = 0;
};

// ---------------------------------------------------------------------------
// Residual basic block: conv-bn-relu-conv-bn plus (projected) identity.

class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(int c_in, int c_out, int stride, Rng& rng)
      : conv1_(c_in, c_out, 3, stride, 1, rng),
        bn1_(c_out),
        conv2_(c_out, c_out, 3, 1, 1, rng),
        bn2_(c_out),
        projected_(stride != 1 || c_in != c_out) {
    if (projected_) {
      proj_conv_ = Conv2d(c_in, c_out, 1, stride, 0, rng);
      proj_bn_ = BatchNorm2d(c_out);
    }
  }

  Tensor4 forward(const Tensor4& x, bool training) {
    Tensor4 main = bn1_.forward(conv1_.forward(x, training), training);
    main = relu1_.forward(main, training);
    main = bn2_.forward(conv2_.forward(main, training), training);
    Tensor4 skip = projected_ ? proj_bn_.forward(proj_conv_.forward(x, training), training) : x;
    for (size_t i = 0; i < main.v.size(); ++i) main.v[i] += skip.v[i];
    return relu_out_.forward(main, training);
  }

  Tensor4 backward(const Tensor4& dy) {
    Tensor4 dsum = relu_out_.backward(dy);
    Tensor4 dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(dsum)))));
    if (projected_) {
      Tensor4 dskip = proj_conv_.backward(proj_bn_.backward(dsum));
      for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dskip.v[i];
    } else {
      for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dsum.v[i];
    }
    return dx;
  }

  void collect(Params& out, const std::string& prefix) {
    conv1_.collect(out, prefix + ".conv1");
    bn1_.collect(out, prefix + ".bn1");
    conv2_.collect(out, prefix + ".conv2");
    bn2_.collect(out, prefix + ".bn2");
    if (projected_) {
      proj_conv_.collect(out, prefix + ".proj_conv");
      proj_bn_.collect(out, prefix + ".proj_bn");
    }
  }

  void collect_buffers(Params& out, const std::string& prefix) {
    bn1_.collect_buffers(out, prefix + ".bn1");
    bn2_.collect_buffers(out, prefix + ".bn2");
    if (projected_) proj_bn_.collect_buffers(out, prefix + ".proj_bn");
  }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  Relu4 relu1_, relu_out_;
  Conv2d proj_conv_;
  BatchNorm2d proj_bn_;
  bool projected_ = false;
};

// ---------------------------------------------------------------------------
// Residual embedding network over single-channel feature maps: stem conv,
// stages of basic blocks (first block of each later stage downsamples by 2),
// global average pooling, linear projection to the embedding dimension.

struct ExtractorArch {
  int stem_channels = 64;
  int stem_stride = 2;
  std::vector<int> stage_channels = {64, 128, 256, 512};
  std::vector<int> stage_blocks = {2, 2, 2, 2};
  int embed_dim = 128;
};

class ResNetExtractor {
 public:
  ResNetExtractor() = default;
  ResNetExtractor(const ExtractorArch& arch, Rng& rng) : arch_(arch) {
    if (arch.stage_channels.empty() || arch.stage_channels.size() != arch.stage_blocks.size())
      throw ConfigError("extractor: stage_channels and stage_blocks must have equal nonzero length");
    stem_ = Conv2d(1, arch.stem_channels, 3, arch.stem_stride, 1, rng);
    stem_bn_ = BatchNorm2d(arch.stem_channels);
    int c_in = arch.stem_channels;
    for (size_t st = 0; st < arch.stage_channels.size(); ++st) {
      const int c_out = arch.stage_channels[st];
      for (int b = 0; b < arch.stage_blocks[st]; ++b) {
        const int stride = (b == 0 && st > 0) ? 2 : 1;
        blocks_.emplace_back(c_in, c_out, stride, rng);
        c_in = c_out;
      }
    }
    head_ = Linear(c_in, arch.embed_dim, rng);
  }

  // x: [N, 1, frames, bins] -> embeddings [N x embed_dim].
  Matrix forward(const Tensor4& x, bool training) {
    Tensor4 h = stem_relu_.forward(stem_bn_.forward(stem_.forward(x, training), training), training);
    for (auto& b : blocks_) h = b.forward(h, training);
    return head_.forward(pool_.forward(h));
  }

  Tensor4 backward(const Matrix& dembed) {
    Tensor4 d = pool_.backward(head_.backward(dembed));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
    return stem_.backward(stem_bn_.backward(stem_relu_.backward(d)));
  }

  void collect(Params& out, const std::string& prefix) {
    stem_.collect(out, prefix + ".stem");
    stem_bn_.collect(out, prefix + ".stem_bn");
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(out, prefix + strformat(".block%zu", i));
    head_.collect(out, prefix + ".head");
  }

  void collect_buffers(Params& out, const std::string& prefix) {
    stem_bn_.collect_buffers(out, prefix + ".stem_bn");
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect_buffers(out, prefix + strformat(".block%zu", i));
  }

  const ExtractorArch& arch() const { return arch_; }

 private:
  ExtractorArch arch_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  Relu4 stem_relu_;
  std::vector<BasicBlock> blocks_;
  GlobalAvgPool pool_;
  Linear head_;
};

}  // namespace geco::nn
