// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "geco/common.hpp"

// Minimal training substrate: layers own their parameters, gradients and
// forward caches, and implement an explicit backward pass. Layers are used
// once per step, so a single cache per layer is enough. backward() always
// accumulates into the gradient buffers; call zero_grad() between steps.

namespace geco::nn {

struct ParamRef {
  std::string name;
  double* value;
  double* grad;
  size_t size;
};

using Params = std::vector<ParamRef>;

inline void zero_grad(Params& params) {
  for (auto& p : params) std::fill(p.grad, p.grad + p.size, 0.0);
}

inline size_t param_count(const Params& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.size;
  return n;
}

// ---------------------------------------------------------------------------
// Initialization

inline void init_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
}

inline void init_uniform(Vector& v, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

inline void init_normal(Matrix& m, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, stddev);
}

inline void init_normal(Vector& v, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, stddev);
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, weights [out x in]

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true) : has_bias_(bias) {
    W.resize(out, in);
    gW = Matrix::Zero(out, in);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(W, bound, rng);
    if (bias) {
      b = Vector::Zero(out);
      gb = Vector::Zero(out);
      init_uniform(b, bound, rng);
    }
  }

  Matrix forward(const Matrix& x) {
    x_cache_ = x;
    Matrix y = x * W.transpose();
    if (has_bias_) y.rowwise() += b.transpose();
    return y;
  }

  // Inference-only path, no cache.
  Matrix apply(const Matrix& x) const {
    Matrix y = x * W.transpose();
    if (has_bias_) y.rowwise() += b.transpose();
    return y;
  }

  Matrix backward(const Matrix& dy) {
    gW.noalias() += dy.transpose() * x_cache_;
    if (has_bias_) gb += dy.colwise().sum().transpose();
    return dy * W;
  }

  void collect(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", W.data(), gW.data(), static_cast<size_t>(W.size())});
    if (has_bias_)
      out.push_back({prefix + ".bias", b.data(), gb.data(), static_cast<size_t>(b.size())});
  }

  Matrix W, gW;
  Vector b, gb;

 private:
  bool has_bias_ = true;
  Matrix x_cache_;
};

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim) {
    gamma = Vector::Ones(dim);
    beta = Vector::Zero(dim);
    ggamma = Vector::Zero(dim);
    gbeta = Vector::Zero(dim);
  }

  Matrix forward(const Matrix& x) {
    const auto d = x.cols();
    xhat_.resize(x.rows(), d);
    inv_std_.resize(x.rows());
    Matrix y(x.rows(), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mu = x.row(r).mean();
      double var = (x.row(r).array() - mu).square().mean();
      double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_(r) = inv;
      xhat_.row(r) = (x.row(r).array() - mu) * inv;
      y.row(r) = xhat_.row(r).array() * gamma.transpose().array() + beta.transpose().array();
    }
    return y;
  }

  Matrix backward(const Matrix& dy) {
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      Eigen::ArrayXd dxhat = dy.row(r).transpose().array() * gamma.array();
      double m1 = dxhat.mean();
      double m2 = (dxhat * xhat_.row(r).transpose().array()).mean();
      dx.row(r) =
          (inv_std_(r) * (dxhat - m1 - xhat_.row(r).transpose().array() * m2)).transpose();
    }
    ggamma += (dy.array() * xhat_.array()).colwise().sum().matrix().transpose();
    gbeta += dy.colwise().sum().transpose();
    return dx;
  }

  void collect(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma.data(), ggamma.data(), static_cast<size_t>(gamma.size())});
    out.push_back({prefix + ".beta", beta.data(), gbeta.data(), static_cast<size_t>(beta.size())});
  }

  Vector gamma, beta, ggamma, gbeta;
  static constexpr double kEps = 1e-5;

 private:
  Matrix xhat_;
  Vector inv_std_;
};

// ---------------------------------------------------------------------------
// GELU (exact erf form)

class Gelu {
 public:
  Matrix forward(const Matrix& x) {
    x_cache_ = x;
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  }

  Matrix backward(const Matrix& dy) {
    Matrix dx = x_cache_.unaryExpr([](double v) {
      double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      return cdf + v * pdf;
    });
    return dx.cwiseProduct(dy);
  }

 private:
  Matrix x_cache_;
};

// ---------------------------------------------------------------------------
// Learned positional embedding over a fixed number of positions

class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(int positions, int dim, Rng& rng) {
    P.resize(positions, dim);
    gP = Matrix::Zero(positions, dim);
    init_normal(P, 0.02, rng);
  }

  // x is [batch * positions, dim]
  Matrix forward(const Matrix& x) const {
    const auto L = P.rows();
    Matrix y = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r) += P.row(r % L);
    return y;
  }

  void backward(const Matrix& dy) {
    const auto L = P.rows();
    for (Eigen::Index r = 0; r < dy.rows(); ++r) gP.row(r % L) += dy.row(r);
  }

  void collect(Params& out, const std::string& prefix) {
    out.push_back({prefix + ".pos", P.data(), gP.data(), static_cast<size_t>(P.size())});
  }

  Matrix P, gP;
};

// ---------------------------------------------------------------------------
// Multi-head self-attention over short sequences.
// Input/output are [batch * seq_len, dim]; seq_len is fixed per model.

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(int dim, int heads, int seq_len, Rng& rng)
      : dim_(dim), heads_(heads), seq_len_(seq_len) {
    if (dim % heads != 0) throw ConfigError("attention dim must be divisible by head count");
    wq_ = Linear(dim, dim, rng);
    wk_ = Linear(dim, dim, rng);
    wv_ = Linear(dim, dim, rng);
    wo_ = Linear(dim, dim, rng);
  }

  Matrix forward(const Matrix& x) {
    const int L = seq_len_, H = heads_, Dh = dim_ / heads_;
    if (x.rows() % L != 0) throw InvalidArgument("attention: rows not a multiple of seq_len");
    const int B = static_cast<int>(x.rows()) / L;
    Q_ = wq_.forward(x);
    K_ = wk_.forward(x);
    V_ = wv_.forward(x);
    attn_.resize(static_cast<Eigen::Index>(B) * H * L, L);
    Matrix ctx(x.rows(), dim_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        auto Qh = Q_.block(b * L, h * Dh, L, Dh);
        auto Kh = K_.block(b * L, h * Dh, L, Dh);
        auto Vh = V_.block(b * L, h * Dh, L, Dh);
        Matrix S = Qh * Kh.transpose() * scale;
        auto A = attn_.block(static_cast<Eigen::Index>(b * H + h) * L, 0, L, L);
        for (int r = 0; r < L; ++r) {
          double mx = S.row(r).maxCoeff();
          Eigen::ArrayXd e = (S.row(r).array() - mx).exp();
          A.row(r) = (e / e.sum()).transpose();
        }
        ctx.block(b * L, h * Dh, L, Dh) = A * Vh;
      }
    }
    return wo_.forward(ctx);
  }

  Matrix backward(const Matrix& dy) {
    const int L = seq_len_, H = heads_, Dh = dim_ / heads_;
    const int B = static_cast<int>(dy.rows()) / L;
    const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));
    Matrix dctx = wo_.backward(dy);
    Matrix dQ = Matrix::Zero(dy.rows(), dim_);
    Matrix dK = Matrix::Zero(dy.rows(), dim_);
    Matrix dV = Matrix::Zero(dy.rows(), dim_);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        auto A = attn_.block(static_cast<Eigen::Index>(b * H + h) * L, 0, L, L);
        auto Qh = Q_.block(b * L, h * Dh, L, Dh);
        auto Kh = K_.block(b * L, h * Dh, L, Dh);
        auto Vh = V_.block(b * L, h * Dh, L, Dh);
        Matrix dOh = dctx.block(b * L, h * Dh, L, Dh);
        Matrix dA = dOh * Vh.transpose();
        dV.block(b * L, h * Dh, L, Dh) += A.transpose() * dOh;
        // softmax backward per row: dS = A .* (dA - rowdot(dA, A))
        Matrix dS(L, L);
        for (int r = 0; r < L; ++r) {
          double dot = dA.row(r).dot(A.row(r));
          dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
        }
        dS *= scale;
        dQ.block(b * L, h * Dh, L, Dh) += dS * Kh;
        dK.block(b * L, h * Dh, L, Dh) += dS.transpose() * Qh;
      }
    }
    Matrix dx = wq_.backward(dQ);
    dx += wk_.backward(dK);
    dx += wv_.backward(dV);
    return dx;
  }

  void collect(Params& out, const std::string& prefix) {
    wq_.collect(out, prefix + ".wq");
    wk_.collect(out, prefix + ".wk");
    wv_.collect(out, prefix + ".wv");
    wo_.collect(out, prefix + ".wo");
  }

 private:
  int dim_ = 0, heads_ = 0, seq_len_ = 0;
  Linear wq_, wk_, wv_, wo_;
  Matrix Q_, K_, V_, attn_;
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x))

class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, int seq_len, int mlp_ratio, Rng& rng)
      : ln1_(dim), ln2_(dim), attn_(dim, heads, seq_len, rng) {
    fc1_ = Linear(dim, dim * mlp_ratio, rng);
    fc2_ = Linear(dim * mlp_ratio, dim, rng);
  }

  Matrix forward(const Matrix& x) {
    Matrix h = x + attn_.forward(ln1_.forward(x));
    return h + fc2_.forward(gelu_.forward(fc1_.forward(ln2_.forward(h))));
  }

  Matrix backward(const Matrix& dout) {
    Matrix dh = dout + ln2_.backward(fc1_.backward(gelu_.backward(fc2_.backward(dout))));
    return dh + ln1_.backward(attn_.backward(dh));
  }

  void collect(Params& out, const std::string& prefix) {
    ln1_.collect(out, prefix + ".ln1");
    attn_.collect(out, prefix + ".attn");
    ln2_.collect(out, prefix + ".ln2");
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadSelfAttention attn_;
  Linear fc1_, fc2_;
  Gelu gelu_;
};

// ---------------------------------------------------------------------------
// Optimizers. Gradients live in the ParamRefs; state is kept per parameter
// tensor in registration order, which is stable across runs.

class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(Params& params) {
    if (velocity_.empty()) {
      velocity_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i].size, 0.0);
    }
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      auto& v = velocity_[i];
      for (size_t j = 0; j < p.size; ++j) {
        double g = p.grad[j] + weight_decay_ * p.value[j];
        v[j] = momentum_ * v[j] + g;
        p.value[j] -= lr_ * v[j];
      }
    }
  }

 private:
  double lr_, momentum_, weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(Params& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].size, 0.0);
        v_[i].assign(params[i].size, 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      for (size_t j = 0; j < p.size; ++j) {
        double g = p.grad[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        double mhat = m_[i][j] / bc1;
        double vhat = v_[i][j] / bc2;
        p.value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace geco::nn
