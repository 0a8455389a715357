// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "geco/geco.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "geco/common.hpp"
#include "geco/pae.hpp"

namespace geco {
namespace {

// Independent per-term reference: plain exp/softmax per positive, no
// log-sum-exp rearrangement.
double contrastive_oracle(const Vector& z, const Matrix& Cp, const Matrix& Cn, double tau = 1.0) {
  double denom = 0.0;
  for (int a = 0; a < Cp.rows(); ++a) denom += std::exp(z.dot(Cp.row(a)) / tau);
  for (int a = 0; a < Cn.rows(); ++a) denom += std::exp(z.dot(Cn.row(a)) / tau);
  double loss = 0.0;
  for (int p = 0; p < Cp.rows(); ++p)
    loss += -std::log(std::exp(z.dot(Cp.row(p)) / tau) / denom);
  return loss / static_cast<double>(Cp.rows());
}

GecoArch tiny_arch(int n_mels = 8, int crop = 10) {
  GecoArch arch;
  arch.extractor.stem_channels = 4;
  arch.extractor.stem_stride = 2;
  arch.extractor.stage_channels = {4, 8};
  arch.extractor.stage_blocks = {1, 1};
  arch.extractor.embed_dim = 6;
  arch.n_mels = n_mels;
  arch.crop_frames = crop;
  return arch;
}

PAEConfig tiny_pae_config(int n_mels = 8) {
  PAEConfig cfg;
  cfg.n_mels = n_mels;
  cfg.window = 5;
  cfg.enc_width = 16;
  cfg.enc_blocks = 1;
  cfg.dec_width = 12;
  cfg.dec_blocks = 1;
  cfg.bottleneck_dim = 4;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  return cfg;
}

TEST(Ramp, PinnedValuesAreExact) {
  RampSchedule s;  // 30 / 90 / 120, lambda_max 10
  EXPECT_EQ(lambda_at(s, 0), 0.0);
  EXPECT_EQ(lambda_at(s, 15), 0.0);
  EXPECT_EQ(lambda_at(s, 29), 0.0);
  EXPECT_EQ(lambda_at(s, 60), 5.0);
  EXPECT_EQ(lambda_at(s, 89), 10.0 * 59.0 / 60.0);
  EXPECT_EQ(lambda_at(s, 90), 10.0);
  EXPECT_EQ(lambda_at(s, 119), 10.0);
}

TEST(Ramp, NondecreasingAndContinuousAtTheKnees) {
  RampSchedule s;
  double prev = lambda_at(s, 0);
  for (int e = 1; e < s.total; ++e) {
    double cur = lambda_at(s, e);
    EXPECT_GE(cur, prev);
    prev = cur;
  }
  // one-epoch steps across the knees stay small (continuity of the ramp)
  EXPECT_NEAR(lambda_at(s, 30) - lambda_at(s, 29), 0.0, 10.0 / 60.0 + 1e-12);
  EXPECT_NEAR(lambda_at(s, 90) - lambda_at(s, 89), 10.0 / 60.0, 1e-12);
}

TEST(Ramp, OutOfRangeEpochThrows) {
  RampSchedule s;
  EXPECT_THROW(lambda_at(s, -1), InvalidArgument);
  EXPECT_THROW(lambda_at(s, 120), InvalidArgument);
}

TEST(Ramp, FixedLambdaEncoding) {
  // warmup_end = ramp_end = 0 pins lambda at lambda_max for every epoch.
  RampSchedule fixed{0, 0, 20, 3.5};
  for (int e = 0; e < 20; ++e) EXPECT_EQ(lambda_at(fixed, e), 3.5);
}

TEST(GecoSchedule, LearningRateStepsAtThePinnedEpochs) {
  GeCoTrainConfig cfg;  // lr 0.1, steps {50, 90}, factor 0.1, 120 epochs
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 0), 0.1);
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 49), 0.1);
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 50), 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 89), 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 90), 0.1 * 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(geco_lr_at(cfg, 119), 0.1 * 0.1 * 0.1);
  EXPECT_THROW(geco_lr_at(cfg, 120), InvalidArgument);
}

TEST(ContrastiveLoss, HandComputedCase) {
  Vector z(2);
  z << 1.0, 0.0;
  Matrix Cp(1, 2), Cn(1, 2);
  Cp << 1.0, 0.0;
  Cn << 0.0, 1.0;
  EXPECT_NEAR(contrastive_loss(z, Cp, Cn), 0.31326, 1e-5);
}

TEST(ContrastiveLoss, UniformDotsGiveLogTwo) {
  Vector z(3);
  z << 1.0, 0.0, 0.0;
  Matrix Cp(1, 3), Cn(1, 3);
  Cp << 0.0, 1.0, 0.0;
  Cn << 0.0, 0.0, 1.0;  // both dots are 0
  EXPECT_NEAR(contrastive_loss(z, Cp, Cn), std::log(2.0), 1e-12);
}

TEST(ContrastiveLoss, MatchesIndependentOracle) {
  Rng rng(61);
  for (int it = 0; it < 200; ++it) {
    int d = 2 + static_cast<int>(rng.uniform_index(7));
    int np = 1 + static_cast<int>(rng.uniform_index(5));
    int nn_rows = 1 + static_cast<int>(rng.uniform_index(3));
    Vector z(d);
    Matrix Cp(np, d), Cn(nn_rows, d);
    for (int i = 0; i < d; ++i) z(i) = rng.normal();
    nn::init_normal(Cp, 1.0, rng);
    nn::init_normal(Cn, 1.0, rng);
    EXPECT_NEAR(contrastive_loss(z, Cp, Cn), contrastive_oracle(z, Cp, Cn), 1e-12);
  }
}

TEST(ContrastiveLoss, PermutingPositivesChangesNothing) {
  Rng rng(62);
  Vector z(4);
  for (int i = 0; i < 4; ++i) z(i) = rng.normal();
  Matrix Cp(4, 4), Cn(1, 4);
  nn::init_normal(Cp, 1.0, rng);
  nn::init_normal(Cn, 1.0, rng);
  double base = contrastive_loss(z, Cp, Cn);
  Matrix perm(4, 4);
  perm.row(0) = Cp.row(2);
  perm.row(1) = Cp.row(0);
  perm.row(2) = Cp.row(3);
  perm.row(3) = Cp.row(1);
  EXPECT_NEAR(contrastive_loss(z, perm, Cn), base, 1e-14);
}

TEST(ContrastiveLoss, FarNegativeReducesToSoftmaxOverPositives) {
  Rng rng(63);
  Vector z(3);
  z << 0.6, -0.2, 0.3;
  Matrix Cp(3, 3);
  nn::init_normal(Cp, 1.0, rng);
  Matrix Cn(1, 3);
  Cn.row(0) = (-120.0) * z.transpose();  // dot ~ -120 * ||z||^2, exp underflows

  double with_neg = contrastive_loss(z, Cp, Cn);
  // reference without the negative term at all
  double denom = 0.0;
  for (int a = 0; a < 3; ++a) denom += std::exp(z.dot(Cp.row(a)));
  double without = 0.0;
  for (int p = 0; p < 3; ++p) without += -std::log(std::exp(z.dot(Cp.row(p))) / denom);
  without /= 3.0;
  EXPECT_NEAR(with_neg, without, 1e-10);
}

TEST(ContrastiveLoss, EmptyPositiveSetThrows) {
  Vector z(2);
  z << 1.0, 0.0;
  Matrix Cp(0, 2), Cn(1, 2);
  Cn << 0.0, 1.0;
  EXPECT_THROW(contrastive_loss(z, Cp, Cn), InvalidArgument);
}

TEST(ContrastiveLoss, GradientsMatchFiniteDifferences) {
  Rng rng(64);
  const double eps = 1e-5;
  for (int it = 0; it < 30; ++it) {
    int d = 2 + static_cast<int>(rng.uniform_index(7));
    int np = 1 + static_cast<int>(rng.uniform_index(5));
    Vector z(d);
    Matrix Cp(np, d), Cn(1, d);
    for (int i = 0; i < d; ++i) z(i) = rng.normal();
    nn::init_normal(Cp, 1.0, rng);
    nn::init_normal(Cn, 1.0, rng);
    ContrastiveGrad g;
    contrastive_loss(z, Cp, Cn, 1.0, &g);
    for (int i = 0; i < d; ++i) {
      double orig = z(i);
      z(i) = orig + eps;
      double lp = contrastive_loss(z, Cp, Cn);
      z(i) = orig - eps;
      double lm = contrastive_loss(z, Cp, Cn);
      z(i) = orig;
      double fd = (lp - lm) / (2 * eps);
      EXPECT_LT(std::abs(fd - g.dz(i)) / std::max({1e-8, std::abs(fd), std::abs(g.dz(i))}), 1e-4);
    }
    for (int r = 0; r < np; ++r) {
      double orig = Cp(r, 0);
      Cp(r, 0) = orig + eps;
      double lp = contrastive_loss(z, Cp, Cn);
      Cp(r, 0) = orig - eps;
      double lm = contrastive_loss(z, Cp, Cn);
      Cp(r, 0) = orig;
      double fd = (lp - lm) / (2 * eps);
      EXPECT_LT(std::abs(fd - g.dCp(r, 0)) / std::max({1e-8, std::abs(fd), std::abs(g.dCp(r, 0))}),
                1e-4);
    }
  }
}

TEST(BceProxyLoss, HandComputedCase) {
  Vector z(2), wp(2), wn(2);
  z << 1.0, 0.0;
  wp << 1.0, 0.0;
  wn << 0.0, 1.0;
  EXPECT_NEAR(bce_proxy_loss(z, wp, wn, false), std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(bce_proxy_loss(z, wp, wn, false), 0.31326, 1e-5);
}

TEST(BceProxyLoss, ZeroLogitGivesLogTwoForEitherTarget) {
  Vector z(2), w(2);
  z << 1.0, 0.0;
  w << 0.0, 1.0;
  EXPECT_NEAR(bce_proxy_loss(z, w, w, false), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_proxy_loss(z, w, w, true), std::log(2.0), 1e-15);
}

TEST(BceProxyLoss, FlippingTheTargetMirrorsTheLogit) {
  Rng rng(65);
  for (int it = 0; it < 50; ++it) {
    Vector z(4), wp(4), wn(4);
    for (int i = 0; i < 4; ++i) {
      z(i) = rng.normal();
      wp(i) = rng.normal();
      wn(i) = rng.normal();
    }
    // L(t=1, logit) == L(t=0, -logit); swapping the proxies negates the logit
    EXPECT_NEAR(bce_proxy_loss(z, wp, wn, false), bce_proxy_loss(z, wn, wp, true), 1e-14);
  }
}

TEST(BceProxyLoss, GradientsMatchFiniteDifferences) {
  Rng rng(66);
  const double eps = 1e-5;
  for (int it = 0; it < 30; ++it) {
    Vector z(5), wp(5), wn(5);
    for (int i = 0; i < 5; ++i) {
      z(i) = rng.normal();
      wp(i) = rng.normal();
      wn(i) = rng.normal();
    }
    bool recon = rng.uniform() < 0.5;
    Vector dz(5), dwp(5), dwn(5);
    bce_proxy_loss(z, wp, wn, recon, &dz, &dwp, &dwn);
    auto probe = [&](Vector& v, const Vector& g) {
      for (int i = 0; i < 5; ++i) {
        double orig = v(i);
        v(i) = orig + eps;
        double lp = bce_proxy_loss(z, wp, wn, recon);
        v(i) = orig - eps;
        double lm = bce_proxy_loss(z, wp, wn, recon);
        v(i) = orig;
        double fd = (lp - lm) / (2 * eps);
        if (std::abs(fd) < 1e-9 && std::abs(g(i)) < 1e-9) continue;
        EXPECT_LT(std::abs(fd - g(i)) / std::max({1e-8, std::abs(fd), std::abs(g(i))}), 1e-4);
      }
    };
    probe(z, dz);
    probe(wp, dwp);
    probe(wn, dwn);
  }
}

TEST(L2Normalize, UnitNormAndZeroRejection) {
  Vector v(3);
  v << 3.0, 0.0, 4.0;
  EXPECT_NEAR(l2_normalize(v).norm(), 1.0, 1e-12);
  Vector zero = Vector::Zero(3);
  EXPECT_THROW(l2_normalize(zero), NumericError);
}

TEST(L2Normalize, BackwardMatchesFiniteDifferences) {
  Rng rng(67);
  const double eps = 1e-6;
  Vector raw(4), w(4);
  for (int i = 0; i < 4; ++i) {
    raw(i) = rng.normal();
    w(i) = rng.normal();
  }
  Vector g = l2_normalize_backward(raw, w);
  for (int i = 0; i < 4; ++i) {
    double orig = raw(i);
    raw(i) = orig + eps;
    double lp = l2_normalize(raw).dot(w);
    raw(i) = orig - eps;
    double lm = l2_normalize(raw).dot(w);
    raw(i) = orig;
    double fd = (lp - lm) / (2 * eps);
    EXPECT_NEAR(g(i), fd, 1e-6);
  }
}

TEST(ReconstructAugment, IdentityPredictorIsAFixedPoint) {
  Rng rng(68);
  Matrix x(65, 8);
  nn::init_normal(x, 1.0, rng);
  Rng maskrng(69);
  Matrix out = reconstruct_augment(
      x, 5, [](const Matrix& group, int) { return group; }, maskrng);
  EXPECT_TRUE((out.array() == x.array()).all());
}

TEST(ReconstructAugment, SubstitutesExactlyOneFramePerGroup) {
  Rng rng(70);
  Matrix x(65, 8);
  nn::init_normal(x, 1.0, rng);
  Rng maskrng(71);
  Matrix out = reconstruct_augment(
      x, 5,
      [](const Matrix& group, int t) {
        Matrix p = group;
        p.row(t).array() += 100.0;  // make the substitution visible
        return p;
      },
      maskrng);
  int changed = 0;
  for (int r = 0; r < 65; ++r) {
    bool diff = (out.row(r).array() != x.row(r).array()).any();
    if (diff) {
      ++changed;
    } else {
      EXPECT_TRUE((out.row(r).array() == x.row(r).array()).all());
    }
  }
  EXPECT_EQ(changed, 13);
}

TEST(ReconstructAugment, FixedRngPicksTheSamePositions) {
  Rng rng(72);
  Matrix x(20, 8);
  nn::init_normal(x, 1.0, rng);
  auto mark = [](const Matrix& group, int t) {
    Matrix p = group;
    p.row(t).array() = -999.0;
    return p;
  };
  Rng a(5), b(5);
  Matrix oa = reconstruct_augment(x, 5, mark, a);
  Matrix ob = reconstruct_augment(x, 5, mark, b);
  EXPECT_TRUE((oa.array() == ob.array()).all());
}

TEST(ReconstructAugment, NonDivisibleFrameCountThrows) {
  Rng rng(73);
  Matrix x(63, 8);
  Rng maskrng(74);
  EXPECT_THROW(
      reconstruct_augment(x, 5, [](const Matrix& g, int) { return g; }, maskrng),
      InvalidArgument);
}

TEST(ReconstructAugment, PaePathMatchesTheCallablePath) {
  Rng mrng(75);
  PAEModel pae(tiny_pae_config(), mrng);
  Rng drng(76);
  Matrix x(15, 8);
  nn::init_normal(x, 1.0, drng);
  Rng ra(9), rb(9);
  Matrix via_model = reconstruct_augment(x, pae, ra);
  Matrix via_callable = reconstruct_augment(
      x, 5,
      [&](const Matrix& group, int t) {
        MaskedWindow w = mask_window(group, t, pae.mask_token);
        return pae.forward(w.x_masked);
      },
      rb);
  EXPECT_TRUE((via_model.array() == via_callable.array()).all());
}

nn::Tensor4 to_tensor(const std::vector<Matrix>& crops) {
  const int n = static_cast<int>(crops.size());
  nn::Tensor4 x(n, 1, static_cast<int>(crops[0].rows()), static_cast<int>(crops[0].cols()));
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < crops[0].rows(); ++r)
      for (int c = 0; c < crops[0].cols(); ++c) x.at(i, 0, r, c) = crops[i](r, c);
  return x;
}

TEST(TotalLoss, LambdaZeroReducesToCrossEntropy) {
  Rng rng(77);
  GeCoModel model(tiny_arch(), 3, rng);
  Rng drng(78);
  std::vector<Matrix> crops;
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) {
    Matrix m(10, 8);
    nn::init_normal(m, 1.0, drng);
    crops.push_back(m);
    labels.push_back(i % 3);
  }
  nn::Tensor4 x = to_tensor(crops);
  for (LossForm form : {LossForm::kSoftmaxEq2, LossForm::kBceProxy}) {
    GeCoLoss l = geco_total_loss(model, x, labels, 3, 0.0, form, false, false);
    EXPECT_DOUBLE_EQ(l.total, l.ce);
  }
}

TEST(TotalLoss, LambdaArithmeticIsLinear) {
  Rng rng(79);
  GeCoModel model(tiny_arch(), 2, rng);
  Rng drng(80);
  std::vector<Matrix> crops;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    Matrix m(10, 8);
    nn::init_normal(m, 1.0, drng);
    crops.push_back(m);
    labels.push_back(i % 2);
  }
  nn::Tensor4 x = to_tensor(crops);
  for (LossForm form : {LossForm::kSoftmaxEq2, LossForm::kBceProxy}) {
    GeCoLoss l1 = geco_total_loss(model, x, labels, 4, 1.0, form, false, false);
    GeCoLoss l2 = geco_total_loss(model, x, labels, 4, 2.0, form, false, false);
    EXPECT_NEAR(l1.total, l1.ce + l1.con, 1e-12);
    EXPECT_NEAR(l2.total - l2.ce, 2.0 * (l1.total - l1.ce), 1e-12);
    EXPECT_GT(l1.con, 0.0);
  }
}

TEST(TotalLoss, SingleSampleClassSkipsItsAnchor) {
  Rng rng(81);
  GeCoModel model(tiny_arch(), 2, rng);
  Rng drng(82);
  // class 0 has two originals (usable anchors), class 1 only one (skipped)
  std::vector<Matrix> crops;
  std::vector<int> labels{0, 0, 1};
  for (int i = 0; i < 3; ++i) {
    Matrix m(10, 8);
    nn::init_normal(m, 1.0, drng);
    crops.push_back(m);
  }
  for (int i = 0; i < 3; ++i) crops.push_back(crops[i]);  // stand-in reconstructions
  std::vector<int> all_labels = labels;
  for (int l : labels) all_labels.push_back(l);
  nn::Tensor4 x = to_tensor(crops);
  GeCoLoss l = geco_total_loss(model, x, all_labels, 3, 1.0, LossForm::kSoftmaxEq2, false, false);
  EXPECT_EQ(l.skipped_anchors, 1);
  EXPECT_GT(l.con, 0.0);
}

TEST(TotalLoss, FullModelGradientsMatchFiniteDifferences) {
  Rng rng(83);
  GeCoModel model(tiny_arch(8, 10), 2, rng);
  Rng drng(84);
  std::vector<Matrix> crops;
  std::vector<int> labels;
  for (int i = 0; i < 4; ++i) {
    Matrix m(10, 8);
    nn::init_normal(m, 1.0, drng);
    crops.push_back(m);
    labels.push_back(i % 2);
  }
  nn::Tensor4 x = to_tensor(crops);
  for (LossForm form : {LossForm::kSoftmaxEq2, LossForm::kBceProxy}) {
    nn::Params ps = model.params();
    nn::zero_grad(ps);
    geco_total_loss(model, x, labels, 2, 0.7, form, true, true);
    double worst = 0.0;
    const double eps = 1e-6;
    for (auto& p : ps) {
      size_t stride = std::max<size_t>(1, p.size / 5);
      for (size_t j = 0; j < p.size; j += stride) {
        double orig = p.value[j];
        p.value[j] = orig + eps;
        double lp = geco_total_loss(model, x, labels, 2, 0.7, form, true, false).total;
        p.value[j] = orig - eps;
        double lm = geco_total_loss(model, x, labels, 2, 0.7, form, true, false).total;
        p.value[j] = orig;
        double fd = (lp - lm) / (2 * eps);
        double an = p.grad[j];
        if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
        worst = std::max(worst, std::abs(fd - an) / std::max({1e-8, std::abs(fd), std::abs(an)}));
      }
    }
    EXPECT_LT(worst, 2e-4) << to_string(form);
  }
}

TEST(TotalLoss, NonFiniteLossNamesTheComponent) {
  Rng rng(85);
  GeCoModel model(tiny_arch(), 2, rng);
  model.head().W.array() = std::numeric_limits<double>::infinity();
  Rng drng(86);
  std::vector<Matrix> crops;
  std::vector<int> labels{0, 1};
  for (int i = 0; i < 2; ++i) {
    Matrix m(10, 8);
    nn::init_normal(m, 1.0, drng);
    crops.push_back(m);
  }
  nn::Tensor4 x = to_tensor(crops);
  try {
    geco_total_loss(model, x, labels, 2, 0.0, LossForm::kBceProxy, false, false);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("cross-entropy"), std::string::npos);
  }
}

struct TinyTrainFixture {
  Rng model_rng{90};
  std::vector<Matrix> feats;
  std::vector<TrainClip> clips;
  PAEModel pae;
  FeatureStats stats;

  explicit TinyTrainFixture(int n_clips = 12, int frames = 15, int n_mels = 8)
      : pae(tiny_pae_config(n_mels), model_rng) {
    Rng drng(91);
    feats.reserve(n_clips);
    for (int i = 0; i < n_clips; ++i) {
      Matrix m(frames, n_mels);
      int cls = i % 2;
      for (int t = 0; t < frames; ++t)
        for (int f = 0; f < n_mels; ++f)
          m(t, f) = std::sin(0.4 * t + f * (cls + 1)) + 0.1 * drng.normal();
      feats.push_back(m);
    }
    stats = compute_feature_stats(feats);
    clips.resize(n_clips);
    for (int i = 0; i < n_clips; ++i) {
      clips[i].features = &feats[i];
      clips[i].class_index = i % 2;
      clips[i].pae = &pae;
    }
  }
};

TEST(TrainGeco, BatchContractHoldsEveryStep) {
  TinyTrainFixture fx;
  GeCoTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.lr_steps = {2};
  RampSchedule ramp{1, 2, 3, 2.0};
  int steps = 0;
  auto observer = [&](const GeCoStepInfo& info) {
    ++steps;
    EXPECT_EQ(info.batch_rows, 8);  // N originals + N reconstructions
    EXPECT_EQ(info.n_orig, 4);
    ASSERT_NE(info.labels, nullptr);
    ASSERT_NE(info.source_clip, nullptr);
    for (int i = 0; i < info.n_orig; ++i) {
      EXPECT_EQ((*info.labels)[i + info.n_orig], (*info.labels)[i]);
      EXPECT_EQ((*info.source_clip)[i + info.n_orig], (*info.source_clip)[i]);
      EXPECT_EQ((*info.labels)[i], fx.clips[(*info.source_clip)[i]].class_index);
    }
  };
  train_geco(fx.clips, 2, tiny_arch(8, 10), cfg, ramp, fx.stats, 7, nullptr, observer);
  EXPECT_EQ(steps, 9);  // 12 clips, batch 4, drop_last -> 3 steps x 3 epochs
}

TEST(TrainGeco, DeterministicUnderSeed) {
  TinyTrainFixture fx;
  GeCoTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.lr_steps = {};
  RampSchedule ramp{0, 1, 2, 1.0};
  std::vector<GeCoEpochStat> a, b;
  train_geco(fx.clips, 2, tiny_arch(8, 10), cfg, ramp, fx.stats, 21, &a);
  train_geco(fx.clips, 2, tiny_arch(8, 10), cfg, ramp, fx.stats, 21, &b);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss_total, b[i].loss_total);
    EXPECT_EQ(a[i].loss_ce, b[i].loss_ce);
    EXPECT_EQ(a[i].loss_con, b[i].loss_con);
  }
}

TEST(TrainGeco, BaselineModeKeepsTheBatchAtN) {
  TinyTrainFixture fx;
  GeCoTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.lr_steps = {};
  cfg.use_reconstruction = false;
  RampSchedule ramp{0, 0, 1, 0.0};
  auto observer = [&](const GeCoStepInfo& info) {
    EXPECT_EQ(info.batch_rows, 4);
    EXPECT_EQ(info.n_orig, 4);
    EXPECT_EQ(info.lambda, 0.0);
    EXPECT_EQ(info.loss.con, 0.0);
  };
  train_geco(fx.clips, 2, tiny_arch(8, 10), cfg, ramp, fx.stats, 3, nullptr, observer);
}

TEST(TrainGeco, MismatchedRampIsAConfigError) {
  TinyTrainFixture fx;
  GeCoTrainConfig cfg;
  cfg.epochs = 4;
  RampSchedule ramp{1, 2, 3, 1.0};  // total != epochs
  EXPECT_THROW(train_geco(fx.clips, 2, tiny_arch(8, 10), cfg, ramp, fx.stats, 1),
               ConfigError);
}

TEST(TrainGeco, EmptyClassIsAnErrorAtStartup) {
  TinyTrainFixture fx;
  GeCoTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 4;
  RampSchedule ramp{0, 0, 1, 0.0};
  EXPECT_THROW(train_geco(fx.clips, 3, tiny_arch(8, 10), cfg, ramp, fx.stats, 1),
               InvalidArgument);
}

TEST(Checkpoint, GecoRoundTripPreservesForwardBehavior) {
  Rng rng(92);
  GeCoModel model(tiny_arch(8, 10), 2, rng);
  model.stats.mean.array() = 1.5;
  model.stats.stddev.array() = 2.0;
  std::string path =
      (std::filesystem::temp_directory_path() / "geco_model_ckpt_test.ckpt").string();
  save_geco(path, model, 0xabc);

  Rng rng2(993);
  GeCoModel other(tiny_arch(8, 10), 2, rng2);
  load_geco(path, other, 0xabc);
  EXPECT_TRUE((other.stats.mean.array() == 1.5).all());

  Rng drng(94);
  nn::Tensor4 x(2, 1, 10, 8);
  for (auto& v : x.v) v = drng.normal();
  Matrix za = model.embed(x, false);
  Matrix zb = other.embed(x, false);
  EXPECT_TRUE((za.array() == zb.array()).all());

  GeCoModel third(tiny_arch(8, 10), 2, rng2);
  EXPECT_THROW(load_geco(path, third, 0xdef), ConfigError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace geco
