// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "geco/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "geco/common.hpp"

namespace geco {
namespace {

namespace fs = std::filesystem;

GecoArch tiny_arch() {
  GecoArch arch;
  arch.extractor.stem_channels = 4;
  arch.extractor.stem_stride = 2;
  arch.extractor.stage_channels = {4, 8};
  arch.extractor.stage_blocks = {1, 1};
  arch.extractor.embed_dim = 6;
  arch.n_mels = 8;
  arch.crop_frames = 10;
  return arch;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= ra.size();
  mb /= rb.size();
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

TEST(Fuse, ArithmeticCases) {
  EXPECT_DOUBLE_EQ(fuse(0.5, 1.0, 200.0), 0.5);
  EXPECT_DOUBLE_EQ(fuse(0.5, 0.9, 200.0), 20.5);
  EXPECT_THROW(fuse(0.5, 0.9, -1.0), InvalidArgument);
}

TEST(Fuse, PerTypeGammaMapSelectsTheFanValue) {
  FusionConfig cfg;
  cfg.gamma = 200.0;
  cfg.per_type = {{"toycar", 125.0}, {"toyconveyor", 135.0}, {"fan", 495.0},
                  {"pump", 225.0},   {"slider", 110.0},      {"valve", 125.0}};
  EXPECT_DOUBLE_EQ(cfg.gamma_for("fan"), 495.0);
  EXPECT_DOUBLE_EQ(cfg.gamma_for("Fan"), 495.0);  // case-insensitive lookup
  EXPECT_DOUBLE_EQ(cfg.gamma_for("unknown_type"), 200.0);
  EXPECT_DOUBLE_EQ(fuse(0.5, 0.9, cfg.gamma_for("fan")), 0.5 + 495.0 * 0.1);
}

TEST(Fuse, StrictlyMonotoneInBothArguments) {
  const double gamma = 10.0;
  EXPECT_GT(fuse(0.6, 0.5, gamma), fuse(0.5, 0.5, gamma));
  EXPECT_LT(fuse(0.5, 0.6, gamma), fuse(0.5, 0.5, gamma));
}

TEST(Fuse, GammaZeroPreservesMseRankingExactly) {
  Rng rng(40);
  std::vector<double> mse(30), cos(30), fused(30);
  for (int i = 0; i < 30; ++i) {
    mse[i] = rng.uniform();
    cos[i] = rng.uniform() * 2.0 - 1.0;
    fused[i] = fuse(mse[i], cos[i], 0.0);
  }
  EXPECT_DOUBLE_EQ(spearman(fused, mse), 1.0);
}

TEST(Fuse, LargeGammaConvergesToTheCosineRanking) {
  Rng rng(41);
  std::vector<double> mse(30), one_minus_cos(30), fused(30);
  for (int i = 0; i < 30; ++i) {
    mse[i] = rng.uniform();
    double cos = rng.uniform() * 2.0 - 1.0;
    one_minus_cos[i] = 1.0 - cos;
    fused[i] = fuse(mse[i], cos, 1e9);
  }
  EXPECT_DOUBLE_EQ(spearman(fused, one_minus_cos), 1.0);
}

struct ModelFixture {
  Rng rng{7};
  GeCoModel model;
  ModelFixture() : model(tiny_arch(), 3, rng) {}

  Matrix random_clip(int frames, uint64_t seed) {
    Rng r(seed);
    Matrix m(frames, 8);
    nn::init_normal(m, 1.0, r);
    return m;
  }
};

TEST(ClipEmbedding, IsUnitNormAndCoversTheTail) {
  ModelFixture fx;
  Matrix clip = fx.random_clip(25, 100);  // crops at 0, plus tail at 15
  Vector e = clip_embedding(fx.model, clip, 10);
  EXPECT_NEAR(e.norm(), 1.0, 1e-6);

  // Explicit oracle over starts {0, 10, 15}: crop 10, stride 10, tail 15.
  std::vector<int> starts{0, 10, 15};
  nn::Tensor4 x(static_cast<int>(starts.size()), 1, 10, 8);
  for (size_t k = 0; k < starts.size(); ++k)
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 8; ++c)
        x.at(static_cast<int>(k), 0, r, c) =
            (clip(starts[k] + r, c) - fx.model.stats.mean(c)) / fx.model.stats.stddev(c);
  Matrix Z = fx.model.embed(x, false);
  Vector mean = Vector::Zero(Z.cols());
  for (int i = 0; i < Z.rows(); ++i) mean += l2_normalize(Z.row(i).transpose());
  mean /= static_cast<double>(Z.rows());
  Vector expected = l2_normalize(mean);
  EXPECT_LT((e - expected).norm(), 1e-9);
}

TEST(ClipEmbedding, RejectsShortClipsAndBadStride) {
  ModelFixture fx;
  Matrix clip = fx.random_clip(9, 101);
  EXPECT_THROW(clip_embedding(fx.model, clip, 10), InvalidArgument);
  Matrix ok = fx.random_clip(12, 102);
  EXPECT_THROW(clip_embedding(fx.model, ok, 0), InvalidArgument);
}

TEST(ComputeCenters, SingleClipClassEqualsItsNormalizedEmbedding) {
  ModelFixture fx;
  Matrix a = fx.random_clip(12, 103);
  Matrix b = fx.random_clip(12, 104);
  Matrix c = fx.random_clip(12, 105);
  ClassCenters centers =
      compute_centers(fx.model, {{&a, 0}, {&b, 1}, {&c, 2}}, 10);
  ASSERT_EQ(centers.centers.rows(), 3);
  Vector ea = clip_embedding(fx.model, a, 10);
  EXPECT_LT((centers.centers.row(0).transpose() - ea).norm(), 1e-9);
  EXPECT_EQ(centers.sample_count[0], 1);
}

TEST(ComputeCenters, PermutationAndDuplicationInvariance) {
  ModelFixture fx;
  Matrix a = fx.random_clip(12, 106);
  Matrix b = fx.random_clip(12, 107);
  Matrix c = fx.random_clip(12, 108);
  Matrix d = fx.random_clip(12, 109);
  Matrix e = fx.random_clip(12, 110);
  Matrix f = fx.random_clip(12, 111);
  ClassCenters base = compute_centers(
      fx.model, {{&a, 0}, {&b, 0}, {&c, 1}, {&d, 1}, {&e, 2}, {&f, 2}}, 10);
  ClassCenters permuted = compute_centers(
      fx.model, {{&f, 2}, {&c, 1}, {&a, 0}, {&e, 2}, {&d, 1}, {&b, 0}}, 10);
  EXPECT_LT((base.centers - permuted.centers).norm(), 1e-12);

  // Duplicating class 0's clip set rescales the sum, not the mean direction.
  ClassCenters doubled = compute_centers(
      fx.model,
      {{&a, 0}, {&b, 0}, {&a, 0}, {&b, 0}, {&c, 1}, {&d, 1}, {&e, 2}, {&f, 2}}, 10);
  EXPECT_LT((base.centers - doubled.centers).norm(), 1e-12);
}

TEST(ComputeCenters, EmptyClassThrows) {
  ModelFixture fx;
  Matrix a = fx.random_clip(12, 112);
  EXPECT_THROW(compute_centers(fx.model, {{&a, 0}}, 10), InvalidArgument);  // 3 classes
}

TEST(ClipCosine, MatchesHandInjectedCenters) {
  ModelFixture fx;
  Matrix clip = fx.random_clip(12, 113);
  Vector e = clip_embedding(fx.model, clip, 10);

  ClassCenters centers;
  centers.centers = Matrix::Zero(3, 6);
  centers.sample_count = {1, 1, 1};
  centers.centers.row(0) = e.transpose();  // same direction -> 1
  // orthogonal direction via one Gram-Schmidt step
  Vector q(6);
  q << 1, 0, 0, 0, 0, 0;
  q -= e * e.dot(q);
  centers.centers.row(1) = l2_normalize(q).transpose();
  centers.centers.row(2) = (-e).transpose();  // antipodal -> -1

  EXPECT_NEAR(clip_cosine(fx.model, centers, clip, 0, 10), 1.0, 1e-9);
  EXPECT_NEAR(clip_cosine(fx.model, centers, clip, 1, 10), 0.0, 1e-9);
  EXPECT_NEAR(clip_cosine(fx.model, centers, clip, 2, 10), -1.0, 1e-9);
  EXPECT_THROW(clip_cosine(fx.model, centers, clip, 3, 10), InvalidArgument);

  // ID-unknown mode: the best candidate wins.
  EXPECT_NEAR(clip_cosine_max(fx.model, centers, clip, {0, 1, 2}, 10), 1.0, 1e-9);
  EXPECT_NEAR(clip_cosine_max(fx.model, centers, clip, {1, 2}, 10), 0.0, 1e-9);
  EXPECT_THROW(clip_cosine_max(fx.model, centers, clip, {}, 10), InvalidArgument);
  EXPECT_THROW(clip_cosine_max(fx.model, centers, clip, {5}, 10), InvalidArgument);
}

std::vector<ScoredClip> make_rows(const std::vector<double>& mse, const std::vector<double>& cos,
                                  const std::vector<int>& anomalous, const std::string& type) {
  std::vector<ScoredClip> rows;
  for (size_t i = 0; i < mse.size(); ++i) {
    ScoredClip s;
    s.record.machine_type = type;
    s.record.machine_id = 0;
    s.record.label = anomalous[i] ? Label::kAnomaly : Label::kNormal;
    s.record.path = strformat("%s_%zu.wav", type.c_str(), i);
    s.mse = mse[i];
    s.cos_simi = cos[i];
    rows.push_back(std::move(s));
  }
  return rows;
}

TEST(GridSearchGamma, SinglePointGridReturnsThatPoint) {
  auto rows = make_rows({0.1, 0.9, 0.2, 0.8}, {0.9, 0.1, 0.8, 0.2}, {0, 1, 0, 1}, "synth");
  auto out = grid_search_gamma(rows, {42.0}, 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].gamma, 42.0);
  EXPECT_EQ(out[0].machine_type, "synth");
}

TEST(GridSearchGamma, CosineNoiseDegradesWithGammaSoTheMinimumWins) {
  // MSE separates perfectly; anomalies have exact cosine 1 so gamma never
  // moves them, while four normals carry cosine deficits tuned to overtake
  // the lowest anomaly at gamma = 100, 200, 300, 400. The objective is 1.0
  // on the low-gamma plateau and strictly worse past the first crossover,
  // so the search must return the grid minimum.
  std::vector<double> mse = {0.0, 0.1, 0.3, 0.3, 0.3, 0.3, 0.9, 0.95, 1.0, 1.05};
  std::vector<double> cos = {1.0, 1.0, 1.0 - 0.006, 1.0 - 0.003, 1.0 - 0.002,
                             1.0 - 0.0015, 1.0, 1.0, 1.0, 1.0};
  std::vector<int> label = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  auto rows = make_rows(mse, cos, label, "synth");
  auto out = grid_search_gamma(rows, default_gamma_grid(), 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].gamma, 50.0);
  EXPECT_DOUBLE_EQ(out[0].auc, 1.0);
  EXPECT_DOUBLE_EQ(default_gamma_grid().front(), 50.0);
  EXPECT_DOUBLE_EQ(default_gamma_grid().back(), 500.0);
  EXPECT_EQ(default_gamma_grid().size(), 91u);
}

TEST(GridSearchGamma, ConstantCosineTiesBreakTowardSmallerGamma) {
  auto rows = make_rows({0.1, 0.9, 0.3, 0.7}, {0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}, "synth");
  auto out = grid_search_gamma(rows, {100.0, 200.0, 300.0}, 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].gamma, 100.0);
}

TEST(GridSearchGamma, PerTypeResultsAreIndependent) {
  auto a = make_rows({0.1, 0.9}, {0.9, 0.1}, {0, 1}, "alpha");
  auto b = make_rows({0.2, 0.8}, {0.8, 0.2}, {0, 1}, "beta");
  a.insert(a.end(), b.begin(), b.end());
  auto out = grid_search_gamma(a, {50.0, 60.0}, 0.1);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].machine_type, "alpha");
  EXPECT_EQ(out[1].machine_type, "beta");
}

TEST(GridSearchGamma, EmptyOrNegativeGridThrows) {
  auto rows = make_rows({0.1, 0.9}, {0.9, 0.1}, {0, 1}, "synth");
  EXPECT_THROW(grid_search_gamma(rows, {}, 0.1), InvalidArgument);
  EXPECT_THROW(grid_search_gamma(rows, {-5.0}, 0.1), InvalidArgument);
}

TEST(ScoreFile, SubmissionFormatUsesSixDecimals) {
  fs::path p = fs::temp_directory_path() / "geco_score_file_test.csv";
  write_score_file(p.string(), {{"clip_000.wav", 1.25}, {"clip_001.wav", 0.123456789}}, 0xfeed);
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "# config_hash=" + hash_hex(0xfeed));
  std::getline(f, line);
  EXPECT_EQ(line, "clip_000.wav,1.250000");
  std::getline(f, line);
  EXPECT_EQ(line, "clip_001.wav,0.123457");
  fs::remove(p);
}

TEST(CentersCheckpoint, RoundTripAndHashRejection) {
  ClassCenters centers;
  centers.centers = Matrix::Random(3, 6);
  centers.sample_count = {4, 5, 6};
  fs::path p = fs::temp_directory_path() / "geco_centers_test.ckpt";
  save_centers(p.string(), centers, 0x77);
  ClassCenters back;
  load_centers(p.string(), back, 3, 6, 0x77);
  EXPECT_TRUE((back.centers.array() == centers.centers.array()).all());
  EXPECT_EQ(back.sample_count, centers.sample_count);
  ClassCenters reject;
  EXPECT_THROW(load_centers(p.string(), reject, 3, 6, 0x78), ConfigError);
  fs::remove(p);
}

}  // namespace
}  // namespace geco
