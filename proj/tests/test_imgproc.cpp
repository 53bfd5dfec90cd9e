// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles/naive.hpp"
#include "tableseq/error.hpp"
#include "tableseq/imgproc.hpp"

using namespace tableseq;

namespace {

Plane random_plane(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> d(0, 255);
  Plane p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(d(rng));
  return p;
}

}  // namespace

TEST(Illum, KernelSide) {
  EXPECT_EQ(illum_kernel_side(100, 200), 3);
  EXPECT_EQ(illum_kernel_side(10, 10), 3);
  EXPECT_EQ(illum_kernel_side(500, 800), 11);
  EXPECT_EQ(illum_kernel_side(600, 600), 13);
  EXPECT_EQ(illum_kernel_side(1000, 1000) % 2, 1);
}

TEST(Illum, ErodeDilateDuality) {
  std::mt19937_64 rng(1);
  const Plane p = random_plane(rng, 20, 30);
  const Plane inv = (255.0f - p.array()).matrix();
  const Plane a = erode(p, 5);
  const Plane b = (255.0f - dilate(inv, 5).array()).matrix();
  EXPECT_EQ(a, b);
  EXPECT_LE((a - p).maxCoeff(), 0.0f);
  EXPECT_GE((dilate(p, 3) - p).minCoeff(), 0.0f);
}

TEST(Illum, ConstantIsFixedPoint) {
  for (float v : {0.0f, 17.0f, 128.0f, 255.0f}) {
    const Plane c = Plane::Constant(30, 40, v);
    EXPECT_EQ(illum_correct(c), c) << v;
    EXPECT_EQ(unsharp(c, 1.5, 1.0), c) << v;
    EXPECT_EQ(clahe(c, 2.0, 4, 4), c) << v;
  }
}

TEST(Illum, FlattensSmoothShading) {
  const int h = 100, w = 200;
  Plane p(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) p(y, x) = std::round(150.0f + 80.0f * x / (w - 1) + 20.0f * y / (h - 1));
  }
  // Isolated one-pixel ink dots, smaller than the structuring element.
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> ys(1, h - 2), xs(1, w - 2);
  std::vector<std::pair<int, int>> dots;
  for (int i = 0; i < 40; ++i) {
    const int y = ys(rng), x = xs(rng);
    dots.emplace_back(y, x);
  }
  for (auto [y, x] : dots) p(y, x) = 0.0f;
  const Plane out = illum_correct(p);
  const float top = 250.0f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool near_dot = false;
      for (auto [dy, dx] : dots) near_dot = near_dot || (std::abs(dy - y) <= 1 && std::abs(dx - x) <= 1);
      if (!near_dot) {
        EXPECT_NEAR(out(y, x), top, 2.0f) << y << "," << x;
      }
    }
  }
  for (auto [y, x] : dots) EXPECT_LT(out(y, x), 50.0f);
}

TEST(Clahe, SingleTileUnclippedIsGlobalEqualization) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    Plane p = random_plane(rng, 24, 40);
    p = (p.array() / 4.0f).round().matrix();
    EXPECT_EQ(clahe(p, 1e12, 1, 1), oracle::naive_equalize(p));
  }
}

TEST(Clahe, RaisesContrastOfLowContrastStep) {
  Plane p(32, 64);
  p.leftCols(32).setConstant(100.0f);
  p.rightCols(32).setConstant(110.0f);
  const Plane out = clahe(p, 40.0, 1, 1);
  EXPECT_GT(out(0, 63) - out(0, 0), 10.0f);
  const Plane tiled = clahe(p, 2.0, 4, 4);
  EXPECT_GE(tiled(16, 63) - tiled(16, 0), 10.0f);
}

TEST(Clahe, RejectsBadParameters) {
  const Plane p = Plane::Constant(8, 8, 5.0f);
  EXPECT_THROW(clahe(p, 0.0, 2, 2), Error);
  EXPECT_THROW(clahe(p, 2.0, 0, 2), Error);
}

TEST(Unsharp, ZeroAmountIsIdentityAndStepOvershoots) {
  std::mt19937_64 rng(4);
  const Plane p = random_plane(rng, 16, 16);
  EXPECT_EQ(unsharp(p, 0.0, 1.0), p);
  Plane step(10, 20);
  step.leftCols(10).setConstant(100.0f);
  step.rightCols(10).setConstant(150.0f);
  const Plane out = unsharp(step, 1.0, 1.0);
  EXPECT_LT(out(5, 9), 100.0f);
  EXPECT_GT(out(5, 10), 150.0f);
  EXPECT_EQ(out(5, 0), 100.0f);
  EXPECT_EQ(out(5, 19), 150.0f);
}

TEST(Enhance, FuzzPreservesShapeAndRange) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 60);
  EnhanceConfig cfg;
  cfg.denoise = 0.8;
  for (int i = 0; i < 100; ++i) {
    const int h = dim(rng), w = dim(rng);
    Image img;
    if (i % 3 == 0) {
      img = Image(h, w, 3);
      for (auto& c : img.channels) c = random_plane(rng, h, w);
    } else {
      img = Image(random_plane(rng, h, w));
    }
    const Image out = enhance(img, cfg);
    ASSERT_EQ(out.channel_count(), img.channel_count());
    ASSERT_EQ(out.height(), h);
    ASSERT_EQ(out.width(), w);
    for (const auto& c : out.channels) {
      EXPECT_GE(c.minCoeff(), 0.0f);
      EXPECT_LE(c.maxCoeff(), 255.0f);
      EXPECT_TRUE(c.allFinite());
    }
  }
}

TEST(Enhance, RejectsInvalidConfig) {
  EnhanceConfig cfg;
  cfg.clahe_clip = -1;
  EXPECT_THROW(cfg.check(), Error);
}

TEST(Stats, NormalizedTrainSetIsStandard) {
  std::mt19937_64 rng(6);
  std::vector<Image> imgs;
  for (int i = 0; i < 10; ++i) imgs.emplace_back(random_plane(rng, 12 + i, 20));
  const NormStats s = compute_stats(imgs);
  ASSERT_EQ(s.mean.size(), 1u);
  double sum = 0, sq = 0, n = 0;
  for (const auto& img : imgs) {
    const auto f = normalize(img, s);
    sum += f[0].sum();
    sq += f[0].squaredNorm();
    n += static_cast<double>(f[0].size());
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 1.0, 1e-3);
}

TEST(Stats, ConstantImageNormalizesToZeroAndIsDegenerate) {
  const Image c(Plane::Constant(8, 8, 128.0f));
  NormStats s;
  s.mean = {128.0 / 255.0};
  s.std = {0.25};
  EXPECT_TRUE(normalize(c, s)[0].isZero());
  try {
    compute_stats({c});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStatDegenerate);
  }
}

TEST(Stats, WriteReadRoundTrip) {
  NormStats s;
  s.mean = {0.1, 0.2, 0.3};
  s.std = {0.4, 0.5, 0.6};
  const auto path = std::filesystem::temp_directory_path() / "tableseq_stats_test.json";
  write_stats(path, s);
  const NormStats r = read_stats(path);
  std::filesystem::remove(path);
  EXPECT_EQ(r.mean, s.mean);
  EXPECT_EQ(r.std, s.std);
}

TEST(Luma, Bt601Weights) {
  Image rgb(1, 1, 3);
  rgb.channels[0](0, 0) = 255.0f;
  EXPECT_NEAR(luma(rgb)(0, 0), 0.299f * 255.0f, 1e-3f);
}
