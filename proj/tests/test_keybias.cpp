// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tableseq/error.hpp"
#include "tableseq/keybias.hpp"

using namespace tableseq;

namespace {

Maps3<double> random_logits(std::mt19937_64& rng, int h, int w, double scale = 3.0) {
  std::normal_distribution<double> n(0.0, scale);
  Maps3<double> m;
  for (auto& f : m) {
    f.resize(h, w);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
  }
  return m;
}

// Reference pipeline written with explicit loops.
std::vector<double> staged_oracle(const Maps3<double>& logits, const BiasConfig& cfg, int gh, int gw) {
  const int h = static_cast<int>(logits[0].rows());
  const int w = static_cast<int>(logits[0].cols());
  std::array<std::vector<double>, 3> p;
  for (int k = 0; k < 3; ++k) {
    p[k].assign(static_cast<std::size_t>(gh * gw), 0.0);
    for (int oy = 0; oy < gh; ++oy) {
      for (int ox = 0; ox < gw; ++ox) {
        const double fy = gh > 1 ? static_cast<double>(oy) * (h - 1) / (gh - 1) : 0.0;
        const double fx = gw > 1 ? static_cast<double>(ox) * (w - 1) / (gw - 1) : 0.0;
        double acc = 0;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double wy = std::max(0.0, 1.0 - std::abs(fy - y));
            const double wx = std::max(0.0, 1.0 - std::abs(fx - x));
            acc += wy * wx / (1.0 + std::exp(-logits[k](y, x)));
          }
        }
        p[k][oy * gw + ox] = acc;
      }
    }
  }
  std::vector<double> b(static_cast<std::size_t>(gh * gw));
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      double r = 0, c = 0;
      for (int xx = 0; xx < gw; ++xx) r = std::max(r, p[0][y * gw + xx]);
      for (int yy = 0; yy < gh; ++yy) c = std::max(c, p[1][yy * gw + x]);
      b[y * gw + x] = cfg.alpha * r + cfg.beta * c + cfg.gamma * p[2][y * gw + x];
    }
  }
  double ent = 0;
  for (int k = 0; k < 3; ++k) {
    for (double q : p[k]) {
      if (q > 0 && q < 1) ent -= q * std::log2(q) + (1 - q) * std::log2(1 - q);
    }
  }
  const double conf = std::clamp(1.0 - ent / (3.0 * gh * gw), 0.0, 1.0);
  double mean = 0;
  for (double v : b) mean += v;
  mean /= static_cast<double>(b.size());
  double var = 0;
  for (double v : b) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(b.size()));
  std::vector<double> out(b.size(), 0.0);
  if (sd >= cfg.eps_std) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      out[i] = std::clamp(cfg.lambda0 * conf * (b[i] - mean) / sd, -cfg.clamp, cfg.clamp);
    }
  }
  return out;
}

}  // namespace

TEST(Resize, TwoByTwoToThreeByThree) {
  Field<double> in(2, 2);
  in << 0, 1, 1, 0;
  const Field<double> out = resize_bilinear(in, 3, 3);
  EXPECT_DOUBLE_EQ(out(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.5);
  EXPECT_EQ(resize_bilinear(in, 2, 2), in);
}

TEST(Resize, ConstantStaysConstant) {
  const Field<double> c = Field<double>::Constant(5, 7, 0.42);
  EXPECT_LT((resize_bilinear(c, 4, 16).array() - 0.42).abs().maxCoeff(), 1e-15);
}

TEST(Profiles, RowAndColumnMaxima) {
  Field<double> pr(2, 3);
  pr << 0.1, 0.9, 0.2, 0.3, 0.3, 0.4;
  Field<double> pc(2, 3);
  pc << 0.5, 0.1, 0.0, 0.2, 0.8, 0.3;
  const auto prof = axis_profiles(pr, pc);
  Field<double> r(2, 3);
  r << 0.9, 0.9, 0.9, 0.4, 0.4, 0.4;
  Field<double> c(2, 3);
  c << 0.5, 0.8, 0.3, 0.5, 0.8, 0.3;
  EXPECT_EQ(prof[0], r);
  EXPECT_EQ(prof[1], c);
}

TEST(Confidence, Endpoints) {
  const Field<double> half = Field<double>::Constant(3, 3, 0.5);
  EXPECT_EQ(entropy_confidence(half, half, half), 0.0);
  Field<double> bin(2, 2);
  bin << 0, 1, 1, 0;
  EXPECT_EQ(entropy_confidence(bin, bin, bin), 1.0);
  const Field<double> q = Field<double>::Constant(2, 2, 0.25);
  EXPECT_NEAR(entropy_confidence(q, q, q), 1.0 - (0.25 * 2 + 0.75 * std::log2(4.0 / 3.0)), 1e-12);
  EXPECT_NEAR(entropy_confidence(q, q, q), 0.18872187554086717, 1e-12);
  EXPECT_EQ(binary_entropy(0.0), 0.0);
  EXPECT_EQ(binary_entropy(1.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
}

TEST(ZScore, NormalizesAndHandlesConstant) {
  Field<double> b(1, 4);
  b << 1, 2, 3, 4;
  const Field<double> z = zscore(b, 1e-6);
  EXPECT_NEAR(z.mean(), 0.0, 1e-15);
  EXPECT_NEAR(std::sqrt(z.array().square().mean()), 1.0, 1e-15);
  EXPECT_TRUE(zscore(Field<double>(Field<double>::Constant(3, 3, 7.0)), 1e-6).isZero());
}

TEST(Bias, ZeroScaleGivesZeroVector) {
  std::mt19937_64 rng(1);
  BiasConfig cfg;
  cfg.lambda0 = 0.0;
  const Vector<double> b = compute_bias(random_logits(rng, 8, 16), cfg, 4, 16);
  EXPECT_EQ(b.size(), 64);
  EXPECT_TRUE(b.isZero());
}

TEST(Bias, ConstantCombinedFieldGivesZero) {
  Maps3<double> m;
  for (auto& f : m) f = Field<double>::Constant(8, 16, 4.0);
  EXPECT_TRUE(compute_bias(m, BiasConfig{}, 4, 16).isZero());
}

TEST(Bias, MatchesStagedOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 30; ++i) {
    BiasConfig cfg;
    cfg.alpha = u(rng);
    cfg.beta = u(rng);
    cfg.gamma = u(rng);
    cfg.lambda0 = u(rng) * 2;
    cfg.clamp = 0.5 + u(rng);
    const int gh = 2 + i % 3;
    const int gw = 3 + i % 5;
    const auto logits = random_logits(rng, 4 + i % 4, 6 + i % 3);
    const Vector<double> got = compute_bias(logits, cfg, gh, gw);
    const auto want = staged_oracle(logits, cfg, gh, gw);
    ASSERT_EQ(got.size(), static_cast<Eigen::Index>(want.size()));
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got(static_cast<Eigen::Index>(k)), want[k], 1e-12);
  }
}

TEST(Bias, BoundedByClamp) {
  std::mt19937_64 rng(4);
  for (double c : {0.1, 1.0, 5.0}) {
    BiasConfig cfg;
    cfg.lambda0 = 100.0;
    cfg.clamp = c;
    const Vector<double> b = compute_bias(random_logits(rng, 8, 16, 10.0), cfg, 4, 16);
    EXPECT_LE(b.cwiseAbs().maxCoeff(), c);
  }
}

TEST(Bias, InvariantToCombinedShift) {
  // Adding a constant to every structure probability shifts B uniformly; the
  // z-score removes it. Exercised through the profiles with gamma only.
  std::mt19937_64 rng(6);
  const auto logits = random_logits(rng, 4, 16);
  BiasConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  cfg.conf_at = ConfResolution::kHead;
  auto st = compute_bias_stages(logits, cfg, 4, 16);
  const Field<double> shifted = st.combined.array() + 3.0;
  const Field<double> a = zscore(st.combined, 1e-6);
  const Field<double> b = zscore(shifted, 1e-6);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bias, ScalesLinearlyBelowClamp) {
  std::mt19937_64 rng(8);
  const auto logits = random_logits(rng, 4, 8, 0.3);
  BiasConfig cfg;
  cfg.clamp = 1e9;
  cfg.lambda0 = 1.0;
  const Vector<double> one = compute_bias(logits, cfg, 4, 8);
  cfg.lambda0 = 2.5;
  const Vector<double> two = compute_bias(logits, cfg, 4, 8);
  EXPECT_LT((two - 2.5 * one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bias, RejectsNonFiniteLogits) {
  std::mt19937_64 rng(2);
  auto logits = random_logits(rng, 4, 4);
  logits[1](2, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    compute_bias(logits, BiasConfig{}, 4, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteInput);
  }
  BiasConfig bad;
  bad.clamp = 0;
  EXPECT_THROW(compute_bias(random_logits(rng, 4, 4), bad, 4, 4), Error);
}

TEST(Bias, FloatAndDoubleAgree) {
  std::mt19937_64 rng(10);
  const auto ld = random_logits(rng, 8, 16);
  Maps3<float> lf;
  for (int k = 0; k < 3; ++k) lf[k] = ld[k].cast<float>();
  const Vector<double> d = compute_bias(ld, BiasConfig{}, 4, 16);
  const Vector<float> f = compute_bias(lf, BiasConfig{}, 4, 16);
  EXPECT_LT((d - f.cast<double>()).cwiseAbs().maxCoeff(), 1e-4);
}
