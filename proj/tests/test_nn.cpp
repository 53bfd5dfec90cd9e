// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "oracles/naive.hpp"
#include "tableseq/error.hpp"
#include "tableseq/nn/grad_check.hpp"
#include "tableseq/nn/model.hpp"
#include "tableseq/nn/ops.hpp"
#include "tableseq/nn/optim.hpp"
#include "tableseq/nn/train.hpp"
#include "tableseq/tokenize.hpp"

using namespace tableseq;
using namespace tableseq::nn;

namespace {

Field<double> randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Field<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalar read-out u^T X w with fixed random u, w.
Var readout(Tape<double>& t, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& v = t.value(x);
  Var u = t.constant(randn(rng, 1, v.rows()));
  Var w = t.constant(randn(rng, v.cols(), 1));
  return matmul(t, matmul(t, u, x), w);
}

ModelConfig small_config(int mtp = 1) {
  ModelConfig c;
  c.vocab_size = Vocab().size();
  c.d = 32;
  c.heads = 4;
  c.dec_layers = 2;
  c.max_len = 64;
  c.mtp_heads = mtp;
  return c;
}

Plane random_image(std::mt19937_64& rng, int h = 64, int w = 128) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Plane p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = n(rng);
  return p;
}

}  // namespace

TEST(Attention, MatchesNaiveOracle) {
  std::mt19937_64 rng(1);
  const Field<double> q = randn(rng, 3, 8), k = randn(rng, 4, 8), v = randn(rng, 4, 8);
  for (bool causal : {false, true}) {
    for (bool with_bias : {false, true}) {
      const Field<double> b = randn(rng, 4, 1);
      std::vector<double> bv(b.data(), b.data() + 4);
      kernels::AttnOptions<double> opt;
      opt.heads = 2;
      opt.causal = causal;
      Vector<double> bias = b.col(0);
      if (with_bias) opt.bias = &bias;
      const Field<double> got = kernels::attention(q, k, v, opt);
      const Field<double> want = oracle::naive_attention(q, k, v, 2, causal, with_bias ? &bv : nullptr);
      EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12);
      std::vector<Field<double>> probs;
      const Field<double> taped = kernels::attention(q, k, v, opt, &probs);
      EXPECT_LT((taped - want).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Attention, FewRowAndBatchedPathsAgree) {
  std::mt19937_64 rng(2);
  const Field<double> q = randn(rng, 20, 16), k = randn(rng, 20, 16), v = randn(rng, 20, 16);
  kernels::AttnOptions<double> opt;
  opt.heads = 4;
  opt.causal = true;
  std::vector<Field<double>> probs;
  const Field<double> full = kernels::attention(q, k, v, opt, &probs);
  for (Eigen::Index i = 0; i < 20; i += 5) {
    kernels::AttnOptions<double> o = opt;
    o.query_offset = static_cast<int>(i);
    const Field<double> part = kernels::attention(Field<double>(q.middleRows(i, 3)), k, v, o);
    EXPECT_LT((part - full.middleRows(i, 3)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Attention, ZeroBiasIsBitwiseBiasFree) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  Field<float> q(5, 16), k(12, 16), v(12, 16);
  for (auto* m : {&q, &k, &v}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
  }
  Maps3<float> logits;
  for (auto& f : logits) {
    f.resize(4, 6);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
  }
  BiasConfig cfg;
  cfg.lambda0 = 0.0;
  const Vector<float> bias = compute_bias(logits, cfg, 3, 4);
  kernels::AttnOptions<float> plain;
  plain.heads = 4;
  kernels::AttnOptions<float> biased = plain;
  biased.bias = &bias;
  const Field<float> a = kernels::attention(q, k, v, plain);
  const Field<float> b = kernels::attention(q, k, v, biased);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
}

TEST(GradCheck, Attention) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    const bool causal = i % 2 == 0;
    const Field<double> bias = randn(rng, 5, 1);
    const auto report = grad_check(
        [&](Tape<double>& t, const std::vector<Var>& x) {
          return readout(t, attention<double>(t, x[0], x[1], x[2], 2, causal, std::nullopt, Vector<double>(bias.col(0))),
                         10 + i);
        },
        {randn(rng, 5, 8), randn(rng, 5, 8), randn(rng, 5, 8)}, {"q", "k", "v"});
    EXPECT_TRUE(report.passed()) << report.worst();
  }
}

TEST(GradCheck, RopeLayerNormGeluSilu) {
  std::mt19937_64 rng(5);
  auto table = std::make_shared<const kernels::RopeTable<double>>(2, 3, 8, 100.0);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& x) {
        Var h = rope2d(t, x[0], table);
        h = layer_norm(t, h, x[1], x[2]);
        h = gelu(t, h);
        h = silu(t, h);
        return readout(t, h, 3);
      },
      {randn(rng, 6, 8), randn(rng, 1, 8), randn(rng, 1, 8)}, {"x", "gamma", "beta"});
  EXPECT_TRUE(report.passed()) << report.worst();
}

TEST(GradCheck, ConvAndLinear) {
  std::mt19937_64 rng(6);
  kernels::ConvGeom g;
  g.in_h = 5;
  g.in_w = 6;
  g.sh = 2;
  g.sw = 1;
  g.ph = 1;
  g.pw = 1;
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& x) {
        Var y = conv2d(t, x[0], x[1], x[2], g);
        y = transpose(t, y);
        y = linear(t, y, x[3], x[4]);
        return readout(t, y, 4);
      },
      {randn(rng, 2, 30), randn(rng, 3, 18), randn(rng, 3, 1), randn(rng, 3, 4), randn(rng, 1, 4)},
      {"x", "w", "b", "lw", "lb"});
  EXPECT_TRUE(report.passed()) << report.worst();
}

TEST(GradCheck, Losses) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> tok(0, 9);
  std::vector<int> next(6);
  for (auto& x : next) x = tok(rng);
  next[4] = -1;
  Field<double> target = randn(rng, 3, 10).cwiseAbs().cwiseMin(1.0);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& x) {
        Var seq = mtp_loss(t, {x[0], x[1]}, next, {0.7, 0.3}, -1);
        Var prior = bce_dice(t, x[2], target);
        return add(t, seq, prior);
      },
      {randn(rng, 6, 10), randn(rng, 6, 10), randn(rng, 3, 10)}, {"head1", "head2", "prior"});
  EXPECT_TRUE(report.passed()) << report.worst();
}

TEST(Rope, IsAnIsometryAndInvertible) {
  std::mt19937_64 rng(8);
  const kernels::RopeTable<double> table(3, 4, 16, 100.0);
  const Field<double> x = randn(rng, 12, 16);
  const Field<double> y = kernels::rope_apply(x, table, 1.0);
  EXPECT_LT((y.rowwise().norm() - x.rowwise().norm()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((kernels::rope_apply(y, table, -1.0) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rope, DotProductDependsOnRelativeOffset) {
  std::mt19937_64 rng(9);
  const kernels::RopeTable<double> table(4, 4, 8, 100.0);
  const Field<double> a = randn(rng, 1, 8), b = randn(rng, 1, 8);
  auto at = [&](const Field<double>& v, int y, int x) {
    Field<double> m = Field<double>::Zero(16, 8);
    m.row(y * 4 + x) = v.row(0);
    return Field<double>(kernels::rope_apply(m, table, 1.0).row(y * 4 + x));
  };
  const double d1 = (at(a, 0, 0) * at(b, 1, 2).transpose())(0, 0);
  const double d2 = (at(a, 2, 1) * at(b, 3, 3).transpose())(0, 0);
  EXPECT_NEAR(d1, d2, 1e-12);
}

TEST(Loss, UniformLogitsGiveLogVocab) {
  Tape<double> t;
  Var z = t.constant(Field<double>::Zero(4, 2147));
  EXPECT_NEAR(t.value(cross_entropy(t, z, {0, 5, 2146, 7}, -1))(0, 0), std::log(2147.0), 1e-12);
  Var empty = cross_entropy(t, z, {-1, -1, -1, -1}, -1);
  EXPECT_EQ(t.value(empty)(0, 0), 0.0);
}

TEST(Loss, BceDiceCases) {
  Tape<double> t;
  const Field<double> zero = Field<double>::Zero(2, 2);
  // p = 0.5 everywhere, target 0: BCE = ln 2, dice = 1 - 1 / (2 + 1).
  Var a = bce_dice(t, t.constant(zero), zero);
  EXPECT_NEAR(t.value(a)(0, 0), std::log(2.0) + 0.5 * (1.0 - 1.0 / 3.0), 1e-12);
  const Field<double> ones = Field<double>::Ones(2, 2);
  Var b = bce_dice(t, t.constant(Field<double>::Constant(2, 2, 40.0)), ones);
  EXPECT_NEAR(t.value(b)(0, 0), 0.0, 1e-12);
  EXPECT_THROW(bce_dice(t, t.constant(zero), Field<double>(Field<double>::Zero(1, 4))), Error);
}

TEST(Loss, MtpSingleHeadEqualsCrossEntropy) {
  std::mt19937_64 rng(10);
  Tape<double> t;
  Var z = t.constant(randn(rng, 5, 7));
  const std::vector<int> next = {1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(t.value(mtp_loss(t, {z}, next, {1.0}, -1))(0, 0), t.value(cross_entropy(t, z, next, -1))(0, 0));
  Var z2 = t.constant(randn(rng, 5, 7));
  EXPECT_DOUBLE_EQ(t.value(mtp_loss(t, {z, z2}, next, {1.0, 0.0}, -1))(0, 0),
                   t.value(cross_entropy(t, z, next, -1))(0, 0));
}

TEST(Loss, MtpHandComputed) {
  // Three positions, two heads; head 2 at the last position has no target.
  Tape<double> t;
  Field<double> l1 = Field<double>::Zero(3, 3);
  Field<double> l2 = Field<double>::Zero(3, 3);
  l1(0, 1) = std::log(3.0);
  l2(0, 2) = std::log(5.0);
  Var a = t.constant(l1), b = t.constant(l2);
  const std::vector<int> next = {1, 2, 0};
  const double ce1 = (std::log(5.0 / 3.0) + std::log(3.0) + std::log(3.0)) / 3.0;
  const double ce2 = (std::log(7.0 / 5.0) + std::log(3.0)) / 2.0;
  EXPECT_NEAR(t.value(mtp_loss(t, {a, b}, next, {0.5, 0.5}, -1))(0, 0), 0.5 * ce1 + 0.5 * ce2, 1e-12);
  try {
    mtp_loss(t, {a, b}, next, {0.5, 0.6}, -1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWeightsNotNormalized);
  }
}

TEST(Model, SameSeedSameParameters) {
  const MicroModel a(small_config(), 5);
  const MicroModel b(small_config(), 5);
  const MicroModel c(small_config(), 6);
  bool differs = false;
  for (const auto& [name, p] : a.params().all()) {
    EXPECT_EQ(p.value, b.params().get(name).value) << name;
    differs = differs || p.value != c.params().get(name).value;
  }
  EXPECT_TRUE(differs);
}

TEST(Model, CachedStepMatchesTapeDecode) {
  std::mt19937_64 rng(11);
  MicroModel m(small_config(2), 3);
  const Plane img = random_image(rng);
  const std::vector<int> inputs = {1, 5, 9, 200, 17, 4};
  Tape<float> t;
  const auto enc = m.encode(t, img);
  const auto heads = m.decode(t, enc.memory, inputs, std::nullopt);
  const Encoded e = m.encode(img);
  DecoderCache cache = m.start(e, std::nullopt);
  const Field<float> h1 = m.step(cache, {1, 5});
  const Field<float> h2 = m.step(cache, {9, 200, 17, 4});
  Field<float> hidden(6, h1.cols());
  hidden << h1, h2;
  for (int k = 0; k < 2; ++k) {
    EXPECT_LT((m.head_logits(k, hidden) - t.value(heads[static_cast<std::size_t>(k)])).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(Model, ZeroLambdaDecoderIsBitwiseBiasFree) {
  std::mt19937_64 rng(12);
  const MicroModel m(small_config(), 4);
  const Encoded e = m.encode(random_image(rng));
  BiasConfig cfg;
  cfg.lambda0 = 0.0;
  const auto bias = sample_bias(m, e.structure, cfg, true);
  ASSERT_TRUE(bias.has_value());
  DecoderCache with = m.start(e, bias);
  DecoderCache without = m.start(e, std::nullopt);
  const Field<float> a = m.step(with, {1, 30, 40});
  const Field<float> b = m.step(without, {1, 30, 40});
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
}

TEST(Model, SaveLoadRoundTrip) {
  const MicroModel a(small_config(2), 9);
  const auto path = (std::filesystem::temp_directory_path() / "tableseq_nn_test.tsqm").string();
  a.save(path);
  const MicroModel b = MicroModel::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(b.config().to_text(), a.config().to_text());
  for (const auto& [name, p] : a.params().all()) EXPECT_EQ(p.value, b.params().get(name).value) << name;
}

TEST(Model, RejectsInvalidConfig) {
  ModelConfig c = small_config();
  c.vocab_size = 0;
  EXPECT_THROW(MicroModel(c, 1), Error);
  c = small_config();
  c.d = 30;
  EXPECT_THROW(MicroModel(c, 1), Error);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  std::mt19937_64 rng(13);
  const ModelConfig cfg = small_config();
  MicroModel m(cfg, 2);
  const MicroModel ref(cfg, 2);
  TrainSample s;
  s.image = random_image(rng);
  s.tokens = {1, 7, 8, 9, 2};
  s.prior_target = Field<float>::Zero(3, cfg.head_h() * cfg.head_w());
  TrainConfig tc;
  tc.noise = false;
  Adam adam;
  const Vocab v;
  train_step(m, adam, {&s}, 0.0, tc, v, rng);
  for (const auto& [name, p] : ref.params().all()) EXPECT_EQ(m.params().get(name).value, p.value) << name;
  train_step(m, adam, {&s}, 1e-2, tc, v, rng);
  bool moved = false;
  for (const auto& [name, p] : ref.params().all()) moved = moved || m.params().get(name).value != p.value;
  EXPECT_TRUE(moved);
}

TEST(Train, DeterministicForFixedSeed) {
  std::mt19937_64 rng(14);
  const ModelConfig cfg = small_config();
  std::vector<TrainSample> samples(3);
  for (auto& s : samples) {
    s.image = random_image(rng);
    s.tokens = {1, 7, 8, 9, 10, 2};
    s.prior_target = Field<float>::Zero(3, cfg.head_h() * cfg.head_w());
  }
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 2;
  tc.seed = 5;
  tc.eval_every = 0;
  const Vocab v;
  MicroModel a(cfg, 1), b(cfg, 1);
  const TrainReport ra = train(a, samples, tc, v);
  const TrainReport rb = train(b, samples, tc, v);
  ASSERT_EQ(ra.curve.size(), rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) EXPECT_EQ(ra.curve[i].metrics.total, rb.curve[i].metrics.total);
  for (const auto& [name, p] : a.params().all()) EXPECT_EQ(p.value, b.params().get(name).value) << name;
}

TEST(Train, LearningRateSchedule) {
  EXPECT_DOUBLE_EQ(exp_decay_lr(1e-3, 1e-5, 0, 100), 1e-3);
  EXPECT_NEAR(exp_decay_lr(1e-3, 1e-5, 99, 100), 1e-5, 1e-18);
  EXPECT_NEAR(exp_decay_lr(1e-3, 1e-5, 0, 1), 1e-3, 1e-18);
}

TEST(Train, AllHeadAccuracyIsTheWorstHead) {
  std::mt19937_64 rng(15);
  const ModelConfig cfg = small_config(3);
  const MicroModel m(cfg, 4);
  std::vector<TrainSample> samples(2);
  for (auto& s : samples) {
    s.image = random_image(rng);
    s.tokens = {1, 7, 8, 9, 10, 11, 2};
    s.prior_target = Field<float>::Zero(3, cfg.head_h() * cfg.head_w());
  }
  const Vocab v;
  TrainConfig tc;
  double worst = 1.0;
  for (int k = 1; k <= 3; ++k) {
    tc.accuracy_heads = k;
    const double acc = teacher_forced_accuracy(m, samples, v, tc, true);
    EXPECT_LE(acc, worst + 1e-15);
    worst = std::min(worst, acc);
  }
  tc.accuracy_heads = 0;
  EXPECT_EQ(teacher_forced_accuracy(m, samples, v, tc, true), worst);
}
