// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops on a Tape. Each op computes its value with the shared
// kernels and records a pullback with a hand-written gradient.
#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "tableseq/nn/kernels.hpp"
#include "tableseq/nn/tape.hpp"

namespace tableseq::nn {

template <typename S>
using Mat = Field<S>;

template <typename S>
Var matmul(Tape<S>& t, Var a, Var b) {
  Mat<S> y = t.value(a) * t.value(b);
  return t.push(std::move(y), t.any_needs(a, b), [a, b](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

/// x (T x in) * w (in x out) + b (1 x out).
template <typename S>
Var linear(Tape<S>& t, Var x, Var w, Var b) {
  Mat<S> y = kernels::linear(t.value(x), t.value(w), t.value(b));
  return t.push(std::move(y), t.any_needs(x, w, b), [x, w, b](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(x)) t.accumulate(x, g * t.value(w).transpose());
    if (t.needs_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
    if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols()) {
    throw Error(ErrorCode::kShapeMismatch, "add operands differ in shape");
  }
  Mat<S> y = t.value(a) + t.value(b);
  return t.push(std::move(y), t.any_needs(a, b), [a, b](Tape<S>& t, const Mat<S>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename S>
Var scale(Tape<S>& t, Var a, S s) {
  Mat<S> y = t.value(a) * s;
  return t.push(std::move(y), t.needs_grad(a), [a, s](Tape<S>& t, const Mat<S>& g) { t.accumulate(a, g * s); });
}

template <typename S>
Var transpose(Tape<S>& t, Var a) {
  Mat<S> y = t.value(a).transpose();
  return t.push(std::move(y), t.needs_grad(a), [a](Tape<S>& t, const Mat<S>& g) { t.accumulate(a, g.transpose()); });
}

template <typename S>
Var silu(Tape<S>& t, Var a) {
  Mat<S> y = t.value(a).unaryExpr([](S v) { return kernels::silu(v); });
  return t.push(std::move(y), t.needs_grad(a), [a](Tape<S>& t, const Mat<S>& g) {
    t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr([](S v) { return kernels::silu_grad(v); })));
  });
}

template <typename S>
Var gelu(Tape<S>& t, Var a) {
  Mat<S> y = kernels::gelu(t.value(a));
  return t.push(std::move(y), t.needs_grad(a), [a](Tape<S>& t, const Mat<S>& g) {
    t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr([](S v) { return kernels::gelu_grad(v); })));
  });
}

template <typename S>
Var layer_norm(Tape<S>& t, Var x, Var gamma, Var beta) {
  auto xhat = std::make_shared<Mat<S>>();
  auto inv_std = std::make_shared<Vector<S>>();
  Mat<S> y = kernels::layer_norm(t.value(x), t.value(gamma), t.value(beta), xhat.get(), inv_std.get());
  return t.push(std::move(y), t.any_needs(x, gamma, beta), [x, gamma, beta, xhat, inv_std](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(*xhat).colwise().sum());
    if (t.needs_grad(beta)) t.accumulate(beta, g.colwise().sum());
    if (!t.needs_grad(x)) return;
    const Mat<S> dxhat = (g.array().rowwise() * t.value(gamma).row(0).array()).matrix();
    const S n = static_cast<S>(g.cols());
    Mat<S> dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const S m1 = dxhat.row(r).sum() / n;
      const S m2 = dxhat.row(r).dot(xhat->row(r)) / n;
      dx.row(r) = ((dxhat.row(r).array() - m1 - xhat->row(r).array() * m2) * (*inv_std)(r)).matrix();
    }
    t.accumulate(x, dx);
  });
}

/// Multi-head scaled dot-product attention over projected Q, K, V with an
/// optional additive mask and an optional per-key bias. The bias is a plain
/// constant: no gradient is ever produced for it.
template <typename S>
Var attention(Tape<S>& t, Var q, Var k, Var v, int heads, bool causal,
              std::optional<Mat<S>> mask = std::nullopt, std::optional<Vector<S>> bias = std::nullopt) {
  kernels::AttnOptions<S> opt;
  opt.heads = heads;
  opt.causal = causal;
  auto mask_p = mask ? std::make_shared<Mat<S>>(std::move(*mask)) : nullptr;
  auto bias_p = bias ? std::make_shared<Vector<S>>(std::move(*bias)) : nullptr;
  opt.mask = mask_p.get();
  opt.bias = bias_p.get();
  auto probs = std::make_shared<std::vector<Mat<S>>>();
  Mat<S> y = kernels::attention(t.value(q), t.value(k), t.value(v), opt, probs.get());
  return t.push(std::move(y), t.any_needs(q, k, v), [q, k, v, heads, probs](Tape<S>& t, const Mat<S>& g) {
    const Mat<S>& qv = t.value(q);
    const Mat<S>& kv = t.value(k);
    const Mat<S>& vv = t.value(v);
    const auto d = qv.cols();
    const auto dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> dq = Mat<S>::Zero(qv.rows(), d);
    Mat<S> dk = Mat<S>::Zero(kv.rows(), d);
    Mat<S> dv = Mat<S>::Zero(vv.rows(), d);
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& p = (*probs)[static_cast<std::size_t>(h)];
      const auto go = g.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = p.transpose() * go;
      const Mat<S> dp = go * vv.middleCols(h * dh, dh).transpose();
      const Vector<S> row_dot = dp.cwiseProduct(p).rowwise().sum();
      const Mat<S> dz = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(h * dh, dh) = dz * kv.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = dz.transpose() * qv.middleCols(h * dh, dh);
    }
    t.accumulate(q, dq);
    t.accumulate(k, dk);
    t.accumulate(v, dv);
  });
}

template <typename S>
Var rope2d(Tape<S>& t, Var x, std::shared_ptr<const kernels::RopeTable<S>> table) {
  Mat<S> y = kernels::rope_apply(t.value(x), *table, S(1));
  return t.push(std::move(y), t.needs_grad(x), [x, table](Tape<S>& t, const Mat<S>& g) {
    t.accumulate(x, kernels::rope_apply(g, *table, S(-1)));
  });
}

/// x: (C_in x H*W); weight: (C_out x C_in*kh*kw); bias: (C_out x 1).
template <typename S>
Var conv2d(Tape<S>& t, Var x, Var weight, Var bias, const kernels::ConvGeom& geom) {
  auto cols = std::make_shared<Mat<S>>(kernels::im2col(t.value(x), geom));
  Mat<S> y = t.value(weight) * *cols;
  y.colwise() += t.value(bias).col(0);
  return t.push(std::move(y), t.any_needs(x, weight, bias), [x, weight, bias, geom, cols](Tape<S>& t, const Mat<S>& g) {
    if (t.needs_grad(weight)) t.accumulate(weight, g * cols->transpose());
    if (t.needs_grad(bias)) t.accumulate(bias, g.rowwise().sum());
    if (t.needs_grad(x)) t.accumulate(x, kernels::col2im<S>(t.value(weight).transpose() * g, t.value(x).rows(), geom));
  });
}

template <typename S>
Var upsample_rows(Tape<S>& t, Var x, int h, int w, int factor) {
  Mat<S> y = kernels::upsample_rows(t.value(x), h, w, factor);
  return t.push(std::move(y), t.needs_grad(x), [x, h, w, factor](Tape<S>& t, const Mat<S>& g) {
    Mat<S> dx = Mat<S>::Zero(g.rows(), static_cast<Eigen::Index>(h) * w);
    for (int r = 0; r < h; ++r) {
      for (int f = 0; f < factor; ++f) dx.middleCols(r * w, w) += g.middleCols((r * factor + f) * w, w);
    }
    t.accumulate(x, dx);
  });
}

/// Rows of `table` selected by ids.
template <typename S>
Var embedding(Tape<S>& t, Var table, std::vector<int> ids) {
  const Mat<S>& e = t.value(table);
  Mat<S> y(static_cast<Eigen::Index>(ids.size()), e.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= e.rows()) throw Error(ErrorCode::kShapeMismatch, "embedding id out of range");
    y.row(static_cast<Eigen::Index>(i)) = e.row(ids[i]);
  }
  return t.push(std::move(y), t.needs_grad(table), [table, ids = std::move(ids)](Tape<S>& t, const Mat<S>& g) {
    Mat<S>& dt = t.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) dt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

/// First `n` rows of x.
template <typename S>
Var take_rows(Tape<S>& t, Var x, Eigen::Index n) {
  Mat<S> y = t.value(x).topRows(n);
  return t.push(std::move(y), t.needs_grad(x), [x, n](Tape<S>& t, const Mat<S>& g) {
    t.grad(x).topRows(n) += g;
  });
}

/// Mean token cross-entropy of logits (T x V) against targets; positions whose
/// target equals `ignore` are masked. Zero when nothing is left.
template <typename S>
Var cross_entropy(Tape<S>& t, Var logits, std::vector<int> targets, int ignore) {
  const Mat<S>& z = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) throw Error(ErrorCode::kShapeMismatch, "CE target length");
  auto lse = std::make_shared<Vector<S>>(kernels::logsumexp_rows(z));
  S sum = 0;
  int count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == ignore) continue;
    if (targets[i] < 0 || targets[i] >= z.cols()) throw Error(ErrorCode::kShapeMismatch, "CE target out of range");
    sum += (*lse)(static_cast<Eigen::Index>(i)) - z(static_cast<Eigen::Index>(i), targets[i]);
    ++count;
  }
  Mat<S> y(1, 1);
  y(0, 0) = count ? sum / count : S(0);
  return t.push(std::move(y), t.needs_grad(logits),
                [logits, lse, count, ignore, targets = std::move(targets)](Tape<S>& t, const Mat<S>& g) {
                  if (!count) return;
                  const Mat<S>& z = t.value(logits);
                  Mat<S>& dz = t.grad(logits);
                  const S w = g(0, 0) / count;
                  for (std::size_t i = 0; i < targets.size(); ++i) {
                    if (targets[i] == ignore) continue;
                    const auto r = static_cast<Eigen::Index>(i);
                    dz.row(r) += ((z.row(r).array() - (*lse)(r)).exp() * w).matrix();
                    dz(r, targets[i]) -= w;
                  }
                });
}

/// BCE-with-logits averaged over all entries plus 0.5 * soft Dice loss with
/// smoothing `eps`: 0.5 * (1 - (2 sum(p t) + eps) / (sum p + sum t + eps)).
template <typename S>
Var bce_dice(Tape<S>& t, Var logits, const Mat<S>& target, S eps = S(1), S dice_weight = S(0.5)) {
  const Mat<S>& x = t.value(logits);
  if (x.rows() != target.rows() || x.cols() != target.cols()) throw Error(ErrorCode::kShapeMismatch, "prior target shape");
  const S n = static_cast<S>(x.size());
  auto p = std::make_shared<Mat<S>>(x.unaryExpr([](S v) {
    return v >= 0 ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  }));
  const S bce = (x.array().max(S(0)) - x.array() * target.array() + (S(1) + (-x.array().abs()).exp()).log()).sum() / n;
  const S inter = p->cwiseProduct(target).sum();
  const S denom = p->sum() + target.sum() + eps;
  const S dice = S(1) - (S(2) * inter + eps) / denom;
  Mat<S> y(1, 1);
  y(0, 0) = bce + dice_weight * dice;
  auto tgt = std::make_shared<Mat<S>>(target);
  return t.push(std::move(y), t.needs_grad(logits),
                [logits, p, tgt, n, inter, denom, eps, dice_weight](Tape<S>& t, const Mat<S>& g) {
                  const S numer = S(2) * inter + eps;
                  // d dice / d p = -(2 t denom - numer) / denom^2
                  const Mat<S> ddice_dp = ((tgt->array() * S(2) * denom - numer) / (-denom * denom)).matrix();
                  const Mat<S> dp_dx = (p->array() * (S(1) - p->array())).matrix();
                  Mat<S> dx = ((p->array() - tgt->array()) / n).matrix() +
                              dice_weight * ddice_dp.cwiseProduct(dp_dx);
                  t.accumulate(logits, dx * g(0, 0));
                });
}

/// Weighted multi-offset cross-entropy. `head_logits[i]` (0-based) at
/// position j predicts next_tokens[j + i]; positions past the end are masked.
/// Weights must sum to 1 within 1e-9.
template <typename S>
Var mtp_loss(Tape<S>& t, const std::vector<Var>& head_logits, const std::vector<int>& next_tokens,
             const std::vector<double>& weights, int ignore) {
  if (head_logits.empty() || head_logits.size() != weights.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one weight per MTP head is required");
  }
  double wsum = 0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorCode::kWeightsNotNormalized, "MTP weights sum to " + std::to_string(wsum));
  std::optional<Var> total;
  for (std::size_t i = 0; i < head_logits.size(); ++i) {
    std::vector<int> shifted(next_tokens.size(), ignore);
    for (std::size_t j = 0; j + i < next_tokens.size(); ++j) shifted[j] = next_tokens[j + i];
    Var ce = cross_entropy(t, head_logits[i], std::move(shifted), ignore);
    Var term = weights[i] == 1.0 ? ce : scale(t, ce, static_cast<S>(weights[i]));
    total = total ? add(t, *total, term) : term;
  }
  return *total;
}

}  // namespace tableseq::nn
