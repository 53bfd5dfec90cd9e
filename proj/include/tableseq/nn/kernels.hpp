// SPDX-License-Identifier: Apache-2.0
//
// Forward math shared by the autodiff ops and the cached inference path.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/SpecialFunctions>

#include "tableseq/error.hpp"
#include "tableseq/field.hpp"

namespace tableseq::nn::kernels {

template <typename S>
using Mat = Field<S>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

inline constexpr double kLayerNormEps = 1e-5;

inline constexpr Eigen::Index kFewRows = 16;

/// y[0:R, j0:j0+C] = x[0:R, :] * w[:, j0:j0+C] with fixed-size accumulators.
template <typename S, int R, int C>
void few_rows_tile(const S* x, Eigen::Index ldx, const S* w, Eigen::Index n, Eigen::Index k, S* y,
                   Eigen::Index j0) {
  S acc[R][C] = {};
  for (Eigen::Index i = 0; i < k; ++i) {
    const S* wr = w + i * n + j0;
    for (int r = 0; r < R; ++r) {
      const S a = x[r * ldx + i];
      for (int c = 0; c < C; ++c) acc[r][c] += a * wr[c];
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) y[r * n + j0 + c] = acc[r][c];
  }
}

template <typename S, int R>
void few_rows_group(const S* x, Eigen::Index ldx, const Mat<S>& w, S* y) {
  constexpr int kTile = 64;
  const Eigen::Index n = w.cols();
  const Eigen::Index k = w.rows();
  Eigen::Index j0 = 0;
  for (; j0 + kTile <= n; j0 += kTile) few_rows_tile<S, R, kTile>(x, ldx, w.data(), n, k, y, j0);
  for (; j0 + 8 <= n; j0 += 8) few_rows_tile<S, R, 8>(x, ldx, w.data(), n, k, y, j0);
  for (; j0 < n; ++j0) few_rows_tile<S, R, 1>(x, ldx, w.data(), n, k, y, j0);
}

/// x * w for a handful of rows. Register-blocked over groups of up to four
/// rows so each weight row is read once per group, which is what makes a
/// multi-token step cheaper than several single-token ones.
template <typename S>
Mat<S> matmul_few_rows(const Mat<S>& x, const Mat<S>& w) {
  const Eigen::Index m = x.rows();
  const Eigen::Index k = x.cols();
  Mat<S> y(m, w.cols());
  Eigen::Index r = 0;
  for (; r + 4 <= m; r += 4) few_rows_group<S, 4>(x.data() + r * k, k, w, y.data() + r * w.cols());
  if (m - r == 3) few_rows_group<S, 3>(x.data() + r * k, k, w, y.data() + r * w.cols());
  if (m - r == 2) few_rows_group<S, 2>(x.data() + r * k, k, w, y.data() + r * w.cols());
  if (m - r == 1) few_rows_group<S, 1>(x.data() + r * k, k, w, y.data() + r * w.cols());
  return y;
}

template <typename S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  Mat<S> y = x.rows() > 1 && x.rows() <= kFewRows ? matmul_few_rows(x, w) : Mat<S>(x * w);
  y.rowwise() += b.row(0);
  return y;
}

template <typename S>
S silu(S x) {
  return x / (S(1) + std::exp(-x));
}

template <typename S>
S silu_grad(S x) {
  const S s = S(1) / (S(1) + std::exp(-x));
  return s * (S(1) + x * (S(1) - s));
}

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
}

template <typename S>
Mat<S> gelu(const Mat<S>& x) {
  return (S(0.5) * x.array() * (S(1) + (x.array() / std::numbers::sqrt2_v<S>).erf())).matrix();
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
  const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * std::numbers::pi_v<S>);
  return cdf + x * pdf;
}

/// Row-wise layer norm. Writes normalized rows to `xhat` and 1/sigma per row
/// to `inv_std` when given.
template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, Mat<S>* xhat_out = nullptr,
                  Vector<S>* inv_std_out = nullptr) {
  const auto n = x.cols();
  Mat<S> xhat(x.rows(), n);
  Vector<S> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).mean();
    const S var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat<S> y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
  y.rowwise() += beta.row(0);
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return y;
}

template <typename S>
void softmax_rows(Mat<S>& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
}

template <typename S>
struct AttnOptions {
  int heads = 1;
  /// Query i may attend to keys j <= i + query_offset.
  bool causal = false;
  int query_offset = 0;
  /// Additive mask (T_q x T_k), optional.
  const Mat<S>* mask = nullptr;
  /// Per-key additive bias (T_k), optional; shared across heads and queries.
  const Vector<S>* bias = nullptr;
};

/// Attention for a few query rows: matrix-vector products per row and head
/// over the visible keys only, avoiding GEMM dispatch on tiny operands.
template <typename S>
Mat<S> attention_few_rows(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, const AttnOptions<S>& opt) {
  const auto tq = q.rows();
  const auto tk = k.rows();
  const auto d = q.cols();
  const auto dh = d / opt.heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  Mat<S> out(tq, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> z;
  for (Eigen::Index i = 0; i < tq; ++i) {
    const Eigen::Index visible = opt.causal ? std::min<Eigen::Index>(tk, i + opt.query_offset + 1) : tk;
    for (int h = 0; h < opt.heads; ++h) {
      z.noalias() = k.topRows(visible).middleCols(h * dh, dh) * q.row(i).segment(h * dh, dh).transpose();
      z *= scale;
      if (opt.mask) z += opt.mask->row(i).head(visible).transpose();
      if (opt.bias) z += opt.bias->head(visible);
      z = (z.array() - z.maxCoeff()).exp();
      z /= z.sum();
      out.row(i).segment(h * dh, dh).noalias() = z.transpose() * v.topRows(visible).middleCols(h * dh, dh);
    }
  }
  return out;
}

/// softmax(Q_h K_h^T / sqrt(d_h) + M + 1 b^T) V_h per head, heads concatenated.
/// `probs`, if given, receives one (T_q x T_k) weight matrix per head.
template <typename S>
Mat<S> attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, const AttnOptions<S>& opt,
                 std::vector<Mat<S>>* probs = nullptr) {
  const auto tq = q.rows();
  const auto tk = k.rows();
  const auto d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != tk || opt.heads <= 0 || d % opt.heads != 0) {
    throw Error(ErrorCode::kShapeMismatch, "attention operand shapes do not conform");
  }
  if (opt.mask && (opt.mask->rows() != tq || opt.mask->cols() != tk)) {
    throw Error(ErrorCode::kShapeMismatch, "attention mask shape");
  }
  if (opt.bias && opt.bias->size() != tk) throw Error(ErrorCode::kShapeMismatch, "key bias length must equal T_k");
  if (!probs && tq <= kFewRows) return attention_few_rows(q, k, v, opt);
  const auto dh = d / opt.heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  Mat<S> out(tq, d);
  if (probs) probs->assign(static_cast<std::size_t>(opt.heads), Mat<S>());
  for (int h = 0; h < opt.heads; ++h) {
    Mat<S> z = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    if (opt.mask) z += *opt.mask;
    if (opt.bias) z.rowwise() += opt.bias->transpose();
    if (opt.causal) {
      for (Eigen::Index i = 0; i < tq; ++i) {
        const Eigen::Index first_hidden = i + opt.query_offset + 1;
        if (first_hidden < tk) z.row(i).tail(tk - first_hidden).setConstant(-std::numeric_limits<S>::infinity());
      }
    }
    softmax_rows(z);
    out.middleCols(h * dh, dh) = z * v.middleCols(h * dh, dh);
    if (probs) (*probs)[static_cast<std::size_t>(h)] = std::move(z);
  }
  return out;
}

/// Rotation tables for 2-D RoPE over a (grid_h x grid_w) raster of tokens.
/// Channels [0, d/2) rotate by the row index, [d/2, d) by the column index;
/// pair (2i, 2i+1) inside each half uses frequency base^(-2i/(d/2)).
template <typename S>
struct RopeTable {
  Mat<S> cos;  // T x d/2 (one entry per rotated pair)
  Mat<S> sin;

  RopeTable(int grid_h, int grid_w, int d, double base = 10000.0) {
    if (d % 4 != 0) throw Error(ErrorCode::kShapeMismatch, "2-D RoPE needs d divisible by 4");
    const int half = d / 2;
    const int pairs = half / 2;
    const int t = grid_h * grid_w;
    cos.resize(t, 2 * pairs);
    sin.resize(t, 2 * pairs);
    for (int y = 0; y < grid_h; ++y) {
      for (int x = 0; x < grid_w; ++x) {
        const int tok = y * grid_w + x;
        for (int i = 0; i < pairs; ++i) {
          const double freq = std::pow(base, -2.0 * i / half);
          cos(tok, i) = static_cast<S>(std::cos(y * freq));
          sin(tok, i) = static_cast<S>(std::sin(y * freq));
          cos(tok, pairs + i) = static_cast<S>(std::cos(x * freq));
          sin(tok, pairs + i) = static_cast<S>(std::sin(x * freq));
        }
      }
    }
  }
};

/// Applies the rotation (sign = +1) or its inverse (sign = -1).
template <typename S>
Mat<S> rope_apply(const Mat<S>& x, const RopeTable<S>& table, S sign) {
  if (x.rows() != table.cos.rows() || x.cols() != 2 * table.cos.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "RoPE table does not match features");
  }
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index p = 0; p < table.cos.cols(); ++p) {
      const S c = table.cos(t, p);
      const S s = sign * table.sin(t, p);
      const S a = x(t, 2 * p);
      const S b = x(t, 2 * p + 1);
      y(t, 2 * p) = a * c - b * s;
      y(t, 2 * p + 1) = a * s + b * c;
    }
  }
  return y;
}

struct ConvGeom {
  int in_h = 0;
  int in_w = 0;
  int kh = 3;
  int kw = 3;
  int sh = 1;
  int sw = 1;
  int ph = 0;
  int pw = 0;

  int out_h() const { return (in_h + 2 * ph - kh) / sh + 1; }
  int out_w() const { return (in_w + 2 * pw - kw) / sw + 1; }
};

/// (C x H*W) -> (C*kh*kw x Ho*Wo), zero padding.
template <typename S>
Mat<S> im2col(const Mat<S>& x, const ConvGeom& g) {
  const auto c_in = x.rows();
  const int ho = g.out_h();
  const int wo = g.out_w();
  Mat<S> cols = Mat<S>::Zero(c_in * g.kh * g.kw, ho * wo);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const Eigen::Index row = (c * g.kh + i) * g.kw + j;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.sh - g.ph + i;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.sw - g.pw + j;
            if (ix < 0 || ix >= g.in_w) continue;
            cols(row, oy * wo + ox) = x(c, iy * g.in_w + ix);
          }
        }
      }
    }
  }
  return cols;
}

template <typename S>
Mat<S> col2im(const Mat<S>& cols, Eigen::Index c_in, const ConvGeom& g) {
  const int ho = g.out_h();
  const int wo = g.out_w();
  Mat<S> x = Mat<S>::Zero(c_in, g.in_h * g.in_w);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const Eigen::Index row = (c * g.kh + i) * g.kw + j;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.sh - g.ph + i;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.sw - g.pw + j;
            if (ix < 0 || ix >= g.in_w) continue;
            x(c, iy * g.in_w + ix) += cols(row, oy * wo + ox);
          }
        }
      }
    }
  }
  return x;
}

/// weight: (C_out x C_in*kh*kw), bias: (C_out x 1).
template <typename S>
Mat<S> conv2d(const Mat<S>& x, const Mat<S>& weight, const Mat<S>& bias, const ConvGeom& g) {
  Mat<S> y = weight * im2col(x, g);
  y.colwise() += bias.col(0);
  return y;
}

/// Repeats every image row `factor` times: (C x H*W) -> (C x factor*H*W).
template <typename S>
Mat<S> upsample_rows(const Mat<S>& x, int h, int w, int factor) {
  Mat<S> y(x.rows(), static_cast<Eigen::Index>(h) * factor * w);
  for (int r = 0; r < h; ++r) {
    for (int f = 0; f < factor; ++f) y.middleCols((r * factor + f) * w, w) = x.middleCols(r * w, w);
  }
  return y;
}

/// log(sum(exp(row))) per row.
template <typename S>
Vector<S> logsumexp_rows(const Mat<S>& z) {
  Vector<S> out(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const S m = z.row(r).maxCoeff();
    out(r) = m + std::log((z.row(r).array() - m).exp().sum());
  }
  return out;
}

}  // namespace tableseq::nn::kernels
