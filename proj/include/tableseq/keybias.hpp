// SPDX-License-Identifier: Apache-2.0
//
// Per-key cross-attention bias from structure-head logits:
//   sigmoid -> bilinear resize to the encoder grid -> axis max profiles ->
//   B = alpha*R + beta*C + gamma*P_cor -> z-score -> lambda0 * conf -> clamp.
// Everything here runs outside the autodiff tape, so no gradient reaches the
// structure head through the bias.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "tableseq/error.hpp"
#include "tableseq/field.hpp"

namespace tableseq {

enum class ConfResolution { kEncoder, kHead };

struct BiasConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double lambda0 = 1.0;
  double clamp = 5.0;
  double eps_std = 1e-6;
  ConfResolution conf_at = ConfResolution::kEncoder;

  void check() const {
    if (!(clamp > 0) || !(eps_std > 0)) throw Error(ErrorCode::kConfigInvalid, "keybias clamp and eps_std must be > 0");
  }
};

template <typename S>
using Maps3 = std::array<Field<S>, 3>;

/// Bilinear resize with corner-aligned sampling.
template <typename S>
Field<S> resize_bilinear(const Field<S>& in, int out_h, int out_w) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  if (h == 0 || w == 0 || out_h <= 0 || out_w <= 0) throw Error(ErrorCode::kShapeMismatch, "empty resize");
  if (h == out_h && w == out_w) return in;
  auto coord = [](int o, int n_in, int n_out) -> S {
    return n_out > 1 ? static_cast<S>(o) * static_cast<S>(n_in - 1) / static_cast<S>(n_out - 1) : S(0);
  };
  Field<S> out(out_h, out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    const S fy = coord(oy, h, out_h);
    const int y0 = std::min(static_cast<int>(std::floor(fy)), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const S ty = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const S fx = coord(ox, w, out_w);
      const int x0 = std::min(static_cast<int>(std::floor(fx)), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const S tx = fx - x0;
      const S top = in(y0, x0) * (1 - tx) + in(y0, x1) * tx;
      const S bot = in(y1, x0) * (1 - tx) + in(y1, x1) * tx;
      out(oy, ox) = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

/// R(y,x) = max_x' P_r(y,x'), C(y,x) = max_y' P_c(y',x).
template <typename S>
std::array<Field<S>, 2> axis_profiles(const Field<S>& p_rows, const Field<S>& p_cols) {
  Field<S> r(p_rows.rows(), p_rows.cols());
  Field<S> c(p_cols.rows(), p_cols.cols());
  const Vector<S> rmax = p_rows.rowwise().maxCoeff();
  const Eigen::Matrix<S, 1, Eigen::Dynamic> cmax = p_cols.colwise().maxCoeff();
  r.colwise() = rmax;
  c.rowwise() = cmax;
  return {std::move(r), std::move(c)};
}

/// Binary entropy in bits; 0 at p = 0 and p = 1.
template <typename S>
S binary_entropy(S p) {
  if (p <= S(0) || p >= S(1)) return S(0);
  return -(p * std::log2(p) + (1 - p) * std::log2(1 - p));
}

/// 1 minus the mean binary entropy of the three probability maps, in [0,1].
template <typename S>
S entropy_confidence(const Field<S>& p_rows, const Field<S>& p_cols, const Field<S>& p_corners) {
  S sum = 0;
  for (const Field<S>* f : {&p_rows, &p_cols, &p_corners}) {
    sum += f->unaryExpr([](S p) { return binary_entropy(p); }).sum();
  }
  const S n = static_cast<S>(p_rows.size() + p_cols.size() + p_corners.size());
  return std::clamp(S(1) - sum / n, S(0), S(1));
}

/// Population z-score over the whole field; zero when std < eps.
template <typename S>
Field<S> zscore(const Field<S>& b, S eps) {
  const S mean = b.mean();
  const S var = (b.array() - mean).square().mean();
  const S sd = std::sqrt(var);
  if (!(sd >= eps)) return Field<S>::Zero(b.rows(), b.cols());
  return ((b.array() - mean) / sd).matrix();
}

template <typename S>
S sigmoid(S x) {
  return x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

/// Intermediate fields, exposed for inspection and the sensitivity tooling.
template <typename S>
struct BiasStages {
  Maps3<S> probs;    // encoder grid
  Field<S> rows;     // R
  Field<S> cols;     // C
  Field<S> combined; // B
  S conf = 0;
  Vector<S> bias;    // flattened row-major, length H_f * W_f
};

template <typename S>
BiasStages<S> compute_bias_stages(const Maps3<S>& logits, const BiasConfig& cfg, int grid_h, int grid_w) {
  cfg.check();
  for (const auto& f : logits) {
    if (!f.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "structure logits contain NaN/Inf");
    if (f.rows() != logits[0].rows() || f.cols() != logits[0].cols()) {
      throw Error(ErrorCode::kShapeMismatch, "structure channels differ in size");
    }
  }
  BiasStages<S> st;
  Maps3<S> head;
  for (int k = 0; k < 3; ++k) {
    head[k] = logits[k].unaryExpr([](S x) { return sigmoid(x); });
    st.probs[k] = resize_bilinear(head[k], grid_h, grid_w);
  }
  auto prof = axis_profiles(st.probs[0], st.probs[1]);
  st.rows = std::move(prof[0]);
  st.cols = std::move(prof[1]);
  st.combined = static_cast<S>(cfg.alpha) * st.rows + static_cast<S>(cfg.beta) * st.cols +
                static_cast<S>(cfg.gamma) * st.probs[2];
  const Maps3<S>& conf_src = cfg.conf_at == ConfResolution::kEncoder ? st.probs : head;
  st.conf = entropy_confidence(conf_src[0], conf_src[1], conf_src[2]);
  Field<S> scaled = static_cast<S>(cfg.lambda0) * st.conf * zscore(st.combined, static_cast<S>(cfg.eps_std)).array();
  const S c = static_cast<S>(cfg.clamp);
  scaled = scaled.cwiseMax(-c).cwiseMin(c);
  st.bias = Eigen::Map<const Vector<S>>(scaled.data(), scaled.size());
  return st;
}

/// Per-key bias of length grid_h * grid_w.
template <typename S>
Vector<S> compute_bias(const Maps3<S>& logits, const BiasConfig& cfg, int grid_h, int grid_w) {
  return compute_bias_stages(logits, cfg, grid_h, grid_w).bias;
}

}  // namespace tableseq
