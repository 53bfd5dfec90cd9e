// SPDX-License-Identifier: Apache-2.0
#include "tableseq/nn/optim.hpp"

#include <cmath>

namespace tableseq::nn {

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const auto step = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(config_.eps);
  for (auto& [name, p] : params.all()) {
    auto [it, fresh] = state_.try_emplace(name);
    Moments& s = it->second;
    if (fresh) {
      s.m = Field<float>::Zero(p.value.rows(), p.value.cols());
      s.v = Field<float>::Zero(p.value.rows(), p.value.cols());
    }
    s.m = b1 * s.m + (1.0f - b1) * p.grad;
    s.v = b2 * s.v + (1.0f - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step * s.m.array() / ((s.v.array() * inv_bc2).sqrt() + eps);
  }
}

double exp_decay_lr(double start, double end, long step, long total) {
  if (total <= 1 || start <= 0 || end <= 0) return start;
  const double frac = static_cast<double>(std::min(step, total - 1)) / static_cast<double>(total - 1);
  return start * std::pow(end / start, frac);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0;
  for (const auto& [_, p] : params.all()) sq += p.grad.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto f = static_cast<float>(max_norm / norm);
    for (auto& [_, p] : params.all()) p.grad *= f;
  }
  return norm;
}

}  // namespace tableseq::nn
