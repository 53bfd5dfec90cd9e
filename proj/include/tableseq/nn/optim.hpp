// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "tableseq/nn/model.hpp"

namespace tableseq::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every parameter from its accumulated gradient.
  void step(ParamStore& params, double lr);
  long steps() const { return t_; }

 private:
  struct Moments {
    Field<float> m;
    Field<float> v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> state_;
  long t_ = 0;
};

/// Exponential decay from `start` at step 0 to `end` at step total-1.
double exp_decay_lr(double start, double end, long step, long total);

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace tableseq::nn
