// SPDX-License-Identifier: Apache-2.0
//
// Teacher-forced training of the micro model on total = L_mtp + L_prior.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tableseq/keybias.hpp"
#include "tableseq/nn/model.hpp"
#include "tableseq/nn/optim.hpp"
#include "tableseq/struct_targets.hpp"
#include "tableseq/tokenize.hpp"

namespace tableseq::nn {

struct TrainSample {
  Plane image;                // model input size, normalized
  std::vector<int> tokens;    // BOS ... EOS
  Field<float> prior_target;  // 3 x (head_h * head_w)
};

/// Pads/crops the image and full-resolution targets to the model input and
/// area-downsamples the targets to the structure-head grid.
TrainSample make_sample(const Plane& normalized_image, const TokenSeq& tokens, const StructMaps& targets,
                        const ModelConfig& config, float pad_value);

struct TrainConfig {
  int epochs = 100;
  int batch = 8;
  double lr_start = 5e-5;
  double lr_end = 5e-7;
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  bool noise = true;
  NoiseConfig noise_config;
  /// Empty means uniform over the model's heads.
  std::vector<double> mtp_weights;
  bool bias_in_training = true;
  BiasConfig bias;
  /// Stop after this many seconds (0 = no limit).
  double time_budget_s = 0.0;
  /// Stop once teacher-forced accuracy on non-coordinate tokens reaches this (0 = off).
  double target_accuracy = 0.0;
  int eval_every = 5;
  /// Heads scored by the accuracy check; the minimum over them is used (0 = all heads).
  int accuracy_heads = 1;
  /// Curriculum: per-sample flags marking synthetic data (empty = no
  /// curriculum). Each epoch keeps every real sample and a random subset of
  /// synthetic ones sized so they make up a fraction annealed linearly from
  /// start to end.
  std::vector<bool> synthetic;
  double synth_fraction_start = 1.0;
  double synth_fraction_end = 1.0;
};

/// Sample indices for one epoch under the curriculum (unshuffled if no
/// curriculum is configured).
std::vector<std::size_t> epoch_indices(std::size_t count, const TrainConfig& config, int epoch,
                                       std::mt19937_64& rng);

struct StepMetrics {
  double l_seq = 0.0;    // head-1 cross-entropy
  double l_mtp = 0.0;    // weighted over heads (equals l_seq when n = 1)
  double l_prior = 0.0;
  double total = 0.0;    // l_mtp + l_prior
};

struct CurveRow {
  long step = 0;
  double lr = 0.0;
  StepMetrics metrics;
};

struct TrainReport {
  std::vector<CurveRow> curve;
  long steps = 0;
  int epochs = 0;
  double seconds = 0.0;
  double accuracy = 0.0;
  std::string stop_reason;
};

/// Bias vector for one sample's structure logits, or nullopt when disabled.
std::optional<Vector<float>> sample_bias(const MicroModel& model, const Maps3<float>& structure,
                                         const BiasConfig& config, bool enabled);

/// Forward + backward of one sample; gradients accumulate scaled by `grad_scale`.
StepMetrics accumulate_sample(MicroModel& model, const TrainSample& sample, const TrainConfig& config,
                              const Vocab& vocab, std::mt19937_64& rng, float grad_scale);

/// One Adam step over a batch. Throws NonFiniteLoss on NaN/Inf.
StepMetrics train_step(MicroModel& model, Adam& adam, const std::vector<const TrainSample*>& batch, double lr,
                       const TrainConfig& config, const Vocab& vocab, std::mt19937_64& rng);

/// Fraction of correctly predicted targets under teacher forcing, the
/// minimum over the heads selected by `config.accuracy_heads` (head k at
/// position j predicts token j + k + 1); coordinate targets are skipped when
/// `skip_coords`.
double teacher_forced_accuracy(const MicroModel& model, const std::vector<TrainSample>& samples,
                               const Vocab& vocab, const TrainConfig& config, bool skip_coords);

using ProgressFn = std::function<void(const CurveRow&, int epoch)>;

TrainReport train(MicroModel& model, const std::vector<TrainSample>& samples, const TrainConfig& config,
                  const Vocab& vocab, const ProgressFn& progress = {});

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve);

}  // namespace tableseq::nn
