// SPDX-License-Identifier: Apache-2.0
#include "tableseq/nn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tableseq/nn/ops.hpp"

namespace tableseq::nn {

TrainSample make_sample(const Plane& image, const TokenSeq& tokens, const StructMaps& targets,
                        const ModelConfig& config, float pad_value) {
  TrainSample s;
  s.image = fit_plane(image, config.image_h, config.image_w, pad_value);
  s.tokens = tokens.ids;
  if (static_cast<int>(s.tokens.size()) > config.max_len + 1) {
    throw Error(ErrorCode::kShapeMismatch, "token sequence longer than model.max_len");
  }
  s.prior_target.resize(3, config.head_h() * config.head_w());
  for (int k = 0; k < 3; ++k) {
    const Field<double> full = fit_plane(targets.channel(k), config.image_h, config.image_w, 0.0f).cast<double>();
    const Field<double> small = area_resample(full, config.head_h(), config.head_w());
    s.prior_target.row(k) = Eigen::Map<const Eigen::RowVectorXd>(small.data(), small.size()).cast<float>();
  }
  s.prior_target = s.prior_target.cwiseMax(0.0f).cwiseMin(1.0f);
  return s;
}

std::optional<Vector<float>> sample_bias(const MicroModel& model, const Maps3<float>& structure,
                                         const BiasConfig& config, bool enabled) {
  if (!enabled) return std::nullopt;
  return compute_bias(structure, config, model.config().grid_h(), model.config().grid_w());
}

namespace {

std::vector<double> head_weights(const TrainConfig& config, int heads) {
  if (!config.mtp_weights.empty()) {
    if (static_cast<int>(config.mtp_weights.size()) != heads) {
      throw Error(ErrorCode::kConfigInvalid, "train.mtp_weights needs one weight per head");
    }
    return config.mtp_weights;
  }
  return std::vector<double>(static_cast<std::size_t>(heads), 1.0 / heads);
}

}  // namespace

StepMetrics accumulate_sample(MicroModel& model, const TrainSample& sample, const TrainConfig& config,
                              const Vocab& vocab, std::mt19937_64& rng, float grad_scale) {
  if (sample.tokens.size() < 2) throw Error(ErrorCode::kShapeMismatch, "training sequence needs at least 2 tokens");
  std::vector<int> inputs(sample.tokens.begin(), sample.tokens.end() - 1);
  const std::vector<int> next(sample.tokens.begin() + 1, sample.tokens.end());
  if (config.noise) {
    inputs = inject_noise(TokenSeq::from_ids(inputs, vocab), vocab, config.noise_config, rng).ids;
  }
  Tape<float> t;
  const auto enc = model.encode(t, sample.image);
  const auto bias = sample_bias(model, model.structure_maps(t.value(enc.structure)), config.bias,
                                config.bias_in_training);
  const auto heads = model.decode(t, enc.memory, inputs, bias);
  const auto weights = head_weights(config, model.config().mtp_heads);
  const Var l_mtp = mtp_loss(t, heads, next, weights, vocab.pad());
  const Var l_prior = bce_dice(t, enc.structure, sample.prior_target);
  const Var total = add(t, l_mtp, l_prior);

  StepMetrics m;
  m.l_mtp = t.value(l_mtp)(0, 0);
  m.l_prior = t.value(l_prior)(0, 0);
  m.total = t.value(total)(0, 0);
  if (heads.size() == 1) {
    m.l_seq = m.l_mtp;
  } else {
    Tape<float> probe;
    const Var z = probe.constant(t.value(heads[0]));
    m.l_seq = probe.value(cross_entropy(probe, z, next, vocab.pad()))(0, 0);
  }
  if (!std::isfinite(m.total)) {
    std::ostringstream os;
    os << "non-finite loss: L_mtp=" << m.l_mtp << " L_prior=" << m.l_prior << " tokens=" << sample.tokens.size();
    throw Error(ErrorCode::kNonFiniteLoss, os.str());
  }
  const Var scaled = grad_scale == 1.0f ? total : scale(t, total, grad_scale);
  t.backward(scaled);
  return m;
}

StepMetrics train_step(MicroModel& model, Adam& adam, const std::vector<const TrainSample*>& batch, double lr,
                       const TrainConfig& config, const Vocab& vocab, std::mt19937_64& rng) {
  if (batch.empty()) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  model.params().zero_grad();
  StepMetrics sum;
  const float gs = 1.0f / static_cast<float>(batch.size());
  for (const TrainSample* s : batch) {
    const StepMetrics m = accumulate_sample(model, *s, config, vocab, rng, gs);
    sum.l_seq += m.l_seq;
    sum.l_mtp += m.l_mtp;
    sum.l_prior += m.l_prior;
    sum.total += m.total;
  }
  const double n = static_cast<double>(batch.size());
  sum.l_seq /= n;
  sum.l_mtp /= n;
  sum.l_prior /= n;
  sum.total /= n;
  if (config.grad_clip > 0) clip_grad_norm(model.params(), config.grad_clip);
  adam.step(model.params(), lr);
  return sum;
}

double teacher_forced_accuracy(const MicroModel& model, const std::vector<TrainSample>& samples,
                               const Vocab& vocab, const TrainConfig& config, bool skip_coords) {
  const int heads = config.accuracy_heads <= 0 ? model.config().mtp_heads
                                               : std::min(config.accuracy_heads, model.config().mtp_heads);
  std::vector<long> hit(static_cast<std::size_t>(heads), 0);
  std::vector<long> total(static_cast<std::size_t>(heads), 0);
  for (const auto& s : samples) {
    const Encoded enc = model.encode(s.image);
    DecoderCache cache = model.start(enc, sample_bias(model, enc.structure, config.bias, config.bias_in_training));
    const std::vector<int> inputs(s.tokens.begin(), s.tokens.end() - 1);
    const Field<float> hidden = model.step(cache, inputs);
    for (int k = 0; k < heads; ++k) {
      const Field<float> logits = model.head_logits(k, hidden);
      for (Eigen::Index i = 0; i + k < logits.rows(); ++i) {
        const int target = s.tokens[static_cast<std::size_t>(i + k) + 1];
        const auto cls = vocab.token_class(target);
        if (skip_coords && (cls == TokenClass::kCoordX || cls == TokenClass::kCoordY)) continue;
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        hit[static_cast<std::size_t>(k)] += arg == target;
        ++total[static_cast<std::size_t>(k)];
      }
    }
  }
  double worst = 1.0;
  for (int k = 0; k < heads; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (total[ku]) worst = std::min(worst, static_cast<double>(hit[ku]) / total[ku]);
  }
  return worst;
}

std::vector<std::size_t> epoch_indices(std::size_t count, const TrainConfig& config, int epoch,
                                       std::mt19937_64& rng) {
  std::vector<std::size_t> all(count);
  std::iota(all.begin(), all.end(), 0);
  if (config.synthetic.empty()) return all;
  if (config.synthetic.size() != count) throw Error(ErrorCode::kConfigInvalid, "curriculum flags do not match samples");
  std::vector<std::size_t> real;
  std::vector<std::size_t> synth;
  for (std::size_t i = 0; i < count; ++i) (config.synthetic[i] ? synth : real).push_back(i);
  if (real.empty() || synth.empty()) return all;
  const double t = config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 1.0;
  const double f = std::clamp(config.synth_fraction_start + t * (config.synth_fraction_end - config.synth_fraction_start),
                              0.0, 1.0);
  std::size_t keep = synth.size();
  if (f < 1.0) {
    keep = std::min(synth.size(), static_cast<std::size_t>(std::lround(f / (1.0 - f) * static_cast<double>(real.size()))));
  }
  std::shuffle(synth.begin(), synth.end(), rng);
  real.insert(real.end(), synth.begin(), synth.begin() + static_cast<std::ptrdiff_t>(keep));
  return real;
}

TrainReport train(MicroModel& model, const std::vector<TrainSample>& samples, const TrainConfig& config,
                  const Vocab& vocab, const ProgressFn& progress) {
  if (samples.empty()) throw Error(ErrorCode::kUnusable, "no training samples");
  if (config.batch < 1 || config.epochs < 0) throw Error(ErrorCode::kConfigInvalid, "train.batch >= 1 required");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  std::mt19937_64 rng(config.seed);
  Adam adam;
  TrainReport report;
  const long total_steps = (static_cast<long>(samples.size()) + config.batch - 1) / config.batch * config.epochs;
  report.stop_reason = "epochs";
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = epoch_indices(samples.size(), config, epoch, rng);
    std::shuffle(order.begin(), order.end(), rng);
    const long per_epoch = (static_cast<long>(order.size()) + config.batch - 1) / config.batch;
    bool out_of_time = false;
    for (long b = 0; b < per_epoch; ++b) {
      std::vector<const TrainSample*> batch;
      for (long i = b * config.batch; i < std::min<long>((b + 1) * config.batch, static_cast<long>(order.size())); ++i) {
        batch.push_back(&samples[order[static_cast<std::size_t>(i)]]);
      }
      const double lr = exp_decay_lr(config.lr_start, config.lr_end, report.steps, total_steps);
      CurveRow row{report.steps, lr, train_step(model, adam, batch, lr, config, vocab, rng)};
      ++report.steps;
      report.curve.push_back(row);
      if (progress) progress(row, epoch);
      if (config.time_budget_s > 0 && elapsed() > config.time_budget_s) {
        out_of_time = true;
        break;
      }
    }
    report.epochs = epoch + 1;
    if (out_of_time) {
      report.stop_reason = "time budget";
      break;
    }
    const bool last = epoch + 1 == config.epochs;
    if (config.target_accuracy > 0 && config.eval_every > 0 && ((epoch + 1) % config.eval_every == 0 || last)) {
      report.accuracy = teacher_forced_accuracy(model, samples, vocab, config, true);
      if (report.accuracy >= config.target_accuracy) {
        report.stop_reason = "target accuracy";
        break;
      }
    }
  }
  report.seconds = elapsed();
  if (config.target_accuracy <= 0) report.accuracy = teacher_forced_accuracy(model, samples, vocab, config, true);
  return report;
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << "step,L_seq,L_prior,total\n";
  for (const auto& r : curve) {
    out << r.step << ',' << r.metrics.l_seq << ',' << r.metrics.l_prior << ',' << r.metrics.total << '\n';
  }
}

}  // namespace tableseq::nn
