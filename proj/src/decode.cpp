// SPDX-License-Identifier: Apache-2.0
#include "tableseq/decode.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

namespace tableseq {

namespace {

using clock_type = std::chrono::steady_clock;

int argmax_row(const Field<float>& logits) {
  Eigen::Index arg = 0;
  logits.row(0).maxCoeff(&arg);
  return static_cast<int>(arg);
}

nn::DecoderCache open_session(const nn::MicroModel& model, const Plane& image, const DecodeOptions& options) {
  const nn::Encoded enc = model.encode(image);
  std::optional<Vector<float>> bias;
  if (options.use_bias) bias = compute_bias(enc.structure, options.bias, model.config().grid_h(), model.config().grid_w());
  return model.start(enc, bias);
}

void check_budget(const DecodeBudget& budget) {
  if (budget.max_tokens < 1 || budget.block_n < 1) throw Error(ErrorCode::kConfigInvalid, "decode budget must be >= 1");
}

}  // namespace

DecodeTrace greedy_decode(const nn::MicroModel& model, const Plane& image, const DecodeBudget& budget,
                          const DecodeOptions& options) {
  check_budget(budget);
  const auto t0 = clock_type::now();
  DecodeTrace trace;
  nn::DecoderCache cache = open_session(model, image, options);
  int next = options.bos;
  const int limit = std::min(budget.max_tokens, model.config().max_len);
  while (static_cast<int>(trace.tokens.size()) < limit) {
    const Field<float> hidden = model.step(cache, {next});
    ++trace.forward_passes;
    ++trace.outer_steps;
    next = argmax_row(model.head_logits(0, hidden));
    trace.tokens.push_back(next);
    if (next == budget.stop_token) break;
  }
  trace.wall_seconds = std::chrono::duration<double>(clock_type::now() - t0).count();
  return trace;
}

DecodeTrace mtp_decode(const nn::MicroModel& model, const Plane& image, const DecodeBudget& budget,
                       const DecodeOptions& options) {
  check_budget(budget);
  if (budget.block_n > model.config().mtp_heads) {
    throw Error(ErrorCode::kConfigInvalid, "block size exceeds the model's prediction heads");
  }
  const auto t0 = clock_type::now();
  DecodeTrace trace;
  nn::DecoderCache cache = open_session(model, image, options);
  std::vector<int> pending{options.bos};
  const int limit = std::min(budget.max_tokens, model.config().max_len);
  bool stopped = false;
  while (!stopped && static_cast<int>(trace.tokens.size()) < limit) {
    const Field<float> hidden = model.step(cache, pending);
    ++trace.forward_passes;
    ++trace.outer_steps;
    const Field<float> last = hidden.bottomRows(1);
    pending.clear();
    for (int k = 0; k < budget.block_n && static_cast<int>(trace.tokens.size()) < limit; ++k) {
      const int tok = argmax_row(model.head_logits(k, last));
      trace.tokens.push_back(tok);
      pending.push_back(tok);
      if (tok == budget.stop_token) {
        stopped = true;
        break;
      }
    }
  }
  trace.wall_seconds = std::chrono::duration<double>(clock_type::now() - t0).count();
  return trace;
}

std::vector<BenchRow> bench_decode(const nn::MicroModel& model, const std::vector<Plane>& images,
                                   const std::vector<int>& block_sizes, const DecodeBudget& budget,
                                   const DecodeOptions& options) {
  std::vector<BenchRow> rows;
  for (int n : block_sizes) {
    DecodeBudget b = budget;
    b.block_n = n;
    std::vector<double> secs;
    BenchRow row;
    row.block_n = n;
    row.images = static_cast<int>(images.size());
    for (const auto& img : images) {
      const DecodeTrace tr = mtp_decode(model, img, b, options);
      secs.push_back(tr.wall_seconds);
      row.mean_steps += tr.outer_steps;
      row.mean_tokens += static_cast<double>(tr.tokens.size());
    }
    if (!images.empty()) {
      const double k = static_cast<double>(images.size());
      row.mean_steps /= k;
      row.mean_tokens /= k;
      for (double s : secs) row.mean_seconds += s / k;
      std::sort(secs.begin(), secs.end());
      const std::size_t m = secs.size();
      row.median_seconds = m % 2 ? secs[m / 2] : 0.5 * (secs[m / 2 - 1] + secs[m / 2]);
    }
    rows.push_back(row);
  }
  for (auto& r : rows) r.speedup = r.mean_seconds > 0 && !rows.empty() ? rows.front().mean_seconds / r.mean_seconds : 0.0;
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "block_n,images,mean_seconds,median_seconds,mean_steps,mean_tokens,speedup\n";
  for (const auto& r : rows) {
    out << r.block_n << ',' << r.images << ',' << r.mean_seconds << ',' << r.median_seconds << ',' << r.mean_steps << ','
        << r.mean_tokens << ',' << r.speedup << '\n';
  }
}

}  // namespace tableseq
