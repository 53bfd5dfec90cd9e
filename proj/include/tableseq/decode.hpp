// SPDX-License-Identifier: Apache-2.0
//
// Greedy and blockwise multi-token decoding over the micro model.
#pragma once

#include <iosfwd>
#include <vector>

#include "tableseq/keybias.hpp"
#include "tableseq/nn/model.hpp"

namespace tableseq {

struct DecodeBudget {
  int max_tokens = 512;
  int block_n = 1;
  int stop_token = 2;
};

struct DecodeTrace {
  /// Emitted tokens, without BOS; includes the stop token when reached.
  std::vector<int> tokens;
  int outer_steps = 0;
  int forward_passes = 0;
  double wall_seconds = 0.0;
};

struct DecodeOptions {
  int bos = 1;
  bool use_bias = true;
  BiasConfig bias;
};

/// One argmax token per forward pass.
DecodeTrace greedy_decode(const nn::MicroModel& model, const Plane& image, const DecodeBudget& budget,
                          const DecodeOptions& options = {});

/// Each outer step runs one forward pass and emits up to n tokens from the
/// n heads, all reading the last hidden state; a stop token truncates the block.
DecodeTrace mtp_decode(const nn::MicroModel& model, const Plane& image, const DecodeBudget& budget,
                       const DecodeOptions& options = {});

struct BenchRow {
  int block_n = 1;
  int images = 0;
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  double mean_steps = 0.0;
  double mean_tokens = 0.0;
  double speedup = 0.0;  // relative to the first row
};

/// Runs mtp_decode for every block size over all images (single thread).
std::vector<BenchRow> bench_decode(const nn::MicroModel& model, const std::vector<Plane>& images,
                                   const std::vector<int>& block_sizes, const DecodeBudget& budget,
                                   const DecodeOptions& options = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace tableseq
