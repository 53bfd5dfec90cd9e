// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace tableseq {

/// Discrete coordinate grid: one index step covers `unit` pixels.
struct QuantSpec {
  static constexpr int kMaxIndex = 999;
  int unit = 5;
};

/// index = min(round_half_up(coord / unit), 999). Throws NegativeCoord.
int quantize(double coord, const QuantSpec& spec);
int quantize(double coord, int unit);

/// Inverse grid mapping: index * unit.
int dequantize(int index, const QuantSpec& spec);

}  // namespace tableseq
