// SPDX-License-Identifier: Apache-2.0
//
// Micro image-to-sequence model:
//   strided conv stack (SiLU) -> (H/16 x W/8) grid -> linear to d -> 2-D RoPE
//   -> pre-LN transformer encoder layer(s) -> memory
//   conv features -> structure head (3 x H/8 x W/8 logits)
//   token + position embedding -> decoder layers (causal self-attention,
//   key-biased cross-attention, GELU FFN) -> n linear next-token heads.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tableseq/image.hpp"
#include "tableseq/keybias.hpp"
#include "tableseq/nn/kernels.hpp"
#include "tableseq/nn/tape.hpp"

namespace tableseq::nn {

struct ModelConfig {
  int vocab_size = 0;
  int d = 64;
  int heads = 4;
  int enc_layers = 1;
  int dec_layers = 2;
  int ffn_mult = 4;
  int max_len = 384;
  int mtp_heads = 1;
  int image_h = 64;
  int image_w = 128;
  int c1 = 16;
  int c2 = 32;
  int c3 = 64;
  int head_channels = 32;
  double rope_base = 100.0;

  int grid_h() const { return image_h / 16; }
  int grid_w() const { return image_w / 8; }
  int head_h() const { return image_h / 8; }
  int head_w() const { return image_w / 8; }

  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

class ParamStore {
 public:
  Parameter<float>& add(const std::string& name, Field<float> value);
  Parameter<float>& get(const std::string& name);
  const Parameter<float>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::map<std::string, Parameter<float>>& all() { return params_; }
  const std::map<std::string, Parameter<float>>& all() const { return params_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::map<std::string, Parameter<float>> params_;
};

/// Key/value cache of one decoding session.
struct DecoderCache {
  std::vector<Field<float>> self_k;
  std::vector<Field<float>> self_v;
  std::vector<Field<float>> cross_k;
  std::vector<Field<float>> cross_v;
  std::optional<Vector<float>> bias;
  int length = 0;
};

/// Encoder outputs in plain (non-tape) form.
struct Encoded {
  Field<float> memory;       // T_k x d
  Maps3<float> structure;    // 3 logit maps, head_h x head_w
};

class MicroModel {
 public:
  MicroModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // --- training path (autodiff) ---
  struct EncodeVars {
    Var memory;     // T_k x d
    Var structure;  // 3 x (head_h * head_w)
  };
  EncodeVars encode(Tape<float>& t, const Plane& image);

  /// Teacher-forced decoder over `inputs`; returns one logits Var per head.
  std::vector<Var> decode(Tape<float>& t, Var memory, const std::vector<int>& inputs,
                          const std::optional<Vector<float>>& bias);

  // --- inference path (kernels + cache) ---
  Encoded encode(const Plane& image) const;
  DecoderCache start(const Encoded& enc, const std::optional<Vector<float>>& bias) const;
  /// Appends `tokens` to the cache and returns their final hidden states.
  Field<float> step(DecoderCache& cache, const std::vector<int>& tokens) const;
  /// Logits of head `k` (0-based) for hidden rows.
  Field<float> head_logits(int k, const Field<float>& hidden) const;

  /// Structure logits as three maps from a tape value (3 x head_h*head_w).
  Maps3<float> structure_maps(const Field<float>& flat) const;

  void save(const std::string& path) const;
  static MicroModel load(const std::string& path);

 private:
  Var attn_block(Tape<float>& t, const std::string& prefix, Var x_q, Var x_kv, bool causal,
                 const std::optional<Vector<float>>& bias);
  Var ffn_block(Tape<float>& t, const std::string& prefix, Var x);
  Var ln(Tape<float>& t, const std::string& prefix, Var x);
  Var lin(Tape<float>& t, const std::string& prefix, Var x);

  Field<float> ln_fwd(const std::string& prefix, const Field<float>& x) const;
  Field<float> lin_fwd(const std::string& prefix, const Field<float>& x) const;
  Field<float> ffn_fwd(const std::string& prefix, const Field<float>& x) const;

  ModelConfig config_;
  ParamStore params_;
  std::shared_ptr<const kernels::RopeTable<float>> rope_;
  kernels::ConvGeom g1_, g2_, g3_, gh1_, gh2_;
};

/// Pads (bottom/right, with `fill`) or crops an image plane to (h, w).
Plane fit_plane(const Plane& image, int h, int w, float fill);

}  // namespace tableseq::nn
