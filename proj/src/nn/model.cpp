// SPDX-License-Identifier: Apache-2.0
#include "tableseq/nn/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tableseq/binio.hpp"
#include "tableseq/nn/ops.hpp"

namespace tableseq::nn {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigInvalid, m); };
  if (vocab_size <= 0) fail("model.vocab_size must be positive");
  if (d <= 0 || heads <= 0 || d % heads != 0) fail("model.d must be divisible by model.heads");
  if (d % 4 != 0) fail("model.d must be divisible by 4 for 2-D RoPE");
  if (enc_layers < 0 || dec_layers < 1 || ffn_mult < 1) fail("bad layer counts");
  if (mtp_heads < 1 || max_len < 2) fail("model.mtp_heads >= 1 and model.max_len >= 2 required");
  if (image_h % 16 != 0 || image_w % 8 != 0 || image_h <= 0 || image_w <= 0) {
    fail("model.image_h must be a multiple of 16 and model.image_w a multiple of 8");
  }
  if (c1 <= 0 || c2 <= 0 || c3 <= 0 || head_channels <= 0) fail("channel counts must be positive");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "vocab_size=" << vocab_size << "\nd=" << d << "\nheads=" << heads << "\nenc_layers=" << enc_layers
      << "\ndec_layers=" << dec_layers << "\nffn_mult=" << ffn_mult << "\nmax_len=" << max_len
      << "\nmtp_heads=" << mtp_heads << "\nimage_h=" << image_h << "\nimage_w=" << image_w << "\nc1=" << c1
      << "\nc2=" << c2 << "\nc3=" << c3 << "\nhead_channels=" << head_channels << "\nrope_base=" << rope_base
      << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq);
    const std::string v = line.substr(eq + 1);
    if (k == "rope_base") {
      c.rope_base = std::stod(v);
      continue;
    }
    const int iv = std::stoi(v);
    if (k == "vocab_size") c.vocab_size = iv;
    else if (k == "d") c.d = iv;
    else if (k == "heads") c.heads = iv;
    else if (k == "enc_layers") c.enc_layers = iv;
    else if (k == "dec_layers") c.dec_layers = iv;
    else if (k == "ffn_mult") c.ffn_mult = iv;
    else if (k == "max_len") c.max_len = iv;
    else if (k == "mtp_heads") c.mtp_heads = iv;
    else if (k == "image_h") c.image_h = iv;
    else if (k == "image_w") c.image_w = iv;
    else if (k == "c1") c.c1 = iv;
    else if (k == "c2") c.c2 = iv;
    else if (k == "c3") c.c3 = iv;
    else if (k == "head_channels") c.head_channels = iv;
    else throw Error(ErrorCode::kFormat, "unknown model key " + k);
  }
  return c;
}

Parameter<float>& ParamStore::add(const std::string& name, Field<float> value) {
  auto [it, fresh] = params_.try_emplace(name, name, std::move(value));
  if (!fresh) throw Error(ErrorCode::kConfigInvalid, "duplicate parameter " + name);
  return it->second;
}

Parameter<float>& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kFormat, "missing parameter " + name);
  return it->second;
}

const Parameter<float>& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::kFormat, "missing parameter " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

MicroModel::MicroModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto normal = [&](Eigen::Index r, Eigen::Index c, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    Field<float> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(dist(rng));
    return m;
  };
  const int d = config_.d;
  auto add_linear = [&](const std::string& p, int in, int out) {
    params_.add(p + ".w", normal(in, out, 1.0 / std::sqrt(in)));
    params_.add(p + ".b", Field<float>::Zero(1, out));
  };
  auto add_ln = [&](const std::string& p) {
    params_.add(p + ".g", Field<float>::Ones(1, d));
    params_.add(p + ".b", Field<float>::Zero(1, d));
  };
  auto add_conv = [&](const std::string& p, int cin, int cout, const kernels::ConvGeom& g) {
    const int fan_in = cin * g.kh * g.kw;
    params_.add(p + ".w", normal(cout, fan_in, std::sqrt(2.0 / fan_in)));
    params_.add(p + ".b", Field<float>::Zero(cout, 1));
  };
  auto add_attn = [&](const std::string& p) {
    for (const char* n : {".q", ".k", ".v", ".o"}) add_linear(p + n, d, d);
  };
  auto add_ffn = [&](const std::string& p) {
    add_linear(p + ".fc1", d, d * config_.ffn_mult);
    add_linear(p + ".fc2", d * config_.ffn_mult, d);
  };

  const int h = config_.image_h;
  const int w = config_.image_w;
  g1_ = {h, w, 3, 3, 2, 2, 1, 1};
  g2_ = {g1_.out_h(), g1_.out_w(), 3, 3, 2, 2, 1, 1};
  g3_ = {g2_.out_h(), g2_.out_w(), 4, 3, 4, 2, 0, 1};
  gh1_ = {config_.grid_h(), config_.grid_w(), 3, 3, 1, 1, 1, 1};
  gh2_ = {config_.head_h(), config_.head_w(), 1, 1, 1, 1, 0, 0};
  if (g3_.out_h() != config_.grid_h() || g3_.out_w() != config_.grid_w()) {
    throw Error(ErrorCode::kConfigInvalid, "encoder geometry does not reach (H/16, W/8)");
  }
  add_conv("enc.conv1", 1, config_.c1, g1_);
  add_conv("enc.conv2", config_.c1, config_.c2, g2_);
  add_conv("enc.conv3", config_.c2, config_.c3, g3_);
  add_linear("enc.proj", config_.c3, d);
  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attn(p + ".attn");
    add_ln(p + ".ln2");
    add_ffn(p + ".ffn");
  }
  add_ln("enc.ln");
  add_conv("head.conv1", config_.c3, config_.head_channels, gh1_);
  add_conv("head.conv2", config_.head_channels, 3, gh2_);

  params_.add("dec.tok", normal(config_.vocab_size, d, 0.1));
  params_.add("dec.pos", normal(config_.max_len, d, 0.1));
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attn(p + ".self");
    add_ln(p + ".ln2");
    add_attn(p + ".cross");
    add_ln(p + ".ln3");
    add_ffn(p + ".ffn");
  }
  add_ln("dec.ln");
  for (int k = 0; k < config_.mtp_heads; ++k) add_linear("out." + std::to_string(k), d, config_.vocab_size);

  rope_ = std::make_shared<kernels::RopeTable<float>>(config_.grid_h(), config_.grid_w(), d, config_.rope_base);
}

// ---------------------------------------------------------------------------
// Training path

Var MicroModel::lin(Tape<float>& t, const std::string& p, Var x) {
  return linear(t, x, t.param(params_.get(p + ".w")), t.param(params_.get(p + ".b")));
}

Var MicroModel::ln(Tape<float>& t, const std::string& p, Var x) {
  return layer_norm(t, x, t.param(params_.get(p + ".g")), t.param(params_.get(p + ".b")));
}

Var MicroModel::attn_block(Tape<float>& t, const std::string& p, Var x_q, Var x_kv, bool causal,
                           const std::optional<Vector<float>>& bias) {
  Var q = lin(t, p + ".q", x_q);
  Var k = lin(t, p + ".k", x_kv);
  Var v = lin(t, p + ".v", x_kv);
  Var a = attention<float>(t, q, k, v, config_.heads, causal, std::nullopt, bias);
  return lin(t, p + ".o", a);
}

Var MicroModel::ffn_block(Tape<float>& t, const std::string& p, Var x) {
  return lin(t, p + ".fc2", gelu(t, lin(t, p + ".fc1", x)));
}

MicroModel::EncodeVars MicroModel::encode(Tape<float>& t, const Plane& image) {
  if (image.rows() != config_.image_h || image.cols() != config_.image_w) {
    throw Error(ErrorCode::kShapeMismatch, "image does not match the model input size");
  }
  Field<float> flat = Eigen::Map<const Field<float>>(image.data(), 1, image.size());
  Var x = t.constant(std::move(flat));
  auto conv = [&](const std::string& p, Var in, const kernels::ConvGeom& g) {
    return conv2d(t, in, t.param(params_.get(p + ".w")), t.param(params_.get(p + ".b")), g);
  };
  x = silu(t, conv("enc.conv1", x, g1_));
  x = silu(t, conv("enc.conv2", x, g2_));
  Var feat = silu(t, conv("enc.conv3", x, g3_));  // c3 x T_k

  Var s = silu(t, conv("head.conv1", feat, gh1_));
  s = upsample_rows(t, s, config_.grid_h(), config_.grid_w(), 2);
  s = conv("head.conv2", s, gh2_);  // 3 x head_h*head_w

  Var m = lin(t, "enc.proj", transpose(t, feat));
  m = rope2d(t, m, rope_);
  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    Var h = ln(t, p + ".ln1", m);
    m = add(t, m, attn_block(t, p + ".attn", h, h, false, std::nullopt));
    m = add(t, m, ffn_block(t, p + ".ffn", ln(t, p + ".ln2", m)));
  }
  m = ln(t, "enc.ln", m);
  return {m, s};
}

std::vector<Var> MicroModel::decode(Tape<float>& t, Var memory, const std::vector<int>& inputs,
                                    const std::optional<Vector<float>>& bias) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  if (n == 0 || n > config_.max_len) throw Error(ErrorCode::kShapeMismatch, "decoder input length out of range");
  Var x = add(t, embedding(t, t.param(params_.get("dec.tok")), inputs),
              take_rows(t, t.param(params_.get("dec.pos")), n));
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    Var h = ln(t, p + ".ln1", x);
    x = add(t, x, attn_block(t, p + ".self", h, h, true, std::nullopt));
    x = add(t, x, attn_block(t, p + ".cross", ln(t, p + ".ln2", x), memory, false, bias));
    x = add(t, x, ffn_block(t, p + ".ffn", ln(t, p + ".ln3", x)));
  }
  x = ln(t, "dec.ln", x);
  std::vector<Var> heads;
  for (int k = 0; k < config_.mtp_heads; ++k) heads.push_back(lin(t, "out." + std::to_string(k), x));
  return heads;
}

// ---------------------------------------------------------------------------
// Inference path

Field<float> MicroModel::lin_fwd(const std::string& p, const Field<float>& x) const {
  return kernels::linear(x, params_.get(p + ".w").value, params_.get(p + ".b").value);
}

Field<float> MicroModel::ln_fwd(const std::string& p, const Field<float>& x) const {
  return kernels::layer_norm(x, params_.get(p + ".g").value, params_.get(p + ".b").value);
}

Field<float> MicroModel::ffn_fwd(const std::string& p, const Field<float>& x) const {
  const Field<float> h = kernels::gelu(lin_fwd(p + ".fc1", x));
  return lin_fwd(p + ".fc2", h);
}

Encoded MicroModel::encode(const Plane& image) const {
  if (image.rows() != config_.image_h || image.cols() != config_.image_w) {
    throw Error(ErrorCode::kShapeMismatch, "image does not match the model input size");
  }
  auto conv = [&](const std::string& p, const Field<float>& in, const kernels::ConvGeom& g) {
    return kernels::conv2d(in, params_.get(p + ".w").value, params_.get(p + ".b").value, g);
  };
  auto silu_m = [](const Field<float>& m) { return Field<float>(m.unaryExpr([](float v) { return kernels::silu(v); })); };
  Field<float> x = Eigen::Map<const Field<float>>(image.data(), 1, image.size());
  x = silu_m(conv("enc.conv1", x, g1_));
  x = silu_m(conv("enc.conv2", x, g2_));
  const Field<float> feat = silu_m(conv("enc.conv3", x, g3_));

  Field<float> s = silu_m(conv("head.conv1", feat, gh1_));
  s = kernels::upsample_rows(s, config_.grid_h(), config_.grid_w(), 2);
  s = conv("head.conv2", s, gh2_);

  Field<float> m = lin_fwd("enc.proj", feat.transpose());
  m = kernels::rope_apply(m, *rope_, 1.0f);
  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    const Field<float> h = ln_fwd(p + ".ln1", m);
    kernels::AttnOptions<float> opt;
    opt.heads = config_.heads;
    m += lin_fwd(p + ".attn.o", kernels::attention(lin_fwd(p + ".attn.q", h), lin_fwd(p + ".attn.k", h),
                                                   lin_fwd(p + ".attn.v", h), opt));
    m += ffn_fwd(p + ".ffn", ln_fwd(p + ".ln2", m));
  }
  Encoded e;
  e.memory = ln_fwd("enc.ln", m);
  e.structure = structure_maps(s);
  return e;
}

Maps3<float> MicroModel::structure_maps(const Field<float>& flat) const {
  Maps3<float> maps;
  for (int k = 0; k < 3; ++k) {
    maps[k] = Eigen::Map<const Field<float>>(flat.row(k).data(), config_.head_h(), config_.head_w());
  }
  return maps;
}

DecoderCache MicroModel::start(const Encoded& enc, const std::optional<Vector<float>>& bias) const {
  DecoderCache c;
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    c.self_k.emplace_back(0, config_.d);
    c.self_v.emplace_back(0, config_.d);
    c.cross_k.push_back(lin_fwd(p + ".cross.k", enc.memory));
    c.cross_v.push_back(lin_fwd(p + ".cross.v", enc.memory));
  }
  c.bias = bias;
  return c;
}

Field<float> MicroModel::step(DecoderCache& c, const std::vector<int>& tokens) const {
  const auto m = static_cast<Eigen::Index>(tokens.size());
  if (m == 0) throw Error(ErrorCode::kShapeMismatch, "empty decoder step");
  if (c.length + m > config_.max_len) throw Error(ErrorCode::kShapeMismatch, "decoder length exceeds max_len");
  const auto& tok = params_.get("dec.tok").value;
  const auto& pos = params_.get("dec.pos").value;
  Field<float> x(m, config_.d);
  for (Eigen::Index i = 0; i < m; ++i) {
    x.row(i) = tok.row(tokens[static_cast<std::size_t>(i)]) + pos.row(c.length + i);
  }
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    const auto li = static_cast<std::size_t>(l);
    Field<float> h = ln_fwd(p + ".ln1", x);
    Field<float>& ks = c.self_k[li];
    Field<float>& vs = c.self_v[li];
    ks.conservativeResize(c.length + m, Eigen::NoChange);
    vs.conservativeResize(c.length + m, Eigen::NoChange);
    ks.bottomRows(m) = lin_fwd(p + ".self.k", h);
    vs.bottomRows(m) = lin_fwd(p + ".self.v", h);
    kernels::AttnOptions<float> self_opt;
    self_opt.heads = config_.heads;
    self_opt.causal = true;
    self_opt.query_offset = c.length;
    x += lin_fwd(p + ".self.o", kernels::attention(lin_fwd(p + ".self.q", h), ks, vs, self_opt));

    h = ln_fwd(p + ".ln2", x);
    kernels::AttnOptions<float> cross_opt;
    cross_opt.heads = config_.heads;
    cross_opt.bias = c.bias ? &*c.bias : nullptr;
    x += lin_fwd(p + ".cross.o", kernels::attention(lin_fwd(p + ".cross.q", h), c.cross_k[li], c.cross_v[li], cross_opt));
    x += ffn_fwd(p + ".ffn", ln_fwd(p + ".ln3", x));
  }
  c.length += static_cast<int>(m);
  return ln_fwd("dec.ln", x);
}

Field<float> MicroModel::head_logits(int k, const Field<float>& hidden) const {
  return lin_fwd("out." + std::to_string(k), hidden);
}

// ---------------------------------------------------------------------------
// Checkpoints: "TSQM", u32 version, config text, u32 count,
// then per tensor: name, u32 rows, u32 cols, float32 payload.

void MicroModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write("TSQM", 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_bytes(out, config_.to_text());
  binio::put_u32(out, static_cast<std::uint32_t>(params_.all().size()));
  for (const auto& [name, p] : params_.all()) {
    binio::put_bytes(out, name);
    binio::put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    binio::put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

MicroModel MicroModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kPathMissing, path);
  binio::expect_magic(in, "TSQM");
  const auto version = binio::get_u32(in);
  if (version != kCheckpointVersion) throw Error(ErrorCode::kFormat, "unsupported checkpoint version");
  MicroModel model(ModelConfig::from_text(binio::get_bytes(in)), 0);
  const auto count = binio::get_u32(in);
  if (count != model.params_.all().size()) throw Error(ErrorCode::kFormat, "checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = binio::get_bytes(in);
    auto& p = model.params_.get(name);
    const auto r = binio::get_u32(in);
    const auto c = binio::get_u32(in);
    if (r != p.value.rows() || c != p.value.cols()) throw Error(ErrorCode::kFormat, "shape mismatch for " + name);
    if (!in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)))) {
      throw Error(ErrorCode::kFormat, "truncated checkpoint");
    }
  }
  return model;
}

Plane fit_plane(const Plane& image, int h, int w, float fill) {
  Plane out = Plane::Constant(h, w, fill);
  const auto rh = std::min<Eigen::Index>(h, image.rows());
  const auto rw = std::min<Eigen::Index>(w, image.cols());
  out.topLeftCorner(rh, rw) = image.topLeftCorner(rh, rw);
  return out;
}

}  // namespace tableseq::nn
