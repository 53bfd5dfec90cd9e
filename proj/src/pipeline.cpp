// SPDX-License-Identifier: Apache-2.0
#include "tableseq/pipeline.hpp"

#include <algorithm>
#include <cstdlib>

#include "tableseq/error.hpp"

namespace tableseq {

Table target_table(const Annotation& record) {
  Table t = record.table;
  if (record.frames.size() == t.cells.size()) {
    for (std::size_t i = 0; i < t.cells.size(); ++i) t.cells[i].bbox = record.frames[i];
  }
  return t;
}

std::vector<DataSample> load_samples(const std::filesystem::path& manifest, int unit, const std::string& split) {
  const auto root = manifest.parent_path();
  std::vector<DataSample> out;
  for (auto& r : read_manifest(manifest, unit)) {
    if (!split.empty() && r.split != split) continue;
    DataSample s;
    s.image = read_pnm(root / r.image);
    if (!r.table.image_size) r.table.image_size = ImageSize{s.image.height(), s.image.width()};
    if (!r.targets.empty() && std::filesystem::exists(root / r.targets)) {
      s.targets = read_targets(root / r.targets);
    } else {
      s.targets = build_targets(target_table(r));
    }
    s.record = std::move(r);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Image> images_of(const std::vector<DataSample>& samples) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

Plane model_input(const Image& image, const NormStats& stats, const EnhanceConfig* enhance) {
  Image src = enhance ? tableseq::enhance(image, *enhance) : image;
  Image gray(luma(src));
  NormStats g{{stats.mean.at(0)}, {stats.std.at(0)}};
  return normalize(gray, g).front().cast<float>();
}

float white_value(const NormStats& stats) {
  return static_cast<float>((1.0 - stats.mean.at(0)) / stats.std.at(0));
}

std::vector<nn::TrainSample> make_train_samples(const std::vector<DataSample>& samples, const NormStats& stats,
                                                const Vocab& vocab, const nn::ModelConfig& config, int unit,
                                                const EnhanceConfig* enhance) {
  std::vector<nn::TrainSample> out;
  SerializeOptions opts;
  opts.quant.unit = unit;
  opts.unencodable = UnencodablePolicy::kReplace;
  for (const auto& s : samples) {
    const TokenSeq seq = serialize(s.record.table, vocab, opts);
    out.push_back(nn::make_sample(model_input(s.image, stats, enhance), seq, s.targets, config, white_value(stats)));
  }
  return out;
}

Prediction predict(const nn::MicroModel& model, const Plane& input, const Vocab& vocab, const DecodeBudget& budget,
                   const DecodeOptions& options, int unit, float pad_value, std::optional<ImageSize> size) {
  const auto& cfg = model.config();
  const Plane fitted = nn::fit_plane(input, cfg.image_h, cfg.image_w, pad_value);
  Prediction p;
  p.trace = budget.block_n == 1 ? greedy_decode(model, fitted, budget, options) : mtp_decode(model, fitted, budget, options);
  std::vector<int> ids{vocab.bos()};
  ids.insert(ids.end(), p.trace.tokens.begin(), p.trace.tokens.end());
  try {
    Deserialized d = deserialize(ids, vocab, QuantSpec{unit});
    p.table = std::move(d.table);
    p.repairs = std::move(d.repairs);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnrecoverable) throw;
    p.table = make_table(1, 1, {Cell{}});
    p.repairs.push_back(Repair{0, "no table recovered; substituted an empty 1x1 table"});
  }
  p.table.image_size = size;
  return p;
}

int max_box_error(const Table& table, const Vocab& vocab, int unit) {
  SerializeOptions opts;
  opts.quant.unit = unit;
  opts.unencodable = UnencodablePolicy::kReplace;
  const Table back = deserialize(serialize(table, vocab, opts), vocab, QuantSpec{unit}).table;
  if (back.cells.size() != table.cells.size()) throw Error(ErrorCode::kShapeMismatch, "round trip changed the cell count");
  int worst = 0;
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    const auto& a = table.cells[i].bbox;
    const auto& b = back.cells[i].bbox;
    if (!a) continue;
    if (!b) throw Error(ErrorCode::kShapeMismatch, "round trip lost a box");
    worst = std::max({worst, std::abs(a->x1 - b->x1), std::abs(a->y1 - b->y1), std::abs(a->x2 - b->x2),
                      std::abs(a->y2 - b->y2)});
  }
  return worst;
}

}  // namespace tableseq
