// SPDX-License-Identifier: Apache-2.0
//
// Glue between datasets on disk, preprocessing, the model and decoding.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tableseq/annotation.hpp"
#include "tableseq/decode.hpp"
#include "tableseq/imgproc.hpp"
#include "tableseq/nn/model.hpp"
#include "tableseq/nn/train.hpp"
#include "tableseq/struct_targets.hpp"
#include "tableseq/tokenize.hpp"

namespace tableseq {

struct DataSample {
  Annotation record;
  Image image;
  StructMaps targets;
};

/// Layout frames when the record has them, else the content boxes.
Table target_table(const Annotation& record);

/// Loads images and structure targets for records in `split` ("" = all).
/// Targets come from the record's target file when present, else they are
/// built from the layout.
std::vector<DataSample> load_samples(const std::filesystem::path& manifest, int unit, const std::string& split = "");

std::vector<Image> images_of(const std::vector<DataSample>& samples);

/// Luma of the (optionally enhanced) image, normalized with `stats`.
Plane model_input(const Image& image, const NormStats& stats, const EnhanceConfig* enhance = nullptr);

/// Normalized value of a white pixel, used to pad inputs.
float white_value(const NormStats& stats);

std::vector<nn::TrainSample> make_train_samples(const std::vector<DataSample>& samples, const NormStats& stats,
                                                const Vocab& vocab, const nn::ModelConfig& config, int unit,
                                                const EnhanceConfig* enhance = nullptr);

/// Pads/crops to the model input and decodes one table.
struct Prediction {
  Table table;
  DecodeTrace trace;
  RepairLog repairs;
};

Prediction predict(const nn::MicroModel& model, const Plane& input, const Vocab& vocab, const DecodeBudget& budget,
                   const DecodeOptions& options, int unit, float pad_value, std::optional<ImageSize> size = {});

/// Largest |coordinate - reconstructed coordinate| over all boxes after a
/// serialize/deserialize round trip at `unit`.
int max_box_error(const Table& table, const Vocab& vocab, int unit);

}  // namespace tableseq
