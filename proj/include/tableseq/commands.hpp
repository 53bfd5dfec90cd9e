// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the `tableseq` tool. Each takes a flat configuration (file
// values merged with command-line overrides), reads and writes files only,
// and records a run.json manifest next to its outputs.
#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tableseq/config.hpp"
#include "tableseq/decode.hpp"
#include "tableseq/error.hpp"
#include "tableseq/imgproc.hpp"
#include "tableseq/keybias.hpp"
#include "tableseq/nn/model.hpp"
#include "tableseq/nn/train.hpp"
#include "tableseq/synthgen.hpp"

namespace tableseq {

/// 2 configuration, 3 data, 4 numeric.
int exit_code(ErrorCode code);

// Typed views of the configuration, shared by commands and tests.
DatasetConfig dataset_config(const Config& c);
EnhanceConfig enhance_config(const Config& c);
BiasConfig bias_config(const Config& c);
nn::ModelConfig model_config(const Config& c, int vocab_size);
nn::TrainConfig train_config(const Config& c);
DecodeBudget decode_budget(const Config& c);

/// Writes run.json: command, every configuration value, seed and versions.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const Config& c);

struct CommandContext {
  std::ostream* log = nullptr;
};

void cmd_synth(const Config& c, const CommandContext& ctx);
void cmd_enhance(const Config& c, const CommandContext& ctx);
void cmd_targets(const Config& c, const CommandContext& ctx);
void cmd_train(const Config& c, const CommandContext& ctx);
void cmd_decode(const Config& c, const CommandContext& ctx);
void cmd_eval(const Config& c, const CommandContext& ctx);
void cmd_sweep_keybias(const Config& c, const CommandContext& ctx);
void cmd_sweep_quant(const Config& c, const CommandContext& ctx);
void cmd_bench(const Config& c, const CommandContext& ctx);
void cmd_plot(const Config& c, const CommandContext& ctx);

struct SweepRow {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double lambda0 = 1.0;
};

/// Rows of the sensitivity grid: the lambda0 block at the base gamma, then the
/// gamma block at the base lambda0 without repeating the shared setting.
std::vector<SweepRow> keybias_grid(const std::vector<double>& lambda0s, const std::vector<double>& gammas,
                                   double alpha, double beta, double base_gamma, double base_lambda0);

/// Minimal CSV (no quoting) used by plot.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
Csv read_csv(const std::filesystem::path& path);

enum class PlotKind { kLine, kBar };

/// Renders numeric columns `ys` against column `x` as an SVG chart.
std::string render_svg(const Csv& csv, const std::string& x, const std::vector<std::string>& ys, PlotKind kind,
                       const std::string& title);

}  // namespace tableseq
