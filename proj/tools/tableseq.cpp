// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tableseq/commands.hpp"

namespace {

using tableseq::Config;
using Runner = void (*)(const Config&, const tableseq::CommandContext&);

struct Flag {
  const char* name;  // also the config key unless `key` is set
  const char* help;
  const char* key = nullptr;
};

struct Spec {
  const char* name;
  const char* help;
  Runner run;
  std::vector<Flag> flags;
  /// Reads or writes coordinate tokens, so takes --grid-unit.
  bool reads_markup = true;
};

const std::vector<Spec>& specs() {
  static const std::vector<Spec> all = {
      {"synth", "Generate a synthetic table dataset", tableseq::cmd_synth,
       {{"out", "output directory"},
        {"count", "number of samples"},
        {"seed", "base seed"},
        {"unit", "pixels per coordinate step"},
        {"grid-unit", "pixels per coordinate step (2, 5 or 8)", "unit"},
        {"rows-max", "maximum rows", "rows.max"},
        {"cols-max", "maximum columns", "cols.max"},
        {"span-max", "maximum span", "span.max"},
        {"augment", "augmentation profile: none, default, heavy"},
        {"aug-profile", "augmentation profile: none, default, heavy", "augment"},
        {"val-fraction", "fraction of samples in the val split", "val_fraction"}}},
      {"enhance", "Enhance images and compute normalization statistics", tableseq::cmd_enhance,
       {{"manifest", "input manifest.jsonl"},
        {"out", "output directory"},
        {"illum", "illumination correction on/off"},
        {"clahe-clip", "CLAHE clip limit", "clahe.clip"},
        {"clahe-tiles", "CLAHE tile grid, e.g. 8x8", "clahe.tiles"},
        {"unsharp-amount", "unsharp amount", "unsharp.amount"},
        {"denoise", "smoothing sigma (off when unset)"}},
       false},
      {"targets", "Rasterize structure targets for a manifest", tableseq::cmd_targets,
       {{"manifest", "input manifest.jsonl"}, {"out", "output directory"}}},
      {"train", "Train the micro model", tableseq::cmd_train,
       {{"manifest", "training manifest.jsonl"},
        {"out", "output directory"},
        {"seed", "seed"},
        {"epochs", "epochs", "train.epochs"},
        {"time-budget", "seconds", "train.time_budget"},
        {"mtp", "number of prediction heads", "model.mtp"}}},
      {"decode", "Decode tables with a trained model", tableseq::cmd_decode,
       {{"model", "model.tsqm"},
        {"manifest", "manifest.jsonl to decode"},
        {"out", "output directory"},
        {"block-n", "tokens per decoding step", "block_n"},
        {"lambda0", "key-bias scale", "keybias.lambda0"}}},
      {"eval", "Score predictions against gold", tableseq::cmd_eval,
       {{"pred", "predicted manifest"},
        {"gold", "gold manifest"},
        {"out", "output directory"},
        {"metric", "all, teds, steds, car, ap50, index"},
        {"policy", "merged-cell query policy: owner or anchor"}}},
      {"sweep-keybias", "Sensitivity of decoding to the key-bias weights", tableseq::cmd_sweep_keybias,
       {{"model", "model.tsqm"},
        {"manifest", "evaluation manifest"},
        {"out", "output CSV"},
        {"lambda0", "comma-separated lambda0 values"},
        {"gamma", "comma-separated gamma values"}}},
      {"sweep-quant", "Coordinate quantization ablation", tableseq::cmd_sweep_quant,
       {{"out", "output directory"},
        {"units", "comma-separated units"},
        {"count", "samples per unit"},
        {"seed", "seed"},
        {"epochs", "epochs", "train.epochs"},
        {"time-budget", "seconds per unit", "train.time_budget"}},
       false},
      {"bench", "Decoding speed for several block sizes", tableseq::cmd_bench,
       {{"model", "model.tsqm"},
        {"manifest", "manifest.jsonl"},
        {"out", "output CSV"},
        {"blocks", "comma-separated block sizes"}}},
      {"plot", "Render a metrics CSV to SVG", tableseq::cmd_plot,
       {{"in", "input CSV"},
        {"out", "output SVG"},
        {"x", "x column"},
        {"y", "comma-separated y columns"},
        {"kind", "line or bar"},
        {"title", "chart title"}},
       false},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table structure recognition toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;

  struct Bound {
    const Spec* spec;
    CLI::App* sub;
    std::map<std::string, std::string> values;
  };
  std::vector<Bound> bound;
  bound.reserve(specs().size());
  for (const auto& s : specs()) {
    bound.push_back({&s, app.add_subcommand(s.name, s.help), {}});
    auto& b = bound.back();
    b.sub->add_option("-c,--config", config_path, "key = value configuration file");
    b.sub->add_option("--set", overrides, "override, key=value (repeatable)");
    bool has_unit = false;
    for (const auto& f : s.flags) {
      const std::string key = f.key ? f.key : f.name;
      has_unit = has_unit || key == "unit";
      b.sub->add_option_function<std::string>(
          std::string("--") + f.name, [&b, key](const std::string& v) { b.values[key] = v; }, f.help);
    }
    if (!has_unit && s.reads_markup) {
      b.sub->add_option_function<std::string>(
          "--grid-unit", [&b](const std::string& v) { b.values["unit"] = v; }, "pixels per coordinate step (2, 5 or 8)");
    }
  }
  CLI11_PARSE(app, argc, argv);

  for (const auto& b : bound) {
    if (!b.sub->parsed()) continue;
    try {
      Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
      for (const auto& [k, v] : b.values) cfg.set(k, v);
      for (const auto& o : overrides) cfg.set_assignment(o);
      b.spec->run(cfg, tableseq::CommandContext{&std::cout});
      return 0;
    } catch (const tableseq::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return tableseq::exit_code(e.code());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 3;
    }
  }
  return 0;
}
