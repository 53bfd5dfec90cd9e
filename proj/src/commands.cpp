// SPDX-License-Identifier: Apache-2.0
#include "tableseq/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "tableseq/metrics.hpp"
#include "tableseq/pipeline.hpp"
#include "tableseq/struct_targets.hpp"

namespace tableseq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::ostream& out_of(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::cout; }

fs::path require_path(const Config& c, const std::string& key) {
  fs::path p = c.require_string(key);
  if (!fs::exists(p)) throw Error(ErrorCode::kPathMissing, key + ": " + p.string());
  return p;
}

fs::path out_dir(const Config& c, const std::string& key = "out") {
  fs::path p = c.require_string(key);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  return f;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::pair<int, int> tiles_of(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) {
      const int n = std::stoi(s);
      return {n, n};
    }
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigInvalid, "clahe.tiles must look like 8 or 8x8");
  }
}

QueryPolicy policy_of(const Config& c) {
  const std::string p = c.get_string("policy", "owner");
  if (p == "owner") return QueryPolicy::kOwnerText;
  if (p == "anchor") return QueryPolicy::kAnchorOnly;
  throw Error(ErrorCode::kConfigInvalid, "policy must be owner or anchor");
}

NormStats stats_for_model(const Config& c) {
  if (c.has("stats")) return read_stats(require_path(c, "stats"));
  const fs::path model = require_path(c, "model");
  return read_stats(model.parent_path() / "stats.json");
}

DecodeOptions decode_options(const Config& c) {
  DecodeOptions o;
  o.bias = bias_config(c);
  o.use_bias = c.get_bool("keybias.enabled", true);
  return o;
}

struct Trained {
  nn::MicroModel model;
  NormStats stats;
  nn::TrainReport report;
};

Trained train_on(const std::vector<DataSample>& data, const Config& c, const Vocab& vocab, int unit,
                 std::ostream& log) {
  const NormStats stats = compute_stats(images_of(data));
  const nn::ModelConfig mc = model_config(c, vocab.size());
  nn::MicroModel model(mc, static_cast<std::uint64_t>(c.get_int64("seed", 0)));
  const bool enh = c.get_bool("enhance", false);
  const EnhanceConfig ec = enhance_config(c);
  const auto samples = make_train_samples(data, stats, vocab, mc, unit, enh ? &ec : nullptr);
  nn::TrainConfig tc = train_config(c);
  if (c.has("train.synth_start") || c.has("train.synth_end")) {
    for (const auto& d : data) tc.synthetic.push_back(d.record.seed.has_value());
  }
  const int every = std::max(1, c.get_int("train.log_every", 50));
  auto progress = [&](const nn::CurveRow& r, int epoch) {
    if (r.step % every == 0) {
      log << "epoch " << epoch << " step " << r.step << " lr " << fmt(r.lr) << " L_seq " << fmt(r.metrics.l_seq)
          << " L_prior " << fmt(r.metrics.l_prior) << " total " << fmt(r.metrics.total) << std::endl;
    }
  };
  nn::TrainReport rep = nn::train(model, samples, tc, vocab, progress);
  log << "trained " << rep.steps << " steps / " << rep.epochs << " epochs in " << fmt(rep.seconds) << " s ("
      << rep.stop_reason << "), teacher-forced accuracy " << fmt(rep.accuracy) << '\n';
  return Trained{std::move(model), stats, std::move(rep)};
}

std::vector<Table> predict_all(const nn::MicroModel& model, const NormStats& stats, const std::vector<DataSample>& data,
                               const Vocab& vocab, const DecodeBudget& budget, const DecodeOptions& opts, int unit,
                               const EnhanceConfig* enh, std::vector<Prediction>* traces = nullptr) {
  std::vector<Table> out;
  for (const auto& d : data) {
    Prediction p = predict(model, model_input(d.image, stats, enh), vocab, budget, opts, unit, white_value(stats),
                           ImageSize{d.image.height(), d.image.width()});
    out.push_back(p.table);
    if (traces) traces->push_back(std::move(p));
  }
  return out;
}

std::vector<Table> gold_tables(const std::vector<DataSample>& data) {
  std::vector<Table> out;
  for (const auto& d : data) out.push_back(d.record.table);
  return out;
}

}  // namespace

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kPathMissing:
      return 2;
    case ErrorCode::kNonFiniteInput:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kWeightsNotNormalized:
    case ErrorCode::kStatDegenerate:
    case ErrorCode::kShapeMismatch:
      return 4;
    default:
      return 3;
  }
}

DatasetConfig dataset_config(const Config& c) {
  DatasetConfig d;
  d.count = c.get_int("count", 64);
  d.seed = static_cast<std::uint64_t>(c.get_int64("seed", 0));
  d.unit = c.get_int("unit", 5);
  d.tables.min_rows = c.get_int("rows.min", d.tables.min_rows);
  d.tables.max_rows = c.get_int("rows.max", d.tables.max_rows);
  d.tables.min_cols = c.get_int("cols.min", d.tables.min_cols);
  d.tables.max_cols = c.get_int("cols.max", d.tables.max_cols);
  d.tables.max_span = c.get_int("span.max", d.tables.max_span);
  d.tables.span_prob = c.get_double("span.prob", d.tables.span_prob);
  d.tables.header_prob = c.get_double("header.prob", d.tables.header_prob);
  d.tables.min_text = c.get_int("text.min", d.tables.min_text);
  d.tables.max_text = c.get_int("text.max", d.tables.max_text);
  d.tables.number_prob = c.get_double("number.prob", d.tables.number_prob);
  d.style.canvas_h = c.get_int("canvas.h", 64);
  d.style.canvas_w = c.get_int("canvas.w", 128);
  d.style.fill_canvas = c.get_bool("canvas.fill", true);
  d.style.scale = c.get_int("render.scale", 1);
  d.style.shade_jitter = static_cast<float>(c.get_double("render.shade_jitter", 0.0));
  d.augment = augment_profile(c.get_string("augment", "none"));
  d.val_fraction = c.get_double("val_fraction", 0.0);
  if (d.count < 0 || d.unit < 1 || d.tables.min_rows < 1 || d.tables.min_cols < 1 ||
      d.tables.max_rows < d.tables.min_rows || d.tables.max_cols < d.tables.min_cols || d.tables.max_span < 1) {
    throw Error(ErrorCode::kConfigInvalid, "invalid synthetic dataset settings");
  }
  return d;
}

EnhanceConfig enhance_config(const Config& c) {
  EnhanceConfig e;
  e.illum_correction = c.get_bool("illum", e.illum_correction);
  e.clahe_clip = c.get_double("clahe.clip", e.clahe_clip);
  std::tie(e.clahe_tiles_x, e.clahe_tiles_y) = tiles_of(c.get_string("clahe.tiles", "8x8"));
  e.unsharp_amount = c.get_double("unsharp.amount", e.unsharp_amount);
  e.unsharp_sigma = c.get_double("unsharp.sigma", e.unsharp_sigma);
  if (c.has("denoise")) e.denoise = c.get_double("denoise", 1.0);
  e.check();
  return e;
}

BiasConfig bias_config(const Config& c) {
  BiasConfig b;
  b.alpha = c.get_double("keybias.alpha", b.alpha);
  b.beta = c.get_double("keybias.beta", b.beta);
  b.gamma = c.get_double("keybias.gamma", b.gamma);
  b.lambda0 = c.get_double("keybias.lambda0", b.lambda0);
  b.clamp = c.get_double("keybias.clamp", b.clamp);
  const std::string at = c.get_string("keybias.conf_at", "encoder");
  if (at == "encoder") {
    b.conf_at = ConfResolution::kEncoder;
  } else if (at == "head") {
    b.conf_at = ConfResolution::kHead;
  } else {
    throw Error(ErrorCode::kConfigInvalid, "keybias.conf_at must be encoder or head");
  }
  b.check();
  return b;
}

nn::ModelConfig model_config(const Config& c, int vocab_size) {
  nn::ModelConfig m;
  m.vocab_size = vocab_size;
  m.d = c.get_int("model.d", m.d);
  m.heads = c.get_int("model.heads", m.heads);
  m.enc_layers = c.get_int("model.enc_layers", m.enc_layers);
  m.dec_layers = c.get_int("model.dec_layers", m.dec_layers);
  m.max_len = c.get_int("model.max_len", m.max_len);
  m.mtp_heads = c.get_int("model.mtp", m.mtp_heads);
  m.image_h = c.get_int("model.image_h", m.image_h);
  m.image_w = c.get_int("model.image_w", m.image_w);
  m.validate();
  return m;
}

nn::TrainConfig train_config(const Config& c) {
  nn::TrainConfig t;
  t.epochs = c.get_int("train.epochs", 100);
  t.batch = c.get_int("train.batch", 8);
  t.lr_start = c.get_double("train.lr_start", 3e-3);
  t.lr_end = c.get_double("train.lr_end", 3e-5);
  t.grad_clip = c.get_double("train.clip", 1.0);
  t.seed = static_cast<std::uint64_t>(c.get_int64("seed", 0));
  t.noise = c.get_bool("train.noise", true);
  t.noise_config.rate = c.get_double("train.noise_rate", t.noise_config.rate);
  t.noise_config.coord_radius = c.get_int("train.noise_radius", t.noise_config.coord_radius);
  t.mtp_weights = c.get_doubles("train.mtp_weights", {});
  t.bias_in_training = c.get_bool("train.bias", true);
  t.bias = bias_config(c);
  t.time_budget_s = c.get_double("train.time_budget", 0.0);
  t.target_accuracy = c.get_double("train.target_accuracy", 0.0);
  t.eval_every = c.get_int("train.eval_every", 5);
  t.accuracy_heads = c.get_int("train.accuracy_heads", 1);
  t.synth_fraction_start = c.get_double("train.synth_start", 1.0);
  t.synth_fraction_end = c.get_double("train.synth_end", 1.0);
  if (t.batch < 1 || t.epochs < 0 || !(t.lr_start > 0) || !(t.lr_end > 0)) {
    throw Error(ErrorCode::kConfigInvalid, "invalid training settings");
  }
  return t;
}

DecodeBudget decode_budget(const Config& c) {
  DecodeBudget b;
  b.max_tokens = c.get_int("max_tokens", b.max_tokens);
  b.block_n = c.get_int("block_n", b.block_n);
  if (b.max_tokens < 1 || b.block_n < 1) throw Error(ErrorCode::kConfigInvalid, "max_tokens and block_n must be >= 1");
  return b;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const Config& c) {
  json j;
  j["command"] = command;
  j["config"] = c.values();
  j["seed"] = c.get_int64("seed", 0);
  j["version"] = kVersion;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
#ifdef __VERSION__
  j["compiler"] = __VERSION__;
#endif
  auto f = open_out(dir / "run.json");
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

void cmd_synth(const Config& c, const CommandContext& ctx) {
  const DatasetConfig d = dataset_config(c);
  const fs::path dir = out_dir(c);
  const auto records = make_dataset(d, dir);
  write_run_manifest(dir, "synth", c);
  out_of(ctx) << "wrote " << records.size() << " samples to " << dir.string() << '\n';
}

void cmd_enhance(const Config& c, const CommandContext& ctx) {
  const fs::path manifest = require_path(c, "manifest");
  const EnhanceConfig e = enhance_config(c);
  const fs::path dir = out_dir(c);
  fs::create_directories(dir / "images");
  const fs::path root = manifest.parent_path();
  auto records = read_manifest(manifest, c.get_int("unit", 5));
  std::vector<Image> train_images;
  for (auto& r : records) {
    const Image out = enhance(read_pnm(root / r.image), e);
    const fs::path name = fs::path("images") / fs::path(r.image).filename();
    write_pnm(dir / name, out);
    r.image = name.generic_string();
    if (!r.targets.empty()) r.targets = fs::absolute(root / r.targets).lexically_normal().string();
    if (r.split == "train") train_images.push_back(out);
  }
  write_manifest(dir / "manifest.jsonl", records);
  if (!train_images.empty()) write_stats(dir / "stats.json", compute_stats(train_images));
  write_run_manifest(dir, "enhance", c);
  out_of(ctx) << "enhanced " << records.size() << " images into " << dir.string() << '\n';
}

void cmd_targets(const Config& c, const CommandContext& ctx) {
  const fs::path manifest = require_path(c, "manifest");
  const fs::path dir = out_dir(c);
  fs::create_directories(dir / "targets");
  const fs::path root = manifest.parent_path();
  RasterConfig rc;
  rc.sigma_line = c.get_double("sigma_line", rc.sigma_line);
  rc.sigma_corner = c.get_double("sigma_corner", rc.sigma_corner);
  auto records = read_manifest(manifest, c.get_int("unit", 5));
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    Table t = target_table(r);
    if (!t.image_size) {
      const Image img = read_pnm(root / r.image);
      t.image_size = ImageSize{img.height(), img.width()};
    }
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.tsqt", i);
    write_targets(dir / "targets" / name, build_targets(t, rc));
    r.targets = (fs::path("targets") / name).generic_string();
    r.image = fs::absolute(root / r.image).lexically_normal().string();
  }
  write_manifest(dir / "manifest.jsonl", records);
  write_run_manifest(dir, "targets", c);
  out_of(ctx) << "wrote targets for " << records.size() << " samples\n";
}

void cmd_train(const Config& c, const CommandContext& ctx) {
  const fs::path manifest = require_path(c, "manifest");
  const int unit = c.get_int("unit", 5);
  const fs::path dir = out_dir(c);
  const Vocab vocab;
  const auto data = load_samples(manifest, unit, c.get_string("split", "train"));
  if (data.empty()) throw Error(ErrorCode::kUnusable, "no training records in " + manifest.string());
  Trained t = train_on(data, c, vocab, unit, out_of(ctx));
  t.model.save((dir / "model.tsqm").string());
  write_stats(dir / "stats.json", t.stats);
  nn::write_curve_csv((dir / "curve.csv").string(), t.report.curve);
  write_run_manifest(dir, "train", c);
}

void cmd_decode(const Config& c, const CommandContext& ctx) {
  const nn::MicroModel model = nn::MicroModel::load(require_path(c, "model").string());
  const NormStats stats = stats_for_model(c);
  const fs::path manifest = require_path(c, "manifest");
  const int unit = c.get_int("unit", 5);
  const fs::path dir = out_dir(c);
  const Vocab vocab;
  const auto data = load_samples(manifest, unit, c.get_string("split", ""));
  const bool enh = c.get_bool("enhance", false);
  const EnhanceConfig ec = enhance_config(c);
  std::vector<Prediction> traces;
  const auto preds = predict_all(model, stats, data, vocab, decode_budget(c), decode_options(c), unit,
                                 enh ? &ec : nullptr, &traces);
  std::vector<Annotation> records;
  auto csv = open_out(dir / "decode.csv");
  csv << "index,tokens,outer_steps,forward_passes,seconds,repairs\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    Annotation a;
    a.image = fs::absolute(manifest.parent_path() / data[i].record.image).lexically_normal().string();
    a.table = preds[i];
    a.markup = emit_markup(preds[i], true, unit);
    a.split = data[i].record.split;
    a.seed = data[i].record.seed;
    records.push_back(std::move(a));
    const auto& tr = traces[i].trace;
    csv << i << ',' << tr.tokens.size() << ',' << tr.outer_steps << ',' << tr.forward_passes << ','
        << fmt(tr.wall_seconds) << ',' << traces[i].repairs.size() << '\n';
  }
  write_manifest(dir / "pred.jsonl", records);
  write_run_manifest(dir, "decode", c);
  out_of(ctx) << "decoded " << records.size() << " samples\n";
}

void cmd_eval(const Config& c, const CommandContext& ctx) {
  const int unit = c.get_int("unit", 5);
  const auto pred = read_manifest(require_path(c, "pred"), unit);
  const auto gold = read_manifest(require_path(c, "gold"), unit);
  if (pred.size() != gold.size()) throw Error(ErrorCode::kShapeMismatch, "pred and gold manifests differ in length");
  const std::string metric = c.get_string("metric", "all");
  const std::vector<std::string> known{"all", "teds", "steds", "car", "ap50", "index"};
  if (std::find(known.begin(), known.end(), metric) == known.end()) {
    throw Error(ErrorCode::kConfigInvalid, "metric must be one of all, teds, steds, car, ap50, index");
  }
  std::vector<Table> p;
  std::vector<Table> g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p.push_back(pred[i].table);
    g.push_back(gold[i].table);
  }
  const EvalReport rep = evaluate(p, g, policy_of(c));
  const fs::path dir = out_dir(c);
  auto want = [&](const char* m) { return metric == "all" || metric == m; };
  auto csv = open_out(dir / "per_sample.csv");
  csv << "index";
  if (want("teds")) csv << ",teds";
  if (want("steds")) csv << ",s_teds";
  if (want("car")) csv << ",car_p,car_r,car_f1";
  if (want("ap50")) csv << ",ap50";
  if (want("index")) csv << ",icr,irdr,icdr";
  csv << '\n';
  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const auto& s = rep.samples[i];
    csv << i;
    if (want("teds")) csv << ',' << fmt(s.teds);
    if (want("steds")) csv << ',' << fmt(s.s_teds);
    if (want("car")) csv << ',' << fmt(s.car.precision) << ',' << fmt(s.car.recall) << ',' << fmt(s.car.f1);
    if (want("ap50")) csv << ',' << fmt(s.ap50);
    if (want("index")) csv << ',' << fmt(s.index.icr) << ',' << fmt(s.index.irdr) << ',' << fmt(s.index.icdr);
    csv << '\n';
  }
  json j;
  j["samples"] = rep.samples.size();
  if (want("teds")) j["teds"] = rep.mean.teds;
  if (want("steds")) j["s_teds"] = rep.mean.s_teds;
  if (want("car")) j["car"] = {{"precision", rep.mean.car.precision}, {"recall", rep.mean.car.recall}, {"f1", rep.mean.car.f1}};
  if (want("ap50")) j["ap50"] = rep.mean.ap50;
  if (want("index")) j["index"] = {{"icr_acc", rep.mean.index.icr}, {"irdr_f1", rep.mean.index.irdr}, {"icdr_f1", rep.mean.index.icdr}};
  auto summary = open_out(dir / "summary.json");
  summary << j.dump(2) << '\n';
  write_run_manifest(dir, "eval", c);
  out_of(ctx) << j.dump(2) << '\n';
}

std::vector<SweepRow> keybias_grid(const std::vector<double>& lambda0s, const std::vector<double>& gammas, double alpha,
                                   double beta, double base_gamma, double base_lambda0) {
  std::vector<SweepRow> rows;
  bool shared = false;
  for (double l : lambda0s) {
    rows.push_back({alpha, beta, base_gamma, l});
    shared = shared || l == base_lambda0;
  }
  for (double g : gammas) {
    if (shared && g == base_gamma) continue;
    rows.push_back({alpha, beta, g, base_lambda0});
  }
  return rows;
}

void cmd_sweep_keybias(const Config& c, const CommandContext& ctx) {
  const nn::MicroModel model = nn::MicroModel::load(require_path(c, "model").string());
  const NormStats stats = stats_for_model(c);
  const int unit = c.get_int("unit", 5);
  const Vocab vocab;
  const auto data = load_samples(require_path(c, "manifest"), unit, c.get_string("split", ""));
  const auto gold = gold_tables(data);
  // Only the swept axes given on the command line are varied; with neither
  // given, both default grids are used.
  const bool only_lambda = c.has("lambda0") && !c.has("gamma");
  const bool only_gamma = c.has("gamma") && !c.has("lambda0");
  const auto rows = keybias_grid(only_gamma ? std::vector<double>{} : c.get_doubles("lambda0", {0.0, 0.5, 1.0, 2.0}),
                                 only_lambda ? std::vector<double>{} : c.get_doubles("gamma", {0.0, 0.5, 1.0, 1.5, 2.0}),
                                 c.get_double("keybias.alpha", 1.0),
                                 c.get_double("keybias.beta", 1.0), c.get_double("base_gamma", 1.0),
                                 c.get_double("base_lambda0", 1.0));
  const fs::path csv_path = c.require_string("out");
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  auto csv = open_out(csv_path);
  csv << "alpha,beta,gamma,lambda0,s_teds,teds\n";
  const bool enh = c.get_bool("enhance", false);
  const EnhanceConfig ec = enhance_config(c);
  for (const auto& r : rows) {
    DecodeOptions o = decode_options(c);
    o.bias.alpha = r.alpha;
    o.bias.beta = r.beta;
    o.bias.gamma = r.gamma;
    o.bias.lambda0 = r.lambda0;
    const auto preds = predict_all(model, stats, data, vocab, decode_budget(c), o, unit, enh ? &ec : nullptr);
    double st = 0.0;
    double te = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      st += s_teds(preds[i], gold[i]);
      te += teds(preds[i], gold[i]);
    }
    const double n = std::max<std::size_t>(1, preds.size());
    csv << fmt(r.alpha) << ',' << fmt(r.beta) << ',' << fmt(r.gamma) << ',' << fmt(r.lambda0) << ',' << fmt(st / n)
        << ',' << fmt(te / n) << '\n';
    out_of(ctx) << "alpha " << r.alpha << " beta " << r.beta << " gamma " << r.gamma << " lambda0 " << r.lambda0
                << " S-TEDS " << fmt(st / n) << '\n';
  }
  write_run_manifest(csv_path.has_parent_path() ? csv_path.parent_path() : fs::path("."), "sweep-keybias", c);
}

void cmd_sweep_quant(const Config& c, const CommandContext& ctx) {
  const fs::path dir = out_dir(c);
  const Vocab vocab;
  auto& log = out_of(ctx);
  auto csv = open_out(dir / "quant.csv");
  csv << "unit,teds,ap50,max_box_error,bound\n";
  for (int u : c.get_ints("units", {2, 5, 8})) {
    Config cu = c;
    cu.set("unit", std::to_string(u));
    const fs::path data_dir = dir / ("u" + std::to_string(u));
    make_dataset(dataset_config(cu), data_dir);
    const auto data = load_samples(data_dir / "manifest.jsonl", u);
    int err = 0;
    for (const auto& d : data) err = std::max(err, max_box_error(d.record.table, vocab, u));
    Trained t = train_on(data, cu, vocab, u, log);
    const auto preds = predict_all(t.model, t.stats, data, vocab, decode_budget(cu), decode_options(cu), u, nullptr);
    const EvalReport rep = evaluate(preds, gold_tables(data));
    csv << u << ',' << fmt(rep.mean.teds) << ',' << fmt(rep.mean.ap50) << ',' << err << ',' << fmt(u / 2.0) << '\n';
    log << "unit " << u << ": TEDS " << fmt(rep.mean.teds) << " AP50 " << fmt(rep.mean.ap50) << " max box error "
        << err << " (bound " << u / 2.0 << ")\n";
    if (err * 2 > u) throw Error(ErrorCode::kShapeMismatch, "box reconstruction error exceeds u/2");
  }
  write_run_manifest(dir, "sweep-quant", c);
}

void cmd_bench(const Config& c, const CommandContext& ctx) {
  const nn::MicroModel model = nn::MicroModel::load(require_path(c, "model").string());
  const NormStats stats = stats_for_model(c);
  const auto data = load_samples(require_path(c, "manifest"), c.get_int("unit", 5), c.get_string("split", ""));
  std::vector<Plane> inputs;
  for (const auto& d : data) {
    inputs.push_back(nn::fit_plane(model_input(d.image, stats), model.config().image_h, model.config().image_w,
                                   white_value(stats)));
  }
  std::vector<int> blocks = c.get_ints("blocks", {});
  if (blocks.empty()) {
    for (int n = 1; n <= model.config().mtp_heads; n *= 2) blocks.push_back(n);
  }
  const auto rows = bench_decode(model, inputs, blocks, decode_budget(c), decode_options(c));
  const fs::path csv_path = c.require_string("out");
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  auto csv = open_out(csv_path);
  write_bench_csv(csv, rows);
  write_bench_csv(out_of(ctx), rows);
}

// ---------------------------------------------------------------------------
// Plotting

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kPathMissing, path.string());
  Csv csv;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(s);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, "empty CSV " + path.string());
  csv.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    csv.rows.push_back(split(line));
    if (csv.rows.back().size() != csv.header.size()) throw Error(ErrorCode::kFormat, "ragged CSV " + path.string());
  }
  return csv;
}

namespace {

std::size_t column(const Csv& csv, const std::string& name) {
  const auto it = std::find(csv.header.begin(), csv.header.end(), name);
  if (it == csv.header.end()) throw Error(ErrorCode::kConfigInvalid, "no CSV column '" + name + "'");
  return static_cast<std::size_t>(it - csv.header.begin());
}

double number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kFormat, "non-numeric CSV value '" + s + "'");
}

std::string esc(const std::string& s) {
  std::string o;
  for (char ch : s) {
    if (ch == '<') o += "&lt;";
    else if (ch == '>') o += "&gt;";
    else if (ch == '&') o += "&amp;";
    else o += ch;
  }
  return o;
}

}  // namespace

std::string render_svg(const Csv& csv, const std::string& x, const std::vector<std::string>& ys, PlotKind kind,
                       const std::string& title) {
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 40;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const std::size_t xi = column(csv, x);
  std::vector<std::size_t> yi;
  for (const auto& y : ys) yi.push_back(column(csv, y));
  if (csv.rows.empty() || yi.empty()) throw Error(ErrorCode::kFormat, "nothing to plot");
  std::vector<double> xs;
  for (const auto& r : csv.rows) xs.push_back(kind == PlotKind::kLine ? number(r[xi]) : static_cast<double>(xs.size()));
  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = kind == PlotKind::kBar ? 0.0 : 1e300;
  double ymax = -1e300;
  for (const auto& r : csv.rows) {
    for (auto k : yi) {
      ymin = std::min(ymin, number(r[k]));
      ymax = std::max(ymax, number(r[k]));
    }
  }
  if (kind == PlotKind::kBar) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << py(v) << "\" x2=\"" << W - R << "\" y2=\"" << py(v)
      << "\" stroke=\"#ddd\"/>\n";
  }
  if (kind == PlotKind::kLine) {
    for (int k = 0; k <= 4; ++k) {
      const double v = xmin + (xmax - xmin) * k / 4.0;
      s << "<text x=\"" << px(v) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << fmt(v) << "</text>\n";
    }
  } else {
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
      s << "<text x=\"" << px(xs[i]) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << esc(csv.rows[i][xi])
        << "</text>\n";
    }
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 6 << "\" text-anchor=\"middle\">" << esc(x) << "</text>\n";
  const double bw = 0.8 / static_cast<double>(yi.size()) * (W - L - R) / std::max(1.0, xmax - xmin);
  for (std::size_t k = 0; k < yi.size(); ++k) {
    const char* color = kColors[k % 6];
    if (kind == PlotKind::kLine) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < csv.rows.size(); ++i) s << px(xs[i]) << ',' << py(number(csv.rows[i][yi[k]])) << ' ';
      s << "\"/>\n";
    } else {
      for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const double v = number(csv.rows[i][yi[k]]);
        const double x0 = px(xs[i]) - 0.4 * bw * static_cast<double>(yi.size()) / 0.8 + bw * static_cast<double>(k);
        s << "<rect x=\"" << x0 << "\" y=\"" << py(v) << "\" width=\"" << bw << "\" height=\"" << py(ymin) - py(v)
          << "\" fill=\"" << color << "\"/>\n";
      }
    }
    s << "<rect x=\"" << W - R + 10 << "\" y=\"" << T + 18 * k << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/>\n";
    s << "<text x=\"" << W - R + 26 << "\" y=\"" << T + 18 * k + 10 << "\">" << esc(ys[k]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void cmd_plot(const Config& c, const CommandContext& ctx) {
  const fs::path in = require_path(c, "in");
  const Csv csv = read_csv(in);
  const std::string x = c.get_string("x", csv.header.front());
  std::vector<std::string> ys = split_list(c.get_string("y", ""));
  if (ys.empty()) {
    for (const auto& h : csv.header) {
      if (h != x) ys.push_back(h);
    }
  }
  const std::string k = c.get_string("kind", "line");
  if (k != "line" && k != "bar") throw Error(ErrorCode::kConfigInvalid, "kind must be line or bar");
  const fs::path out = c.require_string("out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  auto f = open_out(out);
  f << render_svg(csv, x, ys, k == "line" ? PlotKind::kLine : PlotKind::kBar, c.get_string("title", in.stem().string()));
  out_of(ctx) << "wrote " << out.string() << '\n';
}

}  // namespace tableseq
