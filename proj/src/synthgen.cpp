// SPDX-License-Identifier: Apache-2.0
#include "tableseq/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "tableseq/error.hpp"

namespace tableseq {

namespace {

using Rng = std::mt19937_64;

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

constexpr std::string_view kTextChars = "ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz0123456789";

}  // namespace

std::string random_text(std::mt19937_64& rng, int min_len, int max_len) {
  const int n = uniform(rng, std::max(1, min_len), std::max(min_len, max_len));
  std::string s;
  for (int i = 0; i < n; ++i) s += kTextChars[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(kTextChars.size()) - 1))];
  return s;
}

std::string random_number_text(std::mt19937_64& rng) {
  switch (uniform(rng, 0, 4)) {
    case 0: return std::to_string(uniform(rng, 0, 99));
    case 1: return std::to_string(uniform(rng, 0, 9)) + "." + std::to_string(uniform(rng, 0, 9));
    case 2: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%d,%03d", uniform(rng, 1, 9), uniform(rng, 0, 999));
      return buf;
    }
    case 3: return std::to_string(uniform(rng, 0, 99)) + "%";
    default: return "-" + std::to_string(uniform(rng, 1, 9));
  }
}

Table random_table(std::mt19937_64& rng, const TableGenConfig& cfg) {
  const int rows = uniform(rng, cfg.min_rows, cfg.max_rows);
  const int cols = uniform(rng, cfg.min_cols, cfg.max_cols);
  const int header = rows >= 2 && chance(rng, cfg.header_prob) ? 1 : 0;
  OwnerGrid taken = OwnerGrid::Constant(rows, cols, -1);
  std::vector<Cell> cells;
  for (int r = 0; r < rows; ++r) {
    const int block_end = r < header ? header : rows;
    for (int c = 0; c < cols; ++c) {
      if (taken(r, c) != -1) continue;
      int rs = 1;
      int cs = 1;
      if (cfg.max_span > 1 && chance(rng, cfg.span_prob)) {
        rs = uniform(rng, 1, cfg.max_span);
        cs = uniform(rng, 1, cfg.max_span);
        cs = std::min(cs, cols - c);
        for (int k = 1; k < cs; ++k) {
          if (taken(r, c + k) != -1) {
            cs = k;
            break;
          }
        }
        rs = std::min(rs, block_end - r);
        for (int k = 1; k < rs; ++k) {
          bool free = true;
          for (int q = 0; q < cs; ++q) free = free && taken(r + k, c + q) == -1;
          if (!free) {
            rs = k;
            break;
          }
        }
      }
      Cell cell;
      cell.row = r;
      cell.col = c;
      cell.rowspan = rs;
      cell.colspan = cs;
      cell.is_header = r < header;
      if (chance(rng, cfg.number_prob)) {
        cell.text = random_number_text(rng);
        if (static_cast<int>(cell.text.size()) > cfg.max_text) cell.text = random_text(rng, cfg.min_text, cfg.max_text);
      } else {
        cell.text = random_text(rng, cfg.min_text, cfg.max_text);
      }
      taken.block(r, c, rs, cs).setConstant(static_cast<int>(cells.size()));
      cells.push_back(std::move(cell));
    }
  }
  return make_table(rows, cols, std::move(cells));
}

// ---------------------------------------------------------------------------
// Cell analysis

float estimate_bg(const Plane& image, const BBox& box) {
  const int x1 = std::clamp(box.x1, 0, static_cast<int>(image.cols()));
  const int x2 = std::clamp(box.x2, 0, static_cast<int>(image.cols()));
  const int y1 = std::clamp(box.y1, 0, static_cast<int>(image.rows()));
  const int y2 = std::clamp(box.y2, 0, static_cast<int>(image.rows()));
  if (x1 >= x2 || y1 >= y2) throw Error(ErrorCode::kUnusable, "box has no pixels");
  std::map<int, int> hist;
  for (int y = y1; y < y2; ++y) {
    for (int x = x1; x < x2; ++x) ++hist[static_cast<int>(std::lround(image(y, x)))];
  }
  // Highest count wins; ties go to the brighter shade.
  int best = 0;
  int count = -1;
  for (const auto& [shade, n] : hist) {
    if (n >= count) {
      best = shade;
      count = n;
    }
  }
  return static_cast<float>(best);
}

EdgeThickness edge_thickness(const Plane& image, const BBox& box, float bg, float tol) {
  if (box.width() <= 0 || box.height() <= 0) throw Error(ErrorCode::kUnusable, "box has no pixels");
  const int ym = box.y1 + (box.height() - 1) / 2;
  const int xm = box.x1 + (box.width() - 1) / 2;
  auto ink = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= image.rows() || x >= image.cols()) return false;
    return std::abs(image(y, x) - bg) > tol;
  };
  EdgeThickness t;
  while (t.top < box.height() && ink(box.y1 + t.top, xm)) ++t.top;
  while (t.bottom < box.height() && ink(box.y2 - 1 - t.bottom, xm)) ++t.bottom;
  while (t.left < box.width() && ink(ym, box.x1 + t.left)) ++t.left;
  while (t.right < box.width() && ink(ym, box.x2 - 1 - t.right)) ++t.right;
  return t;
}

BBox inner_region(const BBox& box, const EdgeThickness& t, int margin) {
  BBox in{box.x1 + t.left + margin, box.y1 + t.top + margin, box.x2 - t.right - margin, box.y2 - t.bottom - margin};
  if (in.x1 >= in.x2 || in.y1 >= in.y2) throw Error(ErrorCode::kUnusable, "cell has no usable inner region");
  return in;
}

FitResult fit_text(std::string_view text, const BBox& inner, int max_scale) {
  FitResult r;
  r.text = std::string(text);
  for (int s = std::max(1, max_scale); s >= 1; --s) {
    if (text_width(text, s) <= inner.width() && text_height(s) <= inner.height()) {
      r.scale = s;
      return r;
    }
  }
  r.scale = 1;
  if (text_height(1) > inner.height()) {
    r.text.clear();
    r.truncated = !text.empty();
    return r;
  }
  r.truncated = true;
  std::string body(text);
  while (!body.empty()) {
    body.pop_back();
    if (text_width(body + "~", 1) <= inner.width()) {
      r.text = body + "~";
      return r;
    }
  }
  r.text = text_width("~", 1) <= inner.width() ? "~" : "";
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

// Distributes `extra` pixels over sizes proportionally (remainder to the front).
void stretch(std::vector<int>& sizes, int extra) {
  if (extra <= 0 || sizes.empty()) return;
  long total = 0;
  for (int s : sizes) total += s;
  int given = 0;
  for (auto& s : sizes) {
    const int add = static_cast<int>((static_cast<long>(extra) * s) / total);
    s += add;
    given += add;
  }
  for (std::size_t i = 0; given < extra; i = (i + 1) % sizes.size(), ++given) ++sizes[i];
}

// Removes pixels while keeping each size >= floor.
bool shrink(std::vector<int>& sizes, int excess, int floor) {
  while (excess > 0) {
    auto it = std::max_element(sizes.begin(), sizes.end());
    if (*it <= floor) return false;
    --*it;
    --excess;
  }
  return true;
}

std::vector<int> natural_sizes(const Table& t, bool rows, int base, int scale) {
  const int n = rows ? t.rows : t.cols;
  std::vector<int> size(static_cast<std::size_t>(n), base);
  auto need = [&](const Cell& c) { return rows ? base - 0 : base + text_width(c.text, scale); };
  if (rows) return std::vector<int>(static_cast<std::size_t>(n), base + text_height(scale));
  for (const auto& c : t.cells) {
    if (c.colspan == 1) size[c.col] = std::max(size[c.col], need(c));
  }
  for (const auto& c : t.cells) {
    if (c.colspan == 1) continue;
    int have = 0;
    for (int q = c.col; q <= c.last_col(); ++q) have += size[q];
    const int want = need(c);
    if (want > have) size[c.last_col()] += want - have;
  }
  return size;
}

std::vector<int> lines_from(int start, const std::vector<int>& sizes) {
  std::vector<int> lines{start};
  for (int s : sizes) lines.push_back(lines.back() + s);
  return lines;
}

}  // namespace

Rendered render_sample(const Table& table, const RenderStyle& style, std::mt19937_64& rng, int unit) {
  validate(table);
  const int t = std::max(1, style.line_thickness);
  const int s = std::max(1, style.scale);
  float bg = style.background;
  float ink = style.ink;
  if (style.shade_jitter > 0) {
    std::uniform_real_distribution<float> j(0.0f, style.shade_jitter);
    bg = std::round(std::clamp(bg - j(rng), 0.0f, 255.0f));
    ink = std::round(std::clamp(ink + j(rng), 0.0f, 255.0f));
  }
  // Frame = ruling + inner margin + pad + text + pad + inner margin.
  const int col_base = t + 2 * (1 + style.pad_x);
  const int row_base = t + 2 * (1 + style.pad_y);
  std::vector<int> col_w = natural_sizes(table, false, col_base, s);
  std::vector<int> row_h = natural_sizes(table, true, row_base, s);

  int canvas_h = style.canvas_h;
  int canvas_w = style.canvas_w;
  auto sum = [](const std::vector<int>& v) {
    int a = 0;
    for (int x : v) a += x;
    return a;
  };
  if (canvas_h > 0 && canvas_w > 0) {
    const int avail_w = canvas_w - 2 * style.margin - t;
    const int avail_h = canvas_h - 2 * style.margin - t;
    if (sum(col_w) > avail_w && !shrink(col_w, sum(col_w) - avail_w, col_base + 1)) {
      throw Error(ErrorCode::kUnusable, "table columns do not fit the canvas");
    }
    if (sum(row_h) > avail_h && !shrink(row_h, sum(row_h) - avail_h, t + 2 + text_height(1))) {
      throw Error(ErrorCode::kUnusable, "table rows do not fit the canvas");
    }
    if (style.fill_canvas) {
      stretch(col_w, avail_w - sum(col_w));
      stretch(row_h, avail_h - sum(row_h));
    }
  } else {
    canvas_w = sum(col_w) + 2 * style.margin + t;
    canvas_h = sum(row_h) + 2 * style.margin + t;
  }

  Rendered out;
  out.col_lines = lines_from(style.margin, col_w);
  out.row_lines = lines_from(style.margin, row_h);
  out.image = Image(canvas_h, canvas_w, 1, bg);
  Plane& img = out.image.gray();

  const OwnerGrid owners = owner_grid(table);
  auto hline = [&](int y, int xa, int xb) {
    img.block(y, xa, t, xb - xa) .setConstant(style.line_shade == 0.0f ? ink : style.line_shade);
  };
  auto vline = [&](int x, int ya, int yb) {
    img.block(ya, x, yb - ya, t).setConstant(style.line_shade == 0.0f ? ink : style.line_shade);
  };
  const auto& rl = out.row_lines;
  const auto& cl = out.col_lines;
  if (style.draw_rulings) {
    hline(rl.front(), cl.front(), cl.back() + t);
    hline(rl.back(), cl.front(), cl.back() + t);
    vline(cl.front(), rl.front(), rl.back() + t);
    vline(cl.back(), rl.front(), rl.back() + t);
    for (int r = 0; r + 1 < table.rows; ++r) {
      for (int c = 0; c < table.cols; ++c) {
        if (owners(r, c) != owners(r + 1, c)) hline(rl[r + 1], cl[c], cl[c + 1] + t);
      }
    }
    for (int r = 0; r < table.rows; ++r) {
      for (int c = 0; c + 1 < table.cols; ++c) {
        if (owners(r, c) != owners(r, c + 1)) vline(cl[c + 1], rl[r], rl[r + 1] + t);
      }
    }
  }

  out.table = table;
  out.table.image_size = ImageSize{canvas_h, canvas_w};
  Align align = style.align;
  for (auto& cell : out.table.cells) {
    const BBox frame{cl[cell.col], rl[cell.row], cl[cell.last_col() + 1], rl[cell.last_row() + 1]};
    out.frames.push_back(frame);
    // In-place edit of the cell: background, border thickness, safe region,
    // wipe, fit, render.
    const float cell_bg = estimate_bg(img, frame);
    const EdgeThickness edges = edge_thickness(img, frame, cell_bg);
    BBox inner;
    try {
      inner = inner_region(frame, edges, 1);
    } catch (const Error&) {
      out.log.push_back("cell " + std::to_string(cell.id) + ": too small, left empty");
      cell.text.clear();
      cell.bbox = BBox{frame.x1, frame.y1, frame.x1, frame.y1};
      continue;
    }
    img.block(inner.y1, inner.x1, inner.height(), inner.width()).setConstant(cell_bg);
    BBox safe{inner.x1 + style.pad_x, inner.y1 + style.pad_y, inner.x2 - style.pad_x, inner.y2 - style.pad_y};
    if (safe.x1 >= safe.x2 || safe.y1 >= safe.y2) safe = inner;
    const FitResult fit = fit_text(cell.text, safe, s);
    if (fit.truncated) out.log.push_back("cell " + std::to_string(cell.id) + ": text truncated to '" + fit.text + "'");
    cell.text = fit.text;
    const int w = text_width(fit.text, fit.scale);
    const int h = text_height(fit.scale);
    Align a = align == Align::kRandom ? static_cast<Align>(uniform(rng, 0, 2)) : align;
    int x = safe.x1;
    if (a == Align::kCenter) x = safe.x1 + (safe.width() - w) / 2;
    if (a == Align::kRight) x = safe.x2 - w;
    const int y = safe.y1 + std::max(0, (safe.height() - h) / 2);
    if (fit.text.empty()) {
      cell.bbox = BBox{x, y, x, y};
      continue;
    }
    draw_text(img, fit.text, x, y, fit.scale, ink);
    cell.bbox = BBox{x, y, x + w, y + h};
  }
  out.markup = emit_markup(out.table, true, unit);
  return out;
}

Table frame_table(const Rendered& r) {
  Table t = r.table;
  for (std::size_t i = 0; i < t.cells.size(); ++i) t.cells[i].bbox = r.frames.at(i);
  return t;
}

// ---------------------------------------------------------------------------
// Datasets

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GeneratedSample generate_sample(const DatasetConfig& config, std::uint64_t index) {
  GeneratedSample g;
  g.seed = derive_seed(config.seed, index);
  Rng rng(g.seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Table base = random_table(rng, config.tables);
    const AugmentResult aug =
        augment(base, config.augment, rng, std::max(config.tables.max_rows + 2, 2), std::max(config.tables.max_cols + 2, 2));
    try {
      g.rendered = render_sample(aug.table, config.style, rng, config.unit);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnusable) throw;
      continue;
    }
    g.rendered.log.insert(g.rendered.log.begin(), aug.log.begin(), aug.log.end());
    g.targets = build_targets(frame_table(g.rendered), config.raster);
    return g;
  }
  throw Error(ErrorCode::kUnusable, "could not fit a table on the canvas after 64 attempts");
}

std::vector<Annotation> make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "targets");
  std::vector<Annotation> records;
  for (int i = 0; i < config.count; ++i) {
    const GeneratedSample g = generate_sample(config, static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "%06d", i);
    Annotation a;
    a.image = std::string("images/") + name + ".pgm";
    a.targets = std::string("targets/") + name + ".tsqt";
    write_pnm(out_dir / a.image, g.rendered.image);
    write_targets(out_dir / a.targets, g.targets);
    a.markup = g.rendered.markup;
    a.table = g.rendered.table;
    a.frames = g.rendered.frames;
    a.seed = g.seed;
    const double cut = 1.0 - config.val_fraction;
    a.split = (i + 0.5) / std::max(1, config.count) > cut ? "val" : "train";
    records.push_back(std::move(a));
  }
  write_manifest(out_dir / "manifest.jsonl", records);
  return records;
}

}  // namespace tableseq
