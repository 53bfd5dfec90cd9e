// SPDX-License-Identifier: Apache-2.0
//
// Synthetic (image, markup, targets) samples: random logical tables,
// rectangularity-preserving structure augmentation, and in-place cell
// rendering with a deterministic 5x7 block-glyph font.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tableseq/annotation.hpp"
#include "tableseq/image.hpp"
#include "tableseq/struct_targets.hpp"
#include "tableseq/table.hpp"

namespace tableseq {

// ---------------------------------------------------------------------------
// Glyphs

inline constexpr int kGlyphW = 5;
inline constexpr int kGlyphH = 7;

/// Column-major bitmap (bit r of column c set = ink at row r). Characters
/// outside printable ASCII map to '?'.
const std::array<std::uint8_t, kGlyphW>& glyph(unsigned char ch);

/// Layout extent of `text` at integer scale s: width n*6s - s, height 7s
/// (zero width for empty text).
int text_width(std::string_view text, int scale);
int text_height(int scale);

/// Draws glyphs with their top-left layout corner at (x, y).
void draw_text(Plane& image, std::string_view text, int x, int y, int scale, float ink);

// ---------------------------------------------------------------------------
// Random logical tables

struct TableGenConfig {
  int min_rows = 1;
  int max_rows = 4;
  int min_cols = 1;
  int max_cols = 4;
  int max_span = 2;
  /// Probability that a free slot starts a spanning cell.
  double span_prob = 0.2;
  double header_prob = 0.5;
  int min_text = 1;
  int max_text = 3;
  /// Fraction of cells that get a formatted number instead of a word.
  double number_prob = 0.3;
};

std::string random_text(std::mt19937_64& rng, int min_len, int max_len);
std::string random_number_text(std::mt19937_64& rng);
Table random_table(std::mt19937_64& rng, const TableGenConfig& config);

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentKind {
  kSpanMerge,
  kSpanSplit,
  kHeaderNest,
  kColumnGroup,
  kRowInsert,
  kRowDelete,
  kColInsert,
  kColDelete,
  kLayoutJitter,
};

const char* augment_name(AugmentKind kind);

struct AugmentOp {
  AugmentKind kind = AugmentKind::kSpanMerge;
  double probability = 1.0;
  /// Pixel radius for layout jitter; text length bound for new cells.
  int magnitude = 2;
};

/// Default profile (merge .3, split .2, header_nest .2, column_group .15,
/// insert/delete .1 each, jitter .3).
std::vector<AugmentOp> default_augment_profile();
/// Named profiles: "none", "default", "heavy".
std::vector<AugmentOp> augment_profile(const std::string& name);

struct AugmentResult {
  Table table;
  std::vector<std::string> log;
};

/// Applies each op with its probability, in order. Ops that cannot be applied
/// without breaking rectangularity are skipped and logged. New cells created
/// by insertion-type ops carry no box; the renderer assigns one.
AugmentResult augment(const Table& table, const std::vector<AugmentOp>& ops, std::mt19937_64& rng,
                      int max_rows = 20, int max_cols = 20);

/// Forces a single op (probability ignored).
AugmentResult apply_op(const Table& table, const AugmentOp& op, std::mt19937_64& rng, int max_rows = 20,
                       int max_cols = 20);

// ---------------------------------------------------------------------------
// Cell analysis (in-place editing helpers)

/// Modal shade of the pixels on the box border.
float estimate_bg(const Plane& image, const BBox& box);

struct EdgeThickness {
  int top = 0;
  int right = 0;
  int bottom = 0;
  int left = 0;

  friend bool operator==(const EdgeThickness&, const EdgeThickness&) = default;
};

/// Run length of non-background pixels inward from each edge (measured on
/// the middle line of the box).
EdgeThickness edge_thickness(const Plane& image, const BBox& box, float bg, float tol = 8.0f);

/// Box shrunk by thickness + `margin` on each side. Throws Unusable when empty.
BBox inner_region(const BBox& box, const EdgeThickness& t, int margin = 1);

struct FitResult {
  int scale = 1;
  std::string text;
  bool truncated = false;
};

/// Largest integer scale (<= max_scale) whose extent fits `inner`; at scale 1
/// the text is truncated with a trailing '~' until it fits.
FitResult fit_text(std::string_view text, const BBox& inner, int max_scale = 1);

// ---------------------------------------------------------------------------
// Rendering

enum class Align { kLeft, kCenter, kRight, kRandom };

struct RenderStyle {
  int scale = 1;
  int line_thickness = 1;
  float background = 255.0f;
  float ink = 0.0f;
  float line_shade = 0.0f;
  int pad_x = 2;
  int pad_y = 1;
  int margin = 2;
  Align align = Align::kRandom;
  /// Fixed canvas (0 = fit to the table).
  int canvas_h = 0;
  int canvas_w = 0;
  /// Stretch the grid to fill a fixed canvas.
  bool fill_canvas = true;
  /// Grayscale photometric jitter: bg in [bg - j, bg], ink in [ink, ink + j].
  float shade_jitter = 0.0f;
  bool draw_rulings = true;
};

struct Rendered {
  Image image;
  Table table;                // boxes = tight rendered text extents, image_size set
  std::vector<BBox> frames;   // per-cell grid frames [line, next line)
  std::vector<int> row_lines; // R+1 ruling positions
  std::vector<int> col_lines; // C+1 ruling positions
  std::string markup;
  std::vector<std::string> log;
};

/// Renders rulings and cell text. Throws Unusable if the grid does not fit.
Rendered render_sample(const Table& table, const RenderStyle& style, std::mt19937_64& rng, int unit = 5);

/// Table whose boxes are the cell frames, for structure targets.
Table frame_table(const Rendered& r);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
  int count = 0;
  std::uint64_t seed = 0;
  TableGenConfig tables;
  std::vector<AugmentOp> augment;
  RenderStyle style;
  int unit = 5;
  RasterConfig raster;
  /// Fraction written with split "val" (the rest "train").
  double val_fraction = 0.0;
};

struct GeneratedSample {
  Rendered rendered;
  StructMaps targets;
  std::uint64_t seed = 0;
};

/// Per-sample seed: splitmix64 of (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

GeneratedSample generate_sample(const DatasetConfig& config, std::uint64_t index);

/// Writes images/NNNNNN.pgm, targets/NNNNNN.tsqt and manifest.jsonl.
std::vector<Annotation> make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

}  // namespace tableseq
