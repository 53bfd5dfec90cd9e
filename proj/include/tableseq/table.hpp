// SPDX-License-Identifier: Apache-2.0
//
// Logical table model: cells with spans, text and pixel boxes, plus the
// owner-grid expansion, adjacency graph and index queries built on it.
#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace tableseq {

/// Pixel box. Coordinates follow the continuous convention: the box covers
/// pixels x1 <= x < x2, y1 <= y < y2, and its area is (x2-x1)*(y2-y1).
struct BBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  bool valid() const { return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Cell {
  int id = 0;
  int row = 0;
  int col = 0;
  int rowspan = 1;
  int colspan = 1;
  std::string text;
  std::optional<BBox> bbox;
  bool is_header = false;

  int last_row() const { return row + rowspan - 1; }
  int last_col() const { return col + colspan - 1; }

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct ImageSize {
  int height = 0;
  int width = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// A rectangular table. Cells are stored in document order (row-major by
/// anchor) and cell ids equal their index in `cells`.
struct Table {
  int rows = 0;
  int cols = 0;
  std::vector<Cell> cells;
  std::optional<ImageSize> image_size;

  /// Number of leading rows that belong to the header section.
  int header_rows() const;
  bool has_all_boxes() const;

  friend bool operator==(const Table&, const Table&) = default;
};

using OwnerGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Direction { kHorizontal, kVertical };

/// Ordered pair of neighbouring cells: `a` is left of (or above) `b`.
struct Adjacency {
  int a = 0;
  int b = 0;
  Direction direction = Direction::kHorizontal;

  friend auto operator<=>(const Adjacency&, const Adjacency&) = default;
};

/// Sorted, duplicate-free list of adjacency pairs.
using AdjacencyGraph = std::vector<Adjacency>;

/// Throws NonRectangular if the cells do not tile the grid exactly once, or
/// if ids/order/header placement are inconsistent.
void validate(const Table& table);

/// Re-sorts cells into document order, reassigns ids and recomputes header
/// flags consistency. Used by code that edits tables structurally.
void canonicalize(Table& table);

OwnerGrid owner_grid(const Table& table);
AdjacencyGraph adjacency(const Table& table);

/// Builds a table from explicit cell rectangles; cells are re-sorted into
/// document order and renumbered. Validates the result.
Table make_table(int rows, int cols, std::vector<Cell> cells);

/// Swaps rows and columns (and box axes). Header flags are cleared.
Table transpose(const Table& table);

// ---------------------------------------------------------------------------
// Markup

struct MarkupOptions {
  /// Pixels per coordinate step used to scale `<x_k>/<y_k>` markers.
  int unit = 5;
  std::optional<ImageSize> image_size;
};

Table parse_markup(std::string_view markup, const MarkupOptions& options = {});
std::string emit_markup(const Table& table, bool with_coords, int unit = 5);

std::string escape_text(std::string_view text);

// ---------------------------------------------------------------------------
// Index queries

enum class QueryPolicy {
  /// Every slot of a merged cell reports the owning cell's text.
  kOwnerText,
  /// Only the anchor (top-left) slot reports text; other slots are empty.
  kAnchorOnly,
};

std::string query_cell(const Table& table, int i, int j,
                       QueryPolicy policy = QueryPolicy::kOwnerText);
std::vector<std::string> query_row(const Table& table, int i);
std::vector<std::string> query_col(const Table& table, int j);

}  // namespace tableseq
