// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <set>

#include "tableseq/error.hpp"
#include "tableseq/synthgen.hpp"

namespace tableseq {

const char* augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kSpanMerge: return "span_merge";
    case AugmentKind::kSpanSplit: return "span_split";
    case AugmentKind::kHeaderNest: return "header_nest";
    case AugmentKind::kColumnGroup: return "column_group";
    case AugmentKind::kRowInsert: return "row_insert";
    case AugmentKind::kRowDelete: return "row_delete";
    case AugmentKind::kColInsert: return "col_insert";
    case AugmentKind::kColDelete: return "col_delete";
    case AugmentKind::kLayoutJitter: return "layout_jitter";
  }
  return "?";
}

std::vector<AugmentOp> default_augment_profile() {
  return {
      {AugmentKind::kSpanMerge, 0.3, 2},   {AugmentKind::kSpanSplit, 0.2, 2},  {AugmentKind::kHeaderNest, 0.2, 2},
      {AugmentKind::kColumnGroup, 0.15, 2}, {AugmentKind::kRowInsert, 0.1, 2},  {AugmentKind::kRowDelete, 0.1, 2},
      {AugmentKind::kColInsert, 0.1, 2},   {AugmentKind::kColDelete, 0.1, 2},  {AugmentKind::kLayoutJitter, 0.3, 2},
  };
}

std::vector<AugmentOp> augment_profile(const std::string& name) {
  if (name == "none") return {};
  if (name == "default") return default_augment_profile();
  if (name == "heavy") {
    auto ops = default_augment_profile();
    for (auto& op : ops) op.probability = std::min(1.0, op.probability * 2.5);
    return ops;
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown augmentation profile '" + name + "'");
}

namespace {

using Rng = std::mt19937_64;

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string new_text(Rng& rng, int max_len) { return random_text(rng, 1, std::max(1, max_len)); }

struct Skip {
  std::string why;
};

// Column boundaries j (1..C-1) that no cell anchored in `row` crosses.
std::vector<int> clean_cuts(const Table& t, int row) {
  const OwnerGrid o = owner_grid(t);
  std::vector<int> cuts;
  for (int j = 1; j < t.cols; ++j) {
    if (o(row, j - 1) != o(row, j)) cuts.push_back(j);
  }
  return cuts;
}

Table span_merge(const Table& t, Rng& rng, std::string& note) {
  struct Cand {
    int a;
    int b;
    bool horizontal;
  };
  std::vector<Cand> cands;
  for (const auto& a : t.cells) {
    for (const auto& b : t.cells) {
      if (a.is_header != b.is_header) continue;
      if (b.row == a.row && b.rowspan == a.rowspan && b.col == a.last_col() + 1 &&
          a.colspan + b.colspan <= 20) {
        cands.push_back({a.id, b.id, true});
      }
      if (b.col == a.col && b.colspan == a.colspan && b.row == a.last_row() + 1 && a.rowspan + b.rowspan <= 20) {
        cands.push_back({a.id, b.id, false});
      }
    }
  }
  if (cands.empty()) throw Skip{"no mergeable neighbours"};
  const Cand c = pick(cands, rng);
  std::vector<Cell> cells = t.cells;
  Cell& a = cells[c.a];
  const Cell& b = t.cells[c.b];
  if (c.horizontal) {
    a.colspan += b.colspan;
  } else {
    a.rowspan += b.rowspan;
  }
  if (a.bbox && b.bbox) {
    a.bbox = BBox{std::min(a.bbox->x1, b.bbox->x1), std::min(a.bbox->y1, b.bbox->y1),
                  std::max(a.bbox->x2, b.bbox->x2), std::max(a.bbox->y2, b.bbox->y2)};
  } else {
    a.bbox.reset();
  }
  cells.erase(cells.begin() + c.b);
  note = "cell " + std::to_string(c.b) + " merged into " + std::to_string(c.a) + (c.horizontal ? " (right)" : " (down)");
  return make_table(t.rows, t.cols, std::move(cells));
}

Table span_split(const Table& t, Rng& rng, int text_len, std::string& note) {
  std::vector<int> cands;
  for (const auto& c : t.cells) {
    if (c.rowspan > 1 || c.colspan > 1) cands.push_back(c.id);
  }
  if (cands.empty()) throw Skip{"no spanning cell"};
  const int id = pick(cands, rng);
  std::vector<Cell> cells = t.cells;
  Cell& a = cells[id];
  const bool split_cols = a.colspan > 1 && (a.rowspan == 1 || uniform(rng, 0, 1) == 0);
  Cell b;
  b.is_header = a.is_header;
  b.text = new_text(rng, text_len);
  if (split_cols) {
    a.colspan -= 1;
    b.row = a.row;
    b.col = a.last_col() + 1;
    b.rowspan = a.rowspan;
  } else {
    a.rowspan -= 1;
    b.row = a.last_row() + 1;
    b.col = a.col;
    b.colspan = a.colspan;
  }
  cells.push_back(std::move(b));
  note = "split cell " + std::to_string(id) + (split_cols ? " by column" : " by row");
  return make_table(t.rows, t.cols, std::move(cells));
}

Table header_nest(const Table& t, Rng& rng, int text_len, int max_rows, std::string& note) {
  if (t.header_rows() > 1) throw Skip{"header already nested"};
  if (t.rows + 1 > max_rows) throw Skip{"row limit"};
  std::vector<int> cuts = clean_cuts(t, 0);
  std::vector<int> chosen{0};
  for (int j : cuts) {
    if (uniform(rng, 0, 1)) chosen.push_back(j);
  }
  chosen.push_back(t.cols);
  std::vector<Cell> cells = t.cells;
  for (auto& c : cells) c.row += 1;
  for (std::size_t g = 0; g + 1 < chosen.size(); ++g) {
    Cell n;
    n.row = 0;
    n.col = chosen[g];
    n.colspan = chosen[g + 1] - chosen[g];
    n.is_header = true;
    n.text = new_text(rng, text_len);
    cells.push_back(std::move(n));
  }
  note = "added parent header row with " + std::to_string(chosen.size() - 1) + " group(s)";
  return make_table(t.rows + 1, t.cols, std::move(cells));
}

Table column_group(const Table& t, Rng& rng, int text_len, int max_rows, std::string& note) {
  if (t.cols < 2) throw Skip{"needs two columns"};
  if (t.rows + 1 > max_rows) throw Skip{"row limit"};
  std::vector<Cell> cells = t.cells;
  if (t.header_rows() == 0) {
    for (const auto& c : cells) {
      if (c.row == 0 && c.rowspan != 1) throw Skip{"first row cannot become a header"};
    }
    for (auto& c : cells) c.is_header = c.row == 0;
  }
  std::vector<int> bounds{0};
  for (int j : clean_cuts(t, 0)) bounds.push_back(j);
  bounds.push_back(t.cols);
  std::vector<std::pair<int, int>> ranges;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    for (std::size_t k = i + 1; k < bounds.size(); ++k) {
      if (bounds[k] - bounds[i] >= 2) ranges.emplace_back(bounds[i], bounds[k]);
    }
  }
  if (ranges.empty()) throw Skip{"no clean column range"};
  const auto [a, b] = pick(ranges, rng);
  for (auto& c : cells) {
    if (c.row == 0 && (c.last_col() < a || c.col >= b)) {
      c.rowspan += 1;  // stays anchored in the new top row
    } else {
      c.row += 1;
    }
  }
  Cell label;
  label.row = 0;
  label.col = a;
  label.colspan = b - a;
  label.is_header = true;
  label.text = new_text(rng, text_len);
  cells.push_back(std::move(label));
  note = "group label over columns " + std::to_string(a) + ".." + std::to_string(b - 1);
  return make_table(t.rows + 1, t.cols, std::move(cells));
}

Table row_insert(const Table& t, Rng& rng, int text_len, int max_rows, std::string& note) {
  if (t.rows + 1 > max_rows) throw Skip{"row limit"};
  const int h = t.header_rows();
  const int i = uniform(rng, h, t.rows);
  std::vector<Cell> cells = t.cells;
  std::vector<bool> covered(static_cast<std::size_t>(t.cols), false);
  for (auto& c : cells) {
    if (c.row < i && c.last_row() >= i) {
      c.rowspan += 1;
      for (int q = c.col; q <= c.last_col(); ++q) covered[q] = true;
    } else if (c.row >= i) {
      c.row += 1;
    }
  }
  for (int q = 0; q < t.cols; ++q) {
    if (covered[q]) continue;
    Cell n;
    n.row = i;
    n.col = q;
    n.text = new_text(rng, text_len);
    cells.push_back(std::move(n));
  }
  note = "inserted row at " + std::to_string(i);
  return make_table(t.rows + 1, t.cols, std::move(cells));
}

Table row_delete(const Table& t, Rng& rng, std::string& note) {
  const int h = t.header_rows();
  if (t.rows - h < 2) throw Skip{"too few body rows"};
  const int i = uniform(rng, h, t.rows - 1);
  std::vector<Cell> cells;
  for (Cell c : t.cells) {
    if (c.row <= i && c.last_row() >= i) {
      if (c.rowspan == 1) continue;
      c.rowspan -= 1;
    } else if (c.row > i) {
      c.row -= 1;
    }
    cells.push_back(std::move(c));
  }
  note = "deleted row " + std::to_string(i);
  return make_table(t.rows - 1, t.cols, std::move(cells));
}

Table col_insert(const Table& t, Rng& rng, int text_len, int max_cols, std::string& note) {
  if (t.cols + 1 > max_cols) throw Skip{"column limit"};
  const int h = t.header_rows();
  const int j = uniform(rng, 0, t.cols);
  std::vector<Cell> cells = t.cells;
  std::vector<bool> covered(static_cast<std::size_t>(t.rows), false);
  for (auto& c : cells) {
    if (c.col < j && c.last_col() >= j) {
      c.colspan += 1;
      for (int r = c.row; r <= c.last_row(); ++r) covered[r] = true;
    } else if (c.col >= j) {
      c.col += 1;
    }
  }
  for (int r = 0; r < t.rows; ++r) {
    if (covered[r]) continue;
    Cell n;
    n.row = r;
    n.col = j;
    n.is_header = r < h;
    n.text = new_text(rng, text_len);
    cells.push_back(std::move(n));
  }
  note = "inserted column at " + std::to_string(j);
  return make_table(t.rows, t.cols + 1, std::move(cells));
}

Table col_delete(const Table& t, Rng& rng, std::string& note) {
  if (t.cols < 2) throw Skip{"single column"};
  const int j = uniform(rng, 0, t.cols - 1);
  std::vector<Cell> cells;
  for (Cell c : t.cells) {
    if (c.col <= j && c.last_col() >= j) {
      if (c.colspan == 1) continue;
      c.colspan -= 1;
    } else if (c.col > j) {
      c.col -= 1;
    }
    cells.push_back(std::move(c));
  }
  note = "deleted column " + std::to_string(j);
  return make_table(t.rows, t.cols - 1, std::move(cells));
}

Table layout_jitter(const Table& t, Rng& rng, int radius, std::string& note) {
  Table out = t;
  int moved = 0;
  for (auto& c : out.cells) {
    if (!c.bbox) continue;
    const int dx = std::max(uniform(rng, -radius, radius), -c.bbox->x1);
    const int dy = std::max(uniform(rng, -radius, radius), -c.bbox->y1);
    c.bbox = BBox{c.bbox->x1 + dx, c.bbox->y1 + dy, c.bbox->x2 + dx, c.bbox->y2 + dy};
    ++moved;
  }
  if (!moved) throw Skip{"no boxes to jitter"};
  note = "jittered " + std::to_string(moved) + " box(es)";
  return out;
}

}  // namespace

AugmentResult apply_op(const Table& table, const AugmentOp& op, std::mt19937_64& rng, int max_rows, int max_cols) {
  AugmentResult res;
  std::string note;
  const int text_len = std::max(1, op.magnitude);
  try {
    switch (op.kind) {
      case AugmentKind::kSpanMerge: res.table = span_merge(table, rng, note); break;
      case AugmentKind::kSpanSplit: res.table = span_split(table, rng, text_len, note); break;
      case AugmentKind::kHeaderNest: res.table = header_nest(table, rng, text_len, max_rows, note); break;
      case AugmentKind::kColumnGroup: res.table = column_group(table, rng, text_len, max_rows, note); break;
      case AugmentKind::kRowInsert: res.table = row_insert(table, rng, text_len, max_rows, note); break;
      case AugmentKind::kRowDelete: res.table = row_delete(table, rng, note); break;
      case AugmentKind::kColInsert: res.table = col_insert(table, rng, text_len, max_cols, note); break;
      case AugmentKind::kColDelete: res.table = col_delete(table, rng, note); break;
      case AugmentKind::kLayoutJitter: res.table = layout_jitter(table, rng, op.magnitude, note); break;
    }
    res.table.image_size = table.image_size;
    res.log.push_back(std::string(augment_name(op.kind)) + ": " + note);
  } catch (const Skip& s) {
    res.table = table;
    res.log.push_back(std::string(augment_name(op.kind)) + ": skipped (" + s.why + ")");
  } catch (const Error& e) {
    res.table = table;
    res.log.push_back(std::string(augment_name(op.kind)) + ": skipped (" + e.what() + ")");
  }
  return res;
}

AugmentResult augment(const Table& table, const std::vector<AugmentOp>& ops, std::mt19937_64& rng, int max_rows,
                      int max_cols) {
  AugmentResult res{table, {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& op : ops) {
    if (u(rng) >= op.probability) continue;
    AugmentResult step = apply_op(res.table, op, rng, max_rows, max_cols);
    res.table = std::move(step.table);
    res.log.insert(res.log.end(), step.log.begin(), step.log.end());
  }
  return res;
}

}  // namespace tableseq
