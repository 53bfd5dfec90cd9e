// SPDX-License-Identifier: Apache-2.0
#include "tableseq/table.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <variant>

#include "tableseq/error.hpp"
#include "tableseq/quantize.hpp"

namespace tableseq {

int Table::header_rows() const {
  int h = 0;
  for (const auto& c : cells) {
    if (c.is_header) h = std::max(h, c.last_row() + 1);
  }
  return h;
}

bool Table::has_all_boxes() const {
  return std::all_of(cells.begin(), cells.end(), [](const Cell& c) { return c.bbox.has_value(); });
}

namespace {

[[noreturn]] void non_rect(const std::string& what) { throw Error(ErrorCode::kNonRectangular, what); }

bool document_order(const Cell& a, const Cell& b) {
  return a.row != b.row ? a.row < b.row : a.col < b.col;
}

}  // namespace

void validate(const Table& t) {
  if (t.rows < 1 || t.cols < 1) non_rect("table needs at least one row and one column");
  OwnerGrid grid = OwnerGrid::Constant(t.rows, t.cols, -1);
  long area = 0;
  for (std::size_t k = 0; k < t.cells.size(); ++k) {
    const Cell& c = t.cells[k];
    if (c.id != static_cast<int>(k)) non_rect("cell ids must equal document-order index");
    if (k > 0 && !document_order(t.cells[k - 1], c)) non_rect("cells are not in document order");
    if (c.rowspan < 1 || c.colspan < 1) non_rect("span must be >= 1");
    if (c.row < 0 || c.col < 0 || c.last_row() >= t.rows || c.last_col() >= t.cols) {
      non_rect("cell " + std::to_string(c.id) + " leaves the grid");
    }
    for (int r = c.row; r <= c.last_row(); ++r) {
      for (int q = c.col; q <= c.last_col(); ++q) {
        if (grid(r, q) != -1) non_rect("cells overlap at (" + std::to_string(r) + "," + std::to_string(q) + ")");
        grid(r, q) = c.id;
      }
    }
    area += static_cast<long>(c.rowspan) * c.colspan;
  }
  if (area != static_cast<long>(t.rows) * t.cols) non_rect("cells leave holes in the grid");
  const int h = t.header_rows();
  for (const auto& c : t.cells) {
    if (c.is_header != (c.row < h)) non_rect("header cells must form a leading block of rows");
  }
}

void canonicalize(Table& t) {
  std::stable_sort(t.cells.begin(), t.cells.end(), document_order);
  for (std::size_t k = 0; k < t.cells.size(); ++k) t.cells[k].id = static_cast<int>(k);
}

Table make_table(int rows, int cols, std::vector<Cell> cells) {
  Table t;
  t.rows = rows;
  t.cols = cols;
  t.cells = std::move(cells);
  canonicalize(t);
  validate(t);
  return t;
}

OwnerGrid owner_grid(const Table& t) {
  OwnerGrid grid(t.rows, t.cols);
  for (const auto& c : t.cells) {
    grid.block(c.row, c.col, c.rowspan, c.colspan).setConstant(c.id);
  }
  return grid;
}

AdjacencyGraph adjacency(const Table& t) {
  const OwnerGrid o = owner_grid(t);
  std::set<Adjacency> pairs;
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      if (c + 1 < t.cols && o(r, c) != o(r, c + 1)) pairs.insert({o(r, c), o(r, c + 1), Direction::kHorizontal});
      if (r + 1 < t.rows && o(r, c) != o(r + 1, c)) pairs.insert({o(r, c), o(r + 1, c), Direction::kVertical});
    }
  }
  return {pairs.begin(), pairs.end()};
}

Table transpose(const Table& t) {
  Table out;
  out.rows = t.cols;
  out.cols = t.rows;
  if (t.image_size) out.image_size = ImageSize{t.image_size->width, t.image_size->height};
  for (const auto& c : t.cells) {
    Cell n = c;
    n.row = c.col;
    n.col = c.row;
    n.rowspan = c.colspan;
    n.colspan = c.rowspan;
    n.is_header = false;
    if (c.bbox) n.bbox = BBox{c.bbox->y1, c.bbox->x1, c.bbox->y2, c.bbox->x2};
    out.cells.push_back(std::move(n));
  }
  canonicalize(out);
  return out;
}

// ---------------------------------------------------------------------------
// Markup parsing

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::kMalformedMarkup, what); }
[[noreturn]] void bad_marker(const std::string& what) { throw Error(ErrorCode::kBadCoordMarker, what); }

struct TagToken {
  std::string name;
  bool closing = false;
  std::vector<std::pair<std::string, std::string>> attributes;
};

struct TextToken {
  std::string text;
};

using Lexeme = std::variant<TagToken, TextToken>;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::string decode_entities(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '&') {
      out += raw[i];
      continue;
    }
    const auto semi = raw.find(';', i);
    if (semi == std::string_view::npos) malformed("unterminated entity");
    const std::string_view name = raw.substr(i + 1, semi - i - 1);
    if (name == "amp") out += '&';
    else if (name == "lt") out += '<';
    else if (name == "gt") out += '>';
    else if (name == "quot") out += '"';
    else if (name == "apos" || name == "#39") out += '\'';
    else if (name.size() > 1 && name[0] == '#') {
      int code = 0;
      const bool hex = name[1] == 'x' || name[1] == 'X';
      const auto digits = name.substr(hex ? 2 : 1);
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code, hex ? 16 : 10);
      if (ec != std::errc() || p != digits.data() + digits.size() || code <= 0 || code > 0x7f) {
        malformed("unsupported character reference &" + std::string(name) + ";");
      }
      out += static_cast<char>(code);
    } else {
      malformed("unknown entity &" + std::string(name) + ";");
    }
    i = semi;
  }
  return out;
}

TagToken parse_tag(std::string_view body) {
  TagToken tag;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  };
  skip_ws();
  if (i < body.size() && body[i] == '/') {
    tag.closing = true;
    ++i;
  }
  const std::size_t start = i;
  while (i < body.size() && (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_')) ++i;
  tag.name = lower(body.substr(start, i - start));
  if (tag.name.empty()) malformed("empty tag name");
  while (true) {
    skip_ws();
    if (i >= body.size()) break;
    const std::size_t key_start = i;
    while (i < body.size() && (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '-')) ++i;
    if (i == key_start) malformed("bad attribute in <" + tag.name + ">");
    std::string key = lower(body.substr(key_start, i - key_start));
    skip_ws();
    if (i >= body.size() || body[i] != '=') malformed("attribute " + key + " without value");
    ++i;
    skip_ws();
    std::string value;
    if (i < body.size() && (body[i] == '"' || body[i] == '\'')) {
      const char quote = body[i++];
      const auto end = body.find(quote, i);
      if (end == std::string_view::npos) malformed("unterminated attribute value");
      value = std::string(body.substr(i, end - i));
      i = end + 1;
    } else {
      const std::size_t v = i;
      while (i < body.size() && !std::isspace(static_cast<unsigned char>(body[i]))) ++i;
      value = std::string(body.substr(v, i - v));
    }
    tag.attributes.emplace_back(std::move(key), std::move(value));
  }
  if (tag.closing && !tag.attributes.empty()) malformed("closing tag with attributes");
  return tag;
}

std::vector<Lexeme> lex(std::string_view markup) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  while (i < markup.size()) {
    if (markup[i] == '<') {
      const auto end = markup.find('>', i);
      if (end == std::string_view::npos) malformed("unterminated tag");
      std::string_view body = markup.substr(i + 1, end - i - 1);
      if (!body.empty() && body.back() == '/') malformed("self-closing tags are not supported");
      out.emplace_back(parse_tag(body));
      i = end + 1;
    } else {
      const auto end = std::min(markup.find('<', i), markup.size());
      out.emplace_back(TextToken{decode_entities(markup.substr(i, end - i))});
      i = end;
    }
  }
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
}

struct Marker {
  char axis;
  int index;
};

std::optional<Marker> as_marker(const TagToken& tag) {
  const auto& n = tag.name;
  if (n.size() < 3 || (n[0] != 'x' && n[0] != 'y') || n[1] != '_') return std::nullopt;
  if (tag.closing) bad_marker("closing coordinate marker </" + n + ">");
  int index = -1;
  const char* first = n.data() + 2;
  const char* last = n.data() + n.size();
  auto [p, ec] = std::from_chars(first, last, index);
  if (ec != std::errc() || p != last) bad_marker("non-numeric coordinate marker <" + n + ">");
  if (index < 0 || index > QuantSpec::kMaxIndex) bad_marker("coordinate index out of range in <" + n + ">");
  return Marker{n[0], index};
}

int parse_span(const std::string& value) {
  int v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size() || v < 1) malformed("invalid span value '" + value + "'");
  return v;
}

struct PendingCell {
  int rowspan = 1;
  int colspan = 1;
  std::string text;
  std::optional<BBox> bbox;
  bool header = false;
};

using ContentItem = std::variant<std::string, Marker>;

std::optional<BBox> resolve_markers(const std::vector<ContentItem>& items, std::string& text, int unit) {
  std::vector<Marker> markers;
  bool seen_text = false;
  bool markers_after_text = false;
  for (const auto& item : items) {
    if (const auto* s = std::get_if<std::string>(&item)) {
      if (s->empty()) continue;
      if (markers_after_text) bad_marker("coordinate marker inside cell text");
      text += *s;
      seen_text = true;
    } else {
      if (seen_text) markers_after_text = true;
      markers.push_back(std::get<Marker>(item));
    }
  }
  if (markers.empty()) return std::nullopt;
  if (markers.size() % 2 != 0) bad_marker("odd number of coordinate markers");
  if (markers.size() != 4) bad_marker("expected 4 coordinate markers per cell, got " + std::to_string(markers.size()));
  if (markers[0].axis != 'x' || markers[1].axis != 'y' || markers[2].axis != 'x' || markers[3].axis != 'y') {
    bad_marker("coordinate markers must alternate <x_k><y_k>");
  }
  return BBox{markers[0].index * unit, markers[1].index * unit, markers[2].index * unit, markers[3].index * unit};
}

}  // namespace

Table parse_markup(std::string_view markup, const MarkupOptions& options) {
  enum class Section { kNone, kHead, kBody };
  const auto lexemes = lex(markup);

  bool table_open = false;
  bool table_closed = false;
  Section section = Section::kNone;
  bool body_rows_seen = false;
  bool row_open = false;
  std::optional<std::string> cell_tag;  // "td" or "th" while a cell is open
  std::vector<ContentItem> content;
  PendingCell pending;
  std::vector<std::vector<PendingCell>> rows;

  for (const auto& lexeme : lexemes) {
    if (const auto* text = std::get_if<TextToken>(&lexeme)) {
      if (cell_tag) {
        content.emplace_back(text->text);
      } else if (!is_blank(text->text)) {
        malformed("text outside of a cell");
      }
      continue;
    }
    const auto& tag = std::get<TagToken>(lexeme);
    if (cell_tag) {
      if (auto marker = as_marker(tag)) {
        content.emplace_back(*marker);
        continue;
      }
      if (tag.closing && tag.name == *cell_tag) {
        pending.bbox = resolve_markers(content, pending.text, options.unit);
        rows.back().push_back(std::move(pending));
        pending = {};
        content.clear();
        cell_tag.reset();
        continue;
      }
      malformed("unexpected <" + std::string(tag.closing ? "/" : "") + tag.name + "> inside a cell");
    }
    if (table_closed) malformed("content after </table>");
    const auto& n = tag.name;
    if (n == "table") {
      if (tag.closing) {
        if (!table_open || row_open || section != Section::kNone) malformed("unbalanced </table>");
        table_open = false;
        table_closed = true;
      } else {
        if (table_open) malformed("nested tables are not supported");
        if (!tag.attributes.empty()) malformed("attributes on <table> are not supported");
        table_open = true;
      }
    } else if (n == "thead" || n == "tbody") {
      const Section target = n == "thead" ? Section::kHead : Section::kBody;
      if (!table_open || row_open) malformed("misplaced <" + n + ">");
      if (tag.closing) {
        if (section != target) malformed("unbalanced </" + n + ">");
        section = Section::kNone;
      } else {
        if (section != Section::kNone) malformed("nested row groups");
        if (!tag.attributes.empty()) malformed("attributes on <" + n + "> are not supported");
        if (target == Section::kHead && body_rows_seen) malformed("<thead> after body rows");
        section = target;
      }
    } else if (n == "tr") {
      if (!table_open) malformed("<tr> outside of <table>");
      if (tag.closing) {
        if (!row_open) malformed("unbalanced </tr>");
        row_open = false;
      } else {
        if (row_open) malformed("nested <tr>");
        if (!tag.attributes.empty()) malformed("attributes on <tr> are not supported");
        row_open = true;
        if (section != Section::kHead) body_rows_seen = true;
        rows.emplace_back();
      }
    } else if (n == "td" || n == "th") {
      if (tag.closing) malformed("unbalanced </" + n + ">");
      if (!row_open) malformed("<" + n + "> outside of <tr>");
      pending = {};
      pending.header = section == Section::kHead;
      for (const auto& [key, value] : tag.attributes) {
        if (key == "rowspan") pending.rowspan = parse_span(value);
        else if (key == "colspan") pending.colspan = parse_span(value);
        else malformed("unsupported attribute '" + key + "'");
      }
      cell_tag = n;
    } else if (as_marker(tag)) {
      bad_marker("coordinate marker outside of a cell");
    } else {
      malformed("unsupported tag <" + n + ">");
    }
  }
  if (cell_tag || row_open || table_open || section != Section::kNone) malformed("unclosed element at end of input");
  if (!table_closed) malformed("no <table> element");
  if (rows.empty()) malformed("table has no rows");

  // Place cells with the HTML row/column cursor rule.
  const int n_rows = static_cast<int>(rows.size());
  std::vector<std::vector<int>> occupied(n_rows);
  auto is_taken = [&](int r, int c) {
    return c < static_cast<int>(occupied[r].size()) && occupied[r][c] != -1;
  };
  auto take = [&](int r, int c, int id) {
    if (c >= static_cast<int>(occupied[r].size())) occupied[r].resize(c + 1, -1);
    occupied[r][c] = id;
  };
  std::vector<Cell> cells;
  for (int r = 0; r < n_rows; ++r) {
    int c = 0;
    for (auto& p : rows[r]) {
      while (is_taken(r, c)) ++c;
      if (r + p.rowspan > n_rows) non_rect("rowspan extends past the last row");
      const int id = static_cast<int>(cells.size());
      for (int dr = 0; dr < p.rowspan; ++dr) {
        for (int dc = 0; dc < p.colspan; ++dc) {
          if (is_taken(r + dr, c + dc)) non_rect("overlapping spans");
          take(r + dr, c + dc, id);
        }
      }
      Cell cell;
      cell.id = id;
      cell.row = r;
      cell.col = c;
      cell.rowspan = p.rowspan;
      cell.colspan = p.colspan;
      cell.text = std::move(p.text);
      cell.bbox = p.bbox;
      cell.is_header = p.header;
      cells.push_back(std::move(cell));
      c += p.colspan;
    }
  }
  int n_cols = 0;
  for (const auto& row : occupied) n_cols = std::max(n_cols, static_cast<int>(row.size()));
  if (n_cols == 0) malformed("table has no cells");
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) {
      if (!is_taken(r, c)) non_rect("grid slot (" + std::to_string(r) + "," + std::to_string(c) + ") is empty");
    }
  }
  Table t;
  t.rows = n_rows;
  t.cols = n_cols;
  t.image_size = options.image_size;
  t.cells = std::move(cells);
  canonicalize(t);
  validate(t);
  return t;
}

std::string escape_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch; break;
    }
  }
  return out;
}

std::string emit_markup(const Table& t, bool with_coords, int unit) {
  if (with_coords) {
    for (const auto& c : t.cells) {
      if (!c.bbox) throw Error(ErrorCode::kMissingBox, "cell " + std::to_string(c.id) + " has no bbox");
    }
  }
  auto coord = [&](char axis, int px) {
    return std::string("<") + axis + "_" + std::to_string(quantize(px, unit)) + ">";
  };
  std::vector<std::vector<const Cell*>> by_row(t.rows);
  for (const auto& c : t.cells) by_row[c.row].push_back(&c);

  std::string out = "<table>";
  const int h = t.header_rows();
  auto emit_rows = [&](int from, int to) {
    for (int r = from; r < to; ++r) {
      out += "<tr>";
      for (const Cell* c : by_row[r]) {
        out += "<td";
        if (c->rowspan > 1) out += " rowspan=\"" + std::to_string(c->rowspan) + "\"";
        if (c->colspan > 1) out += " colspan=\"" + std::to_string(c->colspan) + "\"";
        out += ">";
        if (with_coords) out += coord('x', c->bbox->x1) + coord('y', c->bbox->y1);
        out += escape_text(c->text);
        if (with_coords) out += coord('x', c->bbox->x2) + coord('y', c->bbox->y2);
        out += "</td>";
      }
      out += "</tr>";
    }
  };
  if (h > 0) {
    out += "<thead>";
    emit_rows(0, h);
    out += "</thead>";
  }
  if (h < t.rows) {
    out += "<tbody>";
    emit_rows(h, t.rows);
    out += "</tbody>";
  }
  out += "</table>";
  return out;
}

// ---------------------------------------------------------------------------
// Index queries

namespace {

void check_index(const Table& t, int i, int j) {
  if (i < 0 || i >= t.rows || j < 0 || j >= t.cols) {
    throw Error(ErrorCode::kIndexOutOfRange, "(" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                                                 std::to_string(t.rows) + "x" + std::to_string(t.cols));
  }
}

}  // namespace

std::string query_cell(const Table& t, int i, int j, QueryPolicy policy) {
  check_index(t, i, j);
  for (const auto& c : t.cells) {
    if (i >= c.row && i <= c.last_row() && j >= c.col && j <= c.last_col()) {
      if (policy == QueryPolicy::kAnchorOnly && (i != c.row || j != c.col)) return {};
      return c.text;
    }
  }
  return {};  // unreachable on a validated table
}

std::vector<std::string> query_row(const Table& t, int i) {
  check_index(t, i, 0);
  const OwnerGrid o = owner_grid(t);
  std::vector<std::string> out;
  for (int j = 0; j < t.cols; ++j) out.push_back(t.cells[o(i, j)].text);
  return out;
}

std::vector<std::string> query_col(const Table& t, int j) {
  check_index(t, 0, j);
  const OwnerGrid o = owner_grid(t);
  std::vector<std::string> out;
  for (int i = 0; i < t.rows; ++i) out.push_back(t.cells[o(i, j)].text);
  return out;
}

}  // namespace tableseq
