// SPDX-License-Identifier: Apache-2.0
#include "tableseq/tokenize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "tableseq/error.hpp"

namespace tableseq {

int quantize(double coord, int unit) {
  if (coord < 0) throw Error(ErrorCode::kNegativeCoord, "coordinate " + std::to_string(coord));
  if (unit < 1) throw Error(ErrorCode::kConfigInvalid, "grid unit must be >= 1");
  const double index = std::floor(coord / unit + 0.5);
  return static_cast<int>(std::min(index, static_cast<double>(QuantSpec::kMaxIndex)));
}

int quantize(double coord, const QuantSpec& spec) { return quantize(coord, spec.unit); }

int dequantize(int index, const QuantSpec& spec) { return index * spec.unit; }

// ---------------------------------------------------------------------------
// Vocab

namespace {

constexpr std::array<const char*, 11> kTagNames = {"<html>",  "<table>", "</table>", "<thead>", "</thead>", "<tbody>",
                                                   "</tbody>", "<tr>",   "</tr>",    "<td>",    "</td>"};

std::string byte_token(unsigned char b, TextAlphabet alphabet) {
  if (alphabet == TextAlphabet::kByte && (b < 0x20 || b > 0x7e)) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "<0x%02X>", static_cast<unsigned>(b));
    return buf;
  }
  return std::string(1, static_cast<char>(b));
}

}  // namespace

Vocab::Vocab(TextAlphabet alphabet) : alphabet_(alphabet), text_ids_(256, -1) {
  auto add = [&](std::string tok, TokenClass cls) {
    index_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(tok));
    classes_.push_back(cls);
  };
  add("<pad>", TokenClass::kControl);
  add("<s>", TokenClass::kControl);
  add("</s>", TokenClass::kControl);
  tag_base_ = size();
  for (const char* t : kTagNames) add(t, TokenClass::kTag);
  span_base_ = size();
  for (int k = kMinSpan; k <= kMaxSpan; ++k) add("rowspan_" + std::to_string(k), TokenClass::kTag);
  for (int k = kMinSpan; k <= kMaxSpan; ++k) add("colspan_" + std::to_string(k), TokenClass::kTag);
  text_base_ = size();
  const int lo = alphabet == TextAlphabet::kByte ? 0 : 0x20;
  const int hi = alphabet == TextAlphabet::kByte ? 0xff : 0x7e;
  for (int b = lo; b <= hi; ++b) {
    text_ids_[b] = size();
    add(byte_token(static_cast<unsigned char>(b), alphabet), TokenClass::kText);
  }
  x_base_ = size();
  for (int k = 0; k < kCoordBins; ++k) add("<x_" + std::to_string(k) + ">", TokenClass::kCoordX);
  y_base_ = size();
  for (int k = 0; k < kCoordBins; ++k) add("<y_" + std::to_string(k) + ">", TokenClass::kCoordY);
}

int Vocab::rowspan(int k) const {
  if (k < kMinSpan || k > kMaxSpan) throw Error(ErrorCode::kUnknownToken, "rowspan_" + std::to_string(k));
  return span_base_ + (k - kMinSpan);
}

int Vocab::colspan(int k) const {
  if (k < kMinSpan || k > kMaxSpan) throw Error(ErrorCode::kUnknownToken, "colspan_" + std::to_string(k));
  return span_base_ + (kMaxSpan - kMinSpan + 1) + (k - kMinSpan);
}

std::optional<int> Vocab::text(unsigned char ch) const {
  const int id = text_ids_[ch];
  if (id < 0) return std::nullopt;
  return id;
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw Error(ErrorCode::kUnknownToken, std::string(token));
  return *found;
}

int Vocab::span_value(int id, bool* is_rowspan) const {
  const int per_family = kMaxSpan - kMinSpan + 1;
  const int offset = id - span_base_;
  if (is_rowspan) *is_rowspan = offset < per_family;
  return kMinSpan + offset % per_family;
}

unsigned char Vocab::text_char(int id) const {
  const int lo = alphabet_ == TextAlphabet::kByte ? 0 : 0x20;
  return static_cast<unsigned char>(lo + (id - text_base_));
}

int Vocab::coord_index(int id) const {
  return token_class(id) == TokenClass::kCoordX ? id - x_base_ : id - y_base_;
}

void Vocab::dump(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  for (TextAlphabet a : {TextAlphabet::kPrintableAscii, TextAlphabet::kByte}) {
    Vocab v(a);
    if (v.tokens_ == lines) return v;
  }
  throw Error(ErrorCode::kFormat, "vocabulary file does not match a known token layout");
}

TokenSeq TokenSeq::from_ids(std::vector<int> ids, const Vocab& vocab) {
  TokenSeq s;
  s.classes.reserve(ids.size());
  for (int id : ids) s.classes.push_back(vocab.token_class(id));
  s.ids = std::move(ids);
  return s;
}

// ---------------------------------------------------------------------------
// Serialize

TokenSeq serialize(const Table& table, const Vocab& vocab, const SerializeOptions& options) {
  if (options.with_coords) {
    for (const auto& c : table.cells) {
      if (!c.bbox) throw Error(ErrorCode::kMissingBox, "cell " + std::to_string(c.id) + " has no bbox");
    }
  }
  TokenSeq seq;
  seq.push(vocab.bos(), vocab);
  seq.push(vocab.tag(Tag::kHtml), vocab);
  seq.push(vocab.tag(Tag::kTable), vocab);

  std::vector<std::vector<const Cell*>> by_row(table.rows);
  for (const auto& c : table.cells) by_row[c.row].push_back(&c);

  auto emit_cell = [&](const Cell& c) {
    seq.push(vocab.tag(Tag::kTd), vocab);
    if (c.rowspan > 1) seq.push(vocab.rowspan(c.rowspan), vocab);
    if (c.colspan > 1) seq.push(vocab.colspan(c.colspan), vocab);
    if (options.with_coords) {
      seq.push(vocab.x(quantize(c.bbox->x1, options.quant)), vocab);
      seq.push(vocab.y(quantize(c.bbox->y1, options.quant)), vocab);
    }
    for (char ch : c.text) {
      auto id = vocab.text(static_cast<unsigned char>(ch));
      if (!id) {
        if (options.unencodable == UnencodablePolicy::kThrow) {
          throw Error(ErrorCode::kTextNotEncodable, "byte " + std::to_string(static_cast<unsigned char>(ch)) +
                                                        " in cell " + std::to_string(c.id));
        }
        id = vocab.text(static_cast<unsigned char>(options.replacement));
        if (!id) throw Error(ErrorCode::kTextNotEncodable, "replacement character is not encodable");
      }
      seq.push(*id, vocab);
    }
    if (options.with_coords) {
      seq.push(vocab.x(quantize(c.bbox->x2, options.quant)), vocab);
      seq.push(vocab.y(quantize(c.bbox->y2, options.quant)), vocab);
    }
    seq.push(vocab.tag(Tag::kTdEnd), vocab);
  };
  auto emit_rows = [&](int from, int to) {
    for (int r = from; r < to; ++r) {
      seq.push(vocab.tag(Tag::kTr), vocab);
      for (const Cell* c : by_row[r]) emit_cell(*c);
      seq.push(vocab.tag(Tag::kTrEnd), vocab);
    }
  };
  const int h = table.header_rows();
  if (h > 0) {
    seq.push(vocab.tag(Tag::kThead), vocab);
    emit_rows(0, h);
    seq.push(vocab.tag(Tag::kTheadEnd), vocab);
  }
  if (h < table.rows) {
    seq.push(vocab.tag(Tag::kTbody), vocab);
    emit_rows(h, table.rows);
    seq.push(vocab.tag(Tag::kTbodyEnd), vocab);
  }
  seq.push(vocab.tag(Tag::kTableEnd), vocab);
  seq.push(vocab.eos(), vocab);
  return seq;
}

// ---------------------------------------------------------------------------
// Deserialize

namespace {

struct DraftCell {
  int rowspan = 1;
  int colspan = 1;
  bool spans_locked = false;
  std::string text;
  std::vector<int> coords;  // token ids
  bool header = false;
};

struct DraftRow {
  std::vector<DraftCell> cells;
  bool header = false;
};

class Reader {
 public:
  Reader(const Vocab& vocab, const QuantSpec& quant) : vocab_(vocab), quant_(quant) {}

  Deserialized run(const std::vector<int>& ids) {
    std::size_t start = ids.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == vocab_.tag(Tag::kTable)) {
        start = i;
        break;
      }
    }
    if (start == ids.size()) throw Error(ErrorCode::kUnrecoverable, "no <table> token in sequence");

    bool closed = false;
    for (pos_ = start + 1; pos_ < ids.size(); ++pos_) {
      const int id = ids[pos_];
      if (id == vocab_.eos()) break;
      if (id == vocab_.tag(Tag::kTableEnd)) {
        close_cell("missing </td> before </table>");
        close_row("missing </tr> before </table>");
        if (section_ != Section::kNone) log("unclosed row group before </table>");
        closed = true;
        break;
      }
      step(id);
    }
    if (!closed) {
      close_cell("missing </td> at end of sequence");
      close_row("missing </tr> at end of sequence");
      log("missing </table>");
    }
    return {place(), std::move(log_)};
  }

 private:
  enum class Section { kNone, kHead, kBody };

  void log(std::string what) { log_.push_back({pos_, std::move(what)}); }

  void step(int id) {
    const TokenClass cls = vocab_.token_class(id);
    if (cls == TokenClass::kText) {
      if (cell_) {
        cell_->text += static_cast<char>(vocab_.text_char(id));
        cell_->spans_locked = true;
      } else {
        log("text token outside a cell dropped");
      }
      return;
    }
    if (cls == TokenClass::kCoordX || cls == TokenClass::kCoordY) {
      if (cell_) {
        cell_->coords.push_back(id);
        cell_->spans_locked = true;
      } else {
        log("coordinate token outside a cell dropped");
      }
      return;
    }
    if (cls == TokenClass::kControl) {
      log("control token '" + vocab_.token(id) + "' dropped");
      return;
    }
    if (vocab_.is_span(id)) {
      if (cell_ && !cell_->spans_locked) {
        bool is_row = false;
        const int k = vocab_.span_value(id, &is_row);
        (is_row ? cell_->rowspan : cell_->colspan) = k;
      } else {
        log("misplaced span token dropped");
      }
      return;
    }
    if (id == vocab_.tag(Tag::kTr)) {
      close_cell("missing </td> before <tr>");
      close_row("missing </tr> before <tr>");
      open_row();
    } else if (id == vocab_.tag(Tag::kTrEnd)) {
      close_cell("missing </td> before </tr>");
      if (!row_open_) log("unmatched </tr> dropped");
      row_open_ = false;
    } else if (id == vocab_.tag(Tag::kTd)) {
      close_cell("missing </td> before <td>");
      if (!row_open_) {
        log("<td> outside a row; opened an implicit row");
        open_row();
      }
      cell_ = DraftCell{};
      cell_->header = rows_.back().header;
    } else if (id == vocab_.tag(Tag::kTdEnd)) {
      if (!cell_) log("unmatched </td> dropped");
      else close_cell({});
    } else if (id == vocab_.tag(Tag::kThead) || id == vocab_.tag(Tag::kTbody)) {
      close_cell("missing </td> before row group");
      close_row("missing </tr> before row group");
      if (section_ != Section::kNone) log("unclosed row group");
      section_ = id == vocab_.tag(Tag::kThead) ? Section::kHead : Section::kBody;
      if (section_ == Section::kHead && body_rows_) {
        log("<thead> after body rows treated as body");
        section_ = Section::kBody;
      }
    } else if (id == vocab_.tag(Tag::kTheadEnd) || id == vocab_.tag(Tag::kTbodyEnd)) {
      close_cell("missing </td> before row group end");
      close_row("missing </tr> before row group end");
      if (section_ == Section::kNone) log("unmatched row group closer dropped");
      section_ = Section::kNone;
    } else {
      log("tag '" + vocab_.token(id) + "' dropped");
    }
  }

  void open_row() {
    DraftRow row;
    row.header = section_ == Section::kHead;
    if (!row.header) body_rows_ = true;
    rows_.push_back(std::move(row));
    row_open_ = true;
  }

  void close_row(const char* why) {
    if (!row_open_) return;
    log(why);
    row_open_ = false;
  }

  // An empty `why` marks a regular close.
  void close_cell(const std::string& why) {
    if (!cell_) return;
    if (!why.empty()) log(why);
    rows_.back().cells.push_back(std::move(*cell_));
    cell_.reset();
  }

  std::optional<BBox> resolve_coords(const DraftCell& c, std::size_t cell_index) {
    if (c.coords.empty()) return std::nullopt;
    const auto& k = c.coords;
    const bool ok = k.size() == 4 && vocab_.token_class(k[0]) == TokenClass::kCoordX &&
                    vocab_.token_class(k[1]) == TokenClass::kCoordY &&
                    vocab_.token_class(k[2]) == TokenClass::kCoordX &&
                    vocab_.token_class(k[3]) == TokenClass::kCoordY;
    if (!ok) {
      log_.push_back({pos_, "malformed coordinates dropped in cell " + std::to_string(cell_index)});
      return std::nullopt;
    }
    BBox b{dequantize(vocab_.coord_index(k[0]), quant_), dequantize(vocab_.coord_index(k[1]), quant_),
           dequantize(vocab_.coord_index(k[2]), quant_), dequantize(vocab_.coord_index(k[3]), quant_)};
    if (b.x2 < b.x1) std::swap(b.x1, b.x2);
    if (b.y2 < b.y1) std::swap(b.y1, b.y2);
    return b;
  }

  Table place() {
    if (rows_.empty()) {
      log("no rows; padded with a single empty cell");
      rows_.push_back(DraftRow{{DraftCell{}}, false});
    }
    const int n_rows = static_cast<int>(rows_.size());
    int header_rows = 0;
    while (header_rows < n_rows && rows_[header_rows].header) ++header_rows;
    for (int r = header_rows; r < n_rows; ++r) {
      if (rows_[r].header) rows_[r].header = false;
    }

    std::vector<std::vector<int>> occ(n_rows);
    auto taken = [&](int r, int c) { return c < static_cast<int>(occ[r].size()) && occ[r][c] != -1; };
    std::vector<Cell> cells;
    for (int r = 0; r < n_rows; ++r) {
      const int limit = r < header_rows ? header_rows : n_rows;
      int c = 0;
      for (auto& d : rows_[r].cells) {
        while (taken(r, c)) ++c;
        int rs = d.rowspan;
        int cs = d.colspan;
        if (r + rs > limit) {
          log("rowspan clipped at row group end");
          rs = limit - r;
        }
        for (int dc = 1; dc < cs; ++dc) {
          if (taken(r, c + dc)) {
            log("colspan shrunk to avoid overlap");
            cs = dc;
            break;
          }
        }
        for (int dr = 1; dr < rs; ++dr) {
          bool clash = false;
          for (int dc = 0; dc < cs; ++dc) clash = clash || taken(r + dr, c + dc);
          if (clash) {
            log("rowspan shrunk to avoid overlap");
            rs = dr;
            break;
          }
        }
        const int id = static_cast<int>(cells.size());
        for (int dr = 0; dr < rs; ++dr) {
          auto& row = occ[r + dr];
          if (static_cast<int>(row.size()) < c + cs) row.resize(c + cs, -1);
          for (int dc = 0; dc < cs; ++dc) row[c + dc] = id;
        }
        Cell cell;
        cell.id = id;
        cell.row = r;
        cell.col = c;
        cell.rowspan = rs;
        cell.colspan = cs;
        cell.text = d.text;
        cell.is_header = r < header_rows;
        cell.bbox = resolve_coords(d, cells.size());
        cells.push_back(std::move(cell));
        c += cs;
      }
    }
    int n_cols = 0;
    for (const auto& row : occ) n_cols = std::max(n_cols, static_cast<int>(row.size()));
    if (n_cols == 0) n_cols = 1;
    for (int r = 0; r < n_rows; ++r) {
      for (int c = 0; c < n_cols; ++c) {
        if (taken(r, c)) continue;
        log("hole at (" + std::to_string(r) + "," + std::to_string(c) + ") padded with an empty cell");
        Cell cell;
        cell.row = r;
        cell.col = c;
        cell.is_header = r < header_rows;
        if (static_cast<int>(occ[r].size()) <= c) occ[r].resize(c + 1, -1);
        occ[r][c] = static_cast<int>(cells.size());
        cells.push_back(std::move(cell));
      }
    }
    Table t;
    t.rows = n_rows;
    t.cols = n_cols;
    t.cells = std::move(cells);
    canonicalize(t);
    validate(t);
    return t;
  }

  const Vocab& vocab_;
  QuantSpec quant_;
  std::size_t pos_ = 0;
  RepairLog log_;
  std::vector<DraftRow> rows_;
  std::optional<DraftCell> cell_;
  bool row_open_ = false;
  bool body_rows_ = false;
  Section section_ = Section::kNone;
};

}  // namespace

Deserialized deserialize(const std::vector<int>& ids, const Vocab& vocab, const QuantSpec& quant) {
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(id));
  }
  return Reader(vocab, quant).run(ids);
}

Deserialized deserialize(const TokenSeq& seq, const Vocab& vocab, const QuantSpec& quant) {
  return deserialize(seq.ids, vocab, quant);
}

std::string render_tokens(const TokenSeq& seq, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(seq.ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise

namespace {

// Visually confusable groups; a character in a group is replaced by another
// member of the same group.
constexpr std::array<std::string_view, 18> kConfusable = {
    "0Oo", "1lI|i", "5Ss", "2Zz", "8B", "6Gb", "9gq", "ce", "uv", "nmh", ".,", "-_~", ":;", "'`\"", "()", "[]{}", "7T", "4A"};

}  // namespace

unsigned char confuse_char(unsigned char ch, const Vocab& vocab, std::mt19937_64& rng) {
  for (auto group : kConfusable) {
    if (group.find(static_cast<char>(ch)) == std::string_view::npos) continue;
    std::string others;
    for (char g : group) {
      if (g != static_cast<char>(ch) && vocab.text(static_cast<unsigned char>(g))) others += g;
    }
    if (!others.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
      return static_cast<unsigned char>(others[pick(rng)]);
    }
  }
  // Uniform over printable ASCII, excluding the original character.
  std::uniform_int_distribution<int> pick(0x20, 0x7e - 1);
  int c = pick(rng);
  if (c >= ch) ++c;
  return static_cast<unsigned char>(c);
}

TokenSeq inject_noise(const TokenSeq& seq, const Vocab& vocab, const NoiseConfig& config, std::mt19937_64& rng) {
  if (config.rate < 0.0 || config.rate > 1.0) throw Error(ErrorCode::kConfigInvalid, "noise rate outside [0,1]");
  TokenSeq out = seq;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-config.coord_radius, config.coord_radius);
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    const int id = out.ids[i];
    const TokenClass cls = vocab.token_class(id);
    if (cls == TokenClass::kText) {
      if (config.rate > 0.0 && coin(rng) < config.rate) {
        out.ids[i] = *vocab.text(confuse_char(vocab.text_char(id), vocab, rng));
      }
    } else if ((cls == TokenClass::kCoordX || cls == TokenClass::kCoordY) && config.coord_radius > 0) {
      const int k = std::clamp(vocab.coord_index(id) + shift(rng), 0, QuantSpec::kMaxIndex);
      out.ids[i] = cls == TokenClass::kCoordX ? vocab.x(k) : vocab.y(k);
    }
  }
  return out;
}

TokenSeq inject_noise(const TokenSeq& seq, const Vocab& vocab, const NoiseConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return inject_noise(seq, vocab, config, rng);
}

}  // namespace tableseq
