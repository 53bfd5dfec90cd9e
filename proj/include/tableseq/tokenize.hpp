// SPDX-License-Identifier: Apache-2.0
//
// Unified vocabulary of structure tags, span tokens, text characters and
// discrete coordinate tokens, and the Table <-> token sequence mapping.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tableseq/quantize.hpp"
#include "tableseq/table.hpp"

namespace tableseq {

enum class TokenClass : std::uint8_t { kControl, kTag, kText, kCoordX, kCoordY };

enum class TextAlphabet { kPrintableAscii, kByte };

enum class Tag {
  kHtml,
  kTable,
  kTableEnd,
  kThead,
  kTheadEnd,
  kTbody,
  kTbodyEnd,
  kTr,
  kTrEnd,
  kTd,
  kTdEnd,
};

/// Token id layout, stable for a given alphabet:
///   <pad> <s> </s> | 11 tags | rowspan_2..20 colspan_2..20 | text | <x_0>..<x_999> | <y_0>..<y_999>
class Vocab {
 public:
  static constexpr int kCoordBins = QuantSpec::kMaxIndex + 1;
  static constexpr int kMinSpan = 2;
  static constexpr int kMaxSpan = 20;

  explicit Vocab(TextAlphabet alphabet = TextAlphabet::kPrintableAscii);

  int size() const { return static_cast<int>(tokens_.size()); }
  TextAlphabet alphabet() const { return alphabet_; }

  int pad() const { return 0; }
  int bos() const { return 1; }
  int eos() const { return 2; }
  int tag(Tag t) const { return tag_base_ + static_cast<int>(t); }
  int rowspan(int k) const;
  int colspan(int k) const;
  int x(int index) const { return x_base_ + index; }
  int y(int index) const { return y_base_ + index; }

  /// Text token for a byte; nullopt when the byte is outside the alphabet.
  std::optional<int> text(unsigned char ch) const;

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenClass token_class(int id) const { return classes_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;

  bool is_span(int id) const { return id >= span_base_ && id < text_base_; }
  /// Span extent of a rowspan_k/colspan_k token; `rowspan` reports which family.
  int span_value(int id, bool* rowspan) const;
  unsigned char text_char(int id) const;
  int coord_index(int id) const;

  /// One token per line; the id is the line number (0-based).
  void dump(std::ostream& out) const;
  static Vocab load(std::istream& in);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  TextAlphabet alphabet_;
  std::vector<std::string> tokens_;
  std::vector<TokenClass> classes_;
  std::unordered_map<std::string, int> index_;
  std::vector<int> text_ids_;  // byte -> id or -1
  int tag_base_ = 0;
  int span_base_ = 0;
  int text_base_ = 0;
  int x_base_ = 0;
  int y_base_ = 0;
};

struct TokenSeq {
  std::vector<int> ids;
  std::vector<TokenClass> classes;

  std::size_t size() const { return ids.size(); }
  void push(int id, const Vocab& vocab) {
    ids.push_back(id);
    classes.push_back(vocab.token_class(id));
  }
  static TokenSeq from_ids(std::vector<int> ids, const Vocab& vocab);

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

enum class UnencodablePolicy { kThrow, kReplace };

struct SerializeOptions {
  QuantSpec quant;
  bool with_coords = true;
  UnencodablePolicy unencodable = UnencodablePolicy::kThrow;
  char replacement = '?';
};

TokenSeq serialize(const Table& table, const Vocab& vocab, const SerializeOptions& options = {});

struct Repair {
  std::size_t position = 0;  // token index where the repair was triggered
  std::string description;
};

using RepairLog = std::vector<Repair>;

struct Deserialized {
  Table table;
  RepairLog repairs;
};

/// Best-effort inverse of serialize. Throws Unrecoverable when no <table>
/// token is present.
Deserialized deserialize(const TokenSeq& seq, const Vocab& vocab, const QuantSpec& quant = {});
Deserialized deserialize(const std::vector<int>& ids, const Vocab& vocab, const QuantSpec& quant = {});

std::string render_tokens(const TokenSeq& seq, const Vocab& vocab);

struct NoiseConfig {
  double rate = 0.03;
  int coord_radius = 3;
};

/// Training-time corruption: text tokens are substituted with probability
/// `rate` via a confusion table, coordinate tokens are shifted uniformly in
/// [-radius, radius] and clamped. Tags and control tokens are never touched.
TokenSeq inject_noise(const TokenSeq& seq, const Vocab& vocab, const NoiseConfig& config, std::mt19937_64& rng);
TokenSeq inject_noise(const TokenSeq& seq, const Vocab& vocab, const NoiseConfig& config, std::uint64_t seed);

/// Substitute for `ch` under the confusion model; never returns `ch`.
unsigned char confuse_char(unsigned char ch, const Vocab& vocab, std::mt19937_64& rng);

}  // namespace tableseq
