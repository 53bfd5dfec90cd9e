// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "oracles/random_tables.hpp"
#include "tableseq/error.hpp"
#include "tableseq/metrics.hpp"
#include "tableseq/tokenize.hpp"

using namespace tableseq;

namespace {

void expect_close_table(const Table& got, const Table& want, int unit) {
  ASSERT_EQ(got.rows, want.rows);
  ASSERT_EQ(got.cols, want.cols);
  ASSERT_EQ(got.cells.size(), want.cells.size());
  for (std::size_t i = 0; i < want.cells.size(); ++i) {
    const Cell& a = got.cells[i];
    const Cell& b = want.cells[i];
    EXPECT_EQ(a.row, b.row);
    EXPECT_EQ(a.col, b.col);
    EXPECT_EQ(a.rowspan, b.rowspan);
    EXPECT_EQ(a.colspan, b.colspan);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(a.is_header, b.is_header);
    ASSERT_TRUE(a.bbox && b.bbox);
    for (auto [p, q] : {std::pair{a.bbox->x1, b.bbox->x1}, {a.bbox->y1, b.bbox->y1}, {a.bbox->x2, b.bbox->x2},
                        {a.bbox->y2, b.bbox->y2}}) {
      EXPECT_LE(2 * std::abs(p - q), unit);
    }
  }
}

TokenSeq text_only(const Vocab& v, const std::string& s) {
  TokenSeq seq;
  for (unsigned char ch : s) seq.push(*v.text(ch), v);
  return seq;
}

}  // namespace

TEST(Vocab, LayoutAndSize) {
  const Vocab v;
  EXPECT_EQ(v.size(), 3 + 11 + 2 * 19 + 95 + 2000);
  EXPECT_EQ(v.pad(), 0);
  EXPECT_EQ(v.bos(), 1);
  EXPECT_EQ(v.eos(), 2);
  EXPECT_EQ(v.y(0) - v.x(0), 1000);
  EXPECT_EQ(v.token(v.x(999)), "<x_999>");
  EXPECT_EQ(v.token(v.y(0)), "<y_0>");
  EXPECT_EQ(v.token_class(v.x(3)), TokenClass::kCoordX);
  EXPECT_EQ(v.token_class(v.y(3)), TokenClass::kCoordY);
  bool row = false;
  EXPECT_EQ(v.span_value(v.rowspan(7), &row), 7);
  EXPECT_TRUE(row);
  EXPECT_EQ(v.span_value(v.colspan(20), &row), 20);
  EXPECT_FALSE(row);
}

TEST(Vocab, Bijective) {
  for (TextAlphabet a : {TextAlphabet::kPrintableAscii, TextAlphabet::kByte}) {
    const Vocab v(a);
    std::set<std::string> seen;
    for (int id = 0; id < v.size(); ++id) {
      EXPECT_TRUE(seen.insert(v.token(id)).second) << v.token(id);
      EXPECT_EQ(v.id(v.token(id)), id);
    }
  }
}

TEST(Vocab, DumpLoadRoundTrip) {
  const Vocab v;
  std::stringstream ss;
  v.dump(ss);
  EXPECT_EQ(Vocab::load(ss), v);
}

TEST(Serialize, SingleCellLayout) {
  const Vocab v;
  Table t = parse_markup("<table><tr><td>v</td></tr></table>");
  t.cells[0].bbox = BBox{0, 0, 10, 10};
  const TokenSeq seq = serialize(t, v);
  const std::vector<int> want = {v.bos(),
                                 v.tag(Tag::kHtml),
                                 v.tag(Tag::kTable),
                                 v.tag(Tag::kTbody),
                                 v.tag(Tag::kTr),
                                 v.tag(Tag::kTd),
                                 v.x(0),
                                 v.y(0),
                                 *v.text('v'),
                                 v.x(2),
                                 v.y(2),
                                 v.tag(Tag::kTdEnd),
                                 v.tag(Tag::kTrEnd),
                                 v.tag(Tag::kTbodyEnd),
                                 v.tag(Tag::kTableEnd),
                                 v.eos()};
  EXPECT_EQ(seq.ids, want) << render_tokens(seq, v);
  ASSERT_EQ(seq.classes.size(), seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) EXPECT_EQ(seq.classes[i], v.token_class(seq.ids[i]));
}

TEST(Serialize, MissingBoxInCoordinateMode) {
  const Vocab v;
  const Table t = parse_markup("<table><tr><td>v</td></tr></table>");
  EXPECT_THROW(serialize(t, v), Error);
  SerializeOptions o;
  o.with_coords = false;
  EXPECT_NO_THROW(serialize(t, v, o));
}

TEST(Serialize, UnencodableTextPolicies) {
  const Vocab v;
  Table t = parse_markup("<table><tr><td>a</td></tr></table>");
  t.cells[0].text = "a\xC3\xA9";
  SerializeOptions o;
  o.with_coords = false;
  try {
    serialize(t, v, o);
    FAIL() << "expected TextNotEncodable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTextNotEncodable);
  }
  o.unencodable = UnencodablePolicy::kReplace;
  const Deserialized d = deserialize(serialize(t, v, o), v);
  EXPECT_EQ(d.table.cells[0].text, "a??");
  EXPECT_NO_THROW(serialize(t, Vocab(TextAlphabet::kByte), SerializeOptions{QuantSpec{}, false}));
}

TEST(Serialize, SpansUseDedicatedTokens) {
  const Vocab v;
  const Table t = parse_markup("<table><tr><td colspan=\"2\">a</td></tr><tr><td>b</td><td>c</td></tr></table>");
  SerializeOptions o;
  o.with_coords = false;
  const TokenSeq seq = serialize(t, v, o);
  EXPECT_NE(std::find(seq.ids.begin(), seq.ids.end(), v.colspan(2)), seq.ids.end());
}

TEST(Deserialize, InvertsSerialize) {
  const Vocab v;
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const Table t = oracle::random_boxed_table(rng, 6, 6, 3);
    const Deserialized d = deserialize(serialize(t, v), v);
    EXPECT_TRUE(d.repairs.empty());
    expect_close_table(d.table, t, 5);
  }
}

TEST(Deserialize, RoundTripBoundForEveryUnit) {
  const Vocab v;
  std::mt19937_64 rng(23);
  for (int u : {2, 5, 8}) {
    for (int i = 0; i < 30; ++i) {
      const Table t = oracle::random_boxed_table(rng, 5, 5, 2, 400, 600);
      SerializeOptions o;
      o.quant.unit = u;
      expect_close_table(deserialize(serialize(t, v, o), v, QuantSpec{u}).table, t, u);
    }
  }
}

TEST(Deserialize, RepairsMissingRowCloser) {
  const Vocab v;
  const Table t = parse_markup("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>");
  SerializeOptions o;
  o.with_coords = false;
  TokenSeq seq = serialize(t, v, o);
  const auto it = std::find(seq.ids.begin(), seq.ids.end(), v.tag(Tag::kTrEnd));
  ASSERT_NE(it, seq.ids.end());
  const auto pos = it - seq.ids.begin();
  seq.ids.erase(it);
  seq.classes.erase(seq.classes.begin() + pos);
  const Deserialized d = deserialize(seq, v);
  EXPECT_EQ(d.repairs.size(), 1u);
  EXPECT_EQ(d.table.rows, 2);
  EXPECT_EQ(d.table.cols, 2);
  EXPECT_NO_THROW(validate(d.table));
}

TEST(Deserialize, EmptySequenceIsUnrecoverable) {
  const Vocab v;
  try {
    deserialize(std::vector<int>{}, v);
    FAIL() << "expected Unrecoverable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnrecoverable);
  }
}

TEST(Deserialize, TruncatedRowsArePadded) {
  const Vocab v;
  const std::vector<int> ids = {v.bos(), v.tag(Tag::kTable), v.tag(Tag::kTr), v.tag(Tag::kTd), *v.text('a'),
                                v.tag(Tag::kTdEnd), v.tag(Tag::kTd), *v.text('b'), v.tag(Tag::kTdEnd),
                                v.tag(Tag::kTrEnd), v.tag(Tag::kTr), v.tag(Tag::kTd), *v.text('c'),
                                v.tag(Tag::kTdEnd), v.tag(Tag::kTrEnd), v.tag(Tag::kTableEnd), v.eos()};
  const Deserialized d = deserialize(ids, v);
  EXPECT_EQ(d.table.rows, 2);
  EXPECT_EQ(d.table.cols, 2);
  EXPECT_FALSE(d.repairs.empty());
  EXPECT_NO_THROW(validate(d.table));
}

TEST(Noise, ZeroRateIsIdentity) {
  const Vocab v;
  std::mt19937_64 rng(2);
  const Table t = oracle::random_boxed_table(rng, 4, 4, 2);
  const TokenSeq seq = serialize(t, v);
  EXPECT_EQ(inject_noise(seq, v, NoiseConfig{0.0, 0}, 9), seq);
}

TEST(Noise, FullRateSubstitutesEveryTextToken) {
  const Vocab v;
  const TokenSeq seq = text_only(v, "The quick brown fox 0123456789");
  const TokenSeq out = inject_noise(seq, v, NoiseConfig{1.0, 0}, 4);
  ASSERT_EQ(out.size(), seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_NE(out.ids[i], seq.ids[i]);
    EXPECT_EQ(out.classes[i], TokenClass::kText);
  }
}

TEST(Noise, SubstitutionFrequency) {
  const Vocab v;
  std::string s;
  for (int i = 0; i < 100000; ++i) s.push_back(static_cast<char>('a' + i % 26));
  const TokenSeq seq = text_only(v, s);
  const TokenSeq out = inject_noise(seq, v, NoiseConfig{0.03, 3}, 12345);
  long changed = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) changed += out.ids[i] != seq.ids[i];
  EXPECT_NEAR(static_cast<double>(changed) / static_cast<double>(seq.size()), 0.03, 0.005);
}

TEST(Noise, LocalityAndStructureSafety) {
  const Vocab v;
  std::mt19937_64 rng(31);
  for (int i = 0; i < 30; ++i) {
    const Table t = oracle::random_boxed_table(rng, 5, 5, 3);
    const TokenSeq seq = serialize(t, v);
    const TokenSeq out = inject_noise(seq, v, NoiseConfig{0.5, 3}, static_cast<std::uint64_t>(i));
    ASSERT_EQ(out.size(), seq.size());
    for (std::size_t k = 0; k < seq.size(); ++k) {
      EXPECT_EQ(v.token_class(out.ids[k]), v.token_class(seq.ids[k]));
      const TokenClass c = seq.classes[k];
      if (c == TokenClass::kTag || c == TokenClass::kControl) {
        EXPECT_EQ(out.ids[k], seq.ids[k]);
      }
      if (c == TokenClass::kCoordX || c == TokenClass::kCoordY) {
        EXPECT_LE(std::abs(v.coord_index(out.ids[k]) - v.coord_index(seq.ids[k])), 3);
      }
    }
    EXPECT_DOUBLE_EQ(s_teds(deserialize(out, v).table, t), 1.0);
  }
}

TEST(Noise, ConfusionNeverReturnsInput) {
  const Vocab v;
  std::mt19937_64 rng(1);
  for (int ch = 32; ch < 127; ++ch) {
    for (int k = 0; k < 20; ++k) {
      const unsigned char out = confuse_char(static_cast<unsigned char>(ch), v, rng);
      EXPECT_NE(out, ch);
      EXPECT_TRUE(v.text(out).has_value());
    }
  }
}
