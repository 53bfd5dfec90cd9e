// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles/random_tables.hpp"
#include "oracles/slot_scan.hpp"
#include "tableseq/annotation.hpp"
#include "tableseq/error.hpp"
#include "tableseq/quantize.hpp"
#include "tableseq/synthgen.hpp"
#include "tableseq/table.hpp"

using namespace tableseq;

namespace {

const char* kSpanned =
    "<table><tr><td rowspan=\"2\" colspan=\"2\">A</td><td>B</td></tr>"
    "<tr><td>C</td></tr><tr><td>D</td><td>E</td><td>F</td></tr></table>";

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

Table grid_2x2() { return parse_markup("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>"); }

}  // namespace

TEST(Markup, ParsesSimpleRow) {
  const Table t = parse_markup("<table><tr><td>a</td><td>b</td></tr></table>");
  EXPECT_EQ(t.rows, 1);
  EXPECT_EQ(t.cols, 2);
  ASSERT_EQ(t.cells.size(), 2u);
  EXPECT_EQ(t.cells[0].text, "a");
  EXPECT_EQ(t.cells[1].text, "b");
}

TEST(Markup, SpannedOwnerGrid) {
  const OwnerGrid g = owner_grid(parse_markup(kSpanned));
  OwnerGrid want(3, 3);
  want << 0, 0, 1, 0, 0, 2, 3, 4, 5;
  EXPECT_EQ(g, want);
}

TEST(Markup, RowWidthMismatchIsNonRectangular) {
  EXPECT_EQ(code_of([] { parse_markup("<table><tr><td colspan=\"2\">x</td></tr><tr><td>y</td></tr></table>"); }),
            ErrorCode::kNonRectangular);
}

TEST(Markup, UnbalancedTagsAreMalformed) {
  EXPECT_EQ(code_of([] { parse_markup("<table><tr><td>x</tr></table>"); }), ErrorCode::kMalformedMarkup);
}

TEST(Markup, OddCoordinateMarkersRejected) {
  EXPECT_EQ(code_of([] { parse_markup("<table><tr><td><x_1>v</td></tr></table>"); }), ErrorCode::kBadCoordMarker);
}

TEST(Markup, EmitsQuantizedCoordinates) {
  Table t = parse_markup("<table><tr><td>v</td></tr></table>");
  t.cells[0].bbox = BBox{0, 0, 10, 10};
  const std::string m = emit_markup(t, true, 5);
  EXPECT_NE(m.find("<td><x_0><y_0>v<x_2><y_2></td>"), std::string::npos) << m;
}

TEST(Markup, RoundTripSpannedTable) {
  const Table t = parse_markup(kSpanned);
  EXPECT_EQ(parse_markup(emit_markup(t, false)), t);
}

TEST(Markup, RoundTripWithCoordinatesOnGridAlignedBoxes) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    Table t = oracle::random_boxed_table(rng, 5, 5, 3);
    for (auto& c : t.cells) {
      BBox& b = *c.bbox;
      b = BBox{b.x1 / 5 * 5, b.y1 / 5 * 5, b.x2 / 5 * 5, b.y2 / 5 * 5};
    }
    MarkupOptions opt;
    opt.image_size = t.image_size;
    EXPECT_EQ(parse_markup(emit_markup(t, true, 5), opt), t);
  }
}

TEST(Markup, MissingBoxWhenEmittingCoordinates) {
  EXPECT_EQ(code_of([] { emit_markup(grid_2x2(), true, 5); }), ErrorCode::kMissingBox);
}

TEST(Markup, HeaderRowsSurviveRoundTrip) {
  const Table t = parse_markup(
      "<table><thead><tr><td>h1</td><td>h2</td></tr></thead><tbody><tr><td>a</td><td>b</td></tr></tbody></table>");
  EXPECT_EQ(t.header_rows(), 1);
  EXPECT_EQ(parse_markup(emit_markup(t, false)), t);
}

TEST(Markup, TextIsEscaped) {
  Table t = parse_markup("<table><tr><td>a</td></tr></table>");
  t.cells[0].text = "x<y & z>\"";
  EXPECT_EQ(parse_markup(emit_markup(t, false)), t);
}

TEST(OwnerGrid, TrivialCases) {
  OwnerGrid one(1, 1);
  one << 0;
  EXPECT_EQ(owner_grid(parse_markup("<table><tr><td>a</td></tr></table>")), one);
  OwnerGrid four(2, 2);
  four << 0, 1, 2, 3;
  EXPECT_EQ(owner_grid(grid_2x2()), four);
}

TEST(OwnerGrid, MatchesSlotScanOnRandomTables) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Table t = oracle::random_boxed_table(rng, 6, 6, 3);
    const OwnerGrid g = owner_grid(t);
    for (int r = 0; r < t.rows; ++r) {
      for (int c = 0; c < t.cols; ++c) EXPECT_EQ(g(r, c), oracle::slot_owner(t, r, c));
    }
  }
}

TEST(Adjacency, TwoByTwo) {
  const AdjacencyGraph g = adjacency(grid_2x2());
  const AdjacencyGraph want = {{0, 1, Direction::kHorizontal},
                               {0, 2, Direction::kVertical},
                               {1, 3, Direction::kVertical},
                               {2, 3, Direction::kHorizontal}};
  EXPECT_EQ(g, want);
}

TEST(Adjacency, SingleCellIsEmpty) { EXPECT_TRUE(adjacency(parse_markup("<table><tr><td>a</td></tr></table>")).empty()); }

TEST(Adjacency, SpannedTableMatchesSlotScan) {
  const Table t = parse_markup(kSpanned);
  const AdjacencyGraph g = adjacency(t);
  EXPECT_EQ(g, oracle::pairwise_adjacency(t));
  EXPECT_EQ(g.size(), 8u);
}

TEST(Adjacency, MatchesSlotScanUpToFourByFour) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const Table t = oracle::random_boxed_table(rng, 4, 4, 4);
    EXPECT_EQ(adjacency(t), oracle::pairwise_adjacency(t));
  }
}

TEST(Query, CellRowColumn) {
  const Table t = grid_2x2();
  EXPECT_EQ(query_cell(t, 1, 0), "c");
  EXPECT_EQ(query_row(t, 0), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(query_col(t, 1), (std::vector<std::string>{"b", "d"}));
  EXPECT_EQ(code_of([&] { query_cell(t, 5, 0); }), ErrorCode::kIndexOutOfRange);
  EXPECT_EQ(code_of([&] { query_row(t, 2); }), ErrorCode::kIndexOutOfRange);
}

TEST(Query, SpanExpansionAndPolicies) {
  const Table t = parse_markup(kSpanned);
  EXPECT_EQ(query_cell(t, 1, 1), "A");
  EXPECT_EQ(query_cell(t, 1, 1, QueryPolicy::kAnchorOnly), "");
  EXPECT_EQ(query_cell(t, 0, 0, QueryPolicy::kAnchorOnly), "A");
  EXPECT_EQ(query_row(t, 0), (std::vector<std::string>{"A", "A", "B"}));
  EXPECT_EQ(query_col(t, 2), (std::vector<std::string>{"B", "C", "F"}));
}

TEST(Query, RowsVisitEverySlotOnce) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const Table t = oracle::random_boxed_table(rng, 5, 5, 3);
    std::size_t slots = 0;
    for (int r = 0; r < t.rows; ++r) slots += query_row(t, r).size();
    EXPECT_EQ(slots, static_cast<std::size_t>(t.rows * t.cols));
  }
}

TEST(Table, RandomTablesAreRectangular) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const Table t = oracle::random_boxed_table(rng, 8, 10, 4);
    int area = 0;
    for (const auto& c : t.cells) area += c.rowspan * c.colspan;
    EXPECT_EQ(area, t.rows * t.cols);
    EXPECT_NO_THROW(validate(t));
  }
}

TEST(Table, TransposeTwiceIsIdentityUpToHeaders) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    Table t = oracle::random_boxed_table(rng, 5, 5, 3);
    Table tt = transpose(transpose(t));
    for (auto& c : t.cells) c.is_header = false;
    EXPECT_EQ(tt.cells, t.cells);
  }
}

TEST(Quantize, Examples) {
  EXPECT_EQ(quantize(0, 5), 0);
  EXPECT_EQ(quantize(12, 5), 2);
  EXPECT_EQ(quantize(9999, 5), 999);
  EXPECT_EQ(dequantize(2, QuantSpec{5}), 10);
  EXPECT_EQ(dequantize(999, QuantSpec{2}), 1998);
  EXPECT_EQ(code_of([] { quantize(-1, 5); }), ErrorCode::kNegativeCoord);
}

TEST(Quantize, RoundTripBoundExhaustive) {
  for (int u : {2, 5, 8}) {
    for (int c = 0; c <= 999 * u; ++c) {
      const int back = dequantize(quantize(c, u), QuantSpec{u});
      ASSERT_LE(2 * std::abs(back - c), u) << "u=" << u << " c=" << c;
    }
  }
}

TEST(Annotation, JsonLineRoundTrip) {
  std::mt19937_64 rng(8);
  Annotation a;
  a.image = "images/000001.pgm";
  a.table = oracle::random_boxed_table(rng, 4, 4, 2);
  a.markup = emit_markup(a.table, false);
  a.seed = 42;
  a.split = "val";
  const Annotation b = parse_annotation_line(to_json_line(a));
  EXPECT_EQ(b.image, a.image);
  EXPECT_EQ(b.table, a.table);
  EXPECT_EQ(b.seed, a.seed);
  EXPECT_EQ(b.split, "val");
}
