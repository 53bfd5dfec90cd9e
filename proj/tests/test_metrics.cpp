// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "oracles/brute_ted.hpp"
#include "oracles/random_tables.hpp"
#include "tableseq/error.hpp"
#include "tableseq/metrics.hpp"

using namespace tableseq;

namespace {

Table boxed_2x2() {
  Table t = parse_markup("<table><tr><td>a</td><td>b</td></tr><tr><td>c</td><td>d</td></tr></table>");
  t.cells[0].bbox = BBox{0, 0, 10, 10};
  t.cells[1].bbox = BBox{10, 0, 20, 10};
  t.cells[2].bbox = BBox{0, 10, 10, 20};
  t.cells[3].bbox = BBox{10, 10, 20, 20};
  t.image_size = ImageSize{20, 20};
  return t;
}

}  // namespace

TEST(Teds, IdenticalTablesScoreOne) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Table t = oracle::random_boxed_table(rng, 5, 5, 3);
    EXPECT_EQ(teds(t, t), 1.0);
    EXPECT_EQ(s_teds(t, t), 1.0);
  }
}

TEST(Teds, SingleCellDifferentText) {
  const Table a = parse_markup("<table><tr><td>a</td></tr></table>");
  const Table b = parse_markup("<table><tr><td>b</td></tr></table>");
  EXPECT_EQ(table_tree(a).size(), 4);
  EXPECT_DOUBLE_EQ(teds(a, b), 0.75);
  EXPECT_DOUBLE_EQ(s_teds(a, b), 1.0);
}

TEST(Teds, ExtraColumn) {
  const Table a = parse_markup("<table><tr><td>a</td></tr></table>");
  const Table b = parse_markup("<table><tr><td>a</td><td>b</td></tr></table>");
  EXPECT_DOUBLE_EQ(teds(a, b), 0.8);
}

TEST(Teds, SpanChangeIsRename) {
  const Table a = parse_markup("<table><tr><td colspan=\"2\">a</td></tr><tr><td>b</td><td>c</td></tr></table>");
  const Table b = parse_markup("<table><tr><td>a</td><td></td></tr><tr><td>b</td><td>c</td></tr></table>");
  EXPECT_NEAR(s_teds(a, b), 1.0 - 2.0 / 8.0, 1e-12);
}

TEST(Ted, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2);
  int checked = 0;
  while (checked < 100) {
    const Table a = oracle::random_boxed_table(rng, 3, 3, 2);
    const Table b = oracle::random_boxed_table(rng, 3, 3, 2);
    const TableTree ta = table_tree(a), tb = table_tree(b);
    if (ta.size() > 12 || tb.size() > 12) continue;
    EXPECT_NEAR(tree_edit_distance(ta, tb), oracle::brute_ted(ta, tb), 1e-12);
    EXPECT_NEAR(teds(ta, tb), oracle::brute_teds(ta, tb), 1e-12);
    ++checked;
  }
}

TEST(Ted, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const TableTree a = table_tree(oracle::random_boxed_table(rng, 4, 4, 2));
    const TableTree b = table_tree(oracle::random_boxed_table(rng, 4, 4, 2));
    const double ab = tree_edit_distance(a, b);
    EXPECT_NEAR(ab, tree_edit_distance(b, a), 1e-12);
    const double s = teds(a, b);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Edit, Levenshtein) {
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3);
  EXPECT_EQ(levenshtein("", "abc"), 3);
  EXPECT_DOUBLE_EQ(normalized_edit("", ""), 0.0);
  EXPECT_DOUBLE_EQ(normalized_edit("ab", "ac"), 0.5);
}

TEST(Boxes, IouCases) {
  EXPECT_DOUBLE_EQ(iou(BBox{0, 0, 2, 1}, BBox{1, 0, 3, 1}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(BBox{0, 0, 2, 2}, BBox{0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou(BBox{0, 0, 1, 1}, BBox{5, 5, 6, 6}), 0.0);
  EXPECT_DOUBLE_EQ(iou(BBox{3, 3, 3, 3}, BBox{3, 3, 3, 3}), 1.0);
}

TEST(Boxes, AveragePrecision) {
  const std::vector<BBox> gold = {BBox{0, 0, 10, 10}, BBox{20, 20, 30, 30}};
  EXPECT_DOUBLE_EQ(ap50({{gold[0], 1.0}, {gold[1], 1.0}}, gold), 1.0);
  const std::vector<ScoredBox> mixed = {{gold[0], 0.9}, {BBox{50, 50, 60, 60}, 0.8}, {gold[1], 0.7}};
  EXPECT_NEAR(ap50(mixed, gold), 0.5 + 0.5 * (2.0 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(ap50({}, gold), 0.0);
  const std::vector<ScoredBox> dup = {{gold[0], 0.9}, {gold[0], 0.8}};
  EXPECT_NEAR(ap50(dup, gold), 0.5, 1e-12);
}

TEST(Car, PerfectPrediction) {
  const Table t = boxed_2x2();
  const PRF p = car_eval(t, t);
  EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(p.recall, 1.0);
  EXPECT_EQ(p.f1, 1.0);
}

TEST(Car, OneUnmatchedCell) {
  const Table gold = boxed_2x2();
  Table pred = gold;
  pred.cells[3].bbox = BBox{100, 100, 110, 110};
  const auto m = match_cells(pred, gold);
  EXPECT_EQ(m, (std::vector<int>{0, 1, 2, -1}));
  const PRF p = car_eval(pred, gold);
  EXPECT_DOUBLE_EQ(p.precision, 0.5);
  EXPECT_DOUBLE_EQ(p.recall, 0.5);
  EXPECT_DOUBLE_EQ(p.f1, 0.5);
}

TEST(Car, MissingBoxesThrow) {
  const Table bare = parse_markup("<table><tr><td>a</td></tr></table>");
  try {
    car_eval(bare, bare);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingBoxes);
  }
}

TEST(Index, NormalizeAnswer) {
  EXPECT_EQ(normalize_answer("1,234.50"), normalize_answer("1234.5"));
  EXPECT_EQ(normalize_answer("  Total   Revenue! "), normalize_answer("total revenue"));
  EXPECT_EQ(normalize_answer("2.00"), normalize_answer("2"));
  EXPECT_NE(normalize_answer("12"), normalize_answer("1.2"));
}

TEST(Index, AccuracyAndMicroF1) {
  EXPECT_DOUBLE_EQ(icr_accuracy({"a", "1,000"}, {"A", "1000"}), 1.0);
  EXPECT_DOUBLE_EQ(icr_accuracy({"a", "b"}, {"a", "c"}), 0.5);
  EXPECT_DOUBLE_EQ(list_micro_f1({{"a", "b", "c", "d"}}, {{"a", "b", "c", "x"}}), 0.75);
  EXPECT_DOUBLE_EQ(list_micro_f1({{"a"}, {"b", "c"}}, {{"a"}, {"b", "c"}}), 1.0);
}

TEST(Index, PerfectPredictionScoresOne) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Table t = oracle::random_boxed_table(rng, 6, 6, 3);
    for (QueryPolicy p : {QueryPolicy::kOwnerText, QueryPolicy::kAnchorOnly}) {
      const IndexScores s = index_scores(t, t, p);
      EXPECT_EQ(s.icr, 1.0);
      EXPECT_EQ(s.irdr, 1.0);
      EXPECT_EQ(s.icdr, 1.0);
    }
  }
}

TEST(Index, SmallerPredictionAnswersEmpty) {
  const Table gold = boxed_2x2();
  const Table pred = parse_markup("<table><tr><td>a</td><td>b</td></tr></table>");
  const IndexScores s = index_scores(pred, gold);
  EXPECT_DOUBLE_EQ(s.icr, 0.5);
  EXPECT_LT(s.irdr, 1.0);
}

TEST(Report, EvaluateIdenticalCorpus) {
  std::mt19937_64 rng(5);
  std::vector<Table> tables;
  for (int i = 0; i < 10; ++i) tables.push_back(oracle::random_boxed_table(rng, 4, 4, 2));
  const EvalReport r = evaluate(tables, tables);
  ASSERT_EQ(r.samples.size(), 10u);
  EXPECT_EQ(r.mean.teds, 1.0);
  EXPECT_EQ(r.mean.s_teds, 1.0);
  EXPECT_EQ(r.mean.car.f1, 1.0);
  EXPECT_EQ(r.mean.index.icr, 1.0);
}
