// SPDX-License-Identifier: Apache-2.0
//
// Table evaluation: tree-edit similarity over the markup DOM, cell
// adjacency relations, box AP at IoU 0.5 and index-query scores.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tableseq/table.hpp"

namespace tableseq {

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
  std::string tag;  // table, thead, tbody, tr, td
  int rowspan = 1;
  int colspan = 1;
  std::string text;
  std::vector<int> children;
};

/// Ordered labeled tree; node 0 is the root.
struct TableTree {
  std::vector<TreeNode> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// table -> [thead] [tbody] -> tr -> td, mirroring the emitted markup. With
/// `with_text` false every td payload is empty.
TableTree table_tree(const Table& table, bool with_text = true);

/// Levenshtein distance over bytes.
int levenshtein(std::string_view a, std::string_view b);

/// Levenshtein / max length, 0 for two empty strings.
double normalized_edit(std::string_view a, std::string_view b);

/// 1 if the tags or span attributes differ, else the normalized text edit
/// distance for td nodes and 0 for the rest.
double rename_cost(const TreeNode& a, const TreeNode& b);

/// Ordered tree edit distance (keyroot dynamic program), unit insert/delete.
double tree_edit_distance(const TableTree& a, const TableTree& b);

double teds(const TableTree& pred, const TableTree& gold);
double teds(const Table& pred, const Table& gold);
/// Text ignored; span attributes still part of the node label.
double s_teds(const Table& pred, const Table& gold);

// ---------------------------------------------------------------------------
// Boxes

/// Area IoU of half-open boxes. Boxes without area compare by equality.
double iou(const BBox& a, const BBox& b);

struct ScoredBox {
  BBox box;
  double score = 1.0;
};

/// All-point interpolated average precision at the given IoU threshold.
/// Predictions from all images are ranked jointly by score (stable on ties).
double average_precision(const std::vector<std::vector<ScoredBox>>& preds,
                         const std::vector<std::vector<BBox>>& golds, double iou_thresh = 0.5);
double ap50(const std::vector<ScoredBox>& preds, const std::vector<BBox>& golds);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy one-to-one matching by descending IoU (>= thresh); returns, per
/// predicted cell, the matched gold id or -1.
std::vector<int> match_cells(const Table& pred, const Table& gold, double iou_thresh = 0.5);

/// Adjacency-relation precision/recall/F1 through the cell matching. Empty
/// relation sets on both sides score 1. Throws MissingBoxes.
PRF car_eval(const Table& pred, const Table& gold, double iou_thresh = 0.5);

// ---------------------------------------------------------------------------
// Index queries

enum class IndexTask { kICR, kIRDR, kICDR };

/// Numbers lose thousands separators and trailing fractional zeros, then
/// the text is lowercased, whitespace collapsed and punctuation outside
/// numbers dropped.
std::string normalize_answer(std::string_view text);

/// Exact-match accuracy after normalization, pairing answers by position.
double icr_accuracy(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

/// Micro-F1 over lists of cell strings, pairing items by position.
double list_micro_f1(const std::vector<std::vector<std::string>>& pred,
                     const std::vector<std::vector<std::string>>& gold);

struct IndexScores {
  double icr = 0.0;
  double irdr = 0.0;
  double icdr = 0.0;
};

/// Queries every gold slot, row and column against both tables; queries
/// outside the predicted grid answer empty.
IndexScores index_scores(const Table& pred, const Table& gold, QueryPolicy policy = QueryPolicy::kOwnerText);

// ---------------------------------------------------------------------------
// Reports

struct SampleScores {
  double teds = 0.0;
  double s_teds = 0.0;
  PRF car;
  double ap50 = 0.0;
  IndexScores index;
};

struct EvalReport {
  std::vector<SampleScores> samples;
  SampleScores mean;  // ap50 here is pooled over the corpus
};

/// Predicted boxes take score 1 in emission order. CAR and AP are skipped
/// (left at 0) for samples where either side lacks boxes.
EvalReport evaluate(const std::vector<Table>& preds, const std::vector<Table>& golds,
                    QueryPolicy policy = QueryPolicy::kOwnerText);

}  // namespace tableseq
