// SPDX-License-Identifier: Apache-2.0
//
// Adjacency from pairwise cell geometry: two cells touch horizontally when
// one ends in the column before the other starts and their row ranges
// overlap (vertically likewise).
#pragma once

#include <algorithm>
#include <set>

#include "tableseq/table.hpp"

namespace oracle {

inline tableseq::AdjacencyGraph pairwise_adjacency(const tableseq::Table& t) {
  using tableseq::Adjacency;
  using tableseq::Direction;
  std::set<Adjacency> out;
  for (const auto& a : t.cells) {
    for (const auto& b : t.cells) {
      if (a.id == b.id) continue;
      const bool rows_overlap = std::max(a.row, b.row) <= std::min(a.last_row(), b.last_row());
      const bool cols_overlap = std::max(a.col, b.col) <= std::min(a.last_col(), b.last_col());
      if (rows_overlap && a.last_col() + 1 == b.col) out.insert({a.id, b.id, Direction::kHorizontal});
      if (cols_overlap && a.last_row() + 1 == b.row) out.insert({a.id, b.id, Direction::kVertical});
    }
  }
  return {out.begin(), out.end()};
}

/// Owner of every slot by scanning all cells.
inline int slot_owner(const tableseq::Table& t, int r, int c) {
  for (const auto& cell : t.cells) {
    if (r >= cell.row && r <= cell.last_row() && c >= cell.col && c <= cell.last_col()) return cell.id;
  }
  return -1;
}

}  // namespace oracle
