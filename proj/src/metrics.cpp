// SPDX-License-Identifier: Apache-2.0
#include "tableseq/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <tuple>

#include "tableseq/error.hpp"

namespace tableseq {

namespace {

TreeNode make_node(std::string tag, int rowspan = 1, int colspan = 1, std::string text = {}) {
  TreeNode n;
  n.tag = std::move(tag);
  n.rowspan = rowspan;
  n.colspan = colspan;
  n.text = std::move(text);
  return n;
}

}  // namespace

TableTree table_tree(const Table& t, bool with_text) {
  TableTree tree;
  tree.nodes.push_back(make_node("table"));
  const int h = t.header_rows();
  auto section = [&](const char* tag, int r0, int r1) {
    const int s = tree.size();
    tree.nodes.push_back(make_node(tag));
    tree.nodes[0].children.push_back(s);
    for (int r = r0; r < r1; ++r) {
      const int tr = tree.size();
      tree.nodes.push_back(make_node("tr"));
      tree.nodes[s].children.push_back(tr);
      for (const auto& c : t.cells) {
        if (c.row != r) continue;
        const int td = tree.size();
        tree.nodes.push_back(make_node("td", c.rowspan, c.colspan, with_text ? c.text : std::string()));
        tree.nodes[tr].children.push_back(td);
      }
    }
  };
  if (h > 0) section("thead", 0, h);
  if (h < t.rows) section("tbody", h, t.rows);
  return tree;
}

int levenshtein(std::string_view a, std::string_view b) {
  std::vector<int> prev(b.size() + 1);
  std::vector<int> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double normalized_edit(std::string_view a, std::string_view b) {
  const std::size_t n = std::max(a.size(), b.size());
  return n == 0 ? 0.0 : static_cast<double>(levenshtein(a, b)) / static_cast<double>(n);
}

double rename_cost(const TreeNode& a, const TreeNode& b) {
  if (a.tag != b.tag || a.rowspan != b.rowspan || a.colspan != b.colspan) return 1.0;
  return a.tag == "td" ? normalized_edit(a.text, b.text) : 0.0;
}

namespace {

struct Postorder {
  std::vector<int> node;  // postorder index -> tree node
  std::vector<int> lml;   // leftmost leaf descendant (postorder index)
  std::vector<int> keyroots;
};

Postorder postorder(const TableTree& t) {
  Postorder p;
  const int n = t.size();
  p.node.reserve(n);
  p.lml.reserve(n);
  // Iterative traversal; trees are shallow but rows can be long.
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  std::vector<int> first_leaf(n, -1);
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const auto& kids = t.nodes[v].children;
    if (next < kids.size()) {
      const int child = kids[next++];
      stack.emplace_back(child, 0);
      continue;
    }
    const int idx = static_cast<int>(p.node.size());
    p.node.push_back(v);
    p.lml.push_back(kids.empty() ? idx : first_leaf[kids.front()]);
    first_leaf[v] = p.lml.back();
    stack.pop_back();
  }
  std::vector<bool> seen(n, false);
  for (int i = n - 1; i >= 0; --i) {
    if (!seen[p.lml[i]]) {
      p.keyroots.push_back(i);
      seen[p.lml[i]] = true;
    }
  }
  std::sort(p.keyroots.begin(), p.keyroots.end());
  return p;
}

}  // namespace

double tree_edit_distance(const TableTree& a, const TableTree& b) {
  const Postorder pa = postorder(a);
  const Postorder pb = postorder(b);
  const int n = a.size();
  const int m = b.size();
  std::vector<double> td(static_cast<std::size_t>(n) * m, 0.0);
  auto TD = [&](int i, int j) -> double& { return td[static_cast<std::size_t>(i) * m + j]; };
  std::vector<double> fd(static_cast<std::size_t>(n + 1) * (m + 1));
  for (int i : pa.keyroots) {
    for (int j : pb.keyroots) {
      const int li = pa.lml[i];
      const int lj = pb.lml[j];
      const int rows = i - li + 2;
      const int cols = j - lj + 2;
      auto FD = [&](int x, int y) -> double& { return fd[static_cast<std::size_t>(x) * cols + y]; };
      FD(0, 0) = 0;
      for (int x = 1; x < rows; ++x) FD(x, 0) = FD(x - 1, 0) + 1.0;
      for (int y = 1; y < cols; ++y) FD(0, y) = FD(0, y - 1) + 1.0;
      for (int x = 1; x < rows; ++x) {
        const int ai = li + x - 1;
        for (int y = 1; y < cols; ++y) {
          const int bj = lj + y - 1;
          const double del = FD(x - 1, y) + 1.0;
          const double ins = FD(x, y - 1) + 1.0;
          if (pa.lml[ai] == li && pb.lml[bj] == lj) {
            const double ren = FD(x - 1, y - 1) + rename_cost(a.nodes[pa.node[ai]], b.nodes[pb.node[bj]]);
            FD(x, y) = std::min({del, ins, ren});
            TD(ai, bj) = FD(x, y);
          } else {
            const int px = pa.lml[ai] - li;
            const int py = pb.lml[bj] - lj;
            FD(x, y) = std::min({del, ins, FD(px, py) + TD(ai, bj)});
          }
        }
      }
    }
  }
  return TD(n - 1, m - 1);
}

double teds(const TableTree& pred, const TableTree& gold) {
  const double denom = std::max(pred.size(), gold.size());
  return 1.0 - tree_edit_distance(pred, gold) / denom;
}

double teds(const Table& pred, const Table& gold) { return teds(table_tree(pred, true), table_tree(gold, true)); }

double s_teds(const Table& pred, const Table& gold) {
  return teds(table_tree(pred, false), table_tree(gold, false));
}

double iou(const BBox& a, const BBox& b) {
  const long ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const long iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const long inter = ix * iy;
  const long area_a = static_cast<long>(a.width()) * a.height();
  const long area_b = static_cast<long>(b.width()) * b.height();
  const long uni = area_a + area_b - inter;
  if (uni <= 0) return a == b ? 1.0 : 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double average_precision(const std::vector<std::vector<ScoredBox>>& preds,
                         const std::vector<std::vector<BBox>>& golds, double iou_thresh) {
  if (preds.size() != golds.size()) throw Error(ErrorCode::kShapeMismatch, "prediction and gold image counts differ");
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gold = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total_gold += golds[i].size();
    for (std::size_t k = 0; k < preds[i].size(); ++k) ranked.push_back({preds[i][k].score, i, k});
  }
  if (total_gold == 0) return ranked.empty() ? 1.0 : 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> taken(golds.size());
  for (std::size_t i = 0; i < golds.size(); ++i) taken[i].assign(golds[i].size(), false);
  std::vector<double> prec;
  std::vector<double> rec;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& r : ranked) {
    const BBox& box = preds[r.image][r.index].box;
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < golds[r.image].size(); ++g) {
      const double v = iou(box, golds[r.image][g]);
      if (v > best) {
        best = v;
        arg = g;
      }
    }
    if (best >= iou_thresh && !taken[r.image][arg]) {
      taken[r.image][arg] = true;
      ++tp;
    } else {
      ++fp;
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(total_gold));
  }
  // Precision envelope, then area under the step curve.
  for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  double last_recall = 0.0;
  for (std::size_t i = 0; i < prec.size(); ++i) {
    ap += (rec[i] - last_recall) * prec[i];
    last_recall = rec[i];
  }
  return ap;
}

double ap50(const std::vector<ScoredBox>& preds, const std::vector<BBox>& golds) {
  return average_precision({preds}, {golds}, 0.5);
}

namespace {

void require_boxes(const Table& t) {
  if (!t.has_all_boxes()) throw Error(ErrorCode::kMissingBoxes, "adjacency evaluation needs every cell box");
}

double ratio(std::size_t num, std::size_t den, bool other_empty) {
  if (den == 0) return other_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

std::vector<int> match_cells(const Table& pred, const Table& gold, double iou_thresh) {
  require_boxes(pred);
  require_boxes(gold);
  std::vector<std::tuple<double, int, int>> cand;
  for (const auto& p : pred.cells) {
    for (const auto& g : gold.cells) {
      const double v = iou(*p.bbox, *g.bbox);
      if (v >= iou_thresh) cand.emplace_back(v, p.id, g.id);
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<int> match(pred.cells.size(), -1);
  std::vector<bool> used(gold.cells.size(), false);
  for (const auto& [v, p, g] : cand) {
    if (match[p] != -1 || used[g]) continue;
    match[p] = g;
    used[g] = true;
  }
  return match;
}

PRF car_eval(const Table& pred, const Table& gold, double iou_thresh) {
  const std::vector<int> match = match_cells(pred, gold, iou_thresh);
  const AdjacencyGraph gp = adjacency(pred);
  const AdjacencyGraph gg = adjacency(gold);
  const std::set<Adjacency> gold_set(gg.begin(), gg.end());
  std::size_t hit = 0;
  for (const auto& e : gp) {
    const int a = match[e.a];
    const int b = match[e.b];
    if (a < 0 || b < 0) continue;
    if (gold_set.count(Adjacency{a, b, e.direction})) ++hit;
  }
  PRF r;
  r.precision = ratio(hit, gp.size(), gg.empty());
  r.recall = ratio(hit, gg.size(), gp.empty());
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

std::string normalize_answer(std::string_view s) {
  auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  std::string out;
  bool pending_space = false;
  auto emit = [&](const std::string& piece) {
    if (piece.empty()) return;
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += piece;
  };
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool sign = (c == '-' || c == '+') && i + 1 < s.size() && digit(s[i + 1]) && (i == 0 || !alnum(s[i - 1]));
    if (digit(c) || sign) {
      std::string num;
      if (sign) {
        if (c == '-') num += '-';
        ++i;
      }
      // Integer part, dropping comma separators between digit groups.
      while (i < s.size()) {
        if (digit(s[i])) {
          num += s[i++];
        } else if (s[i] == ',' && i + 3 < s.size() && digit(s[i + 1]) && digit(s[i + 2]) && digit(s[i + 3]) &&
                   (i + 4 >= s.size() || !digit(s[i + 4]))) {
          ++i;
        } else {
          break;
        }
      }
      if (i + 1 < s.size() && s[i] == '.' && digit(s[i + 1])) {
        std::string frac;
        ++i;
        while (i < s.size() && digit(s[i])) frac += s[i++];
        while (!frac.empty() && frac.back() == '0') frac.pop_back();
        if (!frac.empty()) num += "." + frac;
      }
      if (num == "-0") num = "0";
      emit(num);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
    } else if (!std::ispunct(static_cast<unsigned char>(c))) {
      emit(std::string(1, static_cast<char>(std::tolower(static_cast<unsigned char>(c)))));
    }
    ++i;
  }
  return out;
}

double icr_accuracy(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (gold.empty()) return pred.empty() ? 1.0 : 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (i < pred.size() && normalize_answer(pred[i]) == normalize_answer(gold[i])) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

double list_micro_f1(const std::vector<std::vector<std::string>>& pred,
                     const std::vector<std::vector<std::string>>& gold) {
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  for (std::size_t q = 0; q < std::max(pred.size(), gold.size()); ++q) {
    static const std::vector<std::string> kEmpty;
    const auto& p = q < pred.size() ? pred[q] : kEmpty;
    const auto& g = q < gold.size() ? gold[q] : kEmpty;
    n_pred += p.size();
    n_gold += g.size();
    for (std::size_t i = 0; i < std::min(p.size(), g.size()); ++i) {
      if (normalize_answer(p[i]) == normalize_answer(g[i])) ++tp;
    }
  }
  if (n_pred == 0 && n_gold == 0) return 1.0;
  const double prec = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  const double rec = n_gold ? static_cast<double>(tp) / static_cast<double>(n_gold) : 0.0;
  return harmonic(prec, rec);
}

IndexScores index_scores(const Table& pred, const Table& gold, QueryPolicy policy) {
  std::vector<std::string> cp;
  std::vector<std::string> cg;
  for (int i = 0; i < gold.rows; ++i) {
    for (int j = 0; j < gold.cols; ++j) {
      cg.push_back(query_cell(gold, i, j, policy));
      cp.push_back(i < pred.rows && j < pred.cols ? query_cell(pred, i, j, policy) : std::string());
    }
  }
  std::vector<std::vector<std::string>> rp, rg, kp, kg;
  for (int i = 0; i < gold.rows; ++i) {
    rg.push_back(query_row(gold, i));
    rp.push_back(i < pred.rows ? query_row(pred, i) : std::vector<std::string>{});
  }
  for (int j = 0; j < gold.cols; ++j) {
    kg.push_back(query_col(gold, j));
    kp.push_back(j < pred.cols ? query_col(pred, j) : std::vector<std::string>{});
  }
  return IndexScores{icr_accuracy(cp, cg), list_micro_f1(rp, rg), list_micro_f1(kp, kg)};
}

EvalReport evaluate(const std::vector<Table>& preds, const std::vector<Table>& golds, QueryPolicy policy) {
  if (preds.size() != golds.size()) throw Error(ErrorCode::kShapeMismatch, "prediction and gold counts differ");
  EvalReport rep;
  std::vector<std::vector<ScoredBox>> all_pred;
  std::vector<std::vector<BBox>> all_gold;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Table& p = preds[i];
    const Table& g = golds[i];
    SampleScores s;
    s.teds = teds(p, g);
    s.s_teds = s_teds(p, g);
    if (p.has_all_boxes() && g.has_all_boxes()) {
      s.car = car_eval(p, g);
      std::vector<ScoredBox> pb;
      std::vector<BBox> gb;
      for (const auto& c : p.cells) pb.push_back({*c.bbox, 1.0});
      for (const auto& c : g.cells) gb.push_back(*c.bbox);
      s.ap50 = ap50(pb, gb);
      all_pred.push_back(std::move(pb));
      all_gold.push_back(std::move(gb));
    }
    s.index = index_scores(p, g, policy);
    rep.samples.push_back(s);
  }
  for (const auto& s : rep.samples) {
    rep.mean.teds += s.teds;
    rep.mean.s_teds += s.s_teds;
    rep.mean.car.precision += s.car.precision;
    rep.mean.car.recall += s.car.recall;
    rep.mean.car.f1 += s.car.f1;
    rep.mean.index.icr += s.index.icr;
    rep.mean.index.irdr += s.index.irdr;
    rep.mean.index.icdr += s.index.icdr;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, rep.samples.size()));
  for (double* v : {&rep.mean.teds, &rep.mean.s_teds, &rep.mean.car.precision, &rep.mean.car.recall, &rep.mean.car.f1,
                    &rep.mean.index.icr, &rep.mean.index.irdr, &rep.mean.index.icdr}) {
    *v /= n;
  }
  rep.mean.ap50 = all_pred.empty() ? 0.0 : average_precision(all_pred, all_gold, 0.5);
  return rep;
}

}  // namespace tableseq
