// SPDX-License-Identifier: Apache-2.0
#include "tableseq/struct_targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tableseq/binio.hpp"
#include "tableseq/error.hpp"

namespace tableseq {

SeparatorMasks separator_masks(const OwnerGrid& owners) {
  const auto rows = owners.rows();
  const auto cols = owners.cols();
  SeparatorMasks m;
  m.h_sep.resize(std::max<Eigen::Index>(rows - 1, 0), cols);
  m.v_sep.resize(rows, std::max<Eigen::Index>(cols - 1, 0));
  for (Eigen::Index r = 0; r + 1 < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m.h_sep(r, c) = owners(r, c) != owners(r + 1, c);
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c + 1 < cols; ++c) m.v_sep(r, c) = owners(r, c) != owners(r, c + 1);
  }
  return m;
}

int snap_median(std::vector<int> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::kShapeMismatch, "median of empty candidate set");
  std::sort(candidates.begin(), candidates.end());
  const std::size_t n = candidates.size();
  const double m = n % 2 ? candidates[n / 2] : 0.5 * (candidates[n / 2 - 1] + candidates[n / 2]);
  return static_cast<int>(std::ceil(m - 0.5));
}

void monotone_clip(std::vector<int>& positions, int limit) {
  if (positions.empty()) return;
  const int n = static_cast<int>(positions.size());
  positions[0] = std::max(positions[0], 0);
  for (int k = 1; k < n; ++k) positions[k] = std::max(positions[k], positions[k - 1] + 1);
  positions[n - 1] = std::min(positions[n - 1], limit - 1);
  for (int k = n - 2; k >= 0; --k) positions[k] = std::min(positions[k], positions[k + 1] - 1);
}

namespace {

// One axis of the alignment. `ends(cell)`/`starts(cell)` return the box edge
// on that axis; `last`/`first` the grid extent.
template <typename EndFn, typename StartFn, typename LastFn, typename FirstFn>
std::vector<int> align_axis(const Table& t, int count, int extent, EndFn ends, StartFn starts, LastFn last,
                            FirstFn first) {
  std::vector<int> out;
  for (int k = 0; k + 1 < count; ++k) {
    std::vector<int> cand;
    for (const auto& cell : t.cells) {
      if (last(cell) == k) cand.push_back(ends(*cell.bbox));
      if (first(cell) == k + 1) cand.push_back(starts(*cell.bbox));
    }
    if (cand.empty()) {
      out.push_back(static_cast<int>((static_cast<long long>(k + 1) * extent) / count));
    } else {
      out.push_back(snap_median(std::move(cand)));
    }
  }
  monotone_clip(out, extent);
  return out;
}

}  // namespace

Boundaries align_boundaries(const Table& table) {
  if (!table.image_size) throw Error(ErrorCode::kMissingImageSize, "table has no image size");
  if (!table.has_all_boxes()) throw Error(ErrorCode::kMissingBoxes, "boundary alignment needs every cell box");
  Boundaries b;
  b.masks = separator_masks(owner_grid(table));
  b.row_y = align_axis(
      table, table.rows, table.image_size->height, [](const BBox& x) { return x.y2; },
      [](const BBox& x) { return x.y1; }, [](const Cell& c) { return c.last_row(); },
      [](const Cell& c) { return c.row; });
  b.col_x = align_axis(
      table, table.cols, table.image_size->width, [](const BBox& x) { return x.x2; },
      [](const BBox& x) { return x.x1; }, [](const Cell& c) { return c.last_col(); },
      [](const Cell& c) { return c.col; });
  return b;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

namespace {

// One 1-D zero-padded pass along rows (horizontal) or columns (vertical).
Field<double> blur_pass(const Field<double>& in, const std::vector<double>& k, bool horizontal) {
  const int r = static_cast<int>(k.size() / 2);
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Field<double> out = Field<double>::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) {
        const int yy = horizontal ? y : y + i;
        const int xx = horizontal ? x + i : x;
        if (xx >= 0 && xx < w && yy >= 0 && yy < h) s += k[i + r] * in(yy, xx);
      }
      out(y, x) = s;
    }
  }
  return out;
}

}  // namespace

Field<double> gaussian_blur_zero(const Field<double>& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  // Both pass orders, averaged, so transposing the input transposes the
  // output bit for bit.
  const Field<double> hv = blur_pass(blur_pass(in, k, true), k, false);
  const Field<double> vh = blur_pass(blur_pass(in, k, false), k, true);
  return 0.5 * (hv + vh);
}

namespace {

// Grid index of each pixel along an axis: pixel p belongs to slot #{b < p}.
std::vector<int> slot_of_pixel(const std::vector<int>& bounds, int extent) {
  std::vector<int> slot(static_cast<std::size_t>(extent));
  for (int p = 0; p < extent; ++p) {
    slot[p] = static_cast<int>(std::lower_bound(bounds.begin(), bounds.end(), p) - bounds.begin());
  }
  return slot;
}

}  // namespace

StructMaps rasterize(const Boundaries& b, const OwnerGrid& owners, ImageSize size, const RasterConfig& cfg) {
  const int h = size.height;
  const int w = size.width;
  if (h <= 0 || w <= 0) throw Error(ErrorCode::kShapeMismatch, "image size must be positive");
  if (static_cast<Eigen::Index>(b.row_y.size()) + 1 != owners.rows() ||
      static_cast<Eigen::Index>(b.col_x.size()) + 1 != owners.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "boundaries do not match the owner grid");
  }
  const SeparatorMasks masks = separator_masks(owners);
  const auto col_of = slot_of_pixel(b.col_x, w);
  const auto row_of = slot_of_pixel(b.row_y, h);
  const double s2 = 2.0 * cfg.sigma_line * cfg.sigma_line;
  const double cutoff = cfg.cutoff_sigmas * cfg.sigma_line;

  Field<double> rows = Field<double>::Zero(h, w);
  Field<double> cols = Field<double>::Zero(h, w);
  for (std::size_t k = 0; k < b.row_y.size(); ++k) {
    const int yk = b.row_y[k];
    const int lo = std::max(0, static_cast<int>(std::floor(yk - cutoff)));
    const int hi = std::min(h - 1, static_cast<int>(std::ceil(yk + cutoff)));
    for (int x = 0; x < w; ++x) {
      if (!masks.h_sep(static_cast<Eigen::Index>(k), col_of[x])) continue;
      for (int y = lo; y <= hi; ++y) {
        const double d = y - yk;
        if (std::abs(d) > cutoff) continue;
        rows(y, x) = std::max(rows(y, x), std::exp(-d * d / s2));
      }
    }
  }
  for (std::size_t k = 0; k < b.col_x.size(); ++k) {
    const int xk = b.col_x[k];
    const int lo = std::max(0, static_cast<int>(std::floor(xk - cutoff)));
    const int hi = std::min(w - 1, static_cast<int>(std::ceil(xk + cutoff)));
    for (int y = 0; y < h; ++y) {
      if (!masks.v_sep(row_of[y], static_cast<Eigen::Index>(k))) continue;
      for (int x = lo; x <= hi; ++x) {
        const double d = x - xk;
        if (std::abs(d) > cutoff) continue;
        cols(y, x) = std::max(cols(y, x), std::exp(-d * d / s2));
      }
    }
  }
  Field<double> corners = gaussian_blur_zero(rows.cwiseProduct(cols), cfg.sigma_corner);

  StructMaps m;
  m.rows = rows.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  m.cols = cols.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  m.corners = corners.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  m.sigma_line = cfg.sigma_line;
  m.sigma_corner = cfg.sigma_corner;
  return m;
}

StructMaps build_targets(const Table& table, const RasterConfig& config) {
  const Boundaries b = align_boundaries(table);
  return rasterize(b, owner_grid(table), *table.image_size, config);
}

Field<double> area_resample(const Field<double>& in, int out_h, int out_w) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  if (out_h <= 0 || out_w <= 0 || h == 0 || w == 0) throw Error(ErrorCode::kShapeMismatch, "empty resample");
  if (out_h == h && out_w == w) return in;
  // Overlap weights of output bins with input pixels, one axis at a time.
  auto weights = [](int n_in, int n_out) {
    Field<double> wt = Field<double>::Zero(n_out, n_in);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
      const double a = o * scale;
      const double b = (o + 1) * scale;
      for (int i = static_cast<int>(std::floor(a)); i < n_in && i < b; ++i) {
        const double overlap = std::min<double>(b, i + 1) - std::max<double>(a, i);
        if (overlap > 0) wt(o, i) = overlap / scale;
      }
    }
    return wt;
  };
  const Field<double> wy = weights(h, out_h);
  const Field<double> wx = weights(w, out_w);
  return wy * in * wx.transpose();
}

StructMaps downsample_targets(const StructMaps& maps, int out_h, int out_w) {
  StructMaps out;
  for (int k = 0; k < 3; ++k) {
    out.channel(k) =
        area_resample(maps.channel(k).cast<double>(), out_h, out_w).cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  }
  out.sigma_line = maps.sigma_line;
  out.sigma_corner = maps.sigma_corner;
  return out;
}

void write_targets(const std::filesystem::path& path, const StructMaps& maps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write("TSQT", 4);
  binio::put_u32(out, 3);
  binio::put_u32(out, static_cast<std::uint32_t>(maps.height()));
  binio::put_u32(out, static_cast<std::uint32_t>(maps.width()));
  for (int k = 0; k < 3; ++k) {
    const auto& f = maps.channel(k);
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
}

StructMaps read_targets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kPathMissing, path.string());
  binio::expect_magic(in, "TSQT");
  const auto c = binio::get_u32(in);
  const auto h = binio::get_u32(in);
  const auto w = binio::get_u32(in);
  if (c != 3 || h == 0 || w == 0 || h > 100000 || w > 100000) throw Error(ErrorCode::kFormat, "bad TSQT dims");
  StructMaps m;
  for (int k = 0; k < 3; ++k) {
    auto& f = m.channel(k);
    f.resize(h, w);
    if (!in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)))) {
      throw Error(ErrorCode::kFormat, "truncated TSQT payload");
    }
  }
  return m;
}

}  // namespace tableseq
