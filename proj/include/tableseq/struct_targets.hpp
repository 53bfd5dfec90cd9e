// SPDX-License-Identifier: Apache-2.0
//
// Dense supervision for the structure-prior head: boundary alignment by
// median snapping, then Gaussian ridge rasterization of row separators,
// column separators and their junctions.
#pragma once

#include <filesystem>
#include <vector>

#include "tableseq/field.hpp"
#include "tableseq/table.hpp"

namespace tableseq {

using SepMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// h_sep is (R-1) x C with h_sep(r,c) = O(r,c) != O(r+1,c);
/// v_sep is R x (C-1) with v_sep(r,c) = O(r,c) != O(r,c+1).
struct SeparatorMasks {
  SepMask h_sep;
  SepMask v_sep;
};

SeparatorMasks separator_masks(const OwnerGrid& owners);

/// Pixel positions of the internal grid lines, strictly increasing.
struct Boundaries {
  std::vector<int> row_y;  // R-1 entries
  std::vector<int> col_x;  // C-1 entries
  SeparatorMasks masks;
};

/// Median of the candidate edges, snapped to the pixel grid (exact halves
/// round down).
int snap_median(std::vector<int> candidates);

/// Makes positions strictly increasing inside [0, limit-1].
void monotone_clip(std::vector<int>& positions, int limit);

/// Throws MissingBoxes / MissingImageSize.
Boundaries align_boundaries(const Table& table);

struct RasterConfig {
  double sigma_line = 1.5;
  double sigma_corner = 2.0;
  /// Ridges are zero beyond this many sigmas from their line.
  double cutoff_sigmas = 4.0;
};

struct StructMaps {
  Field<float> rows;
  Field<float> cols;
  Field<float> corners;
  double sigma_line = 0.0;
  double sigma_corner = 0.0;

  int height() const { return static_cast<int>(rows.rows()); }
  int width() const { return static_cast<int>(rows.cols()); }
  const Field<float>& channel(int k) const { return k == 0 ? rows : (k == 1 ? cols : corners); }
  Field<float>& channel(int k) { return k == 0 ? rows : (k == 1 ? cols : corners); }
};

/// Normalized, truncated 1-D Gaussian kernel with radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with zero padding outside the field.
Field<double> gaussian_blur_zero(const Field<double>& in, double sigma);

StructMaps rasterize(const Boundaries& boundaries, const OwnerGrid& owners, ImageSize image_size,
                     const RasterConfig& config = {});

/// Convenience: align + rasterize with the table's own owner grid.
StructMaps build_targets(const Table& table, const RasterConfig& config = {});

/// Area-average resampling of a field to (out_h, out_w).
Field<double> area_resample(const Field<double>& in, int out_h, int out_w);

StructMaps downsample_targets(const StructMaps& maps, int out_h, int out_w);

/// "TSQT" magic, u32 dims (3, H, W), float32 row-major payload, little-endian.
void write_targets(const std::filesystem::path& path, const StructMaps& maps);
StructMaps read_targets(const std::filesystem::path& path);

}  // namespace tableseq
