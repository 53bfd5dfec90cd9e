// SPDX-License-Identifier: Apache-2.0
//
// Document enhancement (illumination flattening, CLAHE, unsharp masking,
// optional smoothing) and dataset normalization.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tableseq/annotation.hpp"
#include "tableseq/image.hpp"

namespace tableseq {

struct EnhanceConfig {
  bool illum_correction = true;
  double clahe_clip = 2.0;
  int clahe_tiles_x = 8;
  int clahe_tiles_y = 8;
  double unsharp_amount = 0.5;
  double unsharp_sigma = 1.0;
  std::optional<double> denoise;  // Gaussian sigma; off by default

  /// Throws ConfigInvalid.
  void check() const;
};

/// Side of the square structuring element: max(3, round(0.02 min(H, W))),
/// bumped to the next odd number.
int illum_kernel_side(int height, int width);

/// Grayscale erosion / dilation with a k x k square, replicate borders.
Plane erode(const Plane& in, int k);
Plane dilate(const Plane& in, int k);

/// Background by opening the inverted page (so dark ink is removed), then
/// out = I * max(bg) / bg, rounded and clipped to [0, 255].
Plane illum_correct(const Plane& gray);

/// Contrast-limited adaptive histogram equalization on integer levels with
/// bilinear blending of per-tile lookup tables. Flat tiles map to identity.
Plane clahe(const Plane& lum, double clip, int tiles_x, int tiles_y);

/// Normalized separable Gaussian blur with replicate borders.
Plane gaussian_blur(const Plane& in, double sigma);

/// round(clip((1 + a) I - a blur(I))).
Plane unsharp(const Plane& in, double amount, double sigma);

/// BT.601 luma.
Plane luma(const Image& rgb);

/// Full pipeline: illum, CLAHE, unsharp, optional smoothing. RGB inputs are
/// processed on luma and the change is added back to every channel.
Image enhance(const Image& image, const EnhanceConfig& config);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-channel statistics of I/255 over all pixels. Throws StatDegenerate if
/// any channel has zero spread and ShapeMismatch on mixed channel counts.
NormStats compute_stats(const std::vector<Image>& images);

/// Loads every record of `split` from the manifest (paths relative to `root`).
NormStats compute_stats(const std::vector<Annotation>& records, const std::filesystem::path& root,
                        const std::string& split = "train");

/// (I/255 - mean_c) / std_c per channel.
std::vector<Field<double>> normalize(const Image& image, const NormStats& stats);

void write_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_stats(const std::filesystem::path& path);

}  // namespace tableseq
