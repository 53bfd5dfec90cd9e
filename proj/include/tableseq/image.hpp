// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "tableseq/field.hpp"

namespace tableseq {

/// One image channel, row-major, intensities in [0, 255].
using Plane = Field<float>;

/// Planar image with one (gray) or three (RGB) channels of equal size.
struct Image {
  std::vector<Plane> channels;

  Image() = default;
  explicit Image(Plane gray) { channels.push_back(std::move(gray)); }
  Image(int height, int width, int channel_count, float fill = 0.0f)
      : channels(static_cast<std::size_t>(channel_count), Plane::Constant(height, width, fill)) {}

  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  int channel_count() const { return static_cast<int>(channels.size()); }
  Plane& gray() { return channels.at(0); }
  const Plane& gray() const { return channels.at(0); }

  friend bool operator==(const Image& a, const Image& b) {
    if (a.channels.size() != b.channels.size()) return false;
    for (std::size_t c = 0; c < a.channels.size(); ++c) {
      if (a.channels[c].rows() != b.channels[c].rows() || a.channels[c].cols() != b.channels[c].cols()) return false;
      if (a.channels[c] != b.channels[c]) return false;
    }
    return true;
  }
};

/// Binary PGM (P5) for one channel, PPM (P6) for three. Values are rounded
/// and clamped to 8 bits on write.
void write_pnm(const std::filesystem::path& path, const Image& image);
Image read_pnm(const std::filesystem::path& path);

}  // namespace tableseq
