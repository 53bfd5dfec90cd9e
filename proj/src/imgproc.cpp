// SPDX-License-Identifier: Apache-2.0
#include "tableseq/imgproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tableseq/error.hpp"

namespace tableseq {

void EnhanceConfig::check() const {
  if (!(clahe_clip > 0)) throw Error(ErrorCode::kConfigInvalid, "clahe clip must be positive");
  if (clahe_tiles_x < 1 || clahe_tiles_y < 1) throw Error(ErrorCode::kConfigInvalid, "clahe tiles must be >= 1");
  if (!(unsharp_amount >= 0)) throw Error(ErrorCode::kConfigInvalid, "unsharp amount must be >= 0");
  if (!(unsharp_sigma > 0)) throw Error(ErrorCode::kConfigInvalid, "unsharp sigma must be positive");
  if (denoise && !(*denoise > 0)) throw Error(ErrorCode::kConfigInvalid, "denoise strength must be positive");
}

int illum_kernel_side(int height, int width) {
  int k = std::max(3, static_cast<int>(std::lround(0.02 * std::min(height, width))));
  if (k % 2 == 0) ++k;
  return k;
}

namespace {

// Running min/max along one axis with a window of k (replicate borders).
template <typename Pick>
Plane morph(const Plane& in, int k, Pick pick) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int r = k / 2;
  Plane tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float v = in(y, std::clamp(x - r, 0, w - 1));
      for (int i = -r + 1; i <= r; ++i) v = pick(v, in(y, std::clamp(x + i, 0, w - 1)));
      tmp(y, x) = v;
    }
  }
  Plane out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float v = tmp(std::clamp(y - r, 0, h - 1), x);
      for (int i = -r + 1; i <= r; ++i) v = pick(v, tmp(std::clamp(y + i, 0, h - 1), x));
      out(y, x) = v;
    }
  }
  return out;
}

Plane clip_round(const Plane& p) {
  return p.unaryExpr([](float v) { return std::clamp(std::round(v), 0.0f, 255.0f); });
}

void check_plane(const Plane& p) {
  if (p.size() == 0) throw Error(ErrorCode::kShapeMismatch, "empty image");
  if (!p.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "image has non-finite pixels");
}

}  // namespace

Plane erode(const Plane& in, int k) {
  return morph(in, k, [](float a, float b) { return std::min(a, b); });
}

Plane dilate(const Plane& in, int k) {
  return morph(in, k, [](float a, float b) { return std::max(a, b); });
}

Plane illum_correct(const Plane& gray) {
  check_plane(gray);
  const int k = illum_kernel_side(static_cast<int>(gray.rows()), static_cast<int>(gray.cols()));
  const Plane inv = (255.0f - gray.array()).matrix();
  const Plane bg = (255.0f - dilate(erode(inv, k), k).array()).matrix();
  const float top = bg.maxCoeff();
  if (top <= 0.0f) return clip_round(gray);
  Plane out = gray;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const float b = std::max(bg.data()[i], 1.0f);
    out.data()[i] = gray.data()[i] * (top / b);
  }
  return clip_round(out);
}

Plane clahe(const Plane& lum, double clip, int tiles_x, int tiles_y) {
  check_plane(lum);
  if (!(clip > 0) || tiles_x < 1 || tiles_y < 1) throw Error(ErrorCode::kConfigInvalid, "bad CLAHE parameters");
  const int h = static_cast<int>(lum.rows());
  const int w = static_cast<int>(lum.cols());
  tiles_y = std::min(tiles_y, h);
  tiles_x = std::min(tiles_x, w);
  auto level = [&](int y, int x) { return std::clamp(static_cast<int>(std::lround(lum(y, x))), 0, 255); };
  auto y0 = [&](int ty) { return static_cast<int>(static_cast<long>(ty) * h / tiles_y); };
  auto x0 = [&](int tx) { return static_cast<int>(static_cast<long>(tx) * w / tiles_x); };

  std::vector<std::array<float, 256>> luts(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      std::array<long, 256> hist{};
      const int ya = y0(ty), yb = y0(ty + 1), xa = x0(tx), xb = x0(tx + 1);
      const long area = static_cast<long>(yb - ya) * (xb - xa);
      for (int y = ya; y < yb; ++y) {
        for (int x = xa; x < xb; ++x) ++hist[level(y, x)];
      }
      auto& lut = luts[static_cast<std::size_t>(ty) * tiles_x + tx];
      const long distinct = std::count_if(hist.begin(), hist.end(), [](long c) { return c > 0; });
      if (distinct <= 1) {
        for (int v = 0; v < 256; ++v) lut[v] = static_cast<float>(v);
        continue;
      }
      const double limit = std::max(1.0, clip * static_cast<double>(area) / 256.0);
      if (std::isfinite(limit) && limit < static_cast<double>(area)) {
        const long cap = static_cast<long>(limit);
        long excess = 0;
        for (auto& c : hist) {
          if (c > cap) {
            excess += c - cap;
            c = cap;
          }
        }
        const long each = excess / 256;
        const long rest = excess - each * 256;
        for (auto& c : hist) c += each;
        if (rest > 0) {
          const long step = std::max(1L, 256 / rest);
          long given = 0;
          for (int v = 0; v < 256 && given < rest; v += static_cast<int>(step), ++given) ++hist[v];
        }
      }
      long cdf = 0;
      for (int v = 0; v < 256; ++v) {
        cdf += hist[v];
        lut[v] = static_cast<float>(std::lround(255.0 * static_cast<double>(cdf) / static_cast<double>(area)));
      }
    }
  }

  // Bilinear blend between the four nearest tile centers.
  Plane out(h, w);
  auto center = [](int a, int b) { return 0.5 * (a + b) - 0.5; };
  auto locate = [&](double p, int n, auto origin) {
    int i = 0;
    while (i + 1 < n && center(origin(i + 1), origin(i + 2)) <= p) ++i;
    const double c0 = center(origin(i), origin(i + 1));
    if (p <= c0 || i + 1 >= n) return std::pair{std::pair{i, i}, 0.0};
    const double c1 = center(origin(i + 1), origin(i + 2));
    return std::pair{std::pair{i, i + 1}, (p - c0) / (c1 - c0)};
  };
  for (int y = 0; y < h; ++y) {
    const auto [ty, fy] = locate(y, tiles_y, y0);
    for (int x = 0; x < w; ++x) {
      const auto [tx, fx] = locate(x, tiles_x, x0);
      const int v = level(y, x);
      auto at = [&](int a, int b) { return static_cast<double>(luts[static_cast<std::size_t>(a) * tiles_x + b][v]); };
      const double top = (1 - fx) * at(ty.first, tx.first) + fx * at(ty.first, tx.second);
      const double bot = (1 - fx) * at(ty.second, tx.first) + fx * at(ty.second, tx.second);
      out(y, x) = static_cast<float>((1 - fy) * top + fy * bot);
    }
  }
  return clip_round(out);
}

Plane gaussian_blur(const Plane& in, double sigma) {
  check_plane(in);
  if (!(sigma > 0)) return in;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Field<double> tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = s;
    }
  }
  Plane out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = static_cast<float>(s);
    }
  }
  return out;
}

Plane unsharp(const Plane& in, double amount, double sigma) {
  check_plane(in);
  const Plane blur = gaussian_blur(in, sigma);
  const float a = static_cast<float>(amount);
  return clip_round(((1.0f + a) * in.array() - a * blur.array()).matrix());
}

Plane luma(const Image& rgb) {
  if (rgb.channel_count() == 1) return rgb.gray();
  if (rgb.channel_count() != 3) throw Error(ErrorCode::kShapeMismatch, "expected 1 or 3 channels");
  return (0.299f * rgb.channels[0].array() + 0.587f * rgb.channels[1].array() + 0.114f * rgb.channels[2].array())
      .matrix();
}

Image enhance(const Image& image, const EnhanceConfig& config) {
  config.check();
  const Plane y = luma(image);
  Plane e = clip_round(y);
  if (config.illum_correction) e = illum_correct(e);
  e = clahe(e, config.clahe_clip, config.clahe_tiles_x, config.clahe_tiles_y);
  e = unsharp(e, config.unsharp_amount, config.unsharp_sigma);
  if (config.denoise) e = clip_round(gaussian_blur(e, *config.denoise));
  if (image.channel_count() == 1) return Image(e);
  Image out = image;
  const Plane delta = e - y;
  for (auto& c : out.channels) c = clip_round(c + delta);
  return out;
}

NormStats compute_stats(const std::vector<Image>& images) {
  if (images.empty()) throw Error(ErrorCode::kStatDegenerate, "no images to compute statistics from");
  const int n = images.front().channel_count();
  std::vector<double> sum(n, 0.0);
  std::vector<double> count(n, 0.0);
  for (const auto& img : images) {
    if (img.channel_count() != n) throw Error(ErrorCode::kShapeMismatch, "mixed channel counts");
    for (int c = 0; c < n; ++c) {
      sum[c] += img.channels[c].cast<double>().sum() / 255.0;
      count[c] += static_cast<double>(img.channels[c].size());
    }
  }
  NormStats s;
  s.mean.resize(n);
  s.std.resize(n);
  for (int c = 0; c < n; ++c) s.mean[c] = sum[c] / count[c];
  // Second pass for a stable variance.
  std::vector<double> sq(n, 0.0);
  for (const auto& img : images) {
    for (int c = 0; c < n; ++c) {
      sq[c] += ((img.channels[c].cast<double>().array() / 255.0) - s.mean[c]).square().sum();
    }
  }
  for (int c = 0; c < n; ++c) {
    s.std[c] = std::sqrt(sq[c] / count[c]);
    if (!(s.std[c] > 0)) throw Error(ErrorCode::kStatDegenerate, "channel " + std::to_string(c) + " has zero spread");
  }
  return s;
}

NormStats compute_stats(const std::vector<Annotation>& records, const std::filesystem::path& root,
                        const std::string& split) {
  std::vector<Image> images;
  for (const auto& r : records) {
    if (r.split == split) images.push_back(read_pnm(root / r.image));
  }
  if (images.empty()) throw Error(ErrorCode::kStatDegenerate, "no records in split '" + split + "'");
  return compute_stats(images);
}

std::vector<Field<double>> normalize(const Image& image, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != image.channel_count() || stats.std.size() != stats.mean.size()) {
    throw Error(ErrorCode::kShapeMismatch, "statistics do not match the channel count");
  }
  std::vector<Field<double>> out;
  for (int c = 0; c < image.channel_count(); ++c) {
    if (!(stats.std[c] > 0)) throw Error(ErrorCode::kStatDegenerate, "zero std");
    out.push_back(((image.channels[c].cast<double>().array() / 255.0 - stats.mean[c]) / stats.std[c]).matrix());
  }
  return out;
}

void write_stats(const std::filesystem::path& path, const NormStats& stats) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << nlohmann::json{{"mean", stats.mean}, {"std", stats.std}}.dump(2) << '\n';
}

NormStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kPathMissing, path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    NormStats s{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
    if (s.mean.size() != s.std.size() || s.mean.empty()) throw Error(ErrorCode::kFormat, "bad stats file");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad stats file: ") + e.what());
  }
}

}  // namespace tableseq
