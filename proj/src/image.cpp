// SPDX-License-Identifier: Apache-2.0
#include "tableseq/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "tableseq/error.hpp"

namespace tableseq {

void write_pnm(const std::filesystem::path& path, const Image& image) {
  const int n = image.channel_count();
  if (n != 1 && n != 3) throw Error(ErrorCode::kFormat, "PNM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << (n == 1 ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(image.width()) * image.height() * n);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < n; ++c) {
        const float v = std::clamp(std::round(image.channels[c](y, x)), 0.0f, 255.0f);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      }
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kPathMissing, path.string());
  auto next_field = [&]() {
    std::string tok;
    while (tok.empty()) {
      int ch = in.get();
      if (ch == EOF) throw Error(ErrorCode::kFormat, "truncated PNM header in " + path.string());
      if (ch == '#') {
        while (ch != '\n' && ch != EOF) ch = in.get();
        continue;
      }
      while (ch != EOF && !std::isspace(ch)) {
        tok += static_cast<char>(ch);
        ch = in.get();
      }
    }
    return tok;
  };
  const std::string magic = next_field();
  if (magic != "P5" && magic != "P6") throw Error(ErrorCode::kFormat, "unsupported PNM type " + magic);
  const int n = magic == "P5" ? 1 : 3;
  const int w = std::stoi(next_field());
  const int h = std::stoi(next_field());
  const int maxval = std::stoi(next_field());
  if (maxval != 255 || w <= 0 || h <= 0) throw Error(ErrorCode::kFormat, "unsupported PNM geometry");
  std::string bytes(static_cast<std::size_t>(w) * h * n, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw Error(ErrorCode::kFormat, "truncated PNM data");
  Image img(h, w, n);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < n; ++c) img.channels[c](y, x) = static_cast<unsigned char>(bytes[k++]);
    }
  }
  return img;
}

}  // namespace tableseq
