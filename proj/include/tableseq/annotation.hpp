// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited JSON sample records:
//   {"image": path, "markup": string,
//    "cells": [{"id","row","col","rowspan","colspan","text","bbox":[x1,y1,x2,y2]}], ...}
// Optional keys: "image_size":[H,W], "split", "seed", "targets", "frames"
// (per-cell layout frames used for structure targets), and per-cell "header".
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tableseq/table.hpp"

namespace tableseq {

struct Annotation {
  std::string image;
  std::string markup;
  Table table;
  std::string split = "train";
  std::optional<std::uint64_t> seed;
  std::string targets;
  std::vector<BBox> frames;
};

std::string to_json_line(const Annotation& annotation);

/// Parses one record. The cell list is authoritative when present; otherwise
/// the table is parsed from the markup with the given grid unit.
Annotation parse_annotation_line(std::string_view line, int unit = 5);

std::vector<Annotation> read_manifest(const std::filesystem::path& path, int unit = 5);
void write_manifest(const std::filesystem::path& path, const std::vector<Annotation>& records);

}  // namespace tableseq
