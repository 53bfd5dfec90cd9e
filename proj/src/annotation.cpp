// SPDX-License-Identifier: Apache-2.0
#include "tableseq/annotation.hpp"

#include <fstream>

#include <json.hpp>

#include "tableseq/error.hpp"

namespace tableseq {

using nlohmann::json;

std::string to_json_line(const Annotation& a) {
  json j;
  j["image"] = a.image;
  j["markup"] = a.markup;
  json cells = json::array();
  for (const auto& c : a.table.cells) {
    json jc{{"id", c.id}, {"row", c.row}, {"col", c.col}, {"rowspan", c.rowspan}, {"colspan", c.colspan},
            {"text", c.text}};
    if (c.bbox) jc["bbox"] = {c.bbox->x1, c.bbox->y1, c.bbox->x2, c.bbox->y2};
    if (c.is_header) jc["header"] = true;
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  if (a.table.image_size) j["image_size"] = {a.table.image_size->height, a.table.image_size->width};
  j["split"] = a.split;
  if (a.seed) j["seed"] = *a.seed;
  if (!a.targets.empty()) j["targets"] = a.targets;
  if (!a.frames.empty()) {
    json frames = json::array();
    for (const auto& f : a.frames) frames.push_back({f.x1, f.y1, f.x2, f.y2});
    j["frames"] = std::move(frames);
  }
  return j.dump();
}

namespace {

BBox box_from(const json& v) {
  if (!v.is_array() || v.size() != 4) throw Error(ErrorCode::kFormat, "bbox must be [x1,y1,x2,y2]");
  BBox b{v[0].get<int>(), v[1].get<int>(), v[2].get<int>(), v[3].get<int>()};
  if (!b.valid()) throw Error(ErrorCode::kFormat, "invalid bbox");
  return b;
}

}  // namespace

Annotation parse_annotation_line(std::string_view line, int unit) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest line is not JSON: ") + e.what());
  }
  try {
    Annotation a;
    a.image = j.value("image", "");
    a.markup = j.value("markup", "");
    a.split = j.value("split", "train");
    if (j.contains("seed")) a.seed = j["seed"].get<std::uint64_t>();
    a.targets = j.value("targets", "");
    std::optional<ImageSize> size;
    if (j.contains("image_size")) size = ImageSize{j["image_size"][0].get<int>(), j["image_size"][1].get<int>()};
    if (j.contains("cells") && !j["cells"].empty()) {
      std::vector<Cell> cells;
      int rows = 0;
      int cols = 0;
      for (const auto& jc : j["cells"]) {
        Cell c;
        c.id = jc.value("id", 0);
        c.row = jc.at("row").get<int>();
        c.col = jc.at("col").get<int>();
        c.rowspan = jc.value("rowspan", 1);
        c.colspan = jc.value("colspan", 1);
        c.text = jc.value("text", "");
        c.is_header = jc.value("header", false);
        if (jc.contains("bbox") && !jc["bbox"].is_null()) c.bbox = box_from(jc["bbox"]);
        rows = std::max(rows, c.last_row() + 1);
        cols = std::max(cols, c.last_col() + 1);
        cells.push_back(std::move(c));
      }
      a.table = make_table(rows, cols, std::move(cells));
    } else {
      a.table = parse_markup(a.markup, {unit, size});
    }
    a.table.image_size = size;
    if (j.contains("frames")) {
      for (const auto& f : j["frames"]) a.frames.push_back(box_from(f));
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad manifest record: ") + e.what());
  }
}

std::vector<Annotation> read_manifest(const std::filesystem::path& path, int unit) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kPathMissing, path.string());
  std::vector<Annotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_annotation_line(line, unit));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Annotation>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

}  // namespace tableseq
