#pragma once

// Newline-delimited JSON sketch datasets.
//
// Line 1 is a header:
//   {"format":"vqsgen-sketches","version":1,"canvas_size":256,
//    "labels":["head","body",...],"categories":["bird",...]}
// Every following non-blank line is one sketch:
//   {"id":"s0","category":"bird",
//    "strokes":[{"points":[[x,y],...],"part_label":"head"},...]}

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

inline constexpr const char* kDatasetFormat = "vqsgen-sketches";
inline constexpr int kDatasetVersion = 1;

struct DatasetHeader {
  double canvas_size = 256.0;
  std::vector<std::string> labels;
  std::vector<std::string> categories;
};

struct DatasetFile {
  DatasetHeader header;
  std::vector<RawSketch> sketches;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline DatasetHeader parse_header(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SketchError(std::string("malformed dataset header: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kDatasetFormat)
    throw SketchError(std::string("malformed dataset header: format must be '") + kDatasetFormat + "'");
  if (!j.contains("version") || j["version"] != kDatasetVersion)
    throw SketchError("malformed dataset header: unsupported version");
  DatasetHeader h;
  try {
    h.canvas_size = j.at("canvas_size").get<double>();
    h.labels = j.at("labels").get<std::vector<std::string>>();
    h.categories = j.at("categories").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SketchError(std::string("malformed dataset header: ") + e.what());
  }
  if (!(h.canvas_size > 0.0)) throw SketchError("malformed dataset header: canvas_size must be positive");
  if (h.labels.empty()) throw SketchError("malformed dataset header: labels must be non-empty");
  if (h.categories.empty()) throw SketchError("malformed dataset header: categories must be non-empty");
  return h;
}

inline RawSketch parse_record(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  RawSketch s;
  s.id = j.at("id").get<std::string>();
  s.category = j.at("category").get<std::string>();
  for (const auto& st : j.at("strokes")) {
    RawStroke r;
    r.part_label = st.at("part_label").get<std::string>();
    for (const auto& p : st.at("points")) {
      if (!p.is_array() || p.size() != 2) throw SketchError("point must be [x, y]");
      r.polyline.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    r.polyline.validate();
    s.strokes.push_back(std::move(r));
  }
  if (s.strokes.empty()) throw SketchError("record has no strokes");
  return s;
}

}  // namespace detail

inline nlohmann::json to_json(const RawSketch& s) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const RawStroke& st : s.strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const Point& p : st.polyline.points) pts.push_back({p.x, p.y});
    strokes.push_back({{"points", pts}, {"part_label", st.part_label}});
  }
  return {{"id", s.id}, {"category", s.category}, {"strokes", strokes}};
}

/// Reads a dataset stream. Records that fail to parse, or that use a category
/// or part label the header does not declare, are skipped and counted
/// ('details' strokes are always accepted). More than half skipped is an error.
inline DatasetFile read_dataset(std::istream& in, const std::string& details_label = "details") {
  std::string line;
  while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
  }
  if (line.find_first_not_of(" \t\r") == std::string::npos) throw SketchError("dataset is empty");
  DatasetFile out;
  out.header = detail::parse_header(line);
  std::size_t total = 0, lineno = 1;
  auto known = [](const std::vector<std::string>& v, const std::string& x) { return std::find(v.begin(), v.end(), x) != v.end(); };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++total;
    try {
      RawSketch s = detail::parse_record(line);
      if (!known(out.header.categories, s.category)) throw SketchError("unknown category '" + s.category + "'");
      for (const RawStroke& st : s.strokes)
        if (st.part_label != details_label && !known(out.header.labels, st.part_label))
          throw SketchError("unknown part label '" + st.part_label + "'");
      out.sketches.push_back(std::move(s));
    } catch (const std::exception& e) {
      ++out.skipped;
      out.warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (total == 0) throw SketchError("dataset has no records");
  if (2 * out.skipped > total)
    throw SketchError("dataset: " + std::to_string(out.skipped) + " of " + std::to_string(total) + " records invalid");
  return out;
}

inline DatasetFile read_dataset_file(const std::string& path, const std::string& details_label = "details") {
  std::ifstream in(path);
  if (!in) throw SketchError("cannot open dataset '" + path + "'");
  return read_dataset(in, details_label);
}

inline void write_dataset(std::ostream& out, const DatasetHeader& h, const std::vector<RawSketch>& sketches) {
  nlohmann::json header = {{"format", kDatasetFormat},
                           {"version", kDatasetVersion},
                           {"canvas_size", h.canvas_size},
                           {"labels", h.labels},
                           {"categories", h.categories}};
  out << header.dump() << '\n';
  for (const RawSketch& s : sketches) out << to_json(s).dump() << '\n';
}

inline void write_dataset_file(const std::string& path, const DatasetHeader& h, const std::vector<RawSketch>& sketches) {
  std::ofstream out(path);
  if (!out) throw SketchError("cannot write dataset '" + path + "'");
  write_dataset(out, h, sketches);
  if (!out) throw SketchError("write failed for dataset '" + path + "'");
}

}  // namespace vqsgen
