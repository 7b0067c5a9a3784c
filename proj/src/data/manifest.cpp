#include "mer/data/manifest.hpp"

#include <cctype>
#include <fstream>
#include <set>

namespace mer::data {

namespace {

// Thrown while decoding one record; carries the offending field.
struct FieldError {
  std::string field;
  std::string message;
};

const std::set<std::string>& known_fields() {
  static const std::set<std::string> f = {"sample_id", "subject",      "onset_path", "apex_path",
                                          "raw_label", "action_units", "face_bbox",  "region_bboxes"};
  return f;
}

std::string require_string(const nlohmann::json& j, const char* field) {
  if (!j.contains(field)) throw FieldError{field, "missing"};
  const auto& v = j.at(field);
  if (!v.is_string()) throw FieldError{field, "expected a string"};
  std::string s = v.get<std::string>();
  if (s.empty()) throw FieldError{field, "must not be empty"};
  return s;
}

BBox parse_bbox(const nlohmann::json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 4) throw FieldError{field, "expected [x, y, w, h]"};
  std::array<Index, 4> xs{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number_integer()) throw FieldError{field, "coordinates must be integers"};
    xs[i] = v[i].get<Index>();
  }
  BBox b{xs[0], xs[1], xs[2], xs[3]};
  if (b.w <= 0 || b.h <= 0) throw FieldError{field, "degenerate box " + to_string(b)};
  if (b.x < 0 || b.y < 0) throw FieldError{field, "negative origin in " + to_string(b)};
  return b;
}

int parse_au(const nlohmann::json& v) {
  if (v.is_number_integer()) {
    const int au = v.get<int>();
    if (au <= 0) throw FieldError{"action_units", "AU codes must be positive"};
    return au;
  }
  if (!v.is_string()) throw FieldError{"action_units", "entries must be integers or strings"};
  std::string s = v.get<std::string>();
  std::size_t i = 0;
  while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
  const std::string digits = s.substr(i);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    throw FieldError{"action_units", "unreadable AU code '" + s + "'"};
  }
  return std::stoi(digits);
}

void check_box(const BBox& b, const PnmInfo& info, const std::string& field) {
  if (!b.within(info.width, info.height)) {
    throw FieldError{field, "box " + to_string(b) + " exceeds image " + std::to_string(info.width) + "x" +
                                std::to_string(info.height)};
  }
}

}  // namespace

std::array<BBox, kNumRegions> ManifestRecord::resolved_regions() const {
  auto boxes = default_region_layout(face_bbox);
  for (const auto& [region, box] : region_bboxes) boxes[static_cast<std::size_t>(region)] = box;
  return boxes;
}

namespace {

ManifestRecord decode_record(const nlohmann::json& j) {
  if (!j.is_object()) throw FieldError{"<record>", "expected a JSON object"};
  for (const auto& [key, _] : j.items()) {
    if (!known_fields().count(key)) throw FieldError{key, "unknown field"};
  }
  ManifestRecord r;
  r.sample_id = require_string(j, "sample_id");
  r.subject = require_string(j, "subject");
  r.onset_path = require_string(j, "onset_path");
  r.apex_path = require_string(j, "apex_path");
  r.raw_label = require_string(j, "raw_label");
  try {
    merge_label(r.raw_label);
  } catch (const LabelError& e) {
    throw FieldError{"raw_label", e.what()};
  }
  if (j.contains("action_units")) {
    const auto& aus = j.at("action_units");
    if (!aus.is_array()) throw FieldError{"action_units", "expected an array"};
    for (const auto& v : aus) r.action_units.push_back(parse_au(v));
  }
  if (!j.contains("face_bbox")) throw FieldError{"face_bbox", "missing"};
  r.face_bbox = parse_bbox(j.at("face_bbox"), "face_bbox");
  if (j.contains("region_bboxes")) {
    const auto& regions = j.at("region_bboxes");
    if (!regions.is_object()) throw FieldError{"region_bboxes", "expected an object"};
    for (const auto& [key, v] : regions.items()) {
      const auto region = parse_region(key);
      const std::string field = "region_bboxes." + key;
      if (!region) throw FieldError{field, "unknown region"};
      r.region_bboxes[*region] = parse_bbox(v, field);
    }
  }
  return r;
}

}  // namespace

ManifestRecord record_from_json(const nlohmann::json& j) {
  try {
    return decode_record(j);
  } catch (const FieldError& e) {
    throw ManifestError("field '" + e.field + "': " + e.message);
  }
}

nlohmann::json to_json(const ManifestRecord& r) {
  auto box = [](const BBox& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); };
  nlohmann::json j;
  j["sample_id"] = r.sample_id;
  j["subject"] = r.subject;
  j["onset_path"] = r.onset_path.generic_string();
  j["apex_path"] = r.apex_path.generic_string();
  j["raw_label"] = r.raw_label;
  j["action_units"] = r.action_units;
  j["face_bbox"] = box(r.face_bbox);
  if (!r.region_bboxes.empty()) {
    nlohmann::json regions = nlohmann::json::object();
    for (const auto& [region, b] : r.region_bboxes) regions[region_name(region)] = box(b);
    j["region_bboxes"] = regions;
  }
  return j;
}

Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, const std::string& source,
                        bool check_files) {
  Manifest m;
  m.base_dir = base_dir;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(where + ": malformed JSON: " + e.what());
    }
    try {
      ManifestRecord r = decode_record(j);
      if (!ids.insert(r.sample_id).second) throw FieldError{"sample_id", "duplicate id '" + r.sample_id + "'"};
      if (check_files) {
        PnmInfo infos[2];
        const std::filesystem::path* paths[2] = {&r.onset_path, &r.apex_path};
        const char* fields[2] = {"onset_path", "apex_path"};
        for (int k = 0; k < 2; ++k) {
          const auto full = m.resolve(*paths[k]);
          if (!std::filesystem::exists(full)) throw FieldError{fields[k], "image not found: " + full.string()};
          try {
            infos[k] = read_pnm_info(full);
          } catch (const ImageError& e) {
            throw FieldError{fields[k], e.what()};
          }
        }
        if (infos[0].width != infos[1].width || infos[0].height != infos[1].height) {
          throw FieldError{"apex_path", "onset and apex frames differ in size"};
        }
        check_box(r.face_bbox, infos[1], "face_bbox");
        const auto boxes = r.resolved_regions();
        for (std::size_t k = 0; k < kNumRegions; ++k) {
          check_box(boxes[k], infos[1], std::string("region_bboxes.") + region_name(kRegions[k]));
        }
      }
      m.records.push_back(std::move(r));
    } catch (const FieldError& e) {
      throw ManifestError(where + ": field '" + e.field + "': " + e.message);
    }
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), path.string(), check_files);
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw ManifestError("failed writing manifest " + path.string());
}

}  // namespace mer::data
