#pragma once

// Line-oriented dataset manifest. Each non-blank line not starting with '#'
// is one JSON object:
//   {"sample_id": "s01_ep01", "subject": "s01",
//    "onset_path": "img/s01_ep01_onset.pgm", "apex_path": "img/s01_ep01_apex.pgm",
//    "raw_label": "Happiness", "action_units": [6, 12],
//    "face_bbox": [x, y, w, h],
//    "region_bboxes": {"oral": [x, y, w, h], ...}}
// region_bboxes may be omitted or partial; missing regions come from
// default_region_layout(face_bbox). Relative image paths resolve against the
// manifest's directory. Action units may be integers or strings such as "AU12",
// "L12" or "R4".

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mer/data/facs.hpp"

namespace mer::data {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRecord {
  std::string sample_id;
  std::string subject;
  std::filesystem::path onset_path;
  std::filesystem::path apex_path;
  std::string raw_label;
  std::vector<int> action_units;
  BBox face_bbox;
  std::map<Region, BBox> region_bboxes;

  // All five boxes in kRegions order, explicit ones taking precedence.
  std::array<BBox, kNumRegions> resolved_regions() const;
  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::size_t size() const { return records.size(); }
  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
};

// With check_files, image headers are read to confirm existence and that
// every box lies inside the image.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, const std::string& source,
                        bool check_files = true);

nlohmann::json to_json(const ManifestRecord& record);
ManifestRecord record_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace mer::data
