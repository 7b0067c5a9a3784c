#include "mer/data/facs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace mer::data {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const std::array<std::vector<int>, kNumRegions>& region_aus() {
  static const std::array<std::vector<int>, kNumRegions> table = {{
      {1, 2, 4, 5, 7},
      {10, 12, 14, 15, 16, 25, 26},
      {17},
      {6},
      {9, 38},
  }};
  return table;
}

// Fractions of the face box: x0, y0, x1, y1.
constexpr std::array<std::array<double, 4>, kNumRegions> kLayout = {{
    {0.10, 0.15, 0.90, 0.42},
    {0.25, 0.62, 0.75, 0.84},
    {0.28, 0.82, 0.72, 0.98},
    {0.08, 0.42, 0.92, 0.68},
    {0.35, 0.38, 0.65, 0.62},
}};

}  // namespace

const char* region_name(Region r) {
  switch (r) {
    case Region::ocular_brow: return "ocular_brow";
    case Region::oral: return "oral";
    case Region::mandibular: return "mandibular";
    case Region::cheek: return "cheek";
    case Region::nasal: return "nasal";
  }
  return "?";
}

std::optional<Region> parse_region(const std::string& name) {
  for (Region r : kRegions) {
    if (name == region_name(r)) return r;
  }
  return std::nullopt;
}

std::optional<Region> region_for_au(int au) {
  for (std::size_t i = 0; i < kNumRegions; ++i) {
    const auto& aus = region_aus()[i];
    if (std::find(aus.begin(), aus.end(), au) != aus.end()) return kRegions[i];
  }
  return std::nullopt;
}

const std::vector<int>& aus_of(Region r) { return region_aus()[static_cast<std::size_t>(r)]; }

std::array<BBox, kNumRegions> default_region_layout(const BBox& face) {
  std::array<BBox, kNumRegions> out;
  for (std::size_t i = 0; i < kNumRegions; ++i) {
    const auto& f = kLayout[i];
    const Index x0 = face.x + static_cast<Index>(std::floor(f[0] * static_cast<double>(face.w)));
    const Index y0 = face.y + static_cast<Index>(std::floor(f[1] * static_cast<double>(face.h)));
    const Index x1 = face.x + static_cast<Index>(std::ceil(f[2] * static_cast<double>(face.w)));
    const Index y1 = face.y + static_cast<Index>(std::ceil(f[3] * static_cast<double>(face.h)));
    out[i] = {x0, y0, std::max<Index>(1, x1 - x0), std::max<Index>(1, y1 - y0)};
  }
  return out;
}

const char* emotion_name(Emotion e) { return class_names()[static_cast<std::size_t>(e)].c_str(); }

const std::array<std::string, kNumEmotions>& class_names() {
  static const std::array<std::string, kNumEmotions> names = {"Happiness", "Surprise", "Disgust", "Repression",
                                                              "Others"};
  return names;
}

Emotion merge_label(const std::string& raw_label) {
  static const std::map<std::string, Emotion> table = {
      {"happiness", Emotion::happiness}, {"surprise", Emotion::surprise}, {"disgust", Emotion::disgust},
      {"repression", Emotion::repression}, {"others", Emotion::others},   {"fear", Emotion::others},
      {"sadness", Emotion::others},
  };
  const auto it = table.find(lower(raw_label));
  if (it == table.end()) throw LabelError("unknown emotion label '" + raw_label + "'");
  return it->second;
}

}  // namespace mer::data
