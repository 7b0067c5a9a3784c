#include "mer/model/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mer::model {

const char* label(Variant v) {
  switch (v) {
    case Variant::gfem: return "GFEM";
    case Variant::lfem: return "LTFEM";
    case Variant::dbfem: return "DBFEM";
    case Variant::dbfem_caffm: return "DBFEM+CAFFM";
    case Variant::dbfem_caffm_l: return "DBFEM+CAFFM_L";
    case Variant::dbfem_caffm_g: return "DBFEM+CAFFM_G";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  std::string key;
  for (char c : text) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::replace(key.begin(), key.end(), '+', '_');
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "gfem") return Variant::gfem;
  if (key == "lfem" || key == "ltfem") return Variant::lfem;
  if (key == "dbfem") return Variant::dbfem;
  if (key == "dbfem_caffm") return Variant::dbfem_caffm;
  if (key == "dbfem_caffm_l") return Variant::dbfem_caffm_l;
  if (key == "dbfem_caffm_g") return Variant::dbfem_caffm_g;
  throw std::invalid_argument("unknown model variant '" + text + "'");
}

bool uses_global(Variant v) { return v != Variant::lfem; }
bool uses_local(Variant v) { return v != Variant::gfem; }

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.scale = Scale::paper;
  c.image_channels = 3;
  c.global_height = 282;
  c.global_width = 231;
  c.region_height = 64;
  c.region_width = 64;
  c.stage_widths = {64, 128, 256, 384};
  c.stem_stride = 2;
  c.lfem_stem_width = 128;
  c.lfem_stem_stride = 1;
  c.inception_stack_depth = 4;
  c.inception_widths = {128, 160, 96, 64};
  c.fused_channels = 384;
  c.fusion_grid = 7;
  c.cbam_reduction = 16;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stage_widths = {4, 4, 4, 4};
  c.stem_stride = 1;
  c.lfem_stem_width = 4;
  c.lfem_stem_stride = 1;
  c.inception_stack_depth = 1;
  c.inception_widths = {2, 2, 2, 2};
  c.fused_channels = 4;
  c.fusion_grid = 2;
  c.cbam_reduction = 2;
  c.global_height = 16;
  c.global_width = 16;
  c.region_height = 8;
  c.region_width = 8;
  return c;
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("model config: " + field + ": " + why);
  };
  if (c.resnet_depth != 12 && c.resnet_depth != 18 && c.resnet_depth != 34) {
    fail("resnet_depth", "unsupported depth " + std::to_string(c.resnet_depth) + " (expected 12, 18 or 34)");
  }
  if (c.stage_widths.size() != 4) fail("stage_widths", "exactly four stage widths are required");
  for (Index w : c.stage_widths) {
    if (w <= 0) fail("stage_widths", "widths must be positive");
  }
  for (Index w : c.inception_widths) {
    if (w <= 0) fail("inception_widths", "widths must be positive");
  }
  auto positive = [&](Index v, const char* field) {
    if (v <= 0) fail(field, "must be positive");
  };
  positive(c.stem_stride, "stem_stride");
  positive(c.lfem_stem_width, "lfem_stem_width");
  positive(c.lfem_stem_stride, "lfem_stem_stride");
  positive(c.inception_stack_depth, "inception_stack_depth");
  positive(c.fused_channels, "fused_channels");
  positive(c.fusion_grid, "fusion_grid");
  positive(c.num_classes, "num_classes");
  positive(c.cbam_reduction, "cbam_reduction");
  positive(c.image_channels, "image_channels");
  positive(c.global_height, "global_height");
  positive(c.global_width, "global_width");
  positive(c.region_height, "region_height");
  positive(c.region_width, "region_width");
  if (!(c.input_std > 0.0) || !std::isfinite(c.input_std)) fail("input_std", "must be positive");
  if (!std::isfinite(c.input_mean)) fail("input_mean", "must be finite");
  const bool attention = c.variant == Variant::dbfem_caffm || c.variant == Variant::dbfem_caffm_l ||
                         c.variant == Variant::dbfem_caffm_g;
  if (attention) {
    if (c.fused_channels % c.cbam_reduction != 0) {
      fail("cbam_reduction", "must divide fused_channels (" + std::to_string(c.fused_channels) + ")");
    }
    if (c.fusion_grid < 2) fail("fusion_grid", "attention fusion pools 2×2 and needs a grid of at least 2");
  }
}

namespace {

const char* scale_name(Scale s) { return s == Scale::paper ? "paper" : "desk"; }

Scale parse_scale(const std::string& s) {
  if (s == "paper") return Scale::paper;
  if (s == "desk") return Scale::desk;
  throw std::invalid_argument("model config: scale: expected 'desk' or 'paper', got '" + s + "'");
}

template <typename V>
V get_field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("model config: " + key + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"variant", label(c.variant)},
                        {"resnet_depth", c.resnet_depth},
                        {"stage_widths", c.stage_widths},
                        {"stem_stride", c.stem_stride},
                        {"lfem_stem_width", c.lfem_stem_width},
                        {"lfem_stem_stride", c.lfem_stem_stride},
                        {"inception_stack_depth", c.inception_stack_depth},
                        {"inception_widths", c.inception_widths},
                        {"fused_channels", c.fused_channels},
                        {"fusion_grid", c.fusion_grid},
                        {"num_classes", c.num_classes},
                        {"cbam_reduction", c.cbam_reduction},
                        {"scale", scale_name(c.scale)},
                        {"image_channels", c.image_channels},
                        {"global_height", c.global_height},
                        {"global_width", c.global_width},
                        {"region_height", c.region_height},
                        {"region_width", c.region_width},
                        {"input_mean", c.input_mean},
                        {"input_std", c.input_std},
                        {"zero_init_head", c.zero_init_head}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("model config: expected a JSON object");
  static const std::set<std::string> known{
      "variant",        "resnet_depth",    "stage_widths",  "stem_stride",    "lfem_stem_width",
      "lfem_stem_stride", "inception_stack_depth", "inception_widths", "fused_channels", "fusion_grid",
      "num_classes",    "cbam_reduction",  "scale",         "image_channels", "global_height",
      "global_width",   "region_height",   "region_width",  "zero_init_head", "input_mean", "input_std"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  ModelConfig c = base;
  if (j.contains("scale")) {
    c = parse_scale(get_field<std::string>(j, "scale")) == Scale::paper ? ModelConfig::paper() : ModelConfig::desk();
  }
  if (j.contains("variant")) c.variant = parse_variant(get_field<std::string>(j, "variant"));
  if (j.contains("resnet_depth")) c.resnet_depth = get_field<int>(j, "resnet_depth");
  if (j.contains("stage_widths")) c.stage_widths = get_field<std::vector<Index>>(j, "stage_widths");
  if (j.contains("inception_widths")) c.inception_widths = get_field<std::array<Index, 4>>(j, "inception_widths");
  if (j.contains("zero_init_head")) c.zero_init_head = get_field<bool>(j, "zero_init_head");
  if (j.contains("input_mean")) c.input_mean = get_field<double>(j, "input_mean");
  if (j.contains("input_std")) c.input_std = get_field<double>(j, "input_std");
  const std::pair<const char*, Index*> ints[] = {{"stem_stride", &c.stem_stride},
                                                 {"lfem_stem_width", &c.lfem_stem_width},
                                                 {"lfem_stem_stride", &c.lfem_stem_stride},
                                                 {"inception_stack_depth", &c.inception_stack_depth},
                                                 {"fused_channels", &c.fused_channels},
                                                 {"fusion_grid", &c.fusion_grid},
                                                 {"num_classes", &c.num_classes},
                                                 {"cbam_reduction", &c.cbam_reduction},
                                                 {"image_channels", &c.image_channels},
                                                 {"global_height", &c.global_height},
                                                 {"global_width", &c.global_width},
                                                 {"region_height", &c.region_height},
                                                 {"region_width", &c.region_width}};
  for (const auto& [key, slot] : ints) {
    if (j.contains(key)) *slot = get_field<Index>(j, key);
  }
  validate(c);
  return c;
}

}  // namespace mer::model
