#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "mer/tensor/tensor.hpp"

namespace mer::model {

// Network variants of the feature-module ablation.
enum class Variant { gfem, lfem, dbfem, dbfem_caffm, dbfem_caffm_l, dbfem_caffm_g };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::gfem,        Variant::lfem,
                                                     Variant::dbfem,       Variant::dbfem_caffm,
                                                     Variant::dbfem_caffm_l, Variant::dbfem_caffm_g};

// Row labels: GFEM, LTFEM, DBFEM, DBFEM+CAFFM, DBFEM+CAFFM_L, DBFEM+CAFFM_G.
const char* label(Variant v);
// Accepts the labels above plus "LFEM" and lowercase snake-case names.
Variant parse_variant(const std::string& text);

bool uses_global(Variant v);
bool uses_local(Variant v);

enum class Scale { desk, paper };

struct ModelConfig {
  Variant variant = Variant::dbfem_caffm;
  int resnet_depth = 12;
  std::vector<Index> stage_widths{8, 16, 32, 64};
  Index stem_stride = 2;
  Index lfem_stem_width = 16;
  Index lfem_stem_stride = 2;
  Index inception_stack_depth = 2;
  std::array<Index, 4> inception_widths{8, 8, 8, 8};
  Index fused_channels = 16;
  Index fusion_grid = 4;
  Index num_classes = 5;
  Index cbam_reduction = 4;
  Scale scale = Scale::desk;
  Index image_channels = 1;
  Index global_height = 64;
  Index global_width = 64;
  Index region_height = 32;
  Index region_width = 32;
  // Both branches see (x - input_mean) / input_std.
  double input_mean = 0.5;
  double input_std = 0.25;
  // Start the classifier at zero so the first posterior is uniform.
  bool zero_init_head = false;

  static ModelConfig desk();
  static ModelConfig paper();
  // Smallest useful network; used by gradient checks.
  static ModelConfig tiny();

  Index region_stack_channels() const { return 5 * image_channels; }
  Shape global_shape(Index batch) const { return {batch, image_channels, global_height, global_width}; }
  Shape region_shape(Index batch) const {
    return {batch, region_stack_channels(), region_height, region_width};
  }
  ModelConfig with_variant(Variant v) const {
    ModelConfig c = *this;
    c.variant = v;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
// Strict: unknown keys and type errors are rejected with the field name.
// Missing keys keep the defaults of `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base = ModelConfig::desk());

}  // namespace mer::model
