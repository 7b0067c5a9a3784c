#pragma once

// Closed-form parameter and multiply-accumulate accounting, derived from a
// ModelConfig alone (no network is built). Pooling and activations are not
// counted.

#include <cstdint>
#include <string>
#include <vector>

#include "mer/model/config.hpp"

namespace mer::model {

struct InputGeometry {
  Index global_height, global_width;
  Index region_height, region_width;
  static InputGeometry of(const ModelConfig& c) {
    return {c.global_height, c.global_width, c.region_height, c.region_width};
  }
};

struct LayerCost {
  std::string name;
  Index params = 0;
  std::uint64_t macs = 0;  // per batch item
};

// Conv with bias: C_out·C_in·k·k + C_out params, C_out·H'·W'·C_in·k·k MACs.
LayerCost conv_cost(const std::string& name, Index in_channels, Index out_channels, Index kernel, Index stride,
                    Index pad, Index in_height, Index in_width);
// Linear with bias, applied to `uses` rows per batch item.
LayerCost linear_cost(const std::string& name, Index in_features, Index out_features, Index uses = 1);

Index total_params(const std::vector<LayerCost>& layers);
std::uint64_t total_macs(const std::vector<LayerCost>& layers);

std::vector<LayerCost> describe(const ModelConfig& config, const InputGeometry& input);

Index param_count(const ModelConfig& config);
std::uint64_t flops_estimate(const ModelConfig& config, const InputGeometry& input);
inline std::uint64_t flops_estimate(const ModelConfig& config) {
  return flops_estimate(config, InputGeometry::of(config));
}

}  // namespace mer::model
