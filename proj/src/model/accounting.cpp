#include "mer/model/accounting.hpp"

#include <algorithm>

#include "mer/tensor/ops.hpp"

namespace mer::model {

namespace {

struct Plane {
  Index channels, height, width;
};

class Ledger {
 public:
  explicit Ledger(std::vector<LayerCost>& out) : out_(out) {}

  // Adds a k×k conv with bias and returns the output plane.
  Plane conv(const std::string& name, Plane in, Index out_channels, Index k, Index stride, Index pad) {
    out_.push_back(conv_cost(name, in.channels, out_channels, k, stride, pad, in.height, in.width));
    return {out_channels, window_out(in.height, k, stride, pad), window_out(in.width, k, stride, pad)};
  }

  void linear(const std::string& name, Index in, Index out, Index uses = 1) {
    out_.push_back(linear_cost(name, in, out, uses));
  }

 private:
  std::vector<LayerCost>& out_;
};

Plane maxpool(Plane p, Index k, Index stride) {
  return {p.channels, window_out(p.height, k, stride, 0), window_out(p.width, k, stride, 0)};
}

Plane residual(Ledger& l, const std::string& name, Plane in, Index out, Index stride, int convs) {
  Plane h = l.conv(name + ".conv1", in, out, 3, stride, 1);
  for (int i = 1; i < convs; ++i) h = l.conv(name + ".conv" + std::to_string(i + 1), h, out, 3, 1, 1);
  if (in.channels != out || stride != 1) l.conv(name + ".shortcut", in, out, 1, stride, 0);
  return h;
}

void cbam(Ledger& l, const std::string& name, Index channels, Index reduction, Index grid) {
  const Index hidden = channels / reduction;
  l.linear(name + ".mlp_hidden", channels, hidden, 2);
  l.linear(name + ".mlp_out", hidden, channels, 2);
  l.conv(name + ".spatial", {2, grid, grid}, 1, 7, 1, 3);
}

void cbam_stack(Ledger& l, const std::string& name, Index channels, Index reduction, Index grid) {
  for (int i = 0; i < 5; ++i) cbam(l, name + ".cbam" + std::to_string(i), channels, reduction, grid);
}

}  // namespace

LayerCost conv_cost(const std::string& name, Index in_channels, Index out_channels, Index kernel, Index stride,
                    Index pad, Index in_height, Index in_width) {
  const Index h = window_out(in_height, kernel, stride, pad);
  const Index w = window_out(in_width, kernel, stride, pad);
  const Index weights = out_channels * in_channels * kernel * kernel;
  return {name, weights + out_channels, static_cast<std::uint64_t>(weights * h * w)};
}

LayerCost linear_cost(const std::string& name, Index in_features, Index out_features, Index uses) {
  return {name, in_features * out_features + out_features,
          static_cast<std::uint64_t>(uses * in_features * out_features)};
}

Index total_params(const std::vector<LayerCost>& layers) {
  Index total = 0;
  for (const auto& layer : layers) total += layer.params;
  return total;
}

std::uint64_t total_macs(const std::vector<LayerCost>& layers) {
  std::uint64_t total = 0;
  for (const auto& layer : layers) total += layer.macs;
  return total;
}

std::vector<LayerCost> describe(const ModelConfig& c, const InputGeometry& input) {
  validate(c);
  std::vector<LayerCost> out;
  Ledger l(out);
  const Index grid = c.fusion_grid;

  if (uses_global(c.variant)) {
    Plane h = l.conv("gfem.stem", {c.image_channels, input.global_height, input.global_width}, c.stage_widths[0], 3,
                     c.stem_stride, 1);
    if (c.resnet_depth == 12) {
      for (std::size_t s = 0; s < 4; ++s) {
        h = residual(l, "gfem.stage" + std::to_string(s), h, c.stage_widths[s], 1, 3);
        if (s < 3) h = maxpool(h, 2, 2);
      }
    } else {
      const std::vector<int> counts = c.resnet_depth == 18 ? std::vector<int>{2, 2, 2, 2} : std::vector<int>{3, 4, 6, 3};
      int block = 0;
      for (std::size_t s = 0; s < 4; ++s) {
        for (int b = 0; b < counts[s]; ++b) {
          h = residual(l, "gfem.block" + std::to_string(block++), h, c.stage_widths[s], (s > 0 && b == 0) ? 2 : 1, 2);
        }
      }
    }
    l.conv("gfem.proj", {h.channels, grid, grid}, c.fused_channels, 1, 1, 0);
  }

  if (uses_local(c.variant)) {
    Plane h = l.conv("lfem.stem", {c.region_stack_channels(), input.region_height, input.region_width},
                     c.lfem_stem_width, 3, c.lfem_stem_stride, 1);
    const auto& w = c.inception_widths;
    for (Index i = 0; i < c.inception_stack_depth; ++i) {
      const std::string name = "lfem.inception" + std::to_string(i);
      l.conv(name + ".b1", h, w[0], 1, 1, 0);
      l.conv(name + ".b2_conv", l.conv(name + ".b2_reduce", h, w[1], 1, 1, 0), w[1], 3, 1, 1);
      Plane b3 = l.conv(name + ".b3_reduce", h, w[2], 1, 1, 0);
      b3 = l.conv(name + ".b3_conv1", b3, w[2], 3, 1, 1);
      l.conv(name + ".b3_conv2", b3, w[2], 3, 1, 1);
      l.conv(name + ".b4_proj", h, w[3], 1, 1, 0);
      h.channels = w[0] + w[1] + w[2] + w[3];
    }
    l.conv("lfem.proj", {h.channels, grid, grid}, c.fused_channels, 1, 1, 0);
  }

  switch (c.variant) {
    case Variant::dbfem_caffm:
      cbam_stack(l, "caffm", 2 * c.fused_channels, c.cbam_reduction, grid);
      break;
    case Variant::dbfem_caffm_l:
    case Variant::dbfem_caffm_g:
      cbam_stack(l, "caffm", c.fused_channels, c.cbam_reduction, grid);
      break;
    default:
      break;
  }

  const bool single = c.variant == Variant::gfem || c.variant == Variant::lfem;
  l.linear("head", single ? c.fused_channels : 2 * c.fused_channels, c.num_classes);
  return out;
}

Index param_count(const ModelConfig& config) { return total_params(describe(config, InputGeometry::of(config))); }

std::uint64_t flops_estimate(const ModelConfig& config, const InputGeometry& input) {
  return total_macs(describe(config, input));
}

}  // namespace mer::model
