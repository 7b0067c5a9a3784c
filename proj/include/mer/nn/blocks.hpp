#pragma once

// Residual blocks, the four-branch Inception module, and CBAM attention.
// All convolutions are post-activation (conv, then ReLU); there is no
// normalization layer.

#include <array>
#include <optional>
#include <string>

#include "mer/nn/layers.hpp"

namespace mer::nn {

enum class BlockKind { basic, bottleneck, residual3, inception, cbam };

const char* to_string(BlockKind kind);

struct BlockSpec {
  BlockKind kind = BlockKind::basic;
  Index in_channels = 1;
  Index out_channels = 1;
  Index stride = 1;
  Index cbam_reduction = 16;
  std::array<Index, 4> inception_widths{1, 1, 1, 1};

  static BlockSpec basic(Index in, Index out, Index stride = 1) { return {BlockKind::basic, in, out, stride}; }
  static BlockSpec bottleneck(Index in, Index out, Index stride = 1) {
    return {BlockKind::bottleneck, in, out, stride};
  }
  static BlockSpec residual3(Index in, Index out, Index stride = 1) {
    return {BlockKind::residual3, in, out, stride};
  }
  static BlockSpec inception(Index in, std::array<Index, 4> widths) {
    BlockSpec s{BlockKind::inception, in, widths[0] + widths[1] + widths[2] + widths[3]};
    s.inception_widths = widths;
    return s;
  }
  static BlockSpec cbam(Index channels, Index reduction) {
    BlockSpec s{BlockKind::cbam, channels, channels};
    s.cbam_reduction = reduction;
    return s;
  }
};

// Throws std::invalid_argument when a BlockSpec violates its constraints
// (e.g. CBAM channels not divisible by the reduction ratio).
void validate(const BlockSpec& spec, BlockKind expected);

// Bottleneck inner width: out/4, at least 1.
Index bottleneck_mid(const BlockSpec& spec);

// Identity when shapes match, else 1×1 convolution with the block stride.
template <typename T>
class Shortcut {
 public:
  Shortcut() = default;
  Shortcut(Index in, Index out, Index stride);
  Tensor<T> forward(const Tensor<T>& x) const { return proj_ ? proj_->forward(x) : x; }
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  void init(Rng& rng);
  bool is_identity() const { return !proj_.has_value(); }

 private:
  std::optional<Conv2d<T>> proj_;
};

// relu(conv3x3(relu(conv3x3(x))) + shortcut(x))
template <typename T>
class BasicBlock {
 public:
  explicit BasicBlock(const BlockSpec& spec);
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  // `residual_scale` shrinks the last conv of the residual branch.
  void init(Rng& rng, double residual_scale = 1.0);
  const Shortcut<T>& shortcut() const { return shortcut_; }

 private:
  Conv2d<T> conv1_, conv2_;
  Shortcut<T> shortcut_;
};

// relu(expand1x1(relu(conv3x3(relu(reduce1x1(x))))) + shortcut(x)), with the
// 3×3 running at out/4 channels.
template <typename T>
class Bottleneck {
 public:
  explicit Bottleneck(const BlockSpec& spec);
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  void init(Rng& rng, double residual_scale = 1.0);
  const Shortcut<T>& shortcut() const { return shortcut_; }

 private:
  Conv2d<T> reduce_, conv_, expand_;
  Shortcut<T> shortcut_;
};

// ResNet12 unit: three 3×3 convs on the residual branch.
template <typename T>
class Residual3Block {
 public:
  explicit Residual3Block(const BlockSpec& spec);
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  void init(Rng& rng, double residual_scale = 1.0);

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
  Shortcut<T> shortcut_;
};

// Four parallel branches concatenated on channels:
//   1×1 | 1×1→3×3 | 1×1→3×3→3×3 | avgpool3×3→1×1
// All branches preserve H×W.
template <typename T>
class InceptionModule {
 public:
  explicit InceptionModule(const BlockSpec& spec);
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  void init(Rng& rng);
  Index out_channels() const;

 private:
  Conv2d<T> b1_;
  Conv2d<T> b2_reduce_, b2_conv_;
  Conv2d<T> b3_reduce_, b3_conv1_, b3_conv2_;
  Conv2d<T> b4_proj_;
};

template <typename T>
struct CbamTrace {
  Tensor<T> channel_map;  // N×C×1×1
  Tensor<T> spatial_map;  // N×1×H×W
};

// Channel attention from a shared two-layer MLP over spatial avg and max
// descriptors, then spatial attention from a 7×7 conv over the channel-wise
// mean and max. Output = x ⊙ M_c ⊙ M_s.
template <typename T>
class Cbam {
 public:
  explicit Cbam(const BlockSpec& spec);
  Tensor<T> forward(const Tensor<T>& x, CbamTrace<T>* trace = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  void init(Rng& rng);
  Index channels() const { return channels_; }

 private:
  Tensor<T> mlp(const Tensor<T>& v) const;

  Index channels_;
  Linear<T> hidden_, out_;
  Conv2d<T> spatial_;
};

}  // namespace mer::nn
