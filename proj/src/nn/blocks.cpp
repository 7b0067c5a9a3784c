#include "mer/nn/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mer::nn {

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::basic: return "basic";
    case BlockKind::bottleneck: return "bottleneck";
    case BlockKind::residual3: return "residual3";
    case BlockKind::inception: return "inception";
    case BlockKind::cbam: return "cbam";
  }
  return "?";
}

void validate(const BlockSpec& spec, BlockKind expected) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument(std::string(to_string(spec.kind)) + " block: " + why);
  };
  if (spec.kind != expected) fail(std::string("spec kind is not ") + to_string(expected));
  if (spec.in_channels <= 0 || spec.out_channels <= 0) fail("channel counts must be positive");
  if (spec.stride <= 0) fail("stride must be positive");
  if (spec.kind == BlockKind::cbam) {
    if (spec.cbam_reduction <= 0 || spec.in_channels % spec.cbam_reduction != 0) {
      fail("channels " + std::to_string(spec.in_channels) + " not divisible by reduction " +
           std::to_string(spec.cbam_reduction));
    }
    if (spec.out_channels != spec.in_channels) fail("cbam preserves channel count");
  }
  if (spec.kind == BlockKind::inception) {
    Index total = 0;
    for (Index w : spec.inception_widths) {
      if (w <= 0) fail("branch widths must be positive");
      total += w;
    }
    if (total != spec.out_channels) fail("out_channels must equal the sum of branch widths");
    if (spec.stride != 1) fail("inception module keeps spatial extent (stride 1)");
  }
}

Index bottleneck_mid(const BlockSpec& spec) { return std::max<Index>(1, spec.out_channels / 4); }

template <typename T>
Shortcut<T>::Shortcut(Index in, Index out, Index stride) {
  if (in != out || stride != 1) proj_.emplace(in, out, 1, stride, 0);
}

template <typename T>
void Shortcut<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  if (proj_) proj_->visit(prefix + "proj.", f);
}

template <typename T>
void Shortcut<T>::init(Rng& rng) {
  if (proj_) proj_->init(rng);
}

template <typename T>
BasicBlock<T>::BasicBlock(const BlockSpec& spec)
    : conv1_((validate(spec, BlockKind::basic), spec.in_channels), spec.out_channels, 3, spec.stride, 1),
      conv2_(spec.out_channels, spec.out_channels, 3, 1, 1),
      shortcut_(spec.in_channels, spec.out_channels, spec.stride) {}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = conv2_.forward(relu(conv1_.forward(x)));
  return relu(add(y, shortcut_.forward(x)));
}

template <typename T>
void BasicBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  conv1_.visit(prefix + "conv1.", f);
  conv2_.visit(prefix + "conv2.", f);
  shortcut_.visit(prefix + "shortcut.", f);
}

template <typename T>
void BasicBlock<T>::init(Rng& rng, double residual_scale) {
  conv1_.init(rng);
  conv2_.init(rng, residual_scale);
  shortcut_.init(rng);
}

template <typename T>
Bottleneck<T>::Bottleneck(const BlockSpec& spec)
    : reduce_((validate(spec, BlockKind::bottleneck), spec.in_channels), bottleneck_mid(spec), 1, 1, 0),
      conv_(bottleneck_mid(spec), bottleneck_mid(spec), 3, spec.stride, 1),
      expand_(bottleneck_mid(spec), spec.out_channels, 1, 1, 0),
      shortcut_(spec.in_channels, spec.out_channels, spec.stride) {}

template <typename T>
Tensor<T> Bottleneck<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = expand_.forward(relu(conv_.forward(relu(reduce_.forward(x)))));
  return relu(add(y, shortcut_.forward(x)));
}

template <typename T>
void Bottleneck<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  reduce_.visit(prefix + "reduce.", f);
  conv_.visit(prefix + "conv.", f);
  expand_.visit(prefix + "expand.", f);
  shortcut_.visit(prefix + "shortcut.", f);
}

template <typename T>
void Bottleneck<T>::init(Rng& rng, double residual_scale) {
  reduce_.init(rng);
  conv_.init(rng);
  expand_.init(rng, residual_scale);
  shortcut_.init(rng);
}

template <typename T>
Residual3Block<T>::Residual3Block(const BlockSpec& spec)
    : conv1_((validate(spec, BlockKind::residual3), spec.in_channels), spec.out_channels, 3, spec.stride, 1),
      conv2_(spec.out_channels, spec.out_channels, 3, 1, 1),
      conv3_(spec.out_channels, spec.out_channels, 3, 1, 1),
      shortcut_(spec.in_channels, spec.out_channels, spec.stride) {}

template <typename T>
Tensor<T> Residual3Block<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = conv3_.forward(relu(conv2_.forward(relu(conv1_.forward(x)))));
  return relu(add(y, shortcut_.forward(x)));
}

template <typename T>
void Residual3Block<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  conv1_.visit(prefix + "conv1.", f);
  conv2_.visit(prefix + "conv2.", f);
  conv3_.visit(prefix + "conv3.", f);
  shortcut_.visit(prefix + "shortcut.", f);
}

template <typename T>
void Residual3Block<T>::init(Rng& rng, double residual_scale) {
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_.init(rng, residual_scale);
  shortcut_.init(rng);
}

template <typename T>
InceptionModule<T>::InceptionModule(const BlockSpec& spec)
    : b1_((validate(spec, BlockKind::inception), spec.in_channels), spec.inception_widths[0], 1),
      b2_reduce_(spec.in_channels, spec.inception_widths[1], 1),
      b2_conv_(spec.inception_widths[1], spec.inception_widths[1], 3, 1, 1),
      b3_reduce_(spec.in_channels, spec.inception_widths[2], 1),
      b3_conv1_(spec.inception_widths[2], spec.inception_widths[2], 3, 1, 1),
      b3_conv2_(spec.inception_widths[2], spec.inception_widths[2], 3, 1, 1),
      b4_proj_(spec.in_channels, spec.inception_widths[3], 1) {}

template <typename T>
Tensor<T> InceptionModule<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y1 = relu(b1_.forward(x));
  Tensor<T> y2 = relu(b2_conv_.forward(relu(b2_reduce_.forward(x))));
  Tensor<T> y3 = relu(b3_conv2_.forward(relu(b3_conv1_.forward(relu(b3_reduce_.forward(x))))));
  Tensor<T> y4 = relu(b4_proj_.forward(avgpool2d(x, 3, 1, 1)));
  return concat_channels<T>({y1, y2, y3, y4});
}

template <typename T>
void InceptionModule<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  b1_.visit(prefix + "b1.", f);
  b2_reduce_.visit(prefix + "b2_reduce.", f);
  b2_conv_.visit(prefix + "b2_conv.", f);
  b3_reduce_.visit(prefix + "b3_reduce.", f);
  b3_conv1_.visit(prefix + "b3_conv1.", f);
  b3_conv2_.visit(prefix + "b3_conv2.", f);
  b4_proj_.visit(prefix + "b4_proj.", f);
}

template <typename T>
void InceptionModule<T>::init(Rng& rng) {
  for (Conv2d<T>* c : {&b1_, &b2_reduce_, &b2_conv_, &b3_reduce_, &b3_conv1_, &b3_conv2_, &b4_proj_}) c->init(rng);
}

template <typename T>
Index InceptionModule<T>::out_channels() const {
  return b1_.out_channels() + b2_conv_.out_channels() + b3_conv2_.out_channels() + b4_proj_.out_channels();
}

template <typename T>
Cbam<T>::Cbam(const BlockSpec& spec)
    : channels_((validate(spec, BlockKind::cbam), spec.in_channels)),
      hidden_(spec.in_channels, spec.in_channels / spec.cbam_reduction),
      out_(spec.in_channels / spec.cbam_reduction, spec.in_channels),
      spatial_(2, 1, 7, 1, 3) {}

template <typename T>
Tensor<T> Cbam<T>::mlp(const Tensor<T>& v) const {
  return out_.forward(relu(hidden_.forward(v)));
}

template <typename T>
Tensor<T> Cbam<T>::forward(const Tensor<T>& x, CbamTrace<T>* trace) const {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw ShapeError("cbam: expected N×" + std::to_string(channels_) + "×H×W input, got " + mer::to_string(x.shape()));
  }
  const Index n = x.dim(0);
  Tensor<T> avg = reshape(adaptive_avg_pool2d(x, 1, 1), {n, channels_});
  Tensor<T> mx = reshape(adaptive_max_pool2d(x, 1, 1), {n, channels_});
  Tensor<T> channel_map = reshape(sigmoid(add(mlp(avg), mlp(mx))), {n, channels_, 1, 1});
  Tensor<T> xc = mul(x, channel_map);
  Tensor<T> pooled = concat_channels<T>({channel_mean(xc), channel_max(xc)});
  Tensor<T> spatial_map = sigmoid(spatial_.forward(pooled));
  if (trace) {
    trace->channel_map = channel_map;
    trace->spatial_map = spatial_map;
  }
  return mul(xc, spatial_map);
}

template <typename T>
void Cbam<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  hidden_.visit(prefix + "mlp_hidden.", f);
  out_.visit(prefix + "mlp_out.", f);
  spatial_.visit(prefix + "spatial.", f);
}

template <typename T>
void Cbam<T>::init(Rng& rng) {
  hidden_.init(rng);
  out_.init(rng);
  spatial_.init(rng, 1.0 / std::sqrt(2.0));
}

template class Shortcut<float>;
template class Shortcut<double>;
template class BasicBlock<float>;
template class BasicBlock<double>;
template class Bottleneck<float>;
template class Bottleneck<double>;
template class Residual3Block<float>;
template class Residual3Block<double>;
template class InceptionModule<float>;
template class InceptionModule<double>;
template class Cbam<float>;
template class Cbam<double>;

}  // namespace mer::nn
