#include "mer/nn/layers.hpp"

#include <cmath>

namespace mer::nn {

template <typename T>
Conv2d<T>::Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride, Index pad, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {
  weight_ = Tensor<T>::zeros({out_, in_, kernel_, kernel_}, true);
  if (bias) bias_ = Tensor<T>::zeros({out_}, true);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight_, bias_, {stride_, pad_});
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + "weight", weight_);
  if (bias_.defined()) f(prefix + "bias", bias_);
}

template <typename T>
void Conv2d<T>::init(Rng& rng, double gain_scale) {
  const double bound = gain_scale * std::sqrt(6.0 / static_cast<double>(in_ * kernel_ * kernel_));
  for (T& v : weight_.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  if (bias_.defined()) {
    for (T& v : bias_.values()) v = T(0);
  }
}

template <typename T>
Linear<T>::Linear(Index in_features, Index out_features, bool bias) : in_(in_features), out_(out_features) {
  weight_ = Tensor<T>::zeros({out_, in_}, true);
  if (bias) bias_ = Tensor<T>::zeros({out_}, true);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return linear(x, weight_, bias_);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(prefix + "weight", weight_);
  if (bias_.defined()) f(prefix + "bias", bias_);
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (T& v : weight_.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  if (bias_.defined()) {
    for (T& v : bias_.values()) v = T(0);
  }
}

template <typename T>
void Linear<T>::zero() {
  for (T& v : weight_.values()) v = T(0);
  if (bias_.defined()) {
    for (T& v : bias_.values()) v = T(0);
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace mer::nn
