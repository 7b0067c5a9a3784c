#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mer/tensor/ops.hpp"
#include "mer/tensor/rng.hpp"
#include "mer/tensor/tensor.hpp"

namespace mer::nn {

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& param)>;

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(Index in_channels, Index out_channels, Index kernel, Index stride = 1, Index pad = 0, bool bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  // Kaiming-uniform weights (ReLU gain) times `gain_scale`; zero bias.
  void init(Rng& rng, double gain_scale = 1.0);

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  Index kernel() const { return kernel_; }
  Index stride() const { return stride_; }
  Index pad() const { return pad_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Index in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(Index in_features, Index out_features, bool bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  // Uniform in ±1/sqrt(fan_in); zero bias.
  void init(Rng& rng);
  void zero();

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Index in_ = 0, out_ = 0;
  Tensor<T> weight_;
  Tensor<T> bias_;
};

// Collects parameters of anything exposing visit(prefix, visitor).
template <typename T, typename Module>
std::vector<Tensor<T>> parameters_of(Module& m) {
  std::vector<Tensor<T>> out;
  m.visit("", [&](const std::string&, Tensor<T>& p) { out.push_back(p); });
  return out;
}

template <typename T, typename Module>
Index count_parameters(Module& m) {
  Index n = 0;
  m.visit("", [&](const std::string&, Tensor<T>& p) { n += p.numel(); });
  return n;
}

template <typename T, typename Module>
void fill_parameters(Module& m, T value) {
  m.visit("", [&](const std::string&, Tensor<T>& p) {
    for (T& v : p.values()) v = value;
  });
}

}  // namespace mer::nn
