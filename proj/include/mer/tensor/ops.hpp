#pragma once

// Differentiable operations. Image tensors are laid out N×C×H×W, row-major.

#include <cstdint>
#include <span>
#include <vector>

#include "mer/tensor/tensor.hpp"

namespace mer {

struct Conv2dOptions {
  Index stride = 1;
  Index pad = 0;
};

// Output extent of a sliding window: floor((in + 2*pad - k) / stride) + 1.
Index window_out(Index in, Index k, Index stride, Index pad);

// Cross-correlation (no kernel flip). `b` may be undefined for no bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Conv2dOptions opt = {});

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

// Pointwise with broadcasting: equal rank, each axis equal or 1 on one side.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);

// Max over k×k windows, no padding. Gradient goes to the first maximum in
// row-major window order.
template <typename T> Tensor<T> maxpool2d(const Tensor<T>& x, Index k, Index stride);
// Mean over k×k windows with zero padding counted in the divisor (k*k).
template <typename T> Tensor<T> avgpool2d(const Tensor<T>& x, Index k, Index stride, Index pad);
// Bins [floor(i*H/oh), ceil((i+1)*H/oh)) per output cell.
template <typename T> Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, Index out_h, Index out_w);
template <typename T> Tensor<T> adaptive_max_pool2d(const Tensor<T>& x, Index out_h, Index out_w);

// Reductions over the channel axis, keeping it as extent 1.
template <typename T> Tensor<T> channel_mean(const Tensor<T>& x);
template <typename T> Tensor<T> channel_max(const Tensor<T>& x);

template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// y = x·wᵀ + b; x is N×D_in, w is D_out×D_in, b is D_out (may be undefined).
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Row-wise softmax of an N×C tensor; no history.
template <typename T> std::vector<T> softmax_rows(const Tensor<T>& logits);

// Multiply-accumulate counter fed by conv2d and linear on this thread.
class MacCounter {
 public:
  MacCounter();
  std::uint64_t count() const;

 private:
  std::uint64_t start_;
};

}  // namespace mer
