#pragma once

#include <cstdint>
#include <vector>

#include "mer/tensor/tensor.hpp"

namespace mer {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t t = 0;
  AdamHyper hyper;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params, AdamHyper hyper = {});

// One bias-corrected Adam update using each parameter's accumulated gradient.
// Parameters without a gradient are treated as having g = 0.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params);

}  // namespace mer
