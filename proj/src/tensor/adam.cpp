#include "mer/tensor/adam.hpp"

#include <cmath>

namespace mer {

template <typename T>
AdamState<T> make_adam_state(const std::vector<Tensor<T>>& params, AdamHyper hyper) {
  AdamState<T> state;
  state.hyper = hyper;
  for (const auto& p : params) {
    state.m.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    state.v.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
  }
  return state;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr) {
  if (params.size() != state.m.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but state holds " +
                     std::to_string(state.m.size()));
  }
  state.t += 1;
  const AdamHyper& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != theta.size()) {
      throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i));
    }
    if (!params[i].has_grad()) {
      // g = 0 still decays the moments.
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = static_cast<T>(h.beta1 * m[j]);
        v[j] = static_cast<T>(h.beta2 * v[j]);
        const double mhat = m[j] / c1, vhat = v[j] / c2;
        theta[j] = static_cast<T>(theta[j] - lr * mhat / (std::sqrt(vhat) + h.eps));
      }
      continue;
    }
    const auto& g = params[i].mutable_grad();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<T>(h.beta1 * m[j] + (1.0 - h.beta1) * gj);
      v[j] = static_cast<T>(h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj);
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      theta[j] = static_cast<T>(theta[j] - lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

template AdamState<float> make_adam_state<float>(const std::vector<Tensor<float>>&, AdamHyper);
template AdamState<double> make_adam_state<double>(const std::vector<Tensor<double>>&, AdamHyper);
template void adam_step<float>(std::vector<Tensor<float>>&, AdamState<float>&, double);
template void adam_step<double>(std::vector<Tensor<double>>&, AdamState<double>&, double);
template void zero_grads<float>(std::vector<Tensor<float>>&);
template void zero_grads<double>(std::vector<Tensor<double>>&);

}  // namespace mer
