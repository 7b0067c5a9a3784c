#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mer/tensor/tensor.hpp"

namespace mer {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares autodiff gradients of `loss_fn` with respect to `wrt` against
// finite differences. Per coordinate the error is |a - n| / max(1, |a|, |n|)
// for the closest of the central quotient (f(x+h) - f(x-h)) / 2h and the two
// one-sided quotients; the one-sided ones keep a ReLU or max kink that lies
// within h of the point from masquerading as a wrong gradient. A wrong
// backward disagrees with all three. `loss_fn` must rebuild its graph from the
// current values of `wrt` on every call. When `max_coords` is nonzero, that
// many coordinates are sampled per tensor (seeded) instead of all of them.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> wrt,
                           double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0);

// Single-input form: `f` maps the point to a scalar loss. Returns the max
// relative error.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& point,
                  double h = 1e-5);

// sum(x ⊙ R) for a fixed seeded R in [-1, 1]; turns any op output into a
// scalar whose gradient exercises every output element differently.
Tensor<double> random_projection(const Tensor<double>& x, std::uint64_t seed);

}  // namespace mer
