#include "mer/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mer/tensor/ops.hpp"
#include "mer/tensor/rng.hpp"

namespace mer {

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> wrt,
                           double h, std::size_t max_coords, std::uint64_t seed) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw std::invalid_argument("grad_check: step h must lie in [1e-6, 1e-4]");
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor<double> loss = loss_fn();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) analytic.push_back(t.grad());

  Rng rng(seed);
  GradCheckReport report;
  NoGradGuard no_grad;
  const double base = loss_fn().item();
  auto rel = [](double a, double n) {
    const double e = std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
    return std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
  };
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& values = wrt[ti].values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords != 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double a = analytic[ti][i];
      // Central difference first; the one-sided quotients stand in when a
      // ReLU or max kink lies within h on the other side.
      double numeric = (up - down) / (2.0 * h);
      double err = rel(a, numeric);
      for (const double one_sided : {(up - base) / h, (base - down) / h}) {
        if (rel(a, one_sided) < err) {
          err = rel(a, one_sided);
          numeric = one_sided;
        }
      }
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_tensor = ti;
        report.worst_index = static_cast<Index>(i);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (auto& t : wrt) t.zero_grad();
  return report;
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& point,
                  double h) {
  Tensor<double> x = point;
  return grad_check([&] { return f(x); }, {x}, h).max_rel_error;
}

Tensor<double> random_projection(const Tensor<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> r = rng.uniform_tensor<double>(x.shape(), -1.0, 1.0);
  return sum(mul(x, r));
}

}  // namespace mer
