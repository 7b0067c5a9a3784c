#include "mer/train/bench.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <vector>

#include "mer/tensor/rng.hpp"

namespace mer::train {

FpsResult fps_benchmark(const std::function<void()>& forward, int warmup, int iters) {
  if (iters < 10) throw std::invalid_argument("fps_benchmark needs at least 10 timed iterations");
  for (int i = 0; i < warmup; ++i) forward();
  std::vector<double> seconds(static_cast<std::size_t>(iters));
  for (auto& s : seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    forward();
    s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::sort(seconds.begin(), seconds.end());
  const std::size_t mid = seconds.size() / 2;
  const double median = seconds.size() % 2 ? seconds[mid] : 0.5 * (seconds[mid - 1] + seconds[mid]);
  return {median > 0.0 ? 1.0 / median : 0.0, median, iters};
}

template <typename T>
FpsResult fps_benchmark(const model::DbfemNetwork<T>& model, int warmup, int iters) {
  const auto& c = model.config();
  Rng rng(0);
  const Tensor<T> g = model::uses_global(c.variant) ? rng.uniform_tensor<T>(c.global_shape(1), 0.0, 1.0) : Tensor<T>();
  const Tensor<T> r = model::uses_local(c.variant) ? rng.uniform_tensor<T>(c.region_shape(1), 0.0, 1.0) : Tensor<T>();
  NoGradGuard guard;
  return fps_benchmark([&] { (void)model.forward(g, r); }, warmup, iters);
}

template FpsResult fps_benchmark<float>(const model::DbfemNetwork<float>&, int, int);
template FpsResult fps_benchmark<double>(const model::DbfemNetwork<double>&, int, int);

}  // namespace mer::train
