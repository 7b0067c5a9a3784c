#pragma once

#include <functional>

#include "mer/model/dbfem.hpp"

namespace mer::train {

struct FpsResult {
  double fps = 0.0;             // 1 / median seconds per call
  double median_seconds = 0.0;
  int iters = 0;
};

// Times `forward` iters times after warmup calls; throws
// std::invalid_argument when iters < 10.
FpsResult fps_benchmark(const std::function<void()>& forward, int warmup, int iters);

// Batch-1 inference on fixed seeded inputs of the model's configured shapes.
template <typename T>
FpsResult fps_benchmark(const model::DbfemNetwork<T>& model, int warmup, int iters);

}  // namespace mer::train
