#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mer/tensor/gradcheck.hpp"

namespace mer::cli {

// One finite-difference check. `run(seed)` draws a random point (inputs and
// parameters) from the seed and returns the comparison at that point.
struct GradientCase {
  std::string name;
  std::string kind;  // "op", "block" or "model"
  std::function<GradCheckReport(std::uint64_t seed)> run;
};

struct GradientResult {
  std::string name;
  std::string kind;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  double seconds = 0.0;
  bool passed = false;
};

inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kGradientStep = 1e-6;

// Every differentiable op, every block kind, the tiny network in all six
// variants and the desk-scale DBFEM+CAFFM network.
std::vector<GradientCase> gradient_cases();

// Runs each case at `points` seeds (base_seed, base_seed + 1, ...), keeping
// the worst error per case.
std::vector<GradientResult> run_gradient_suite(const std::vector<GradientCase>& cases, int points = 10,
                                               std::uint64_t base_seed = 1,
                                               const std::function<void(const GradientResult&)>& on_result = {});

}  // namespace mer::cli
