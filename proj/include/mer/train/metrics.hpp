#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mer::train {

// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);

  int classes() const { return classes_; }
  void add(int truth, int predicted, std::int64_t count = 1);
  std::int64_t at(int truth, int predicted) const;
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int truth) const;
  std::int64_t col_sum(int predicted) const;
  // Sums another matrix of the same size into this one.
  void merge(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

struct Metrics {
  double accuracy = 0.0;
  double uf1 = 0.0;
  double uar = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
};

// Per-class ratios with a zero denominator count as 0. Throws
// std::invalid_argument for an empty matrix.
Metrics metrics_from(const ConfusionMatrix& cm);

// Index of the largest value; ties go to the lowest index.
template <typename T>
int argmax(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const ConfusionMatrix& cm);

// Header row and first column carry the class names.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace mer::train
