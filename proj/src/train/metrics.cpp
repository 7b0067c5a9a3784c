#include "mer/train/metrics.hpp"

#include <sstream>
#include <stdexcept>

namespace mer::train {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes <= 0) throw std::invalid_argument("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw std::invalid_argument("confusion matrix must be square");
    for (std::size_t p = 0; p < rows.size(); ++p) cm.add(static_cast<int>(t), static_cast<int>(p), rows[t][p]);
  }
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t count) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw std::out_of_range("class index outside confusion matrix of " + std::to_string(classes_) + " classes");
  }
  if (count < 0) throw std::invalid_argument("confusion counts must be nonnegative");
  counts_[static_cast<std::size_t>(truth * classes_ + predicted)] += count;
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth * classes_ + predicted));
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (int i = 0; i < classes_; ++i) s += at(i, i);
  return s;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  std::int64_t s = 0;
  for (int p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int predicted) const {
  std::int64_t s = 0;
  for (int t = 0; t < classes_; ++t) s += at(t, predicted);
  return s;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Metrics metrics_from(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("metrics of an empty confusion matrix are undefined");
  const int k = cm.classes();
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (int c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto fn = static_cast<double>(cm.row_sum(c)) - tp;
    const auto fp = static_cast<double>(cm.col_sum(c)) - tp;
    m.macro_recall += ratio(tp, tp + fn);
    m.macro_precision += ratio(tp, tp + fp);
    m.uf1 += ratio(2.0 * tp, 2.0 * tp + fp + fn);
  }
  m.macro_recall /= k;
  m.macro_precision /= k;
  m.uf1 /= k;
  m.uar = m.macro_recall;
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"uf1", m.uf1},
          {"uar", m.uar},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall}};
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < cm.classes(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  return rows;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != cm.classes()) {
    throw std::invalid_argument("confusion_csv: need one name per class");
  }
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& n : class_names) os << ',' << n;
  os << '\n';
  for (int t = 0; t < cm.classes(); ++t) {
    os << class_names[static_cast<std::size_t>(t)];
    for (int p = 0; p < cm.classes(); ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  return os.str();
}

}  // namespace mer::train
