#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mer/data/dataset.hpp"
#include "mer/model/dbfem.hpp"
#include "mer/train/config.hpp"
#include "mer/train/metrics.hpp"

namespace mer::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // sample-weighted mean over the epoch's batches
  double lr = 0.0;
  double train_accuracy = 0.0;  // predictions made before each batch's update
  bool operator==(const EpochRecord&) const = default;
};

// Called after every epoch; useful for progress logging.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Network initialized from Rng(seed).
template <typename T>
model::DbfemNetwork<T> make_model(const model::ModelConfig& config, std::uint64_t seed);

// Adam with the step-decay schedule over seeded shuffled mini-batches.
// Shuffling draws from Rng(config.seed) stream 100, independent of the
// initialization streams. Throws TrainingError on an empty dataset, a label
// outside the model's classes, or a non-finite loss.
template <typename T>
std::vector<EpochRecord> train(model::DbfemNetwork<T>& model, const TrainConfig& config,
                               const data::PreparedDataset& data, const EpochCallback& on_epoch = {});

// Logits for `indices`, batched, without recording a graph.
template <typename T>
std::vector<T> predict_logits(const model::DbfemNetwork<T>& model, const data::PreparedDataset& data,
                              const std::vector<std::size_t>& indices, int batch_size = 64);

// Confusion counts from row-major logits (one row per label).
template <typename T>
ConfusionMatrix confusion_from_logits(std::span<const T> logits, std::span<const int> labels, int classes);

// Throws TrainingError when a label is outside the model's classes.
template <typename T>
ConfusionMatrix evaluate(const model::DbfemNetwork<T>& model, const data::PreparedDataset& data,
                         int batch_size = 64);

struct Fold {
  std::string name;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// holdout_stratified: one fold holding out round(fraction · n_c) of each class c
// (at least one when the class has two or more samples), chosen by Rng(seed)
// stream 200. loso: one fold per subject in sorted subject order.
std::vector<Fold> make_folds(const data::PreparedDataset& data, Split split, std::uint64_t seed,
                             double holdout_fraction = 0.2);

template <typename T>
struct ProtocolResult {
  ConfusionMatrix test_confusion{1};  // summed over folds
  Metrics test_metrics;
  std::vector<std::string> fold_names;
  std::vector<std::vector<EpochRecord>> histories;  // one per fold
  std::vector<model::DbfemNetwork<T>> models;       // one per fold
};

// Trains a fresh model (seeded by config.seed) on every fold and evaluates
// it on the fold's held-out samples.
template <typename T>
ProtocolResult<T> run_protocol(const model::ModelConfig& model_config, const TrainConfig& config,
                               const data::PreparedDataset& data, const EpochCallback& on_epoch = {});

nlohmann::json to_json(const std::vector<EpochRecord>& history);

}  // namespace mer::train
