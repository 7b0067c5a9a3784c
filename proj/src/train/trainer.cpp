#include "mer/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mer/tensor/adam.hpp"
#include "mer/tensor/ops.hpp"
#include "mer/tensor/rng.hpp"

namespace mer::train {

namespace {

constexpr std::uint64_t kShuffleStream = 100;
constexpr std::uint64_t kSplitStream = 200;

template <typename T>
Tensor<T> logits_for(const model::DbfemNetwork<T>& model, const data::PreparedDataset& data,
                     const std::vector<std::size_t>& idx) {
  const auto variant = model.config().variant;
  const Tensor<T> g = model::uses_global(variant) ? data.global_batch<T>(idx) : Tensor<T>();
  const Tensor<T> r = model::uses_local(variant) ? data.region_batch<T>(idx) : Tensor<T>();
  return model.forward(g, r);
}

void check_labels(const data::PreparedDataset& data, Index classes) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= classes) {
      throw TrainingError("sample '" + data.ids[i] + "' has label " + std::to_string(data.labels[i]) +
                          " but the model has " + std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

template <typename T>
model::DbfemNetwork<T> make_model(const model::ModelConfig& config, std::uint64_t seed) {
  model::DbfemNetwork<T> net(config);
  Rng rng(seed);
  net.init(rng);
  return net;
}

template <typename T>
std::vector<EpochRecord> train(model::DbfemNetwork<T>& model, const TrainConfig& config,
                               const data::PreparedDataset& data, const EpochCallback& on_epoch) {
  validate(config);
  if (data.size() == 0) throw TrainingError("cannot train on an empty dataset");
  const Index classes = model.config().num_classes;
  check_labels(data, classes);

  auto params = model.parameters();
  auto state = make_adam_state(params);
  Rng rng = Rng(config.seed).fork(kShuffleStream);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  std::vector<EpochRecord> history;
  history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    const double lr = lr_at(epoch, config);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch, order.size())));
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
      const Tensor<T> logits = logits_for(model, data, idx);
      const Tensor<T> loss = softmax_cross_entropy(logits, std::span<const int>(labels));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b));
      }
      const auto values = logits.data();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = values.subspan(i * static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
        if (argmax<T>(row) == labels[i]) ++correct;
      }
      loss_sum += value * static_cast<double>(idx.size());
      backward(loss);
      adam_step(params, state, lr);
      zero_grads(params);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(data.size()), lr,
                    static_cast<double>(correct) / static_cast<double>(data.size())};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

template <typename T>
std::vector<T> predict_logits(const model::DbfemNetwork<T>& model, const data::PreparedDataset& data,
                              const std::vector<std::size_t>& indices, int batch_size) {
  NoGradGuard guard;
  std::vector<T> out;
  out.reserve(indices.size() * static_cast<std::size_t>(model.config().num_classes));
  const auto batch = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch, indices.size())));
    const Tensor<T> logits = logits_for(model, data, idx);
    const auto values = logits.data();
    out.insert(out.end(), values.begin(), values.end());
  }
  return out;
}

template <typename T>
ConfusionMatrix confusion_from_logits(std::span<const T> logits, std::span<const int> labels, int classes) {
  if (logits.size() != labels.size() * static_cast<std::size_t>(classes)) {
    throw std::invalid_argument("confusion_from_logits: " + std::to_string(logits.size()) + " logits for " +
                                std::to_string(labels.size()) + " labels of " + std::to_string(classes) + " classes");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cm.add(labels[i], argmax<T>(logits.subspan(i * static_cast<std::size_t>(classes), static_cast<std::size_t>(classes))));
  }
  return cm;
}

template <typename T>
ConfusionMatrix evaluate(const model::DbfemNetwork<T>& model, const data::PreparedDataset& data, int batch_size) {
  const Index classes = model.config().num_classes;
  check_labels(data, classes);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto logits = predict_logits(model, data, all, batch_size);
  return confusion_from_logits<T>(logits, data.labels, static_cast<int>(classes));
}

std::vector<Fold> make_folds(const data::PreparedDataset& data, Split split, std::uint64_t seed,
                             double holdout_fraction) {
  std::vector<Fold> folds;
  if (split == Split::loso) {
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < data.size(); ++i) by_subject[data.subjects[i]].push_back(i);
    if (by_subject.size() < 2) throw TrainingError("leave-one-subject-out needs at least two subjects");
    for (const auto& [subject, members] : by_subject) {
      Fold f;
      f.name = subject;
      f.test = members;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.subjects[i] != subject) f.train.push_back(i);
      }
      folds.push_back(std::move(f));
    }
    return folds;
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  Rng rng = Rng(seed).fork(kSplitStream);
  Fold f;
  f.name = "holdout";
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng.engine());
    auto take = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    else take = 0;
    f.test.insert(f.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    f.train.insert(f.train.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.test.begin(), f.test.end());
  if (f.test.empty()) throw TrainingError("stratified holdout needs a class with at least two samples");
  folds.push_back(std::move(f));
  return folds;
}

template <typename T>
ProtocolResult<T> run_protocol(const model::ModelConfig& model_config, const TrainConfig& config,
                               const data::PreparedDataset& data, const EpochCallback& on_epoch) {
  if (data.size() == 0) throw TrainingError("cannot train on an empty dataset");
  ProtocolResult<T> result;
  result.test_confusion = ConfusionMatrix(static_cast<int>(model_config.num_classes));
  for (const Fold& fold : make_folds(data, config.split, config.seed, config.holdout_fraction)) {
    auto net = make_model<T>(model_config, config.seed);
    result.histories.push_back(train(net, config, data.subset(fold.train), on_epoch));
    result.test_confusion.merge(evaluate(net, data.subset(fold.test)));
    result.fold_names.push_back(fold.name);
    result.models.push_back(std::move(net));
  }
  result.test_metrics = metrics_from(result.test_confusion);
  return result;
}

nlohmann::json to_json(const std::vector<EpochRecord>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.lr}, {"train_accuracy", r.train_accuracy}});
  }
  return out;
}

#define MER_INSTANTIATE(T)                                                                                        \
  template model::DbfemNetwork<T> make_model<T>(const model::ModelConfig&, std::uint64_t);                        \
  template std::vector<EpochRecord> train<T>(model::DbfemNetwork<T>&, const TrainConfig&,                        \
                                             const data::PreparedDataset&, const EpochCallback&);                 \
  template std::vector<T> predict_logits<T>(const model::DbfemNetwork<T>&, const data::PreparedDataset&,          \
                                            const std::vector<std::size_t>&, int);                                \
  template ConfusionMatrix confusion_from_logits<T>(std::span<const T>, std::span<const int>, int);              \
  template ConfusionMatrix evaluate<T>(const model::DbfemNetwork<T>&, const data::PreparedDataset&, int);        \
  template ProtocolResult<T> run_protocol<T>(const model::ModelConfig&, const TrainConfig&,                      \
                                             const data::PreparedDataset&, const EpochCallback&);
MER_INSTANTIATE(float)
MER_INSTANTIATE(double)
#undef MER_INSTANTIATE

}  // namespace mer::train
