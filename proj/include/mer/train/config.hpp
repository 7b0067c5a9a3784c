#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace mer::train {

enum class Split { holdout_stratified, loso };
enum class Precision { single, double_precision };

const char* to_string(Split s);
const char* to_string(Precision p);
Split parse_split(const std::string& text);          // "holdout_stratified" | "holdout" | "loso"
Precision parse_precision(const std::string& text);  // "single" | "float" | "double"

struct TrainConfig {
  int batch_size = 64;
  int epochs = 500;
  double lr0 = 1e-3;
  int decay_step = 100;
  double gamma = 0.9;
  std::uint64_t seed = 0;
  Split split = Split::holdout_stratified;
  Precision precision = Precision::single;
  // Per-class share of samples held out by the stratified split.
  double holdout_fraction = 0.2;

  bool operator==(const TrainConfig&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& config);

// Step decay: lr0 · gamma^floor(epoch / decay_step).
double lr_at(int epoch, const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
// Strict: unknown keys and wrong types are rejected with the field name.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

}  // namespace mer::train
