#include "mer/train/config.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace mer::train {

const char* to_string(Split s) { return s == Split::loso ? "loso" : "holdout_stratified"; }
const char* to_string(Precision p) { return p == Precision::double_precision ? "double" : "single"; }

Split parse_split(const std::string& text) {
  if (text == "holdout_stratified" || text == "holdout") return Split::holdout_stratified;
  if (text == "loso" || text == "LOSO") return Split::loso;
  throw std::invalid_argument("unknown split '" + text + "' (expected holdout_stratified or loso)");
}

Precision parse_precision(const std::string& text) {
  if (text == "single" || text == "float") return Precision::single;
  if (text == "double") return Precision::double_precision;
  throw std::invalid_argument("unknown precision '" + text + "' (expected single or double)");
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("train config field '" + field + "': " + why);
  };
  if (c.batch_size <= 0) fail("batch_size", "must be positive");
  if (c.epochs < 0) fail("epochs", "must be nonnegative");
  if (!(c.lr0 > 0.0) || !std::isfinite(c.lr0)) fail("lr0", "must be positive");
  if (c.decay_step <= 0) fail("decay_step", "must be positive");
  if (!(c.gamma > 0.0) || !std::isfinite(c.gamma)) fail("gamma", "must be positive");
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) fail("holdout_fraction", "must lie in (0, 1)");
}

double lr_at(int epoch, const TrainConfig& c) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  return c.lr0 * std::pow(c.gamma, epoch / c.decay_step);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs},           {"lr0", c.lr0},
          {"decay_step", c.decay_step}, {"gamma", c.gamma},             {"seed", c.seed},
          {"split", to_string(c.split)}, {"precision", to_string(c.precision)},
          {"holdout_fraction", c.holdout_fraction}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  static const std::set<std::string> known = {"batch_size", "epochs", "lr0",       "decay_step",      "gamma",
                                              "seed",       "split",  "precision", "holdout_fraction"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("train config: unknown field '" + key + "'");
  }
  TrainConfig c = base;
  auto get = [&](const char* key, auto& out, auto check) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!check(v)) throw std::invalid_argument(std::string("train config field '") + key + "': wrong type");
    out = v.template get<std::decay_t<decltype(out)>>();
  };
  auto is_int = [](const nlohmann::json& v) { return v.is_number_integer(); };
  auto is_uint = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
  get("batch_size", c.batch_size, is_int);
  get("epochs", c.epochs, is_int);
  get("lr0", c.lr0, is_num);
  get("decay_step", c.decay_step, is_int);
  get("gamma", c.gamma, is_num);
  get("seed", c.seed, is_uint);
  get("holdout_fraction", c.holdout_fraction, is_num);
  auto text = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_string()) throw std::invalid_argument(std::string("train config field '") + key + "': expected a string");
    return v.get<std::string>();
  };
  try {
    if (j.contains("split")) c.split = parse_split(text("split"));
    if (j.contains("precision")) c.precision = parse_precision(text("precision"));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace mer::train
