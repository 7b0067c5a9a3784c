#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mer/train/bench.hpp"
#include "mer/train/trainer.hpp"

namespace mer::train {

enum class Suite { table5, table7 };

Suite parse_suite(const std::string& text);  // "table5" | "table7"
const char* to_string(Suite s);

struct SuiteEntry {
  std::string label;
  model::ModelConfig config;
};

// table5: GFEM at ResNet depth 12, 18, 34 labelled ResNet_12/18/34.
// table7: the six variants in fixed order with their row labels.
std::vector<SuiteEntry> suite_entries(Suite suite, const model::ModelConfig& base);

struct AblationOptions {
  int fps_warmup = 3;
  // 0 skips timing and reports fps = 0, which keeps reruns byte-identical.
  int fps_iters = 20;
};

struct AblationRow {
  std::string variant;
  Metrics metrics;
  Index params = 0;
  std::uint64_t macs = 0;
  double fps = 0.0;
  ConfusionMatrix confusion{1};
  std::uint64_t seed = 0;
};

using RowCallback = std::function<void(const AblationRow&)>;

template <typename T>
std::vector<AblationRow> run_ablation(Suite suite, const model::ModelConfig& base, const TrainConfig& config,
                                      const data::PreparedDataset& data, const AblationOptions& options = {},
                                      const RowCallback& on_row = {});

// Columns: variant,accuracy,uf1,uar,params,macs,fps
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(Suite suite, const std::vector<AblationRow>& rows, const TrainConfig& config);

}  // namespace mer::train
