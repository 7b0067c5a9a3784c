#include "mer/train/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "mer/data/facs.hpp"
#include "mer/model/accounting.hpp"

namespace mer::train {

Suite parse_suite(const std::string& text) {
  if (text == "table5") return Suite::table5;
  if (text == "table7") return Suite::table7;
  throw std::invalid_argument("unknown suite '" + text + "' (expected table5 or table7)");
}

const char* to_string(Suite s) { return s == Suite::table5 ? "table5" : "table7"; }

std::vector<SuiteEntry> suite_entries(Suite suite, const model::ModelConfig& base) {
  std::vector<SuiteEntry> out;
  if (suite == Suite::table5) {
    for (int depth : {12, 18, 34}) {
      model::ModelConfig c = base.with_variant(model::Variant::gfem);
      c.resnet_depth = depth;
      out.push_back({"ResNet_" + std::to_string(depth), c});
    }
  } else {
    for (auto v : model::kAllVariants) out.push_back({model::label(v), base.with_variant(v)});
  }
  return out;
}

template <typename T>
std::vector<AblationRow> run_ablation(Suite suite, const model::ModelConfig& base, const TrainConfig& config,
                                      const data::PreparedDataset& data, const AblationOptions& options,
                                      const RowCallback& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& entry : suite_entries(suite, base)) {
    auto result = run_protocol<T>(entry.config, config, data);
    AblationRow row;
    row.variant = entry.label;
    row.metrics = result.test_metrics;
    row.params = model::param_count(entry.config);
    row.macs = model::flops_estimate(entry.config);
    if (options.fps_iters > 0) row.fps = fps_benchmark(result.models.back(), options.fps_warmup, options.fps_iters).fps;
    row.confusion = result.test_confusion;
    row.seed = config.seed;
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

template std::vector<AblationRow> run_ablation<float>(Suite, const model::ModelConfig&, const TrainConfig&,
                                                      const data::PreparedDataset&, const AblationOptions&,
                                                      const RowCallback&);
template std::vector<AblationRow> run_ablation<double>(Suite, const model::ModelConfig&, const TrainConfig&,
                                                       const data::PreparedDataset&, const AblationOptions&,
                                                       const RowCallback&);

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,accuracy,uf1,uar,params,macs,fps\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%lld,%llu,%.2f\n", r.metrics.accuracy, r.metrics.uf1,
                  r.metrics.uar, static_cast<long long>(r.params), static_cast<unsigned long long>(r.macs), r.fps);
    os << r.variant << buf;
  }
  return os.str();
}

nlohmann::json ablation_json(Suite suite, const std::vector<AblationRow>& rows, const TrainConfig& config) {
  nlohmann::json out;
  out["suite"] = to_string(suite);
  out["train_config"] = to_json(config);
  out["seed"] = config.seed;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& n : data::class_names()) names.push_back(n);
  out["class_names"] = names;
  out["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    out["rows"].push_back({{"variant", r.variant},
                           {"metrics", to_json(r.metrics)},
                           {"params", r.params},
                           {"macs", r.macs},
                           {"fps", r.fps},
                           {"confusion", to_json(r.confusion)},
                           {"seed", r.seed}});
  }
  return out;
}

}  // namespace mer::train
