#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mer/model/config.hpp"
#include "mer/train/config.hpp"

namespace mer::cli {

inline constexpr int kSchemaVersion = 1;

// Config file layout:
//   {"schema_version": 1, "model": {...}, "train": {...}}
// Both sections are optional and start from the desk model and default
// training settings. Unknown keys anywhere are errors.
struct RunConfig {
  int schema_version = kSchemaVersion;
  model::ModelConfig model = model::ModelConfig::desk();
  train::TrainConfig train;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Entry point behind the `mer` executable. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mer::cli
