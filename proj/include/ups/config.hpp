// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ups/pipeline.hpp"

namespace ups {

/// Everything one run-ssl / run-supervised invocation needs.
struct RunConfig {
  std::filesystem::path dataset_path;
  /// Taken from the dataset's provenance sidecar when not given.
  std::optional<LabelMode> dataset_mode;
  std::filesystem::path output_dir = "ups_out";
  PipelineConfig pipeline;
};

/// Parses a run config. Unknown keys anywhere are rejected with ConfigError
/// naming the dotted key path. Missing keys keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);

/// Applies "section.key=value" overrides to a raw config document. The value
/// is parsed as JSON and falls back to a plain string.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

/// Reads, overrides and parses a config file. A relative dataset path is
/// resolved against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

/// Fully resolved config, every key present.
nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace ups
