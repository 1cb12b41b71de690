// Copyright 2026 The aqc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "aqc/metrics.hpp"
#include "aqc/model.hpp"
#include "aqc/preprocess.hpp"
#include "aqc/synth.hpp"
#include "aqc/train.hpp"

namespace aqc {

/// Strict JSON mappings: every field is written, unknown keys are rejected
/// with ConfigError, absent keys keep the value already in `into`.
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const PreprocessOptions& c);
nlohmann::json to_json(const CohortSpec& c);
void apply_json(const nlohmann::json& j, ModelConfig& into);
void apply_json(const nlohmann::json& j, TrainConfig& into);
void apply_json(const nlohmann::json& j, PreprocessOptions& into);
void apply_json(const nlohmann::json& j, CohortSpec& into);

std::string_view filter_order_name(FilterOrder o);
FilterOrder parse_filter_order(std::string_view name);

struct RunPaths {
  std::filesystem::path data_dir = "data";   ///< generate output
  std::filesystem::path manifest;            ///< train/eval input
  std::filesystem::path checkpoint = "model.aqc";
  std::filesystem::path history = "history.tsv";
  std::filesystem::path report;      ///< empty: stdout only
  std::filesystem::path slice_dump;  ///< empty: no dump
  std::filesystem::path records;     ///< empty: no machine-readable report
  /// Per-step training log; empty derives "<history stem>.steps.tsv".
  std::filesystem::path steps;

  std::filesystem::path steps_path() const;
};

/// Every tunable of a run. File layout:
/// {"model": {...}, "train": {...}, "preprocess": {...},
///  "eval": {"threshold": x}, "generate": {...}, "paths": {...},
///  "seed": n, "threads": n}
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PreprocessOptions preprocess;
  EvalOptions eval;
  CohortSpec generate;
  RunPaths paths;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Pushes the shared seed into train and generate, and copies the
  /// preprocess slice size into the model input. Throws ConfigError.
  void finalize();
};

nlohmann::json to_json(const RunConfig& c);
void apply_json(const nlohmann::json& j, RunConfig& into);
/// Defaults overlaid with the file's keys. Relative paths in "paths" resolve
/// against the working directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace aqc
