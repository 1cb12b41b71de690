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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aqc/checkpoint.hpp"
#include "aqc/config.hpp"
#include "aqc/report.hpp"

namespace aqc {

/// The aqc tool. Exit codes: 0 success (predict: good), 2 predict verdict
/// poor, 1 any error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

DatasetSummary cmd_generate(const RunConfig& config, std::ostream& out);

struct TrainRequest {
  /// Fit on every training subject and validate on the same subjects,
  /// stopping once `target_accuracy` is reached.
  bool overfit = false;
  double target_accuracy = 0.99;
};

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainHistory history;
};

/// Reads paths.manifest (train-split entries fit, val-split entries
/// validate when present), writes paths.checkpoint, paths.history and the
/// step log.
TrainOutcome cmd_train(const RunConfig& config, const TrainRequest& request, std::ostream& out);

struct CohortInput {
  std::string name;
  CohortKind kind = CohortKind::other;
  std::filesystem::path manifest;
};

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::vector<CohortInput> cohorts;
  ReportOptions report;
  /// When set, the checkpoint's ModelConfig must equal it.
  std::optional<ModelConfig> expected_model;
};

/// Evaluates every cohort with the checkpoint and prints the report;
/// paths.report, paths.records and paths.slice_dump are written when set.
std::vector<CohortReport> cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out);

struct PredictOutcome {
  ScanVerdict verdict;
  std::vector<SlicePrediction> slices;
};

PredictOutcome cmd_predict(const RunConfig& config, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& volume, bool print_slices, std::ostream& out);

/// Trains each preset on paths.manifest with the same seed and evaluates on
/// every cohort. Prints the table; paths.report and paths.records are
/// written when set.
AblationTable cmd_ablate(const RunConfig& config, const std::vector<Preset>& presets,
                         const std::vector<CohortInput>& cohorts, std::ostream& out);

/// The model a preset uses in an ablation at the configured widths.
ModelConfig ablation_model(const ModelConfig& base, Preset preset);

}  // namespace aqc
