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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aqc/dataset.hpp"
#include "aqc/model.hpp"
#include "aqc/train.hpp"

namespace aqc {

struct SlicePrediction {
  std::string subject_id;
  std::string site_id;
  std::size_t slice_index = 0;
  float prob = 0.0f;
  int pred = 0;  ///< prob >= threshold
  std::optional<int> label;
};

enum class Verdict { good, poor };
std::string_view verdict_name(Verdict v);

struct ScanVerdict {
  std::string subject_id;
  std::string site_id;
  std::size_t n_slices = 0;
  std::size_t n_flagged = 0;
  Verdict verdict = Verdict::good;  ///< poor iff n_flagged > n_slices / 2
  double fraction_flagged = 0.0;
  std::optional<int> label;
};

/// Positive class is 1 (motion-corrupted).
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

/// Throws ContractError on length mismatch, empty input or values outside
/// {0, 1}.
Confusion confusion(std::span<const int> preds, std::span<const int> labels);

struct BasicMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  ///< 0 when nothing is predicted positive
  double recall = 0.0;     ///< 0 when there are no positives
  double f1 = 0.0;         ///< 0 when precision + recall is 0
};

/// Throws ContractError for an empty confusion.
BasicMetrics basic_metrics(const Confusion& c);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws UndefinedMetricError unless both classes occur.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Verdict for one subject from its binary slice predictions. Throws
/// ContractError when `preds` is empty.
ScanVerdict vote(std::string subject_id, std::span<const int> preds);

/// Groups slice predictions by subject (output sorted by subject_id) and
/// applies vote().
std::vector<ScanVerdict> majority_vote(const std::vector<SlicePrediction>& slices);

enum class Level { slice, scan };
std::string_view level_name(Level l);

struct MetricsReport {
  Level level = Level::slice;
  Confusion counts;
  BasicMetrics metrics;
  /// Slice level only; empty when one class is missing.
  std::optional<double> auc;
};

MetricsReport slice_report(const std::vector<SlicePrediction>& slices);
MetricsReport scan_report(const std::vector<ScanVerdict>& scans);

struct SiteReport {
  MetricsReport slice;
  MetricsReport scan;
};

struct EvalOptions {
  float threshold = 0.5f;
  std::size_t batch = 16;
};

struct EvaluationResult {
  std::vector<SlicePrediction> slices;
  std::vector<ScanVerdict> scans;
  /// Present only when every subject is labelled.
  std::optional<MetricsReport> slice_metrics;
  std::optional<MetricsReport> scan_metrics;
  std::map<std::string, SiteReport> per_site;
};

/// Eval-mode predictions for every slice, verdicts per subject and, for a
/// fully labelled cohort, both report levels plus a per-site breakdown.
/// Throws ConfigError for an empty cohort.
EvaluationResult evaluate(const std::vector<Subject>& subjects, Parameters& params, const ModelConfig& config,
                          const EvalOptions& options = {});

/// Tab-separated per-slice records:
/// subject_id, site_id, slice_index, prob, pred, label (blank if unknown).
void write_slice_dump(const std::vector<SlicePrediction>& slices, std::ostream& out);
std::vector<SlicePrediction> read_slice_dump(std::istream& in);

/// One evaluation cohort for the ablation table.
struct NamedCohort {
  std::string name;
  const std::vector<Subject>* subjects = nullptr;
};

struct AblationRow {
  std::string cohort;
  Preset preset = Preset::channel;
  std::size_t param_count = 0;
  double scan_accuracy = 0.0;
  double scan_recall = 0.0;
  double slice_accuracy = 0.0;
  double slice_recall = 0.0;
};

/// Rows grouped by cohort, presets in the order given.
struct AblationTable {
  std::vector<AblationRow> rows;
};

/// Trains every model config on `train` with the same TrainConfig (and so
/// the same seed), then evaluates each on every cohort.
AblationTable ablation_run(const std::vector<Subject>& train, const std::vector<NamedCohort>& cohorts,
                           const std::vector<ModelConfig>& models, const TrainConfig& config,
                           const EvalOptions& options = {});

}  // namespace aqc
