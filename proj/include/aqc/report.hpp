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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aqc/metrics.hpp"

namespace aqc {

enum class CohortKind { seen, unseen, other };

struct CohortReport {
  std::string name;
  CohortKind kind = CohortKind::other;
  EvaluationResult result;
};

struct ReportOptions {
  /// Print "--" for F1 of unseen-site cohorts. Scan-level AUC is always
  /// "--".
  bool blank_unseen_f1 = false;
};

/// Metric rows (Accuracy, Precision, Recall, F1 Score, AUC-ROC) against a
/// Slice Level / Scan Level column pair per cohort, then per-site tables,
/// per-scan verdicts and, when both kinds are present, the seen >= unseen
/// scan accuracy check.
void write_report(std::ostream& out, const std::vector<CohortReport>& cohorts, const ReportOptions& options = {});

/// Tab-separated records, one per (cohort, site, level), where site "*" is
/// the whole cohort: cohort, site, level, n, tp, fp, tn, fn, accuracy,
/// precision, recall, f1, auc (blank when undefined).
void write_report_records(std::ostream& out, const std::vector<CohortReport>& cohorts);

/// Whether every seen cohort's scan accuracy is >= every unseen cohort's;
/// empty unless both kinds carry metrics.
std::optional<bool> seen_unseen_gap_holds(const std::vector<CohortReport>& cohorts);

std::string configuration_label(Preset preset);

/// Rows: cohort | configuration | scan acc | scan recall | slice acc |
/// slice recall.
void write_ablation(std::ostream& out, const AblationTable& table);
void write_ablation_records(std::ostream& out, const AblationTable& table);

}  // namespace aqc
