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

#include <gtest/gtest.h>

#include <sstream>

#include "aqc/report.hpp"

namespace aqc {
namespace {

// Builds a labelled cohort result from (label, flagged-of-4) pairs.
EvaluationResult cohort(const std::string& site, const std::vector<std::pair<int, int>>& subjects) {
  std::vector<SlicePrediction> slices;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    for (int k = 0; k < 4; ++k) {
      SlicePrediction p;
      p.subject_id = site + "-" + std::to_string(i);
      p.site_id = site;
      p.slice_index = static_cast<std::size_t>(k);
      p.pred = k < subjects[i].second ? 1 : 0;
      p.prob = p.pred ? 0.9f : 0.1f;
      p.label = subjects[i].first;
      slices.push_back(p);
    }
  EvaluationResult r;
  r.slices = slices;
  r.scans = majority_vote(slices);
  r.slice_metrics = slice_report(slices);
  r.scan_metrics = scan_report(r.scans);
  r.per_site[site] = {*r.slice_metrics, *r.scan_metrics};
  return r;
}

TEST(Report, GapCheck) {
  const auto perfect = cohort("A", {{1, 4}, {0, 0}});
  const auto half = cohort("B", {{1, 4}, {0, 4}});
  EXPECT_EQ(seen_unseen_gap_holds({{"s", CohortKind::seen, perfect}, {"u", CohortKind::unseen, half}}), true);
  EXPECT_EQ(seen_unseen_gap_holds({{"s", CohortKind::seen, half}, {"u", CohortKind::unseen, perfect}}), false);
  EXPECT_EQ(seen_unseen_gap_holds({{"s", CohortKind::seen, perfect}}), std::nullopt);
  EXPECT_EQ(seen_unseen_gap_holds({{"s", CohortKind::seen, half}, {"u", CohortKind::unseen, half}}), true);
}

TEST(Report, TableHasEveryMetricAndBlanksScanAuc) {
  const auto seen = cohort("A", {{1, 4}, {0, 1}, {1, 3}, {0, 0}});
  const auto unseen = cohort("B", {{1, 4}, {0, 3}});
  std::ostringstream os;
  write_report(os, {{"seen_test", CohortKind::seen, seen}, {"unseen_test", CohortKind::unseen, unseen}});
  const std::string text = os.str();
  for (const char* row : {"Accuracy", "Precision", "Recall", "F1 Score", "AUC-ROC", "Slice Level", "Scan Level",
                          "seen_test", "unseen_test", "Per-site breakdown: seen_test", "PASS"})
    EXPECT_NE(text.find(row), std::string::npos) << row;
  const auto auc_line = text.substr(text.find("AUC-ROC"), text.find('\n', text.find("AUC-ROC")) - text.find("AUC-ROC"));
  EXPECT_NE(auc_line.find("--"), std::string::npos);
  const auto f1_line = text.substr(text.find("F1 Score"), text.find('\n', text.find("F1 Score")) - text.find("F1 Score"));
  EXPECT_EQ(f1_line.find("--"), std::string::npos);

  std::ostringstream paper;
  write_report(paper, {{"seen_test", CohortKind::seen, seen}, {"unseen_test", CohortKind::unseen, unseen}},
               {.blank_unseen_f1 = true});
  const std::string p = paper.str();
  const auto pf1 = p.substr(p.find("F1 Score"), p.find('\n', p.find("F1 Score")) - p.find("F1 Score"));
  EXPECT_NE(pf1.find("--"), std::string::npos);
}

TEST(Report, RecordsMatchTheMetrics) {
  const auto seen = cohort("A", {{1, 4}, {0, 1}, {1, 1}, {0, 0}});
  std::ostringstream os;
  write_report_records(os, {{"seen_test", CohortKind::seen, seen}});
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "cohort\tsite\tlevel\tn\ttp\tfp\ttn\tfn\taccuracy\tprecision\trecall\tf1\tauc");
  std::size_t scan_rows = 0;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string cohort_name, site, level;
    std::size_t n, tp, fp, tn, fn;
    double acc;
    f >> cohort_name >> site >> level >> n >> tp >> fp >> tn >> fn >> acc;
    EXPECT_EQ(n, tp + fp + tn + fn);
    EXPECT_NEAR(acc, static_cast<double>(tp + tn) / static_cast<double>(n), 1e-12);
    if (level == "scan") {
      ++scan_rows;
      EXPECT_EQ(n, 4u);
      EXPECT_EQ(tp, 1u);  // the 1-of-4 corrupted subject is missed
      EXPECT_EQ(fn, 1u);
    }
  }
  EXPECT_EQ(scan_rows, 2u);  // whole cohort and the one site
}

TEST(Report, ConfigurationLabels) {
  EXPECT_EQ(configuration_label(Preset::cnn_attn), "CNN + attention");
  EXPECT_EQ(configuration_label(Preset::cnn_only), "CNN + classification head");
  EXPECT_EQ(configuration_label(Preset::channel), "CNN + attention + classification head");
  EXPECT_NE(configuration_label(Preset::token).find("token"), std::string::npos);
}

TEST(Report, AblationTableListsEveryRow) {
  AblationTable t;
  t.rows.push_back({"seen_test", Preset::cnn_only, 100, 0.5, 0.25, 0.75, 0.125});
  t.rows.push_back({"seen_test", Preset::channel, 200, 1.0, 1.0, 0.9, 0.8});
  std::ostringstream os;
  write_ablation(os, t);
  const std::string text = os.str();
  EXPECT_NE(text.find("CNN + classification head"), std::string::npos);
  EXPECT_NE(text.find("CNN + attention + classification head"), std::string::npos);
  EXPECT_NE(text.find("0.1250"), std::string::npos);
  std::ostringstream rec;
  write_ablation_records(rec, t);
  const std::string lines = rec.str();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 3);
}

}  // namespace
}  // namespace aqc
