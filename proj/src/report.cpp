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

#include "aqc/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ostream>

namespace aqc {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string lpad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

constexpr std::size_t kLabelWidth = 11;
constexpr std::size_t kCellWidth = 13;

struct Column {
  const MetricsReport* report;
  bool blank_f1;
};

void metric_table(std::ostream& out, const std::vector<std::string>& groups, const std::vector<Column>& cols) {
  out << pad("", kLabelWidth);
  for (const auto& g : groups) out << pad(" " + g, 2 * kCellWidth);
  out << "\n" << pad("Metric", kLabelWidth);
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << lpad(cols[i].report->level == Level::slice ? "Slice Level" : "Scan Level", kCellWidth);
  out << "\n";
  const char* names[] = {"Accuracy", "Precision", "Recall", "F1 Score", "AUC-ROC"};
  for (int row = 0; row < 5; ++row) {
    out << pad(names[row], kLabelWidth);
    for (const auto& c : cols) {
      const auto& m = c.report->metrics;
      std::string cell;
      switch (row) {
        case 0: cell = fixed(m.accuracy); break;
        case 1: cell = fixed(m.precision); break;
        case 2: cell = fixed(m.recall); break;
        case 3: cell = c.blank_f1 ? "--" : fixed(m.f1); break;
        default: cell = c.report->level == Level::slice && c.report->auc ? fixed(*c.report->auc) : "--"; break;
      }
      out << lpad(cell, kCellWidth);
    }
    out << "\n";
  }
}

void record(std::ostream& out, const std::string& cohort, const std::string& site, const MetricsReport& r) {
  const auto& c = r.counts;
  const auto& m = r.metrics;
  out << cohort << '\t' << site << '\t' << level_name(r.level) << '\t' << c.total() << '\t' << c.tp << '\t' << c.fp
      << '\t' << c.tn << '\t' << c.fn << '\t' << exact(m.accuracy) << '\t' << exact(m.precision) << '\t'
      << exact(m.recall) << '\t' << exact(m.f1) << '\t' << (r.auc ? exact(*r.auc) : "") << '\n';
}

}  // namespace

std::optional<bool> seen_unseen_gap_holds(const std::vector<CohortReport>& cohorts) {
  std::optional<double> seen_min, unseen_max;
  for (const auto& c : cohorts) {
    if (!c.result.scan_metrics) continue;
    const double acc = c.result.scan_metrics->metrics.accuracy;
    if (c.kind == CohortKind::seen) seen_min = std::min(seen_min.value_or(acc), acc);
    if (c.kind == CohortKind::unseen) unseen_max = std::max(unseen_max.value_or(acc), acc);
  }
  if (!seen_min || !unseen_max) return std::nullopt;
  return *seen_min >= *unseen_max;
}

void write_report(std::ostream& out, const std::vector<CohortReport>& cohorts, const ReportOptions& options) {
  std::vector<std::string> groups;
  std::vector<Column> cols;
  for (const auto& c : cohorts) {
    if (!c.result.slice_metrics) continue;
    const bool blank_f1 = options.blank_unseen_f1 && c.kind == CohortKind::unseen;
    groups.push_back(c.name);
    cols.push_back({&*c.result.slice_metrics, blank_f1});
    cols.push_back({&*c.result.scan_metrics, blank_f1});
  }
  if (!cols.empty()) {
    out << "== Slice-level and scan-level performance ==\n";
    metric_table(out, groups, cols);
  }

  for (const auto& c : cohorts) {
    if (c.result.per_site.empty()) continue;
    out << "\n== Per-site breakdown: " << c.name << " ==\n";
    std::vector<std::string> sites;
    std::vector<Column> site_cols;
    const bool blank_f1 = options.blank_unseen_f1 && c.kind == CohortKind::unseen;
    for (const auto& [site, rep] : c.result.per_site) {
      sites.push_back(site);
      site_cols.push_back({&rep.slice, blank_f1});
      site_cols.push_back({&rep.scan, blank_f1});
    }
    metric_table(out, sites, site_cols);
  }

  for (const auto& c : cohorts) {
    out << "\n== Scans: " << c.name << " ==\n";
    out << "subject_id\tsite_id\tflagged\tslices\tfraction\tverdict\tlabel\n";
    for (const auto& v : c.result.scans) {
      out << v.subject_id << '\t' << v.site_id << '\t' << v.n_flagged << '\t' << v.n_slices << '\t'
          << fixed(v.fraction_flagged) << '\t' << verdict_name(v.verdict) << '\t';
      if (v.label) out << *v.label;
      out << '\n';
    }
  }

  if (const auto gap = seen_unseen_gap_holds(cohorts)) {
    out << "\ncheck seen-site scan accuracy >= unseen-site scan accuracy:";
    for (const auto& c : cohorts)
      if (c.kind != CohortKind::other && c.result.scan_metrics)
        out << ' ' << c.name << '=' << fixed(c.result.scan_metrics->metrics.accuracy);
    out << (*gap ? " PASS" : " FAIL") << "\n";
  }
}

void write_report_records(std::ostream& out, const std::vector<CohortReport>& cohorts) {
  out << "cohort\tsite\tlevel\tn\ttp\tfp\ttn\tfn\taccuracy\tprecision\trecall\tf1\tauc\n";
  for (const auto& c : cohorts) {
    if (!c.result.slice_metrics) continue;
    record(out, c.name, "*", *c.result.slice_metrics);
    record(out, c.name, "*", *c.result.scan_metrics);
    for (const auto& [site, rep] : c.result.per_site) {
      record(out, c.name, site, rep.slice);
      record(out, c.name, site, rep.scan);
    }
  }
}

std::string configuration_label(Preset preset) {
  switch (preset) {
    case Preset::cnn_attn: return "CNN + attention";
    case Preset::cnn_only: return "CNN + classification head";
    case Preset::token: return "CNN + attention + classification head (token)";
    case Preset::channel: break;
  }
  return "CNN + attention + classification head";
}

void write_ablation(std::ostream& out, const AblationTable& table) {
  constexpr std::size_t kCohort = 12, kConfig = 48;
  out << pad("", kCohort + kConfig) << lpad("Scan Level", 2 * kCellWidth) << lpad("Slice Level", 2 * kCellWidth)
      << "\n"
      << pad("Dataset", kCohort) << pad("Configuration", kConfig) << lpad("Acc", kCellWidth)
      << lpad("Recall", kCellWidth) << lpad("Acc", kCellWidth) << lpad("Recall", kCellWidth) << "\n";
  std::string last;
  for (const auto& r : table.rows) {
    out << pad(r.cohort == last ? "" : r.cohort, kCohort) << pad(configuration_label(r.preset), kConfig)
        << lpad(fixed(r.scan_accuracy), kCellWidth) << lpad(fixed(r.scan_recall), kCellWidth)
        << lpad(fixed(r.slice_accuracy), kCellWidth) << lpad(fixed(r.slice_recall), kCellWidth) << "\n";
    last = r.cohort;
  }
}

void write_ablation_records(std::ostream& out, const AblationTable& table) {
  out << "cohort\tpreset\tparams\tscan_accuracy\tscan_recall\tslice_accuracy\tslice_recall\n";
  for (const auto& r : table.rows)
    out << r.cohort << '\t' << preset_name(r.preset) << '\t' << r.param_count << '\t' << exact(r.scan_accuracy) << '\t'
        << exact(r.scan_recall) << '\t' << exact(r.slice_accuracy) << '\t' << exact(r.slice_recall) << '\n';
}

}  // namespace aqc
