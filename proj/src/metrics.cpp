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

#include "aqc/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "aqc/error.hpp"

namespace aqc {

std::string_view verdict_name(Verdict v) { return v == Verdict::poor ? "poor" : "good"; }

std::string_view level_name(Level l) { return l == Level::scan ? "scan" : "slice"; }

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size())
    throw ContractError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  if (preds.empty()) throw ContractError("confusion: no predictions");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw ContractError("confusion: values must be 0 or 1");
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

BasicMetrics basic_metrics(const Confusion& c) {
  if (c.total() == 0) throw ContractError("basic_metrics: empty confusion");
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  BasicMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auc_roc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                        " labels");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("auc_roc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auc_roc needs both positive and negative labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, kept integral: tied groups share the mean of
  // their 1-based ranks, whose double is first + last.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    std::size_t group_pos = 0;
    for (std::size_t k = i; k <= j; ++k) group_pos += static_cast<std::size_t>(labels[order[k]]);
    twice_rank_sum += group_pos * ((i + 1) + (j + 1));
    i = j + 1;
  }
  const std::size_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

ScanVerdict vote(std::string subject_id, std::span<const int> preds) {
  if (preds.empty()) throw ContractError("subject " + subject_id + " has no slice predictions");
  ScanVerdict v;
  v.subject_id = std::move(subject_id);
  v.n_slices = preds.size();
  for (int p : preds) v.n_flagged += p != 0;
  v.fraction_flagged = static_cast<double>(v.n_flagged) / static_cast<double>(v.n_slices);
  v.verdict = 2 * v.n_flagged > v.n_slices ? Verdict::poor : Verdict::good;
  return v;
}

std::vector<ScanVerdict> majority_vote(const std::vector<SlicePrediction>& slices) {
  std::map<std::string, std::vector<const SlicePrediction*>> groups;
  for (const auto& s : slices) groups[s.subject_id].push_back(&s);
  std::vector<ScanVerdict> out;
  for (const auto& [id, members] : groups) {
    std::vector<int> preds;
    for (const auto* m : members) preds.push_back(m->pred);
    auto v = vote(id, preds);
    v.site_id = members.front()->site_id;
    v.label = members.front()->label;
    for (const auto* m : members)
      if (m->label != v.label) throw ContractError("subject " + id + " has slices with different labels");
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

int known_label(const std::optional<int>& label, const std::string& id) {
  if (!label) throw ContractError("subject " + id + " has no label");
  return *label;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

MetricsReport slice_report(const std::vector<SlicePrediction>& slices) {
  std::vector<int> preds, labels;
  std::vector<double> scores;
  for (const auto& s : slices) {
    preds.push_back(s.pred);
    labels.push_back(known_label(s.label, s.subject_id));
    scores.push_back(s.prob);
  }
  MetricsReport r;
  r.level = Level::slice;
  r.counts = confusion(preds, labels);
  r.metrics = basic_metrics(r.counts);
  if (r.counts.tp + r.counts.fn > 0 && r.counts.tn + r.counts.fp > 0) r.auc = auc_roc(scores, labels);
  return r;
}

MetricsReport scan_report(const std::vector<ScanVerdict>& scans) {
  std::vector<int> preds, labels;
  for (const auto& s : scans) {
    preds.push_back(s.verdict == Verdict::poor);
    labels.push_back(known_label(s.label, s.subject_id));
  }
  MetricsReport r;
  r.level = Level::scan;
  r.counts = confusion(preds, labels);
  r.metrics = basic_metrics(r.counts);
  return r;
}

EvaluationResult evaluate(const std::vector<Subject>& subjects, Parameters& params, const ModelConfig& config,
                          const EvalOptions& options) {
  if (subjects.empty()) throw ConfigError("evaluation cohort is empty");
  EvaluationResult result;
  bool labelled = true;
  for (const auto& s : subjects) {
    if (s.slices.empty()) throw ContractError("subject " + s.subject_id + " has no slices");
    std::vector<const std::vector<float>*> xs;
    for (const auto& sl : s.slices) xs.push_back(&sl.values);
    const auto probs = predict_probs(xs, params, config, options.batch);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      SlicePrediction p;
      p.subject_id = s.subject_id;
      p.site_id = s.site_id;
      p.slice_index = i < s.slice_indices.size() ? s.slice_indices[i] : i;
      p.prob = probs[i];
      p.pred = probs[i] >= options.threshold;
      p.label = s.label;
      result.slices.push_back(std::move(p));
    }
    labelled = labelled && s.label.has_value();
  }
  result.scans = majority_vote(result.slices);
  if (!labelled) return result;

  result.slice_metrics = slice_report(result.slices);
  result.scan_metrics = scan_report(result.scans);
  std::map<std::string, std::pair<std::vector<SlicePrediction>, std::vector<ScanVerdict>>> sites;
  for (const auto& p : result.slices)
    if (!p.site_id.empty()) sites[p.site_id].first.push_back(p);
  for (const auto& v : result.scans)
    if (!v.site_id.empty()) sites[v.site_id].second.push_back(v);
  for (const auto& [site, group] : sites) result.per_site[site] = {slice_report(group.first), scan_report(group.second)};
  return result;
}

void write_slice_dump(const std::vector<SlicePrediction>& slices, std::ostream& out) {
  out << "subject_id\tsite_id\tslice_index\tprob\tpred\tlabel\n";
  for (const auto& s : slices) {
    out << s.subject_id << '\t' << s.site_id << '\t' << s.slice_index << '\t' << fmt(s.prob) << '\t' << s.pred << '\t';
    if (s.label) out << *s.label;
    out << '\n';
  }
}

std::vector<SlicePrediction> read_slice_dump(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("subject_id\t", 0) != 0) throw ParseError("slice dump: missing header");
  std::vector<SlicePrediction> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() == 5 && line.back() == '\t') f.emplace_back();
    if (f.size() != 6) throw ParseError("slice dump line " + std::to_string(lineno) + ": expected 6 fields");
    SlicePrediction p;
    p.subject_id = f[0];
    p.site_id = f[1];
    try {
      p.slice_index = std::stoul(f[2]);
      p.prob = std::stof(f[3]);
      p.pred = std::stoi(f[4]);
      if (!f[5].empty()) p.label = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw ParseError("slice dump line " + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(std::move(p));
  }
  return out;
}

AblationTable ablation_run(const std::vector<Subject>& train, const std::vector<NamedCohort>& cohorts,
                           const std::vector<ModelConfig>& models, const TrainConfig& config,
                           const EvalOptions& options) {
  if (models.empty()) throw ConfigError("ablation needs at least one model configuration");
  if (cohorts.empty()) throw ConfigError("ablation needs at least one evaluation cohort");
  std::vector<std::vector<AblationRow>> per_model;
  for (const auto& model : models) {
    auto fitted = fit(train, model, config);
    std::vector<AblationRow> rows;
    for (const auto& cohort : cohorts) {
      if (!cohort.subjects) throw ContractError("ablation cohort " + cohort.name + " has no subjects");
      const auto r = evaluate(*cohort.subjects, fitted.params, model, options);
      if (!r.scan_metrics) throw ConfigError("ablation cohort " + cohort.name + " must be fully labelled");
      AblationRow row;
      row.cohort = cohort.name;
      row.preset = model.preset;
      row.param_count = count_params(model);
      row.scan_accuracy = r.scan_metrics->metrics.accuracy;
      row.scan_recall = r.scan_metrics->metrics.recall;
      row.slice_accuracy = r.slice_metrics->metrics.accuracy;
      row.slice_recall = r.slice_metrics->metrics.recall;
      rows.push_back(row);
    }
    per_model.push_back(std::move(rows));
  }
  AblationTable table;
  for (std::size_t c = 0; c < cohorts.size(); ++c)
    for (const auto& rows : per_model) table.rows.push_back(rows[c]);
  return table;
}

}  // namespace aqc
