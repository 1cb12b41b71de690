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

#include "aqc/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "aqc/error.hpp"

namespace aqc {

using nlohmann::json;

namespace {

// Reads the known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& into) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
    }
    try {
      into = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_parsed(const char* key, T& into, Parse parse) {
    std::string text;
    get(key, text);
    if (!text.empty()) into = parse(text);
  }

  // Keys handled elsewhere are still "known".
  void allow(const char* key) { known_.insert(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) throw ConfigError("unknown configuration key " + where(k.c_str()));
  }

 private:
  std::string where(const char* key) const { return "'" + name_ + "." + key + "'"; }

  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

}  // namespace

std::string_view filter_order_name(FilterOrder o) {
  return o == FilterOrder::filter_then_normalize ? "filter_then_normalize" : "normalize_then_filter";
}

FilterOrder parse_filter_order(std::string_view name) {
  if (name == "normalize_then_filter") return FilterOrder::normalize_then_filter;
  if (name == "filter_then_normalize") return FilterOrder::filter_then_normalize;
  throw ConfigError("unknown filter_order '" + std::string(name) +
                    "' (expected normalize_then_filter or filter_then_normalize)");
}

json to_json(const ModelConfig& c) {
  return {{"preset", preset_name(c.preset)},
          {"channels", c.block_channels},
          {"attention_hidden", c.attention_hidden},
          {"attention_heads", c.attention_heads},
          {"token_dim", c.token_dim},
          {"head_dims", c.head_dims},
          {"dropout", c.dropout_p},
          {"input_rows", c.input_rows},
          {"input_cols", c.input_cols},
          {"residual", c.residual}};
}

void apply_json(const json& j, ModelConfig& into) {
  Section s(j, "model");
  s.get_parsed("preset", into.preset, [](const std::string& t) { return parse_preset(t); });
  s.get("channels", into.block_channels);
  s.get("attention_hidden", into.attention_hidden);
  s.get("attention_heads", into.attention_heads);
  s.get("token_dim", into.token_dim);
  s.get("head_dims", into.head_dims);
  s.get("dropout", into.dropout_p);
  s.get("input_rows", into.input_rows);
  s.get("input_cols", into.input_cols);
  s.get("residual", into.residual);
  s.finish();
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"clip_norm", c.clip_norm},
          {"sched_factor", c.sched_factor},
          {"sched_patience", c.sched_patience},
          {"early_stop_patience", c.early_stop_patience},
          {"val_fraction", c.val_fraction},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

void apply_json(const json& j, TrainConfig& into) {
  Section s(j, "train");
  s.get("lr", into.lr);
  s.get("batch_size", into.batch_size);
  s.get("max_epochs", into.max_epochs);
  s.get("clip_norm", into.clip_norm);
  s.get("sched_factor", into.sched_factor);
  s.get("sched_patience", into.sched_patience);
  s.get("early_stop_patience", into.early_stop_patience);
  s.get("val_fraction", into.val_fraction);
  s.get("seed", into.seed);
  s.get("beta1", into.beta1);
  s.get("beta2", into.beta2);
  s.get("epsilon", into.epsilon);
  s.finish();
}

json to_json(const PreprocessOptions& c) {
  return {{"slice_count", c.slice_count},
          {"background_threshold", c.background_threshold},
          {"filter_order", filter_order_name(c.order)},
          {"rows", c.rows},
          {"cols", c.cols}};
}

void apply_json(const json& j, PreprocessOptions& into) {
  Section s(j, "preprocess");
  s.get("slice_count", into.slice_count);
  s.get("background_threshold", into.background_threshold);
  s.get_parsed("filter_order", into.order, [](const std::string& t) { return parse_filter_order(t); });
  s.get("rows", into.rows);
  s.get("cols", into.cols);
  s.finish();
}

json to_json(const CohortSpec& c) {
  return {{"train_subjects", c.train_subjects},
          {"seen_test_subjects", c.seen_test_subjects},
          {"unseen_test_subjects", c.unseen_test_subjects},
          {"seen_sites", c.seen_sites},
          {"unseen_sites", c.unseen_sites},
          {"corruption_ratio", c.corruption_ratio},
          {"min_severity", c.min_severity},
          {"max_severity", c.max_severity},
          {"seed", c.seed},
          {"matrix_override", c.matrix_override}};
}

void apply_json(const json& j, CohortSpec& into) {
  Section s(j, "generate");
  s.get("train_subjects", into.train_subjects);
  s.get("seen_test_subjects", into.seen_test_subjects);
  s.get("unseen_test_subjects", into.unseen_test_subjects);
  s.get("seen_sites", into.seen_sites);
  s.get("unseen_sites", into.unseen_sites);
  s.get("corruption_ratio", into.corruption_ratio);
  s.get("min_severity", into.min_severity);
  s.get("max_severity", into.max_severity);
  s.get("seed", into.seed);
  s.get("matrix_override", into.matrix_override);
  s.finish();
}

std::filesystem::path RunPaths::steps_path() const {
  if (!steps.empty()) return steps;
  auto p = history;
  p.replace_extension(".steps.tsv");
  return p;
}

void RunConfig::finalize() {
  train.seed = seed;
  generate.seed = seed;
  model.input_rows = preprocess.rows;
  model.input_cols = preprocess.cols;
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (!(eval.threshold > 0.0f && eval.threshold <= 1.0f)) throw ConfigError("eval.threshold must be in (0, 1]");
  if (eval.batch == 0) throw ConfigError("eval.batch must be positive");
  if (preprocess.slice_count == 0) throw ConfigError("preprocess.slice_count must be positive");
  if (!(preprocess.background_threshold >= 0.0)) throw ConfigError("preprocess.background_threshold must be >= 0");
  model.validate();
  train.validate();
}

json to_json(const RunConfig& c) {
  json train = to_json(c.train), generate = to_json(c.generate);
  train.erase("seed");
  generate.erase("seed");
  return {{"model", to_json(c.model)},
          {"train", train},
          {"preprocess", to_json(c.preprocess)},
          {"eval", {{"threshold", c.eval.threshold}, {"batch", c.eval.batch}}},
          {"generate", generate},
          {"paths",
           {{"data_dir", c.paths.data_dir.string()},
            {"manifest", c.paths.manifest.string()},
            {"checkpoint", c.paths.checkpoint.string()},
            {"history", c.paths.history.string()},
            {"report", c.paths.report.string()},
            {"slice_dump", c.paths.slice_dump.string()},
            {"records", c.paths.records.string()},
            {"steps", c.paths.steps.string()}}},
          {"seed", c.seed},
          {"threads", c.threads}};
}

void apply_json(const json& j, RunConfig& into) {
  Section top(j, "config");
  for (const char* section : {"train", "generate"})
    if (j.contains(section) && j.at(section).is_object() && j.at(section).contains("seed"))
      throw ConfigError(std::string("'") + section + ".seed' is not configurable; set the top-level 'seed'");
  top.allow("model");
  top.allow("train");
  top.allow("preprocess");
  top.allow("eval");
  top.allow("generate");
  top.allow("paths");
  top.get("seed", into.seed);
  top.get("threads", into.threads);
  top.finish();
  if (j.contains("model")) apply_json(j.at("model"), into.model);
  if (j.contains("train")) apply_json(j.at("train"), into.train);
  if (j.contains("preprocess")) apply_json(j.at("preprocess"), into.preprocess);
  if (j.contains("generate")) apply_json(j.at("generate"), into.generate);
  if (j.contains("eval")) {
    Section s(j.at("eval"), "eval");
    s.get("threshold", into.eval.threshold);
    s.get("batch", into.eval.batch);
    s.finish();
  }
  if (j.contains("paths")) {
    Section s(j.at("paths"), "paths");
    auto path = [&](const char* key, std::filesystem::path& p) {
      std::string text = p.string();
      s.get(key, text);
      p = text;
    };
    path("data_dir", into.paths.data_dir);
    path("manifest", into.paths.manifest);
    path("checkpoint", into.paths.checkpoint);
    path("history", into.paths.history);
    path("report", into.paths.report);
    path("slice_dump", into.paths.slice_dump);
    path("records", into.paths.records);
    path("steps", into.paths.steps);
    s.finish();
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c;
  try {
    apply_json(j, c);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace aqc
