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

#include "aqc/config.hpp"
#include "aqc/error.hpp"
#include "temp_dir.hpp"

namespace aqc {
namespace {

using nlohmann::json;
using testing::TempDir;

TEST(Config, DefaultsRoundTrip) {
  RunConfig a;
  RunConfig b;
  apply_json(to_json(a), b);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.train, b.train);
}

TEST(Config, NonDefaultValuesRoundTrip) {
  RunConfig a;
  a.model = reduced_config(Preset::token, 32, 48);
  a.model.attention_heads = 2;
  a.train.lr = 3e-4;
  a.train.max_epochs = 7;
  a.preprocess.order = FilterOrder::filter_then_normalize;
  a.preprocess.rows = 32;
  a.preprocess.cols = 48;
  a.eval.threshold = 0.25f;
  a.generate.matrix_override = {32, 40, 60};
  a.paths.manifest = "x/train.csv";
  a.seed = 123;
  a.threads = 2;
  RunConfig b;
  apply_json(to_json(a), b);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(b.model, a.model);
  EXPECT_EQ(b.generate.matrix_override, a.generate.matrix_override);
  EXPECT_EQ(b.eval.threshold, 0.25f);
}

TEST(Config, UnknownKeysAreRejectedWithTheirName) {
  RunConfig c;
  for (const char* text : {R"({"modle": {}})", R"({"model": {"chanels": [4]}})", R"({"train": {"learning_rate": 1}})",
                           R"({"eval": {"thresh": 0.5}})", R"({"paths": {"ckpt": "a"}})"}) {
    try {
      apply_json(json::parse(text), c);
      ADD_FAILURE() << "accepted " << text;
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      const auto key = json::parse(text).begin();
      const std::string inner = key->is_object() && !key->empty() ? key->begin().key() : key.key();
      EXPECT_NE(msg.find(inner), std::string::npos) << msg;
    }
  }
}

TEST(Config, WrongTypesAndNegativeCountsAreRejected) {
  RunConfig c;
  EXPECT_THROW(apply_json(json::parse(R"({"train": {"lr": "fast"}})"), c), ConfigError);
  EXPECT_THROW(apply_json(json::parse(R"({"train": {"batch_size": -4}})"), c), ConfigError);
  EXPECT_THROW(apply_json(json::parse(R"({"model": {"preset": "transformer"}})"), c), ConfigError);
  EXPECT_THROW(apply_json(json::parse(R"({"preprocess": {"filter_order": "sideways"}})"), c), ConfigError);
  EXPECT_THROW(apply_json(json::parse(R"([1, 2])"), c), ConfigError);
}

TEST(Config, SeedIsSharedNotPerSection) {
  RunConfig c;
  EXPECT_THROW(apply_json(json::parse(R"({"train": {"seed": 4}})"), c), ConfigError);
  EXPECT_THROW(apply_json(json::parse(R"({"generate": {"seed": 4}})"), c), ConfigError);
  apply_json(json::parse(R"({"seed": 9})"), c);
  c.finalize();
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.generate.seed, 9u);
}

TEST(Config, FinalizeCopiesSliceSizeAndValidates) {
  RunConfig c;
  c.model = reduced_config(Preset::channel);
  c.preprocess.rows = 40;
  c.preprocess.cols = 24;
  c.finalize();
  EXPECT_EQ(c.model.input_rows, 40u);
  EXPECT_EQ(c.model.input_cols, 24u);

  RunConfig bad;
  bad.eval.threshold = 0.0f;
  EXPECT_THROW(bad.finalize(), ConfigError);
  RunConfig zero_threads;
  zero_threads.threads = 0;
  EXPECT_THROW(zero_threads.finalize(), ConfigError);
  RunConfig bad_train;
  bad_train.train.lr = -1;
  EXPECT_THROW(bad_train.finalize(), ConfigError);
}

TEST(Config, FilterOrderNames) {
  for (FilterOrder o : {FilterOrder::normalize_then_filter, FilterOrder::filter_then_normalize})
    EXPECT_EQ(parse_filter_order(filter_order_name(o)), o);
  EXPECT_THROW(parse_filter_order("normalise"), ConfigError);
}

TEST(Config, StepsPathDerivesFromHistory) {
  RunPaths p;
  p.history = "out/run.tsv";
  EXPECT_EQ(p.steps_path(), std::filesystem::path("out/run.steps.tsv"));
  p.steps = "custom.tsv";
  EXPECT_EQ(p.steps_path(), std::filesystem::path("custom.tsv"));
}

TEST(Config, LoadReportsThePath) {
  TempDir dir;
  try {
    load_run_config(dir / "missing.json");
    ADD_FAILURE();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
  testing::write_text(dir / "broken.json", "{ not json");
  try {
    load_run_config(dir / "broken.json");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
  }
  testing::write_text(dir / "ok.json", R"({"train": {"lr": 0.01}, "seed": 5})");
  const auto c = load_run_config(dir / "ok.json");
  EXPECT_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.seed, 5u);
}

}  // namespace
}  // namespace aqc
