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

#include <algorithm>
#include <sstream>

#include "aqc/checkpoint.hpp"
#include "aqc/commands.hpp"
#include "aqc/manifest.hpp"
#include "temp_dir.hpp"

namespace aqc {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun aqc(std::vector<std::string> args) {
  args.insert(args.begin(), "aqc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small volumes and 32x32 model input keep every command under a few
// seconds.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    testing::write_text(dir / "small.json", R"({
      "model": {"channels": [4, 8, 16], "attention_hidden": 16, "token_dim": 8, "head_dims": [16, 8, 1]},
      "train": {"max_epochs": 2, "batch_size": 16},
      "preprocess": {"rows": 32, "cols": 32, "slice_count": 10},
      "generate": {"matrix_override": [40, 36, 32]}
    })");
  }
  std::string cfg() const { return (dir / "small.json").string(); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  CliRun generate(const std::string& out, std::uint64_t seed = 4) {
    return aqc({"--config", cfg(), "--seed", std::to_string(seed), "generate", "--out", p(out), "--subjects", "6",
                "--seen-test", "2", "--unseen-test", "2"});
  }
  CliRun train(std::vector<std::string> extra) {
    std::vector<std::string> args = {"--config", cfg(), "train", "--manifest", p("d/train.csv")};
    args.insert(args.end(), extra.begin(), extra.end());
    if (std::find(extra.begin(), extra.end(), "--history") == extra.end())
      args.insert(args.end(), {"--history", p("history.tsv")});
    if (std::find(extra.begin(), extra.end(), "--checkpoint") == extra.end())
      args.insert(args.end(), {"--checkpoint", p("model.aqc")});
    return aqc(args);
  }

  TempDir dir{"aqc_cli"};
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(aqc({"--help"}).code, 0);
  EXPECT_EQ(aqc({"--version"}).code, 0);
  EXPECT_EQ(aqc({}).code, 1);
  EXPECT_EQ(aqc({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(aqc({"train", "--epochs", "many"}).code, 1);
}

TEST_F(Cli, GenerateIsReproducible) {
  const auto r = generate("d");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("manifest"), std::string::npos);
  EXPECT_EQ(load_manifest(dir / "d/manifest.csv").size(), 10u);
  EXPECT_EQ(load_manifest(dir / "d/train.csv").size(), 6u);

  std::map<std::string, std::vector<unsigned char>> first;
  for (const auto& e : fs::recursive_directory_iterator(dir / "d"))
    if (e.is_regular_file()) first[fs::relative(e.path(), dir / "d").string()] = testing::read_bytes(e.path());
  ASSERT_EQ(generate("d").code, 0);
  for (const auto& [rel, bytes] : first) EXPECT_EQ(testing::read_bytes(dir / "d" / rel), bytes) << rel;

  ASSERT_EQ(generate("other", 5).code, 0);
  EXPECT_NE(testing::read_bytes(dir / "other/volumes/train-000.nii.gz"), first["volumes/train-000.nii.gz"]);
}

TEST_F(Cli, GenerateIntoUnwritablePathFails) {
  testing::write_text(dir / "file", "x");
  const auto r = aqc({"--config", cfg(), "generate", "--out", p("file/sub")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, ConfigFileErrorsAreReported) {
  testing::write_text(dir / "bad.json", R"({"train": {"learnin_rate": 1}})");
  const auto r = aqc({"--config", p("bad.json"), "generate", "--out", p("d")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learnin_rate"), std::string::npos);
  EXPECT_EQ(aqc({"--config", p("absent.json"), "generate"}).code, 1);
}

TEST_F(Cli, TrainWritesCheckpointHistoryAndSteps) {
  ASSERT_EQ(generate("d").code, 0);
  const auto r = train({"--checkpoint", p("m.aqc"), "--history", p("h.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 2"), std::string::npos);
  const std::string history = testing::read_text(dir / "h.tsv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch\ttrain_loss\tval_loss\tval_accuracy\tlr");
  EXPECT_NE(history.find("# best_epoch"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "h.steps.tsv"));
  const auto ck = load_checkpoint(dir / "m.aqc");
  EXPECT_EQ(ck.model.input_rows, 32u);
  EXPECT_EQ(ck.metadata.at("stop_reason"), "max_epochs");
  EXPECT_EQ(ck.params.entries.size(), param_specs(ck.model).size());
}

TEST_F(Cli, FlagsOverrideTheConfigFile) {
  ASSERT_EQ(generate("d").code, 0);
  testing::write_text(dir / "lr.json", R"({
      "model": {"channels": [4, 8, 16], "attention_hidden": 16, "token_dim": 8, "head_dims": [16, 8, 1]},
      "train": {"max_epochs": 1, "lr": 0.0025},
      "preprocess": {"rows": 32, "cols": 32, "slice_count": 10}
    })");
  auto lr_of = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"--config", p("lr.json"), "train", "--manifest", p("d/train.csv"),
                                     "--checkpoint", p("m.aqc"), "--history", p("h.tsv")};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(aqc(args).code, 0);
    std::istringstream in(testing::read_text(dir / "h.tsv"));
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    return line.substr(line.rfind('\t') + 1);
  };
  EXPECT_EQ(lr_of({}), "0.0025");
  EXPECT_EQ(lr_of({"--lr", "0.004"}), "0.004");
}

TEST_F(Cli, PresetsProduceDifferentParameterTables) {
  ASSERT_EQ(generate("d").code, 0);
  ASSERT_EQ(train({"--epochs", "1", "--checkpoint", p("a.aqc"), "--preset", "cnn-only"}).code, 0);
  ASSERT_EQ(train({"--epochs", "1", "--checkpoint", p("b.aqc")}).code, 0);
  const auto a = load_checkpoint(dir / "a.aqc");
  const auto b = load_checkpoint(dir / "b.aqc");
  EXPECT_EQ(a.model.preset, Preset::cnn_only);
  EXPECT_EQ(b.model.preset, Preset::channel);
  EXPECT_LT(a.params.total_numel(), b.params.total_numel());
  std::vector<std::string> names_a, names_b;
  for (const auto& e : a.params.entries) names_a.push_back(e.name);
  for (const auto& e : b.params.entries) names_b.push_back(e.name);
  EXPECT_NE(names_a, names_b);
}

TEST_F(Cli, EvalReportsEachCohortAndWritesRecords) {
  ASSERT_EQ(generate("d").code, 0);
  ASSERT_EQ(train({"--checkpoint", p("m.aqc")}).code, 0);
  const auto r = aqc({"--config", cfg(), "eval", "--checkpoint", p("m.aqc"), "--seen", p("d/seen_test.csv"),
                      "--unseen", p("d/unseen_test.csv"), "--records", p("r.tsv"), "--slice-dump", p("s.tsv"),
                      "--report", p("report.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"seen_test", "unseen_test", "Accuracy", "AUC-ROC", "check seen-site"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  EXPECT_EQ(testing::read_text(dir / "report.txt"), r.out);
  std::ifstream dump(dir / "s.tsv");
  EXPECT_EQ(read_slice_dump(dump).size(), 40u);  // 4 subjects x 10 slices
  EXPECT_NE(testing::read_text(dir / "r.tsv").find("unseen_test\t*\tscan"), std::string::npos);
}

TEST_F(Cli, EvalWithoutLabelsPrintsPredictionsOnly) {
  ASSERT_EQ(generate("d").code, 0);
  ASSERT_EQ(train({"--checkpoint", p("m.aqc")}).code, 0);
  auto entries = load_manifest(dir / "d/seen_test.csv");
  for (auto& e : entries) e.label.reset();
  write_manifest(entries, dir / "unlabelled.csv");
  const auto r = aqc({"--config", cfg(), "eval", "--checkpoint", p("m.aqc"), "--manifest", p("unlabelled.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.find("Accuracy"), std::string::npos);
  EXPECT_NE(r.out.find("Scans: unlabelled"), std::string::npos);
  EXPECT_NE(r.out.find("seen-000"), std::string::npos);
}

TEST_F(Cli, EvalRejectsAMismatchedModel) {
  ASSERT_EQ(generate("d").code, 0);
  ASSERT_EQ(train({"--epochs", "1", "--checkpoint", p("m.aqc")}).code, 0);
  const auto r = aqc({"--config", cfg(), "eval", "--checkpoint", p("m.aqc"), "--seen", p("d/seen_test.csv"),
                      "--preset", "token"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("preset"), std::string::npos) << r.err;
}

TEST_F(Cli, PredictExitCodes) {
  ASSERT_EQ(generate("d").code, 0);
  ASSERT_EQ(train({"--epochs", "1", "--checkpoint", p("m.aqc")}).code, 0);
  const auto ok = aqc({"--config", cfg(), "predict", "--checkpoint", p("m.aqc"), p("d/volumes/seen-000.nii.gz"),
                       "--slices", "--record", p("pred.tsv")});
  EXPECT_TRUE(ok.code == 0 || ok.code == 2) << ok.err;
  EXPECT_NE(ok.out.find(ok.code == 0 ? "verdict good" : "verdict poor"), std::string::npos);
  EXPECT_NE(ok.out.find("slice_index\tprob\tpred"), std::string::npos);
  std::ifstream rec(dir / "pred.tsv");
  EXPECT_EQ(read_slice_dump(rec).size(), 10u);

  const auto missing = aqc({"predict", "--checkpoint", p("m.aqc"), p("nope.nii.gz")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("nope.nii.gz"), std::string::npos);
  EXPECT_EQ(aqc({"predict", "--checkpoint", p("absent.aqc"), p("d/volumes/seen-000.nii.gz")}).code, 1);
}

TEST_F(Cli, AblateListsEveryPreset) {
  ASSERT_EQ(generate("d").code, 0);
  const auto r = aqc({"--config", cfg(), "ablate", "--manifest", p("d/train.csv"), "--seen", p("d/seen_test.csv"),
                      "--unseen", p("d/unseen_test.csv"), "--epochs", "1", "--records", p("ab.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* s : {"CNN + attention", "CNN + classification head", "CNN + attention + classification head"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  const std::string rec = testing::read_text(dir / "ab.tsv");
  EXPECT_EQ(std::count(rec.begin(), rec.end(), '\n'), 7);  // header + 3 presets x 2 cohorts
  EXPECT_EQ(aqc({"--config", cfg(), "ablate", "--manifest", p("d/train.csv"), "--presets", "nonsense", "--seen",
                 p("d/seen_test.csv")})
                .code,
            1);
}

}  // namespace
}  // namespace aqc
