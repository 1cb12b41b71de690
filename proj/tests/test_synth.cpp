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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "aqc/error.hpp"
#include "aqc/preprocess.hpp"
#include "aqc/synth.hpp"

namespace aqc {
namespace {

namespace fs = std::filesystem;

SiteProfile test_site() { return seen_site_profiles(1).front(); }

double stack_gradient(const Volume& vol) {
  const auto stack = preprocess_volume(vol);
  double s = 0.0;
  for (const auto& sl : stack.slices) s += mean_gradient_magnitude(sl);
  return s / static_cast<double>(stack.slices.size());
}

double raw_slice_mean(const Volume& v, std::size_t z) {
  double s = 0.0;
  for (std::size_t y = 0; y < v.ny(); ++y)
    for (std::size_t x = 0; x < v.nx(); ++x) s += v.at(x, y, z);
  return s / static_cast<double>(v.nx() * v.ny());
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("aqc_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Phantom, DeterministicInSeedAndSite) {
  const auto a = make_phantom(3, test_site());
  const auto b = make_phantom(3, test_site());
  EXPECT_EQ(a.extents, b.extents);
  EXPECT_EQ(a.voxels, b.voxels);
  EXPECT_NE(make_phantom(4, test_site()).voxels, a.voxels);
}

TEST(Phantom, IntensityScaleIsNormalisedAway) {
  SiteProfile a = test_site(), b = test_site();
  b.intensity_scale = a.intensity_scale * 7.5;
  b.site_id = "scaled";
  const auto sa = preprocess_volume(make_phantom(11, a));
  const auto sb = preprocess_volume(make_phantom(11, b));
  ASSERT_EQ(sa.kept_indices, sb.kept_indices);
  double worst = 0.0;
  for (std::size_t i = 0; i < sa.slices.size(); ++i)
    for (std::size_t j = 0; j < sa.slices[i].values.size(); ++j)
      worst = std::max(worst, static_cast<double>(std::abs(sa.slices[i].values[j] - sb.slices[i].values[j])));
  EXPECT_LE(worst, 1e-6);
}

TEST(Phantom, MiddleSlicesPassBackgroundFilter) {
  for (const auto& site : {seen_site_profiles(2)[0], seen_site_profiles(2)[1], unseen_site_profiles(2)[0],
                           unseen_site_profiles(2)[1]}) {
    const auto vol = make_phantom(21, site);
    const auto window = middle_window(vol.nz(), 50);
    const auto stack = preprocess_volume(vol);
    EXPECT_EQ(stack.slices.size(), 50u) << site.site_id;
    for (std::size_t i = 0; i < stack.kept_indices.size(); ++i)
      EXPECT_EQ(stack.kept_indices[i], window.first + i) << site.site_id;
    for (const auto& sl : stack.slices) EXPECT_GT(sl.mean(), 0.05) << site.site_id;
  }
}

TEST(Phantom, RejectsTinyMatrix) {
  SiteProfile s = test_site();
  s.matrix_size = {31, 64, 64};
  EXPECT_THROW(make_phantom(1, s), ParameterError);
}

TEST(Corruption, SeverityZeroIsIdentity) {
  const auto vol = make_phantom(5, test_site());
  CorruptionParams p;
  p.severity = 0.0;
  EXPECT_EQ(corrupt_motion(vol, p, 9).voxels, vol.voxels);
}

TEST(Corruption, SeverityOutsideUnitIntervalIsParameterError) {
  const auto vol = make_phantom(5, test_site());
  CorruptionParams p;
  p.severity = 1.5;
  EXPECT_THROW(corrupt_motion(vol, p, 1), ParameterError);
  p.severity = -0.1;
  EXPECT_THROW(corrupt_motion(vol, p, 1), ParameterError);
}

TEST(Corruption, SharpEdgeLosesGradient) {
  Volume v(64, 64, 4);
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 20; y < 44; ++y)
      for (std::size_t x = 20; x < 44; ++x) v.at(x, y, z) = 1.0f;
  CorruptionParams p;
  p.severity = 1.0;
  const auto c = corrupt_motion(v, p, 2);
  EXPECT_LT(mean_gradient_magnitude(extract_slice(c, 2, 1)), mean_gradient_magnitude(extract_slice(v, 2, 1)));
}

TEST(Corruption, PreservesSliceMean) {
  const auto vol = make_phantom(8, test_site());
  CorruptionParams p;
  p.severity = 1.0;
  const auto c = corrupt_motion(vol, p, 3);
  for (std::size_t z = vol.nz() / 4; z < 3 * vol.nz() / 4; ++z) {
    const double before = raw_slice_mean(vol, z), after = raw_slice_mean(c, z);
    EXPECT_NEAR(after, before, 0.02 * std::abs(before)) << "z " << z;
  }
}

TEST(Corruption, GradientStrictlyDecreasesWithSeverity) {
  const auto vol = make_phantom(13, test_site());
  double prev = stack_gradient(vol);
  for (double sev : {0.25, 0.5, 0.75, 1.0}) {
    CorruptionParams p;
    p.severity = sev;
    const double g = stack_gradient(corrupt_motion(vol, p, 77));
    EXPECT_LT(g, prev) << "severity " << sev;
    prev = g;
  }
}

TEST(Corruption, ExplicitOffsetsAreUsed) {
  const auto vol = make_phantom(8, test_site());
  CorruptionParams a, b;
  a.ghost_offsets = {{0, 10}, {0, -14}};
  b.ghost_offsets = a.ghost_offsets;
  EXPECT_EQ(corrupt_motion(vol, a, 1).voxels, corrupt_motion(vol, b, 2).voxels);
}

TEST(Oracle, AllBelowAndAllAboveThreshold) {
  Subject sharp, soft;
  sharp.subject_id = "sharp";
  sharp.label = 0;
  soft.subject_id = "soft";
  soft.label = 1;
  for (int k = 0; k < 3; ++k) {
    Slice2D a(4, 4), b(4, 4);
    for (std::size_t i = 0; i < 16; i += 2) a.values[i] = 1.0f;
    sharp.slices.push_back(a);
    soft.slices.push_back(b);
  }
  EXPECT_EQ(gradient_oracle_scan_accuracy({sharp, soft}), 1.0);
}

class CohortTest : public ::testing::Test {
 protected:
  static CohortSpec spec() {
    CohortSpec s;
    s.train_subjects = 8;
    s.unseen_test_subjects = 4;
    s.seed = 31;
    return s;
  }
};

TEST_F(CohortTest, BalancedLabelsAndDisjointSites) {
  const auto dir = scratch("labels");
  const auto summary = build_dataset(spec(), dir);
  const auto train = load_manifest(summary.train_manifest);
  ASSERT_EQ(train.size(), 8u);
  EXPECT_EQ(std::count_if(train.begin(), train.end(), [](const auto& e) { return e.label == 1; }), 4);
  EXPECT_EQ(std::count_if(train.begin(), train.end(), [](const auto& e) { return e.label == 0; }), 4);
  std::set<std::string> train_sites;
  for (const auto& e : train) train_sites.insert(e.site_id);
  const auto unseen = load_manifest(summary.unseen_test_manifest);
  ASSERT_EQ(unseen.size(), 4u);
  for (const auto& e : unseen) EXPECT_EQ(train_sites.count(e.site_id), 0u) << e.site_id;
  EXPECT_TRUE(summary.seen_test_manifest.empty());
  EXPECT_EQ(load_manifest(summary.manifest).size(), 12u);
  fs::remove_all(dir);
}

TEST_F(CohortTest, RegenerationIsBitwiseIdentical) {
  auto s = spec();
  s.unseen_test_subjects = 0;
  s.train_subjects = 3;
  const auto a = build_dataset(s, scratch("regen_a"));
  const auto b = build_dataset(s, scratch("regen_b"));
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto ba = read_bytes(a.entries[i].path);
    ASSERT_FALSE(ba.empty());
    EXPECT_EQ(ba, read_bytes(b.entries[i].path)) << a.entries[i].subject_id;
  }
  EXPECT_EQ(read_bytes(a.train_manifest), read_bytes(b.train_manifest));
  fs::remove_all(a.manifest.parent_path());
  fs::remove_all(b.manifest.parent_path());
}

TEST_F(CohortTest, OracleSeparatesGeneratedScans) {
  auto s = spec();
  const auto dir = scratch("oracle");
  const auto summary = build_dataset(s, dir);
  const auto subjects = load_subjects(summary.entries);
  EXPECT_GE(gradient_oracle_scan_accuracy(subjects), 0.9);
  fs::remove_all(dir);
}

TEST_F(CohortTest, UnwritableDirectoryNamesPath) {
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "file";
  try {
    build_dataset(spec(), blocker / "sub");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos) << e.what();
  }
  fs::remove_all(blocker);
}

}  // namespace
}  // namespace aqc
