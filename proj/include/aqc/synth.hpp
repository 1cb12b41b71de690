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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aqc/dataset.hpp"
#include "aqc/manifest.hpp"
#include "aqc/nifti.hpp"

namespace aqc {

/// Acquisition-site effects applied to a phantom.
struct SiteProfile {
  std::string site_id;
  double intensity_scale = 1.0;
  /// Amplitude of the low-order polynomial multiplicative field.
  double bias_field_strength = 0.0;
  /// Gaussian noise std as a fraction of the brightest tissue intensity.
  double noise_sigma = 0.0;
  std::array<std::size_t, 3> matrix_size{96, 72, 60};

  void validate() const;
};

/// Fixed profiles for the training ("seen") site family and a disjoint
/// family with stronger bias, more noise and other matrix sizes.
std::vector<SiteProfile> seen_site_profiles(std::size_t count);
std::vector<SiteProfile> unseen_site_profiles(std::size_t count);

struct CorruptionParams {
  double severity = 1.0;
  std::size_t ghost_count = 2;
  /// In-plane (dx, dy) displacements; drawn from the seed when empty.
  std::vector<std::array<int, 2>> ghost_offsets;
  std::size_t blur_extent = 3;
};

/// Nested-ellipsoid head with skull, textured brain and ventricles; shape
/// and texture are jittered per seed. Site effects come last.
Volume make_phantom(std::uint64_t seed, const SiteProfile& site);

/// Per axial slice: I' = (1-a) I + (a/K) sum_k shift(I, d_k) with
/// a = 0.6 * severity, then a box blur along y of radius
/// ceil(blur_extent * severity). Shifts and blur wrap around, so the slice
/// mean is preserved. Severity 0 returns the input unchanged.
Volume corrupt_motion(const Volume& vol, const CorruptionParams& params, std::uint64_t seed);

/// Mean forward-difference gradient magnitude.
double mean_gradient_magnitude(const Slice2D& slice);

/// Best scan accuracy of a non-learned rule that flags a slice when its mean
/// gradient magnitude falls below a threshold, swept over all thresholds,
/// with majority voting per subject.
double gradient_oracle_scan_accuracy(const std::vector<Subject>& subjects);

struct CohortSpec {
  std::size_t train_subjects = 8;
  std::size_t seen_test_subjects = 0;
  std::size_t unseen_test_subjects = 0;
  std::size_t seen_sites = 2;
  std::size_t unseen_sites = 2;
  double corruption_ratio = 0.5;
  double min_severity = 0.7;
  double max_severity = 1.0;
  std::uint64_t seed = 0;
  /// Overrides the matrix size of every profile when set (all nonzero).
  std::array<std::size_t, 3> matrix_override{0, 0, 0};
};

struct DatasetSummary {
  std::filesystem::path manifest;  ///< every subject
  std::filesystem::path train_manifest;
  std::filesystem::path seen_test_manifest;    ///< empty when not generated
  std::filesystem::path unseen_test_manifest;  ///< empty when not generated
  std::vector<ManifestEntry> entries;
};

/// Writes volumes/<subject>.nii.gz plus manifest.csv, train.csv and, when
/// requested, seen_test.csv / unseen_test.csv under `out_dir`. Each cohort
/// has round(corruption_ratio * n) corrupted subjects. Seen cohorts use the
/// seen site family, the unseen cohort the disjoint family.
DatasetSummary build_dataset(const CohortSpec& spec, const std::filesystem::path& out_dir);

}  // namespace aqc
