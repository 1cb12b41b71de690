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

#include <optional>
#include <string>
#include <vector>

#include "aqc/manifest.hpp"
#include "aqc/preprocess.hpp"

namespace aqc {

/// A preprocessed scan ready for the network.
struct Subject {
  std::string subject_id;
  std::string site_id;
  std::optional<int> label;
  std::vector<Slice2D> slices;
  std::vector<std::size_t> slice_indices;
  bool short_volume = false;
};

/// Loads and preprocesses one manifest entry. The entry's axial axis, when
/// given, overrides the volume default.
Subject load_subject(const ManifestEntry& entry, const PreprocessOptions& options = {});

std::vector<Subject> load_subjects(const std::vector<ManifestEntry>& entries, const PreprocessOptions& options = {});

/// Total slice count over subjects.
std::size_t slice_count(const std::vector<Subject>& subjects);

}  // namespace aqc
