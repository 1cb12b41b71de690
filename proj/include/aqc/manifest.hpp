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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aqc {

enum class Split { train, val, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view token);

/// One labelled (or unlabelled) scan. Label 0 is clean, 1 is
/// motion-corrupted; an empty label field means prediction-only.
struct ManifestEntry {
  std::string subject_id;
  std::filesystem::path path;
  std::optional<int> label;
  std::string site_id;
  Split split = Split::train;
  /// Optional sixth column; defaults to the volume's third axis.
  std::optional<std::size_t> axial_axis;
};

/// Parses `subject_id,path,label,site_id,split[,axial_axis]` records, one
/// per line. Lines starting with '#' and blank lines are skipped. Relative
/// paths resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// Writes entries in the same format. Paths under the manifest's directory
/// are written relative to it.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split);

}  // namespace aqc
