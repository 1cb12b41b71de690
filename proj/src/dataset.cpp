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

#include "aqc/dataset.hpp"

#include "aqc/error.hpp"
#include "aqc/nifti.hpp"

namespace aqc {

Subject load_subject(const ManifestEntry& entry, const PreprocessOptions& options) {
  Volume vol = load_nifti(entry.path);
  if (entry.axial_axis) vol.axial_axis = *entry.axial_axis;
  vol.subject_id = entry.subject_id;
  vol.site_id = entry.site_id;
  SliceStack stack;
  try {
    stack = preprocess_volume(vol, options);
  } catch (const EmptyStackError& e) {
    throw EmptyStackError("subject " + entry.subject_id + " (" + entry.path.string() + "): " + e.what());
  }
  Subject s;
  s.subject_id = entry.subject_id;
  s.site_id = entry.site_id;
  s.label = entry.label;
  s.slices = std::move(stack.slices);
  s.slice_indices = std::move(stack.kept_indices);
  s.short_volume = stack.short_volume;
  return s;
}

std::vector<Subject> load_subjects(const std::vector<ManifestEntry>& entries, const PreprocessOptions& options) {
  std::vector<Subject> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_subject(e, options));
  return out;
}

std::size_t slice_count(const std::vector<Subject>& subjects) {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.slices.size();
  return n;
}

}  // namespace aqc
