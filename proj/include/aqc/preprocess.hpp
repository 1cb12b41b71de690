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
#include <optional>
#include <string>
#include <vector>

#include "aqc/nifti.hpp"

namespace aqc {

/// Row-major 2D image.
struct Slice2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  Slice2D() = default;
  Slice2D(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), values(r * c, fill) {}
  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double mean() const;
};

inline constexpr std::size_t kSliceRows = 192;
inline constexpr std::size_t kSliceCols = 256;

enum class FilterOrder {
  /// Background test on the min-max normalised slice (unit-free threshold).
  normalize_then_filter,
  /// Background test on raw intensities, then normalise.
  filter_then_normalize,
};

struct PreprocessOptions {
  std::size_t slice_count = 50;
  double background_threshold = 0.01;
  FilterOrder order = FilterOrder::normalize_then_filter;
  std::size_t rows = kSliceRows;
  std::size_t cols = kSliceCols;
};

struct SliceWindow {
  std::size_t first = 0;
  std::size_t count = 0;
  /// True when the volume had fewer slices than requested.
  bool short_volume = false;
};

/// Indices [floor((Z-n)/2), floor((Z-n)/2) + n) when Z >= n, else all Z.
SliceWindow middle_window(std::size_t depth, std::size_t n);

/// The 2D plane at `index` along `axis`. For the default axial axis (z) the
/// slice has rows = ny and cols = nx.
Slice2D extract_slice(const Volume& vol, std::size_t axis, std::size_t index);

struct IndexedSlices {
  std::vector<Slice2D> slices;
  std::vector<std::size_t> indices;
  bool short_volume = false;
};

IndexedSlices extract_middle_slices(const Volume& vol, std::size_t n = 50);

/// (x - min) / (max - min); a constant slice maps to all zeros.
Slice2D normalize_slice(const Slice2D& slice);

/// Keeps slices whose mean is >= threshold. Throws EmptyStackError when
/// nothing survives.
IndexedSlices filter_background(IndexedSlices input, double threshold = 0.01);

/// Bilinear value at fractional (row, col), clamped to the grid.
float sample_bilinear(const Slice2D& slice, double row, double col);

/// Corner-aligned bilinear resize. Same-size input is copied unchanged.
Slice2D resize_slice(const Slice2D& slice, std::size_t rows = kSliceRows, std::size_t cols = kSliceCols);

struct SliceStack {
  std::string subject_id;
  std::optional<int> label;
  std::vector<Slice2D> slices;
  std::vector<std::size_t> kept_indices;
  bool short_volume = false;
};

/// Middle-window extraction, resize to the model grid, per-slice min-max
/// normalisation and background filtering. Resizing happens before
/// normalisation so every output slice spans exactly [0, 1] and the
/// pipeline is idempotent on its own output.
SliceStack preprocess_volume(const Volume& vol, const PreprocessOptions& options = {});

/// Packs a stack back into a volume (rows -> y, cols -> x, slices -> z).
Volume stack_to_volume(const SliceStack& stack);

}  // namespace aqc
