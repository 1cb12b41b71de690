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

#include "aqc/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "aqc/error.hpp"

namespace aqc {

double Slice2D::mean() const {
  double acc = 0.0;
  for (float v : values) acc += v;
  return values.empty() ? 0.0 : acc / static_cast<double>(values.size());
}

SliceWindow middle_window(std::size_t depth, std::size_t n) {
  if (n == 0) throw ParameterError("slice count must be at least 1");
  if (depth < n) return {0, depth, true};
  return {(depth - n) / 2, n, false};
}

Slice2D extract_slice(const Volume& vol, std::size_t axis, std::size_t index) {
  if (axis > 2) throw ParameterError("axial axis must be 0, 1 or 2");
  if (index >= vol.extents[axis]) throw ParameterError("slice index out of range");
  // In-plane axes in storage order: the faster one becomes columns.
  const std::size_t col_axis = axis == 0 ? 1 : 0;
  const std::size_t row_axis = axis == 2 ? 1 : 2;
  Slice2D s(vol.extents[row_axis], vol.extents[col_axis]);
  std::size_t pos[3];
  pos[axis] = index;
  for (std::size_t r = 0; r < s.rows; ++r) {
    pos[row_axis] = r;
    for (std::size_t c = 0; c < s.cols; ++c) {
      pos[col_axis] = c;
      s.at(r, c) = vol.at(pos[0], pos[1], pos[2]);
    }
  }
  return s;
}

IndexedSlices extract_middle_slices(const Volume& vol, std::size_t n) {
  const auto w = middle_window(vol.extents.at(vol.axial_axis), n);
  IndexedSlices out;
  out.short_volume = w.short_volume;
  for (std::size_t i = w.first; i < w.first + w.count; ++i) {
    out.slices.push_back(extract_slice(vol, vol.axial_axis, i));
    out.indices.push_back(i);
  }
  return out;
}

Slice2D normalize_slice(const Slice2D& slice) {
  if (slice.values.empty()) throw ParameterError("cannot normalise an empty slice");
  const auto [lo_it, hi_it] = std::minmax_element(slice.values.begin(), slice.values.end());
  const double lo = *lo_it, hi = *hi_it;
  Slice2D out(slice.rows, slice.cols, 0.0f);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = static_cast<float>((slice.values[i] - lo) / range);
  }
  return out;
}

IndexedSlices filter_background(IndexedSlices input, double threshold) {
  IndexedSlices out;
  out.short_volume = input.short_volume;
  for (std::size_t i = 0; i < input.slices.size(); ++i) {
    if (input.slices[i].mean() < threshold) continue;
    out.slices.push_back(std::move(input.slices[i]));
    out.indices.push_back(input.indices[i]);
  }
  if (out.slices.empty()) throw EmptyStackError("every slice fell below the background threshold");
  return out;
}

float sample_bilinear(const Slice2D& slice, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(slice.rows - 1));
  col = std::clamp(col, 0.0, static_cast<double>(slice.cols - 1));
  const auto r0 = static_cast<std::size_t>(row), c0 = static_cast<std::size_t>(col);
  const std::size_t r1 = std::min(r0 + 1, slice.rows - 1), c1 = std::min(c0 + 1, slice.cols - 1);
  const double fr = row - static_cast<double>(r0), fc = col - static_cast<double>(c0);
  const double a = slice.at(r0, c0), b = slice.at(r0, c1), c = slice.at(r1, c0), d = slice.at(r1, c1);
  const double v = (1 - fr) * ((1 - fc) * a + fc * b) + fr * ((1 - fc) * c + fc * d);
  const double lo = std::min({a, b, c, d}), hi = std::max({a, b, c, d});
  return static_cast<float>(std::clamp(v, lo, hi));
}

Slice2D resize_slice(const Slice2D& slice, std::size_t rows, std::size_t cols) {
  if (slice.rows == rows && slice.cols == cols) return slice;
  if (slice.rows < 2 || slice.cols < 2) throw ParameterError("resize needs a source of at least 2x2 pixels");
  if (rows < 2 || cols < 2) throw ParameterError("resize target must be at least 2x2 pixels");
  Slice2D out(rows, cols);
  const double sr = static_cast<double>(slice.rows - 1) / static_cast<double>(rows - 1);
  const double sc = static_cast<double>(slice.cols - 1) / static_cast<double>(cols - 1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = sample_bilinear(slice, r * sr, c * sc);
  return out;
}

SliceStack preprocess_volume(const Volume& vol, const PreprocessOptions& options) {
  auto middle = extract_middle_slices(vol, options.slice_count);
  for (auto& s : middle.slices) s = resize_slice(s, options.rows, options.cols);
  IndexedSlices kept;
  if (options.order == FilterOrder::normalize_then_filter) {
    for (auto& s : middle.slices) s = normalize_slice(s);
    kept = filter_background(std::move(middle), options.background_threshold);
  } else {
    kept = filter_background(std::move(middle), options.background_threshold);
    for (auto& s : kept.slices) s = normalize_slice(s);
  }
  SliceStack stack;
  stack.subject_id = vol.subject_id;
  stack.slices = std::move(kept.slices);
  stack.kept_indices = std::move(kept.indices);
  stack.short_volume = kept.short_volume;
  return stack;
}

Volume stack_to_volume(const SliceStack& stack) {
  if (stack.slices.empty()) throw EmptyStackError("cannot pack an empty stack");
  const auto rows = stack.slices[0].rows, cols = stack.slices[0].cols;
  Volume vol(cols, rows, stack.slices.size());
  for (std::size_t z = 0; z < stack.slices.size(); ++z) {
    const auto& s = stack.slices[z];
    if (s.rows != rows || s.cols != cols) throw ShapeError("stack slices differ in size");
    std::copy(s.values.begin(), s.values.end(), vol.voxels.begin() + static_cast<std::ptrdiff_t>(z * rows * cols));
  }
  vol.subject_id = stack.subject_id;
  return vol;
}

}  // namespace aqc
