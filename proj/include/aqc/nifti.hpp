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
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace aqc {

/// A 3D scalar field. Voxels are stored x-fastest (NIfTI order):
/// index = x + nx * (y + ny * z).
struct Volume {
  std::array<std::size_t, 3> extents{0, 0, 0};
  std::vector<float> voxels;
  std::size_t axial_axis = 2;
  std::filesystem::path source;
  std::string subject_id;
  std::string site_id;

  Volume() = default;
  Volume(std::size_t nx, std::size_t ny, std::size_t nz, float fill = 0.0f)
      : extents{nx, ny, nz}, voxels(nx * ny * nz, fill) {}

  std::size_t nx() const { return extents[0]; }
  std::size_t ny() const { return extents[1]; }
  std::size_t nz() const { return extents[2]; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + extents[0] * (y + extents[1] * z); }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[index(x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return voxels[index(x, y, z)]; }
};

enum class NiftiDatatype : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

/// Header fields the reader consumes. Orientation (qform/sform) is parsed
/// for inspection only; voxel grids are used as stored.
struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  NiftiDatatype datatype = NiftiDatatype::float32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 12> srow{};
  std::string magic;
  std::endian byte_order = std::endian::little;
};

struct NiftiWriteOptions {
  NiftiDatatype datatype = NiftiDatatype::float32;
  std::endian byte_order = std::endian::little;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::array<float, 3> voxel_size{1.0f, 1.0f, 1.0f};
  /// Compress with gzip. Paths ending in ".gz" are always compressed.
  bool gzip = false;
};

NiftiHeader parse_nifti_header(const std::array<unsigned char, 348>& raw);

/// Reads a single-file (.nii, .nii.gz) or paired (.hdr/.img) NIfTI-1 volume.
/// Integer and double datatypes are converted to float32; scl_slope and
/// scl_inter are applied when scl_slope is nonzero. For 4D+ data the first
/// volume is returned.
Volume load_nifti(const std::filesystem::path& path);

/// Writes a single-file NIfTI-1 volume. Integer datatypes store
/// round((v - scl_inter) / scl_slope), saturated to the type's range.
void write_nifti(const Volume& volume, const std::filesystem::path& path, const NiftiWriteOptions& options = {});

}  // namespace aqc
