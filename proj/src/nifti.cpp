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

#include "aqc/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "aqc/error.hpp"

namespace aqc {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kSingleFileOffset = 352;

template <typename T>
T load_scalar(const unsigned char* p, bool swap) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if (swap) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void store_scalar(unsigned char* p, T v, bool swap) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if (swap) std::reverse(buf, buf + sizeof(T));
  std::memcpy(p, buf, sizeof(T));
}

bool is_gzip(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!is_gzip(bytes)) return bytes;

  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) throw IoError("cannot open gzip stream " + path.string());
  std::vector<unsigned char> out;
  unsigned char chunk[1 << 16];
  int got;
  while ((got = gzread(gz, chunk, sizeof(chunk))) > 0) out.insert(out.end(), chunk, chunk + got);
  int err = Z_OK;
  const char* msg = gzerror(gz, &err);
  gzclose(gz);
  if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
    throw IoError("corrupt gzip stream in " + path.string() + ": " + (msg ? msg : "unknown error"));
  return out;
}

std::size_t datatype_size(NiftiDatatype t) {
  switch (t) {
    case NiftiDatatype::uint8: return 1;
    case NiftiDatatype::int16: return 2;
    case NiftiDatatype::int32: return 4;
    case NiftiDatatype::float32: return 4;
    case NiftiDatatype::float64: return 8;
  }
  throw UnsupportedError("unsupported NIfTI datatype " + std::to_string(static_cast<int>(t)));
}

NiftiDatatype checked_datatype(std::int16_t code) {
  switch (code) {
    case 2:
    case 4:
    case 8:
    case 16:
    case 64: return static_cast<NiftiDatatype>(code);
    default: throw UnsupportedError("unsupported NIfTI datatype code " + std::to_string(code));
  }
}

template <typename T>
T saturate(double v) {
  const double lo = static_cast<double>(std::numeric_limits<T>::lowest());
  const double hi = static_cast<double>(std::numeric_limits<T>::max());
  return static_cast<T>(std::clamp(std::nearbyint(v), lo, hi));
}

}  // namespace

NiftiHeader parse_nifti_header(const std::array<unsigned char, 348>& raw) {
  const unsigned char* p = raw.data();
  NiftiHeader h;
  const auto dim0_native = load_scalar<std::int16_t>(p + 40, false);
  bool swap = false;
  if (dim0_native < 1 || dim0_native > 7) {
    const auto dim0_swapped = load_scalar<std::int16_t>(p + 40, true);
    if (dim0_swapped < 1 || dim0_swapped > 7)
      throw FormatError("NIfTI dim[0] is " + std::to_string(dim0_native) + " in either byte order");
    swap = true;
  }
  h.byte_order = (swap == (std::endian::native == std::endian::little)) ? std::endian::big : std::endian::little;

  h.magic.assign(reinterpret_cast<const char*>(p + 344), 4);
  if (h.magic != std::string("n+1\0", 4) && h.magic != std::string("ni1\0", 4))
    throw FormatError("bad NIfTI-1 magic");
  const auto sizeof_hdr = load_scalar<std::int32_t>(p, swap);
  if (sizeof_hdr != 348) throw FormatError("NIfTI sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");

  for (int i = 0; i < 8; ++i) h.dim[i] = load_scalar<std::int16_t>(p + 40 + 2 * i, swap);
  h.datatype = checked_datatype(load_scalar<std::int16_t>(p + 70, swap));
  h.bitpix = load_scalar<std::int16_t>(p + 72, swap);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load_scalar<float>(p + 76 + 4 * i, swap);
  h.vox_offset = load_scalar<float>(p + 108, swap);
  h.scl_slope = load_scalar<float>(p + 112, swap);
  h.scl_inter = load_scalar<float>(p + 116, swap);
  h.qform_code = load_scalar<std::int16_t>(p + 252, swap);
  h.sform_code = load_scalar<std::int16_t>(p + 254, swap);
  for (int i = 0; i < 12; ++i) h.srow[i] = load_scalar<float>(p + 280 + 4 * i, swap);
  return h;
}

Volume load_nifti(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kHeaderSize) throw IoError("truncated NIfTI header in " + path.string());
  std::array<unsigned char, kHeaderSize> raw;
  std::copy_n(bytes.begin(), kHeaderSize, raw.begin());
  NiftiHeader h;
  try {
    h = parse_nifti_header(raw);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + ": " + path.string());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(std::string(e.what()) + ": " + path.string());
  }
  if (h.dim[0] < 3)
    throw DimensionError("NIfTI volume has " + std::to_string(h.dim[0]) + " dimensions, need at least 3: " +
                         path.string());
  for (int i = 1; i <= h.dim[0]; ++i)
    if (h.dim[i] < 1) throw DimensionError("NIfTI dim[" + std::to_string(i) + "] < 1 in " + path.string());

  const bool swap = h.byte_order != std::endian::native;
  const std::size_t nvox = static_cast<std::size_t>(h.dim[1]) * h.dim[2] * h.dim[3];
  const std::size_t elem = datatype_size(h.datatype);

  std::vector<unsigned char> paired;
  const unsigned char* payload;
  std::size_t available;
  const auto offset = static_cast<std::size_t>(std::max(0.0f, h.vox_offset));
  if (h.magic[1] == '+') {
    const std::size_t start = std::max(offset, kSingleFileOffset);
    available = bytes.size() > start ? bytes.size() - start : 0;
    payload = bytes.data() + std::min(start, bytes.size());
  } else {
    auto img = path;
    if (img.extension() == ".gz") img.replace_extension();
    img.replace_extension(".img");
    if (!std::filesystem::exists(img)) {
      auto gz = img;
      gz += ".gz";
      if (std::filesystem::exists(gz)) img = gz;
    }
    paired = read_all(img);
    available = paired.size() > offset ? paired.size() - offset : 0;
    payload = paired.data() + std::min(offset, paired.size());
  }
  if (available < nvox * elem)
    throw IoError("truncated NIfTI payload in " + path.string() + ": need " + std::to_string(nvox * elem) +
                  " bytes, found " + std::to_string(available));

  Volume vol(static_cast<std::size_t>(h.dim[1]), static_cast<std::size_t>(h.dim[2]), static_cast<std::size_t>(h.dim[3]));
  vol.source = path;
  const bool scale = h.scl_slope != 0.0f;
  const double slope = scale ? h.scl_slope : 1.0, inter = scale ? h.scl_inter : 0.0;
  for (std::size_t i = 0; i < nvox; ++i) {
    const unsigned char* q = payload + i * elem;
    double v = 0.0;
    switch (h.datatype) {
      case NiftiDatatype::uint8: v = *q; break;
      case NiftiDatatype::int16: v = load_scalar<std::int16_t>(q, swap); break;
      case NiftiDatatype::int32: v = load_scalar<std::int32_t>(q, swap); break;
      case NiftiDatatype::float32: v = load_scalar<float>(q, swap); break;
      case NiftiDatatype::float64: v = load_scalar<double>(q, swap); break;
    }
    const auto out = static_cast<float>(scale ? v * slope + inter : v);
    if (!std::isfinite(out)) throw FormatError("non-finite voxel value in " + path.string());
    vol.voxels[i] = out;
  }
  return vol;
}

void write_nifti(const Volume& vol, const std::filesystem::path& path, const NiftiWriteOptions& options) {
  for (auto e : vol.extents)
    if (e < 1 || e > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max()))
      throw DimensionError("volume extents out of NIfTI-1 range for " + path.string());
  if (vol.voxels.size() != vol.nx() * vol.ny() * vol.nz())
    throw ShapeError("volume voxel count does not match its extents");
  if (options.scl_slope == 0.0f) throw ParameterError("scl_slope must be nonzero when writing");

  const bool swap = options.byte_order != std::endian::native;
  const std::size_t elem = datatype_size(options.datatype);
  std::vector<unsigned char> out(kSingleFileOffset + vol.voxels.size() * elem, 0);
  unsigned char* p = out.data();
  store_scalar<std::int32_t>(p, 348, swap);
  const std::int16_t dims[8] = {3,
                                static_cast<std::int16_t>(vol.nx()),
                                static_cast<std::int16_t>(vol.ny()),
                                static_cast<std::int16_t>(vol.nz()),
                                1,
                                1,
                                1,
                                1};
  for (int i = 0; i < 8; ++i) store_scalar<std::int16_t>(p + 40 + 2 * i, dims[i], swap);
  store_scalar<std::int16_t>(p + 70, static_cast<std::int16_t>(options.datatype), swap);
  store_scalar<std::int16_t>(p + 72, static_cast<std::int16_t>(elem * 8), swap);
  const float pixdim[8] = {1.0f, options.voxel_size[0], options.voxel_size[1], options.voxel_size[2], 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store_scalar<float>(p + 76 + 4 * i, pixdim[i], swap);
  store_scalar<float>(p + 108, static_cast<float>(kSingleFileOffset), swap);
  store_scalar<float>(p + 112, options.scl_slope, swap);
  store_scalar<float>(p + 116, options.scl_inter, swap);
  p[123] = 2;  // xyzt_units: millimetres
  std::memcpy(p + 344, "n+1\0", 4);

  const double slope = options.scl_slope, inter = options.scl_inter;
  unsigned char* q = p + kSingleFileOffset;
  for (std::size_t i = 0; i < vol.voxels.size(); ++i, q += elem) {
    const double stored = (static_cast<double>(vol.voxels[i]) - inter) / slope;
    switch (options.datatype) {
      case NiftiDatatype::uint8: *q = saturate<std::uint8_t>(stored); break;
      case NiftiDatatype::int16: store_scalar(q, saturate<std::int16_t>(stored), swap); break;
      case NiftiDatatype::int32: store_scalar(q, saturate<std::int32_t>(stored), swap); break;
      case NiftiDatatype::float32: store_scalar(q, static_cast<float>(stored), swap); break;
      case NiftiDatatype::float64: store_scalar(q, stored, swap); break;
    }
  }

  const bool gz = options.gzip || path.extension() == ".gz";
  if (gz) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (!f) throw IoError("cannot write " + path.string());
    const int wrote = gzwrite(f, out.data(), static_cast<unsigned>(out.size()));
    if (gzclose(f) != Z_OK || wrote != static_cast<int>(out.size())) throw IoError("failed writing " + path.string());
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace aqc
