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

#include "aqc/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "json.hpp"

#include "aqc/config.hpp"
#include "aqc/error.hpp"

namespace aqc {

using nlohmann::json;

namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f32_le(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                             static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  return std::bit_cast<float>(bits);
}

template <typename T>
T field(const json& header, const char* key, const std::string& path) {
  try {
    return header.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConsistencyError(path + ": checkpoint header field '" + key + "' is missing or malformed");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.params.entries) {
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}, {"trainable", e.trainable}});
    offset += e.tensor.numel() * 4;
  }
  json header = {{"format_version", kCheckpointVersion},
                 {"model", to_json(ckpt.model)},
                 {"train", to_json(ckpt.train)},
                 {"metadata", ckpt.metadata},
                 {"best_val_loss", std::isfinite(ckpt.best_val_loss) ? json(ckpt.best_val_loss) : json(nullptr)},
                 {"tensors", tensors},
                 {"payload_bytes", offset}};
  const std::string text = header.dump(1);

  std::string bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64_le(bytes, text.size());
  bytes += text;
  bytes.reserve(bytes.size() + offset);
  for (const auto& e : ckpt.params.entries)
    for (float v : e.tensor.data()) put_f32_le(bytes, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  const std::string where = path.string();

  if (raw.size() < 4 || std::memcmp(raw.data(), kCheckpointMagic, 4) != 0)
    throw MagicError(where + " is not an aqc checkpoint (bad magic)");
  if (raw.size() < 12) throw PayloadLengthError(where + ": truncated before the header length");
  const std::uint64_t header_len = get_u64_le(bytes + 4);
  if (header_len > raw.size() - 12) throw PayloadLengthError(where + ": header is truncated");

  json header;
  try {
    header = json::parse(raw.begin() + 12, raw.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw ConsistencyError(where + ": checkpoint header is not valid JSON");
  }
  const int version = field<int>(header, "format_version", where);
  if (version != kCheckpointVersion)
    throw VersionError(where + ": checkpoint format version " + std::to_string(version) + ", this build reads " +
                       std::to_string(kCheckpointVersion));

  Checkpoint ckpt;
  try {
    apply_json(header.at("model"), ckpt.model);
    apply_json(header.at("train"), ckpt.train);
    ckpt.model.validate();
  } catch (const json::exception&) {
    throw ConsistencyError(where + ": checkpoint header lacks model or train configuration");
  } catch (const ConfigError& e) {
    throw ConsistencyError(where + ": stored configuration is invalid: " + e.what());
  }
  ckpt.metadata = field<std::map<std::string, std::string>>(header, "metadata", where);
  const json best = field<json>(header, "best_val_loss", where);
  ckpt.best_val_loss = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();

  const std::size_t payload_at = 12 + header_len;
  const std::uint64_t payload_len = raw.size() - payload_at;
  const auto declared = field<std::uint64_t>(header, "payload_bytes", where);
  const auto table = field<json>(header, "tensors", where);
  if (!table.is_array()) throw ConsistencyError(where + ": tensor table is not an array");

  std::uint64_t expected = 0;
  std::vector<std::pair<std::string, Shape>> shapes;
  for (const auto& t : table) {
    const auto name = field<std::string>(t, "name", where);
    const auto shape = field<Shape>(t, "shape", where);
    const auto offset = field<std::uint64_t>(t, "offset", where);
    if (offset != expected) throw ConsistencyError(where + ": tensor '" + name + "' is not packed in order");
    std::uint64_t numel = 1;
    for (auto d : shape) numel *= d;
    expected += numel * 4;
    shapes.emplace_back(name, shape);
  }
  if (declared != expected)
    throw ConsistencyError(where + ": payload_bytes " + std::to_string(declared) + " disagrees with the tensor table (" +
                           std::to_string(expected) + ")");
  if (payload_len != expected)
    throw PayloadLengthError(where + ": payload holds " + std::to_string(payload_len) + " bytes, header declares " +
                             std::to_string(expected));

  const auto specs = param_specs(ckpt.model);
  if (specs.size() != shapes.size())
    throw ConsistencyError(where + ": " + std::to_string(shapes.size()) + " tensors stored, the model declares " +
                           std::to_string(specs.size()));
  const unsigned char* p = bytes + payload_at;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    if (name != specs[i].name || shape != specs[i].shape)
      throw ConsistencyError(where + ": stored tensor '" + name + "' " + shape_string(shape) +
                             " does not match the model's '" + specs[i].name + "' " + shape_string(specs[i].shape));
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data()) {
      v = get_f32_le(p);
      p += 4;
    }
    ckpt.params.add(name, std::move(t), specs[i].trainable);
  }
  return ckpt;
}

}  // namespace aqc
