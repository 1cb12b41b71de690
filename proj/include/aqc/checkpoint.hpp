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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "aqc/model.hpp"
#include "aqc/train.hpp"

namespace aqc {

inline constexpr char kCheckpointMagic[4] = {'A', 'Q', 'C', '1'};
inline constexpr int kCheckpointVersion = 1;

/// Layout: the 4-byte magic "AQC1", a little-endian uint64 header length,
/// a JSON header (format_version, model, train, metadata, best_val_loss,
/// tensors: [{name, shape, offset, trainable}], payload_bytes), then every
/// tensor as little-endian float32 in header order. Batchnorm running
/// statistics are included. Nothing time-dependent is written, so equal
/// inputs give equal files.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  /// Free-form provenance (tool version, manifest, stop reason, ...).
  std::map<std::string, std::string> metadata;
  Parameters params;
  /// Infinity when no validation epoch completed.
  double best_val_loss = 0.0;
};

/// Throws IoError when the file cannot be written.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws IoError, MagicError, VersionError, PayloadLengthError (payload
/// size differs from the header's tensor table) or ConsistencyError (table
/// disagrees with the stored ModelConfig).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aqc
