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

#include <stdexcept>
#include <string>

namespace aqc {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AQC_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  }

// Tensor / autodiff.
AQC_DEFINE_ERROR(ShapeError);
AQC_DEFINE_ERROR(ContractError);
AQC_DEFINE_ERROR(StateError);
AQC_DEFINE_ERROR(ParameterError);
AQC_DEFINE_ERROR(NumericError);

// File formats.
AQC_DEFINE_ERROR(IoError);
AQC_DEFINE_ERROR(FormatError);
AQC_DEFINE_ERROR(UnsupportedError);
AQC_DEFINE_ERROR(DimensionError);
AQC_DEFINE_ERROR(ParseError);
AQC_DEFINE_ERROR(ValidationError);

// Pipeline.
AQC_DEFINE_ERROR(EmptyStackError);
AQC_DEFINE_ERROR(ConfigError);
AQC_DEFINE_ERROR(UndefinedMetricError);

// Checkpoint loading. Each failure mode is its own type so callers can
// distinguish a foreign file from a stale or damaged one.
AQC_DEFINE_ERROR(CheckpointError);
class MagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class PayloadLengthError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ConsistencyError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

#undef AQC_DEFINE_ERROR

}  // namespace aqc
