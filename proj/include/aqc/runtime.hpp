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
#include <string_view>

namespace aqc {

inline constexpr std::string_view kVersion = "0.1.0";

/// Worker threads for the BLAS kernels. Results are bitwise reproducible
/// only at 1.
void set_thread_count(std::size_t threads);

/// Keeps freed activation buffers in the heap instead of returning them to
/// the kernel after every batch (each re-fault costs more than the conv).
/// No-op outside glibc.
void tune_allocator();

}  // namespace aqc
