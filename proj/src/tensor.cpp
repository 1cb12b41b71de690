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

#include "aqc/tensor.hpp"

#include <sstream>

namespace aqc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void Tape::record(BackwardFn fn) {
  if (consumed_) throw StateError("cannot record onto a tape that has already been replayed");
  nodes_.push_back(std::move(fn));
}

void Tape::begin_backward(std::size_t loss_numel, const std::string& loss_shape) {
  if (consumed_) throw StateError("backward called twice on the same tape");
  if (loss_numel != 1) throw ContractError("backward requires a scalar loss, got " + loss_shape);
  consumed_ = true;
}

void Tape::replay() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  // Drop closures so intermediate activations are released.
  nodes_.clear();
  nodes_.shrink_to_fit();
}

}  // namespace aqc
