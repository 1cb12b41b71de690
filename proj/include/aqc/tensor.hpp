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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aqc/error.hpp"

namespace aqc {

/// Extents of a dense row-major array. Every extent is positive; a scalar
/// is represented as {1}.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class Mode { train, eval };

/// Dense row-major tensor with an optional gradient buffer.
///
/// A tensor is a shared handle: copies alias the same storage, which is
/// what lets backward closures on a Tape write into the gradient of a
/// caller's leaf. Use clone() for an independent copy. The library runs in
/// float32; the double instantiation exists so gradient checks can be done
/// without float rounding swamping the difference quotient.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    validate(shape);
    BasicTensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->data.assign(shape_numel(shape), value);
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    validate(shape);
    if (shape_numel(shape) != values.size())
      throw ShapeError("shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                       " values");
    BasicTensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static BasicTensor scalar(T value, bool requires_grad = false) { return full({1}, value, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[axis];
  }
  std::size_t numel() const { return impl().data.size(); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }
  T* ptr() { return impl().data.data(); }
  const T* ptr() const { return impl().data.data(); }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl().data[0];
  }

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool on) { impl().requires_grad = on; }

  bool has_grad() const { return !impl().grad.empty(); }
  std::span<T> grad() { return impl().grad; }
  std::span<const T> grad() const { return impl().grad; }
  /// Allocates a zero gradient buffer if none exists.
  std::span<T> ensure_grad() {
    auto& i = impl();
    if (i.grad.empty()) i.grad.assign(i.data.size(), T(0));
    return i.grad;
  }
  void zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), T(0));
  }
  void clear_grad() {
    auto& g = impl().grad;
    g.clear();
    g.shrink_to_fit();
  }

  /// Deep copy of values only; the copy neither requires nor holds a grad.
  BasicTensor clone() const { return from(shape(), impl().data, false); }
  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

  /// Value-converting copy, e.g. float parameters into a double check.
  template <typename U>
  BasicTensor<U> cast(bool requires_grad = false) const {
    const auto& d = impl().data;
    return BasicTensor<U>::from(shape(), std::vector<U>(d.begin(), d.end()), requires_grad);
  }

  /// Throws NumericError naming `where` if any value is NaN or infinite.
  void check_finite(std::string_view where) const {
    for (T v : impl().data)
      if (!std::isfinite(v)) throw NumericError("non-finite value in " + std::string(where));
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  static void validate(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  Impl& impl() {
    if (!impl_) throw StateError("use of an undefined tensor");
    return *impl_;
  }
  const Impl& impl() const {
    if (!impl_) throw StateError("use of an undefined tensor");
    return *impl_;
  }
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Ordered record of operations for one forward pass.
///
/// Ops append a backward closure when any of their inputs requires a
/// gradient. backward() replays them in reverse, which is a valid
/// topological order because ops can only consume earlier outputs. A tape
/// can be replayed once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(BackwardFn fn);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every leaf that
  /// requires a gradient. The loss must have exactly one element.
  template <typename T>
  void backward(BasicTensor<T>& loss) {
    begin_backward(loss.numel(), shape_string(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.ensure_grad()[0] = T(1);
    replay();
  }

 private:
  void begin_backward(std::size_t loss_numel, const std::string& loss_shape);
  void replay();

  std::vector<BackwardFn> nodes_;
  bool consumed_ = false;
};

}  // namespace aqc
