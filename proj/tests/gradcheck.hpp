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

// Finite-difference oracle shared by the unit and acceptance suites. It only
// ever evaluates forward passes; the analytic side comes from Tape.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aqc/ops.hpp"
#include "aqc/rng.hpp"
#include "aqc/tensor.hpp"

namespace aqc::testing {

template <typename T = float>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  auto t = BasicTensor<T>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Relative error with the denominator floored at `floor`, so coordinates
/// whose true derivative is essentially zero are judged on absolute error.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Compares `analytic` (d loss / d param, already computed) with central
/// differences of `loss` over the listed coordinates of `param`. The step
/// actually used is read back from the stored values.
template <typename T>
GradCheckResult check_coordinates(BasicTensor<T>& param, std::span<const T> analytic,
                                  const std::function<double()>& loss, const std::vector<std::size_t>& coords,
                                  double step, double floor) {
  GradCheckResult r;
  auto values = param.data();
  for (std::size_t i : coords) {
    const T saved = values[i];
    values[i] = static_cast<T>(saved + step);
    const double hi = values[i];
    const double up = loss();
    values[i] = static_cast<T>(saved - step);
    const double lo = values[i];
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (hi - lo);
    r.max_rel_err = std::max(r.max_rel_err, relative_error(static_cast<double>(analytic[i]), numeric, floor));
    ++r.checked;
  }
  return r;
}

template <typename T>
std::vector<std::size_t> all_coords(const BasicTensor<T>& t) {
  std::vector<std::size_t> c(t.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
  return c;
}

template <typename T>
std::vector<std::size_t> sample_coords(const BasicTensor<T>& t, std::size_t count, Rng& rng) {
  std::vector<std::size_t> c = all_coords(t);
  if (c.size() <= count) return c;
  rng.shuffle(c.begin(), c.end());
  c.resize(count);
  std::sort(c.begin(), c.end());
  return c;
}

/// Projection loss sum_i r_i * y_i with fixed random r, evaluated in double.
template <typename T, typename R>
double project(const BasicTensor<T>& y, const std::vector<R>& r) {
  double acc = 0.0;
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) acc += static_cast<double>(r[i]) * static_cast<double>(ys[i]);
  return acc;
}

template <typename T = float>
std::vector<T> random_projection(std::size_t n, Rng& rng) {
  std::vector<T> r(n);
  for (auto& v : r) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return r;
}

/// Gradient of sum(r * op(inputs)) for a fixed random r, against central
/// differences of the same projection, over every coordinate of every input.
/// Returns the worst relative error.
inline double op_gradcheck(const std::function<TensorD(Tape*)>& op, std::vector<TensorD*> inputs, std::uint64_t seed,
                           double step = 1e-3, double floor = 1e-2) {
  Rng rng(seed);
  TensorD probe = op(nullptr);
  const auto r = random_projection<double>(probe.numel(), rng);
  for (TensorD* in : inputs) in->clear_grad();
  Tape tape;
  TensorD y = op(&tape);
  TensorD weights = TensorD::from(y.shape(), r);
  TensorD loss = ops::sum(&tape, ops::mul(&tape, y, weights));
  tape.backward(loss);
  double worst = 0.0;
  for (TensorD* in : inputs) {
    std::vector<double> analytic(in->grad().begin(), in->grad().end());
    auto res = check_coordinates<double>(*in, analytic, [&] { return project(op(nullptr), r); }, all_coords(*in), step,
                                         floor);
    worst = std::max(worst, res.max_rel_err);
  }
  return worst;
}

}  // namespace aqc::testing
