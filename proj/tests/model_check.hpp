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

// Finite-difference check of the composed network, run in double so the
// comparison is not dominated by float32 rounding.
#pragma once

#include <string>

#include "aqc/model.hpp"
#include "gradcheck.hpp"

namespace aqc::testing {

struct ModelGradCheck {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
  /// Coordinates whose stencil crossed a relu or maxpool boundary.
  std::size_t skipped = 0;
};

/// BCE of the train-mode forward pass on a random batch, differentiated
/// with respect to every learnable tensor and the input. Dropout masks are
/// replayed from a fixed seed on every evaluation. A coordinate is compared
/// only when both stencil points land on the same linear piece as the base
/// point; the others are counted in `skipped`.
inline ModelGradCheck model_gradcheck(const ModelConfig& config, std::size_t batch, std::uint64_t seed,
                                      std::size_t coords_per_tensor = 24, double step = 1e-3, double floor = 1e-2) {
  Rng rng(seed);
  auto params = init_params<double>(config, seed);
  // Non-zero biases and affine terms so every path carries signal.
  for (auto& e : params.entries)
    if (e.trainable && e.name.find("weight") == std::string::npos && e.name.find(".w") == std::string::npos)
      for (auto& v : e.tensor.data()) v += rng.uniform(-0.2, 0.2);
  auto x = random_tensor<double>({batch, 1, config.input_rows, config.input_cols}, rng, 0.0, 1.0);
  std::vector<float> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<float>(i % 2);
  const std::uint64_t dropout_seed = derive_seed(seed, 99);

  auto loss_of = [&](Tape* tape) {
    Rng drop(dropout_seed);
    auto out = forward<double>(tape, x, params, config, Mode::train, &drop);
    return ops::bce_loss(tape, out.probs, labels);
  };
  params.zero_grad();
  x.clear_grad();
  Tape tape;
  auto loss = loss_of(&tape);
  tape.backward(loss);

  auto region_of = [&]() {
    ops::RegionTrace trace;
    const double value = loss_of(nullptr).item();
    return std::pair{value, trace.fingerprint()};
  };
  const auto base_region = region_of().second;

  ModelGradCheck result;
  auto check = [&](TensorD& t, const std::string& name) {
    auto values = t.data();
    for (std::size_t i : sample_coords(t, coords_per_tensor, rng)) {
      const double saved = values[i];
      values[i] = saved + step;
      const auto [up, up_region] = region_of();
      values[i] = saved - step;
      const auto [down, down_region] = region_of();
      values[i] = saved;
      if (up_region != base_region || down_region != base_region) {
        ++result.skipped;
        continue;
      }
      const double err = relative_error(t.grad()[i], (up - down) / (2 * step), floor);
      ++result.checked;
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst_tensor = name;
      }
    }
  };
  for (auto& e : params.entries)
    if (e.trainable) check(e.tensor, e.name);
  check(x, "input");
  return result;
}

}  // namespace aqc::testing
