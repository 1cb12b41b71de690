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
#include <span>

#include "aqc/rng.hpp"
#include "aqc/tensor.hpp"

/// Differentiable operators used by the quality-control network.
///
/// Instantiated for float (the library's element type) and double (gradient
/// checks).
///
/// Every op takes an optional tape. With a null tape, or when no input
/// requires a gradient, the op is a plain forward computation and records
/// nothing. Reductions accumulate in double precision; stored values are
/// float32.
namespace aqc::ops {

/// Fingerprint of the piecewise-linear region an evaluation falls in.
///
/// While a RegionTrace is alive on the current thread, relu, maxpool2d and
/// pointwise_mlp fold their activation and argmax patterns into it. Two
/// evaluations with equal fingerprints lie on the same smooth piece, which
/// is what a finite-difference stencil needs.
class RegionTrace {
 public:
  RegionTrace();
  ~RegionTrace();
  RegionTrace(const RegionTrace&) = delete;
  RegionTrace& operator=(const RegionTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void fold(std::uint64_t value) { hash_ = (hash_ ^ value) * 0x100000001b3ULL; }
  static RegionTrace* active();

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  RegionTrace* previous_;
};

/// 2D convolution, stride 1, zero padding that preserves spatial extents.
/// input [N,Cin,H,W], weight [Cout,Cin,k,k] with k in {1,3}, bias [Cout].
/// The network uses 3x3 for every feature layer and 1x1 for projections.
template <typename T>
BasicTensor<T> conv2d(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// 2x2 max pooling, stride 2. Ties route the gradient to the first element
/// of the window in row-major order.
template <typename T>
BasicTensor<T> maxpool2d(Tape* tape, const BasicTensor<T>& input);

struct BatchNormOptions {
  float momentum = 0.1f;
  float epsilon = 1e-5f;
};

/// Per-channel batch normalisation over (N,H,W).
///
/// Train mode normalises with batch statistics and folds them into the
/// running estimates (variance is folded in unbiased form). Eval mode uses
/// the running estimates as they are, including the initial mean 0 / var 1.
template <typename T>
BasicTensor<T> batchnorm2d(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                   BasicTensor<T>& running_mean, BasicTensor<T>& running_var, Mode mode, BatchNormOptions options = {});

template <typename T>
BasicTensor<T> relu(Tape* tape, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(Tape* tape, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> softmax(Tape* tape, const BasicTensor<T>& x, std::size_t axis);

/// input [N,Din], weight [Dout,Din], bias [Dout] -> [N,Dout].
template <typename T>
BasicTensor<T> linear(Tape* tape, const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Inverted dropout: survivors are scaled by 1/(1-p). Identity in eval mode.
template <typename T>
BasicTensor<T> dropout(Tape* tape, const BasicTensor<T>& x, float p, Mode mode, Rng& rng);

template <typename T>
BasicTensor<T> add(Tape* tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(Tape* tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sum(Tape* tape, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> reshape(Tape* tape, const BasicTensor<T>& x, Shape shape);

/// [N,C,H,W] -> [N,C], plain spatial mean.
template <typename T>
BasicTensor<T> global_avg_pool(Tape* tape, const BasicTensor<T>& x);

/// Shared scalar -> hidden -> scalar network applied to every element:
///   y = b2 + sum_j w2[j] * relu(w1[j] * x + b1[j])
/// w1, b1, w2 have shape [hidden]; b2 has shape [1]. Hidden activations are
/// recomputed in backward instead of stored.
template <typename T>
BasicTensor<T> pointwise_mlp(Tape* tape, const BasicTensor<T>& x, const BasicTensor<T>& w1, const BasicTensor<T>& b1, const BasicTensor<T>& w2,
                     const BasicTensor<T>& b2);

/// Attention-weighted pooling. weights [N,G,S], values [N,C,S] with G == C
/// (one distribution per channel) or G == 1 (shared) -> [N,C].
template <typename T>
BasicTensor<T> weighted_sum(Tape* tape, const BasicTensor<T>& weights, const BasicTensor<T>& values);

/// Mean binary cross entropy of probabilities against {0,1} labels.
/// Probabilities are clamped to [1e-7, 1 - 1e-7]; the gradient is taken at
/// the clamped value and passed through the clamp.
template <typename T>
BasicTensor<T> bce_loss(Tape* tape, const BasicTensor<T>& probs, std::span<const float> labels);

}  // namespace aqc::ops
