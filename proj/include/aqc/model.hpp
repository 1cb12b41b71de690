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
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "aqc/ops.hpp"
#include "aqc/tensor.hpp"

namespace aqc {

enum class Preset {
  /// Per-channel spatial attention pooling, head C -> 128 -> 64 -> 1.
  channel,
  /// 1x1 projection to token embeddings, one shared spatial softmax, head
  /// D -> 64 -> 32 -> 16 -> 1.
  token,
  /// Global average pooling in place of attention, full head.
  cnn_only,
  /// Channel attention followed by a single linear output layer.
  cnn_attn,
};

std::string_view preset_name(Preset p);
Preset parse_preset(std::string_view name);

struct ModelConfig {
  Preset preset = Preset::channel;
  std::vector<std::size_t> block_channels{64, 128, 256};
  std::size_t attention_hidden = 256;
  std::size_t attention_heads = 1;
  /// Embedding width of the token preset.
  std::size_t token_dim = 128;
  /// Hidden widths and output of the head. Empty selects the preset default.
  std::vector<std::size_t> head_dims;
  float dropout_p = 0.3f;
  std::size_t input_rows = 192;
  std::size_t input_cols = 256;
  /// Projected identity shortcut around each block's convolution pair.
  bool residual = true;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  std::vector<std::size_t> resolved_head_dims() const;
  /// Width of the pooled vector fed to the head.
  std::size_t pooled_dim() const;
  /// Spatial extents after the encoder (one 2x2 pool per block but the last).
  std::size_t feature_rows() const;
  std::size_t feature_cols() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Small block widths used by desk-scale training runs and gradient checks.
ModelConfig reduced_config(Preset preset = Preset::channel, std::size_t rows = 192, std::size_t cols = 256);

/// reduced_config with the attention MLP kept at its full hidden width; the
/// desk-scale training configuration.
ModelConfig reduced_width_config(Preset preset = Preset::channel, std::size_t rows = 192, std::size_t cols = 256);

/// Named tensors in declaration order. Batchnorm running statistics are
/// stored alongside the learnable tensors but flagged as non-trainable.
template <typename T>
struct BasicParameters {
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
    bool trainable = true;
  };
  std::vector<Entry> entries;

  BasicTensor<T>& at(std::string_view name);
  const BasicTensor<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  void add(std::string name, BasicTensor<T> tensor, bool trainable);

  std::size_t total_numel() const;
  std::size_t trainable_numel() const;
  /// Deep copy; gradients are not carried over.
  BasicParameters clone() const;
  template <typename U>
  BasicParameters<U> cast() const {
    BasicParameters<U> out;
    for (const auto& e : entries) out.add(e.name, e.tensor.template cast<U>(e.trainable), e.trainable);
    return out;
  }
  void zero_grad();
  bool bitwise_equal(const BasicParameters& other) const;
};

using Parameters = BasicParameters<float>;

/// He (fan-in) normal weights, zero biases and beta, unit gamma, running
/// mean 0 / var 1. Deterministic in the seed.
template <typename T = float>
BasicParameters<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Learnable scalar count (running statistics excluded), derived from the
/// declared shapes alone.
std::size_t count_params(const ModelConfig& config);

/// Name, shape and trainable flag of every tensor init_params declares.
struct ParamSpec {
  std::string name;
  Shape shape;
  bool trainable;
};
std::vector<ParamSpec> param_specs(const ModelConfig& config);

template <typename T>
struct EncodeOutput {
  BasicTensor<T> features;
  /// Output shape of each block, batch dimension included.
  std::vector<Shape> block_shapes;
};

template <typename T>
struct PoolOutput {
  BasicTensor<T> pooled;
  /// [N,G,S] attention distributions (G = channels or 1). Undefined for
  /// cnn-only. With several heads this is the first head's map.
  BasicTensor<T> weights;
};

template <typename T>
struct ClassifyOutput {
  BasicTensor<T> logits;  ///< [N,1]
  BasicTensor<T> probs;   ///< [N,1]
};

template <typename T>
struct ForwardOutput {
  BasicTensor<T> logits;
  BasicTensor<T> probs;
  BasicTensor<T> attention;
  BasicTensor<T> pooled;
  std::vector<Shape> block_shapes;
};

/// Running statistics inside `params` are updated in train mode.
template <typename T>
EncodeOutput<T> encode(Tape* tape, const BasicTensor<T>& x, BasicParameters<T>& params, const ModelConfig& config, Mode mode);

/// Raw per-position attention scores before the softmax: [N,G,S].
template <typename T>
BasicTensor<T> attention_scores(Tape* tape, const BasicTensor<T>& features, const BasicParameters<T>& params,
                                const ModelConfig& config, std::size_t head = 0);

template <typename T>
PoolOutput<T> attention_pool(Tape* tape, const BasicTensor<T>& features, const BasicParameters<T>& params,
                             const ModelConfig& config);

/// `rng` drives dropout and is required in train mode when dropout_p > 0.
template <typename T>
ClassifyOutput<T> classify(Tape* tape, const BasicTensor<T>& pooled, const BasicParameters<T>& params,
                           const ModelConfig& config, Mode mode, Rng* rng = nullptr);

template <typename T>
ForwardOutput<T> forward(Tape* tape, const BasicTensor<T>& x, BasicParameters<T>& params, const ModelConfig& config,
                         Mode mode, Rng* rng = nullptr);

/// Packs equally sized slices into [N,1,rows,cols].
Tensor slices_to_batch(const std::vector<const std::vector<float>*>& slices, std::size_t rows, std::size_t cols);

/// Eval-mode probabilities for a list of slices, `batch` at a time. The
/// result does not depend on the batch size.
std::vector<float> predict_probs(const std::vector<const std::vector<float>*>& slices, Parameters& params,
                                 const ModelConfig& config, std::size_t batch = 8);

}  // namespace aqc
