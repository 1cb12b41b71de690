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

#include "aqc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aqc/error.hpp"

namespace aqc {

std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::channel: return "channel";
    case Preset::token: return "token";
    case Preset::cnn_only: return "cnn-only";
    case Preset::cnn_attn: return "cnn-attn";
  }
  return "channel";
}

Preset parse_preset(std::string_view name) {
  if (name == "channel" || name == "full") return Preset::channel;
  if (name == "token") return Preset::token;
  if (name == "cnn-only") return Preset::cnn_only;
  if (name == "cnn-attn") return Preset::cnn_attn;
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected channel, token, cnn-only or cnn-attn)");
}

std::vector<std::size_t> ModelConfig::resolved_head_dims() const {
  if (!head_dims.empty()) return head_dims;
  switch (preset) {
    case Preset::token: return {64, 32, 16, 1};
    case Preset::cnn_attn: return {1};
    default: return {128, 64, 1};
  }
}

std::size_t ModelConfig::pooled_dim() const {
  return preset == Preset::token ? token_dim : block_channels.back();
}

std::size_t ModelConfig::feature_rows() const { return input_rows >> (block_channels.size() - 1); }
std::size_t ModelConfig::feature_cols() const { return input_cols >> (block_channels.size() - 1); }

void ModelConfig::validate() const {
  if (block_channels.empty()) throw ConfigError("block_channels must not be empty");
  for (std::size_t i = 0; i < block_channels.size(); ++i) {
    if (block_channels[i] == 0) throw ConfigError("block_channels entries must be positive");
    if (i > 0 && block_channels[i] <= block_channels[i - 1])
      throw ConfigError("block_channels must be strictly increasing");
  }
  const std::size_t factor = std::size_t{1} << (block_channels.size() - 1);
  if (input_rows == 0 || input_cols == 0 || input_rows % factor || input_cols % factor)
    throw ConfigError("input extents must be positive multiples of " + std::to_string(factor));
  const auto dims = resolved_head_dims();
  if (dims.back() != 1) throw ConfigError("head_dims must end in 1");
  if (std::find(dims.begin(), dims.end(), 0u) != dims.end()) throw ConfigError("head_dims entries must be positive");
  if (attention_hidden == 0) throw ConfigError("attention_hidden must be positive");
  if (attention_heads == 0) throw ConfigError("attention_heads must be at least 1");
  if (preset == Preset::token && token_dim == 0) throw ConfigError("token_dim must be positive");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ConfigError("dropout_p must be in [0, 1)");
}

ModelConfig reduced_config(Preset preset, std::size_t rows, std::size_t cols) {
  ModelConfig c;
  c.preset = preset;
  c.block_channels = {4, 8, 16};
  c.attention_hidden = 16;
  c.token_dim = 8;
  c.input_rows = rows;
  c.input_cols = cols;
  switch (preset) {
    case Preset::token: c.head_dims = {8, 4, 1}; break;
    case Preset::cnn_attn: c.head_dims = {1}; break;
    default: c.head_dims = {16, 8, 1}; break;
  }
  return c;
}

ModelConfig reduced_width_config(Preset preset, std::size_t rows, std::size_t cols) {
  ModelConfig c = reduced_config(preset, rows, cols);
  c.attention_hidden = ModelConfig{}.attention_hidden;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
BasicTensor<T>& BasicParameters<T>::at(std::string_view name) {
  for (auto& e : entries)
    if (e.name == name) return e.tensor;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const BasicTensor<T>& BasicParameters<T>::at(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
bool BasicParameters<T>::contains(std::string_view name) const {
  return std::any_of(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == name; });
}

template <typename T>
void BasicParameters<T>::add(std::string name, BasicTensor<T> tensor, bool trainable) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  entries.push_back({std::move(name), std::move(tensor), trainable});
}

template <typename T>
std::size_t BasicParameters<T>::total_numel() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.tensor.numel();
  return n;
}

template <typename T>
std::size_t BasicParameters<T>::trainable_numel() const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

template <typename T>
BasicParameters<T> BasicParameters<T>::clone() const {
  BasicParameters out;
  for (const auto& e : entries) {
    auto t = e.tensor.clone();
    t.set_requires_grad(e.tensor.requires_grad());
    out.entries.push_back({e.name, std::move(t), e.trainable});
  }
  return out;
}

template <typename T>
void BasicParameters<T>::zero_grad() {
  for (auto& e : entries)
    if (e.trainable) e.tensor.zero_grad();
}

template <typename T>
bool BasicParameters<T>::bitwise_equal(const BasicParameters& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.name != b.name || a.tensor.shape() != b.tensor.shape()) return false;
    if (std::memcmp(a.tensor.data().data(), b.tensor.data().data(), a.tensor.numel() * sizeof(T)) != 0) return false;
  }
  return true;
}

namespace {

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b + 1) + "."; }
std::string head_prefix(std::size_t h) { return "attention." + std::to_string(h) + "."; }

// Fan-in used for He initialisation, 0 for tensors that start constant.
struct InitRule {
  std::size_t fan_in = 0;
  float constant = 0.0f;
};

struct DeclaredParam {
  ParamSpec spec;
  InitRule init;
};

std::vector<DeclaredParam> declare(const ModelConfig& config) {
  config.validate();
  std::vector<DeclaredParam> out;
  auto weight = [&](std::string name, Shape shape, std::size_t fan_in) {
    out.push_back({{std::move(name), std::move(shape), true}, {fan_in, 0.0f}});
  };
  auto constant = [&](std::string name, Shape shape, float value, bool trainable = true) {
    out.push_back({{std::move(name), std::move(shape), trainable}, {0, value}});
  };
  auto batchnorm = [&](const std::string& p, std::size_t c) {
    constant(p + "gamma", {c}, 1.0f);
    constant(p + "beta", {c}, 0.0f);
    constant(p + "running_mean", {c}, 0.0f, false);
    constant(p + "running_var", {c}, 1.0f, false);
  };

  std::size_t cin = 1;
  for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
    const auto p = block_prefix(b);
    const auto cout = config.block_channels[b];
    weight(p + "conv1.weight", {cout, cin, 3, 3}, cin * 9);
    constant(p + "conv1.bias", {cout}, 0.0f);
    batchnorm(p + "bn1.", cout);
    weight(p + "conv2.weight", {cout, cout, 3, 3}, cout * 9);
    constant(p + "conv2.bias", {cout}, 0.0f);
    batchnorm(p + "bn2.", cout);
    if (config.residual) {
      weight(p + "shortcut.weight", {cout, cin, 1, 1}, cin);
      constant(p + "shortcut.bias", {cout}, 0.0f);
    }
    cin = cout;
  }

  const std::size_t hidden = config.attention_hidden;
  switch (config.preset) {
    case Preset::channel:
    case Preset::cnn_attn:
      for (std::size_t h = 0; h < config.attention_heads; ++h) {
        const auto p = head_prefix(h);
        weight(p + "w1", {hidden}, 1);
        constant(p + "b1", {hidden}, 0.0f);
        weight(p + "w2", {hidden}, hidden);
        constant(p + "b2", {1}, 0.0f);
      }
      break;
    case Preset::token:
      weight("token.embed.weight", {config.token_dim, cin, 1, 1}, cin);
      constant("token.embed.bias", {config.token_dim}, 0.0f);
      for (std::size_t h = 0; h < config.attention_heads; ++h) {
        const auto p = head_prefix(h);
        weight(p + "score1.weight", {hidden, config.token_dim, 1, 1}, config.token_dim);
        constant(p + "score1.bias", {hidden}, 0.0f);
        weight(p + "score2.weight", {1, hidden, 1, 1}, hidden);
        constant(p + "score2.bias", {1}, 0.0f);
      }
      break;
    case Preset::cnn_only: break;
  }

  std::size_t din = config.pooled_dim();
  const auto dims = config.resolved_head_dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto p = "head." + std::to_string(i) + ".";
    weight(p + "weight", {dims[i], din}, din);
    constant(p + "bias", {dims[i]}, 0.0f);
    din = dims[i];
  }
  return out;
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& config) {
  std::vector<ParamSpec> out;
  for (auto& d : declare(config)) out.push_back(std::move(d.spec));
  return out;
}

std::size_t count_params(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& s : param_specs(config))
    if (s.trainable) n += shape_numel(s.shape);
  return n;
}

template <typename T>
BasicParameters<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  BasicParameters<T> params;
  for (auto& d : declare(config)) {
    auto t = BasicTensor<T>::full(d.spec.shape, static_cast<T>(d.init.constant), false);
    if (d.init.fan_in > 0) {
      const double std = std::sqrt(2.0 / static_cast<double>(d.init.fan_in));
      for (auto& v : t.data()) v = static_cast<T>(std * rng.normal());
    }
    t.set_requires_grad(d.spec.trainable);
    params.add(std::move(d.spec.name), std::move(t), d.spec.trainable);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename T>
EncodeOutput<T> encode(Tape* tape, const BasicTensor<T>& x, BasicParameters<T>& params, const ModelConfig& config,
                       Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != config.input_rows || x.dim(3) != config.input_cols)
    throw ShapeError("encoder expects [N,1," + std::to_string(config.input_rows) + "," +
                     std::to_string(config.input_cols) + "], got " + shape_string(x.shape()));
  EncodeOutput<T> out;
  BasicTensor<T> h = x;
  const std::size_t blocks = config.block_channels.size();
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto p = block_prefix(b);
    auto y = ops::conv2d(tape, h, params.at(p + "conv1.weight"), params.at(p + "conv1.bias"));
    y = ops::batchnorm2d(tape, y, params.at(p + "bn1.gamma"), params.at(p + "bn1.beta"),
                         params.at(p + "bn1.running_mean"), params.at(p + "bn1.running_var"), mode);
    y = ops::relu(tape, y);
    y = ops::conv2d(tape, y, params.at(p + "conv2.weight"), params.at(p + "conv2.bias"));
    y = ops::batchnorm2d(tape, y, params.at(p + "bn2.gamma"), params.at(p + "bn2.beta"),
                         params.at(p + "bn2.running_mean"), params.at(p + "bn2.running_var"), mode);
    if (config.residual)
      y = ops::add(tape, y, ops::conv2d(tape, h, params.at(p + "shortcut.weight"), params.at(p + "shortcut.bias")));
    y = ops::relu(tape, y);
    if (b + 1 < blocks) y = ops::maxpool2d(tape, y);
    out.block_shapes.push_back(y.shape());
    h = std::move(y);
  }
  out.features = std::move(h);
  return out;
}

namespace {

template <typename T>
BasicTensor<T> token_embed(Tape* tape, const BasicTensor<T>& features, const BasicParameters<T>& params) {
  return ops::conv2d(tape, features, params.at("token.embed.weight"), params.at("token.embed.bias"));
}

// Token scores from [N,D,H,W] embeddings -> [N,1,S].
template <typename T>
BasicTensor<T> token_scores(Tape* tape, const BasicTensor<T>& e, const BasicParameters<T>& params, std::size_t head) {
  const auto p = head_prefix(head);
  auto hdn = ops::relu(tape, ops::conv2d(tape, e, params.at(p + "score1.weight"), params.at(p + "score1.bias")));
  auto score = ops::conv2d(tape, hdn, params.at(p + "score2.weight"), params.at(p + "score2.bias"));
  return ops::reshape(tape, score, {e.dim(0), 1, e.dim(2) * e.dim(3)});
}

}  // namespace

template <typename T>
BasicTensor<T> attention_scores(Tape* tape, const BasicTensor<T>& features, const BasicParameters<T>& params,
                                const ModelConfig& config, std::size_t head) {
  if (features.rank() != 4) throw ShapeError("attention expects a [N,C,H,W] feature map");
  const std::size_t n = features.dim(0), c = features.dim(1), s = features.dim(2) * features.dim(3);
  const auto p = head_prefix(head);
  switch (config.preset) {
    case Preset::channel:
    case Preset::cnn_attn: {
      auto flat = ops::reshape(tape, features, {n, c, s});
      return ops::pointwise_mlp(tape, flat, params.at(p + "w1"), params.at(p + "b1"), params.at(p + "w2"),
                                params.at(p + "b2"));
    }
    case Preset::token:
      return token_scores(tape, token_embed(tape, features, params), params, head);
    case Preset::cnn_only: break;
  }
  throw ContractError("cnn-only preset has no attention");
}

template <typename T>
PoolOutput<T> attention_pool(Tape* tape, const BasicTensor<T>& features, const BasicParameters<T>& params,
                             const ModelConfig& config) {
  if (features.rank() != 4) throw ShapeError("pooling expects a [N,C,H,W] feature map");
  PoolOutput<T> out;
  if (config.preset == Preset::cnn_only) {
    out.pooled = ops::global_avg_pool(tape, features);
    return out;
  }
  const std::size_t n = features.dim(0), s = features.dim(2) * features.dim(3);
  BasicTensor<T> embed, values;
  if (config.preset == Preset::token) {
    embed = token_embed(tape, features, params);
    values = ops::reshape(tape, embed, {n, config.token_dim, s});
  } else {
    values = ops::reshape(tape, features, {n, features.dim(1), s});
  }
  for (std::size_t h = 0; h < config.attention_heads; ++h) {
    auto scores = config.preset == Preset::token ? token_scores(tape, embed, params, h)
                                                 : attention_scores(tape, features, params, config, h);
    auto alpha = ops::softmax(tape, scores, 2);
    auto pooled = ops::weighted_sum(tape, alpha, values);
    if (h == 0) {
      out.weights = alpha;
      out.pooled = pooled;
    } else {
      out.pooled = ops::add(tape, out.pooled, pooled);
    }
  }
  if (config.attention_heads > 1) {
    const auto scale = BasicTensor<T>::full(out.pooled.shape(), static_cast<T>(1.0 / config.attention_heads));
    out.pooled = ops::mul(tape, out.pooled, scale);
  }
  return out;
}

template <typename T>
ClassifyOutput<T> classify(Tape* tape, const BasicTensor<T>& pooled, const BasicParameters<T>& params,
                           const ModelConfig& config, Mode mode, Rng* rng) {
  if (pooled.rank() != 2 || pooled.dim(1) != config.pooled_dim())
    throw ShapeError("head expects [N," + std::to_string(config.pooled_dim()) + "], got " + shape_string(pooled.shape()));
  const auto dims = config.resolved_head_dims();
  const bool stochastic = mode == Mode::train && config.dropout_p > 0.0f;
  if (stochastic && rng == nullptr) throw ContractError("train-mode dropout needs a random generator");
  Rng unused(0);
  BasicTensor<T> y = pooled;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto p = "head." + std::to_string(i) + ".";
    y = ops::linear(tape, y, params.at(p + "weight"), params.at(p + "bias"));
    if (i + 1 < dims.size()) {
      y = ops::relu(tape, y);
      y = ops::dropout(tape, y, config.dropout_p, mode, rng ? *rng : unused);
    }
  }
  ClassifyOutput<T> out;
  out.logits = y;
  out.probs = ops::sigmoid(tape, y);
  return out;
}

template <typename T>
ForwardOutput<T> forward(Tape* tape, const BasicTensor<T>& x, BasicParameters<T>& params, const ModelConfig& config,
                         Mode mode, Rng* rng) {
  auto enc = encode(tape, x, params, config, mode);
  auto pool = attention_pool(tape, enc.features, params, config);
  auto cls = classify(tape, pool.pooled, params, config, mode, rng);
  ForwardOutput<T> out;
  out.logits = std::move(cls.logits);
  out.probs = std::move(cls.probs);
  out.attention = std::move(pool.weights);
  out.pooled = std::move(pool.pooled);
  out.block_shapes = std::move(enc.block_shapes);
  return out;
}

Tensor slices_to_batch(const std::vector<const std::vector<float>*>& slices, std::size_t rows, std::size_t cols) {
  const std::size_t plane = rows * cols;
  std::vector<float> data;
  data.reserve(slices.size() * plane);
  for (const auto* s : slices) {
    if (s->size() != plane)
      throw ShapeError("slice has " + std::to_string(s->size()) + " values, expected " + std::to_string(plane));
    data.insert(data.end(), s->begin(), s->end());
  }
  return Tensor::from({slices.size(), 1, rows, cols}, std::move(data));
}

std::vector<float> predict_probs(const std::vector<const std::vector<float>*>& slices, Parameters& params,
                                 const ModelConfig& config, std::size_t batch) {
  if (batch == 0) throw ParameterError("batch size must be at least 1");
  std::vector<float> probs;
  probs.reserve(slices.size());
  for (std::size_t start = 0; start < slices.size(); start += batch) {
    const auto end = std::min(slices.size(), start + batch);
    std::vector<const std::vector<float>*> chunk(slices.begin() + static_cast<std::ptrdiff_t>(start),
                                                 slices.begin() + static_cast<std::ptrdiff_t>(end));
    const auto out = forward<float>(nullptr, slices_to_batch(chunk, config.input_rows, config.input_cols), params,
                                    config, Mode::eval);
    for (float p : out.probs.data()) probs.push_back(p);
  }
  return probs;
}

#define AQC_INSTANTIATE_MODEL(T)                                                                                  \
  template struct BasicParameters<T>;                                                                             \
  template BasicParameters<T> init_params<T>(const ModelConfig&, std::uint64_t);                                \
  template EncodeOutput<T> encode<T>(Tape*, const BasicTensor<T>&, BasicParameters<T>&, const ModelConfig&, Mode); \
  template BasicTensor<T> attention_scores<T>(Tape*, const BasicTensor<T>&, const BasicParameters<T>&,          \
                                              const ModelConfig&, std::size_t);                                  \
  template PoolOutput<T> attention_pool<T>(Tape*, const BasicTensor<T>&, const BasicParameters<T>&,             \
                                           const ModelConfig&);                                                  \
  template ClassifyOutput<T> classify<T>(Tape*, const BasicTensor<T>&, const BasicParameters<T>&,               \
                                         const ModelConfig&, Mode, Rng*);                                        \
  template ForwardOutput<T> forward<T>(Tape*, const BasicTensor<T>&, BasicParameters<T>&, const ModelConfig&,   \
                                       Mode, Rng*);

AQC_INSTANTIATE_MODEL(float)
AQC_INSTANTIATE_MODEL(double)

}  // namespace aqc
