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

#include "aqc/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "aqc/error.hpp"

namespace aqc {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(sched_factor > 0 && sched_factor < 1)) throw ConfigError("sched_factor must be in (0, 1)");
  if (sched_patience == 0 || early_stop_patience == 0) throw ConfigError("patience values must be positive");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must be in (0, 1)");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("Adam epsilon must be positive");
}

OptimizerState OptimizerState::for_params(const Parameters& params) {
  OptimizerState s;
  for (const auto& e : params.entries) {
    if (!e.trainable) continue;
    s.m.emplace_back(e.tensor.numel(), 0.0f);
    s.v.emplace_back(e.tensor.numel(), 0.0f);
  }
  return s;
}

double global_grad_norm(const Parameters& params) {
  double sq = 0.0;
  for (const auto& e : params.entries) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(Parameters& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& e : params.entries) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (auto& g : e.tensor.grad()) g = static_cast<float>(g * factor);
  }
  return factor;
}

void adam_step(Parameters& params, OptimizerState& state, double lr, double beta1, double beta2, double epsilon) {
  std::size_t k = 0;
  for (const auto& e : params.entries) {
    if (!e.trainable) continue;
    if (k >= state.m.size() || state.m[k].size() != e.tensor.numel() || state.v[k].size() != e.tensor.numel())
      throw ContractError("optimizer state does not match parameter '" + e.name + "'");
    ++k;
  }
  if (k != state.m.size()) throw ContractError("optimizer state has extra buffers");

  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  k = 0;
  for (auto& e : params.entries) {
    if (!e.trainable) continue;
    auto& m = state.m[k];
    auto& v = state.v[k];
    ++k;
    auto theta = e.tensor.data();
    const bool has_grad = e.tensor.has_grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? e.tensor.grad()[i] : 0.0;
      const double mi = beta1 * m[i] + (1 - beta1) * g;
      const double vi = beta2 * v[i] + (1 - beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / c1, vhat = vi / c2;
      theta[i] = static_cast<float>(theta[i] - lr * mhat / (std::sqrt(vhat) + epsilon));
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, double factor, std::size_t patience)
    : lr_(lr), factor_(factor), patience_(patience) {}

double PlateauScheduler::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
  } else if (++bad_ >= patience_) {
    lr_ *= factor_;
    bad_ = 0;
  }
  return lr_;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {}

bool EarlyStopping::step(double val_loss, const Parameters& params, std::size_t epoch) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_ = params.clone();
    best_epoch_ = epoch;
    bad_ = 0;
    return false;
  }
  return ++bad_ >= patience_;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double slice_bce(double p, int label) {
  p = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return label ? -std::log(p) : -std::log(1.0 - p);
}

int require_label(const Subject& s) {
  if (!s.label) throw ConfigError("subject " + s.subject_id + " has no label and cannot be used for training");
  return *s.label;
}

}  // namespace

void write_history(const TrainHistory& history, std::ostream& out) {
  out << "epoch\ttrain_loss\tval_loss\tval_accuracy\tlr\n";
  for (const auto& e : history.epochs)
    out << e.epoch << '\t' << fmt(e.train_loss) << '\t' << fmt(e.val_loss) << '\t' << fmt(e.val_accuracy) << '\t'
        << fmt(e.lr) << '\n';
  out << "# best_epoch " << history.best_epoch << " best_val_loss " << fmt(history.best_val_loss) << " stop "
      << history.stop_reason << '\n';
}

void write_history(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history file " + path);
  write_history(history, out);
  if (!out) throw IoError("failed writing history file " + path);
}

void write_steps(const TrainHistory& history, std::ostream& out) {
  out << "epoch\tbatch\tloss\tgrad_norm\tclipped_norm\n";
  for (const auto& s : history.steps)
    out << s.epoch << '\t' << s.batch << '\t' << fmt(s.loss) << '\t' << fmt(s.grad_norm) << '\t' << fmt(s.clipped_norm)
        << '\n';
}

void write_steps(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write step log " + path);
  write_steps(history, out);
  if (!out) throw IoError("failed writing step log " + path);
}

SubjectSplit split_subjects(const std::vector<Subject>& subjects, double val_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < subjects.size(); ++i) groups[require_label(subjects[i])].push_back(i);
  Rng rng(seed);
  SubjectSplit split;
  std::vector<std::size_t> leftovers;
  for (auto& [label, idx] : groups) {
    rng.shuffle(idx.begin(), idx.end());
    const auto take = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idx.size())));
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(take, idx.size())));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(take, idx.size())), idx.end());
  }
  if (split.val.empty() && split.train.size() >= 2) {
    split.val.push_back(split.train.back());
    split.train.pop_back();
  }
  if (split.train.empty() || split.val.empty())
    throw ConfigError("cannot split " + std::to_string(subjects.size()) +
                      " subjects into non-empty training and validation sets");
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

LossAccuracy evaluate_loss(const std::vector<const Subject*>& subjects, Parameters& params, const ModelConfig& config,
                           std::size_t batch) {
  std::vector<const std::vector<float>*> slices;
  std::vector<int> labels;
  for (const auto* s : subjects) {
    const int y = require_label(*s);
    for (const auto& sl : s->slices) {
      slices.push_back(&sl.values);
      labels.push_back(y);
    }
  }
  if (slices.empty()) throw ConfigError("no slices to evaluate");
  const auto probs = predict_probs(slices, params, config, batch);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    loss += slice_bce(probs[i], labels[i]);
    correct += (probs[i] >= 0.5f) == (labels[i] == 1);
  }
  return {loss / static_cast<double>(probs.size()), static_cast<double>(correct) / static_cast<double>(probs.size())};
}

FitResult fit(const std::vector<const Subject*>& train, const std::vector<const Subject*>& val,
              const ModelConfig& model, const TrainConfig& config, const FitOptions& options) {
  config.validate();
  model.validate();
  if (train.empty()) throw ConfigError("training split is empty");
  if (val.empty()) throw ConfigError("validation split is empty");

  struct SliceRef {
    const std::vector<float>* values;
    float label;
  };
  std::vector<SliceRef> pool;
  for (const auto* s : train) {
    const float y = static_cast<float>(require_label(*s));
    for (const auto& sl : s->slices) {
      if (sl.rows != model.input_rows || sl.cols != model.input_cols)
        throw ShapeError("subject " + s->subject_id + " has " + std::to_string(sl.rows) + "x" + std::to_string(sl.cols) +
                         " slices; the model expects " + std::to_string(model.input_rows) + "x" +
                         std::to_string(model.input_cols));
      pool.push_back({&sl.values, y});
    }
  }
  if (pool.empty()) throw ConfigError("training split has no slices");

  FitResult result;
  auto& history = result.history;
  for (const auto* s : train) history.train_subjects.push_back(s->subject_id);
  for (const auto* s : val) history.val_subjects.push_back(s->subject_id);

  Parameters params = options.initial ? options.initial->clone() : init_params(model, derive_seed(config.seed, 1));
  OptimizerState opt = OptimizerState::for_params(params);
  PlateauScheduler scheduler(config.lr, config.sched_factor, config.sched_patience);
  EarlyStopping stopper(config.early_stop_patience);
  Rng dropout_rng(derive_seed(config.seed, 3));
  std::vector<std::size_t> order(pool.size());

  history.stop_reason = "max_epochs";
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = scheduler.lr();
    std::iota(order.begin(), order.end(), 0u);
    Rng shuffle_rng(derive_seed(derive_seed(config.seed, 2), epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const std::vector<float>*> xs;
      std::vector<float> ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(pool[order[i]].values);
        ys.push_back(pool[order[i]].label);
      }
      params.zero_grad();
      Tape tape;
      const auto out = forward<float>(&tape, slices_to_batch(xs, model.input_rows, model.input_cols), params, model,
                                      Mode::train, &dropout_rng);
      auto loss = ops::bce_loss<float>(&tape, out.probs, ys);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericError("non-finite training loss (lr " + fmt(lr) + ", epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_id) + ")");
      tape.backward(loss);
      StepRecord step;
      step.epoch = epoch;
      step.batch = batch_id;
      step.loss = value;
      step.grad_norm = global_grad_norm(params);
      if (!std::isfinite(step.grad_norm))
        throw NumericError("non-finite gradient norm (lr " + fmt(lr) + ", epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_id) + ")");
      clip_gradients(params, config.clip_norm);
      step.clipped_norm = global_grad_norm(params);
      history.steps.push_back(step);
      adam_step(params, opt, lr, config.beta1, config.beta2, config.epsilon);
      loss_sum += value * static_cast<double>(end - start);
    }

    const auto v = evaluate_loss(val, params, model, config.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(pool.size());
    rec.val_loss = v.loss;
    rec.val_accuracy = v.accuracy;
    rec.lr = lr;
    if (!std::isfinite(rec.val_loss))
      throw NumericError("non-finite validation loss (lr " + fmt(lr) + ", epoch " + std::to_string(epoch) + ")");
    scheduler.step(rec.val_loss);
    bool stop = stopper.step(rec.val_loss, params, epoch);
    const bool reached = options.target_val_accuracy && stopper.best_epoch() == epoch &&
                         rec.val_accuracy >= *options.target_val_accuracy;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(rec);
    history.best_epoch = stopper.best_epoch();
    history.best_val_loss = stopper.best_loss();
    if (stop) history.stop_reason = "early_stop";
    if (reached) {
      history.stop_reason = "target_accuracy";
      stop = true;
    }
    if (options.on_epoch) options.on_epoch(rec, history);
    if (stop) break;
  }
  result.params = stopper.best_params().clone();
  return result;
}

FitResult fit(const std::vector<Subject>& subjects, const ModelConfig& model, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  const auto split = split_subjects(subjects, config.val_fraction, derive_seed(config.seed, 4));
  std::vector<const Subject*> train, val;
  for (auto i : split.train) train.push_back(&subjects[i]);
  for (auto i : split.val) val.push_back(&subjects[i]);
  return fit(train, val, model, config, options);
}

}  // namespace aqc
