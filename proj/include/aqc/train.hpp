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
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aqc/dataset.hpp"
#include "aqc/model.hpp"

namespace aqc {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  double clip_norm = 1.0;
  double sched_factor = 0.5;
  std::size_t sched_patience = 20;
  std::size_t early_stop_patience = 20;
  /// Fraction of subjects held out for validation, stratified by label.
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  /// First and second moments, one buffer per trainable parameter in
  /// declaration order.
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t t = 0;

  static OptimizerState for_params(const Parameters& params);
};

/// Global L2 norm over the gradients of every trainable parameter.
double global_grad_norm(const Parameters& params);

/// Scales all gradients by max_norm / norm when norm > max_norm. Returns the
/// factor applied (1 when untouched).
double clip_gradients(Parameters& params, double max_norm);

/// Bias-corrected Adam update. Increments state.t first. Parameters without
/// a gradient buffer are treated as having a zero gradient.
void adam_step(Parameters& params, OptimizerState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double epsilon = 1e-8);

/// Reduce-on-plateau: after `patience` consecutive epochs without a strictly
/// lower validation loss, the rate is multiplied by `factor` and the counter
/// restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience);
  /// Returns the rate to use for the next epoch.
  double step(double val_loss);
  double lr() const { return lr_; }
  std::size_t bad_epochs() const { return bad_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

/// Tracks the best validation loss and its parameter snapshot.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  /// `epoch` is 1-based. Returns true when training should stop.
  bool step(double val_loss, const Parameters& params, std::size_t epoch);
  bool has_best() const { return best_epoch_ > 0; }
  const Parameters& best_params() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t bad_epochs() const { return bad_; }

 private:
  std::size_t patience_;
  Parameters best_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  /// Learning rate used during this epoch.
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;     ///< before clipping
  double clipped_norm = 0.0;  ///< after clipping
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  /// "early_stop", "max_epochs" or "target_accuracy".
  std::string stop_reason;
  std::vector<std::string> train_subjects;
  std::vector<std::string> val_subjects;
};

/// Tab-separated history: a header line, one line per epoch
/// (epoch, train_loss, val_loss, val_accuracy, lr), then a summary line
/// "# best_epoch <n> best_val_loss <x> stop <reason>". Values are printed
/// with round-trip precision; wall time is left out so the file depends only
/// on the inputs and seed.
void write_history(const TrainHistory& history, std::ostream& out);
void write_history(const TrainHistory& history, const std::string& path);

/// Per-step records: epoch, batch, loss, grad_norm, clipped_norm.
void write_steps(const TrainHistory& history, std::ostream& out);
void write_steps(const TrainHistory& history, const std::string& path);

struct SubjectSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Subject-level split stratified by label. Each label group contributes
/// round(val_fraction * group size) subjects to validation; at least one
/// subject overall goes to each side. Throws ConfigError when that is
/// impossible or a subject is unlabelled.
SubjectSplit split_subjects(const std::vector<Subject>& subjects, double val_fraction, std::uint64_t seed);

/// Mean eval-mode BCE and slice accuracy over every slice of `subjects`.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy evaluate_loss(const std::vector<const Subject*>& subjects, Parameters& params, const ModelConfig& config,
                           std::size_t batch = 16);

struct FitOptions {
  /// Called after every epoch.
  std::function<void(const EpochRecord&, const TrainHistory&)> on_epoch;
  /// Starting weights; init_params(config, derive_seed(seed, 1)) when empty.
  std::optional<Parameters> initial;
  /// Stop once an epoch that sets a new best validation loss also reaches
  /// this validation accuracy; its snapshot is the one returned.
  std::optional<double> target_val_accuracy;
};

struct FitResult {
  Parameters params;  ///< best-validation snapshot
  TrainHistory history;
};

/// Trains on `train` and validates on `val`. Each epoch shuffles all
/// training slices, runs forward, BCE, backward, clipping and Adam per batch,
/// then evaluates, steps the scheduler and checks early stopping.
FitResult fit(const std::vector<const Subject*>& train, const std::vector<const Subject*>& val,
              const ModelConfig& model, const TrainConfig& config, const FitOptions& options = {});

/// Splits `subjects` with split_subjects and trains.
FitResult fit(const std::vector<Subject>& subjects, const ModelConfig& model, const TrainConfig& config,
              const FitOptions& options = {});

}  // namespace aqc
