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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "aqc/error.hpp"
#include "aqc/train.hpp"

namespace aqc {
namespace {

constexpr std::size_t kSide = 16;

Parameters grad_params(const std::vector<std::vector<float>>& grads) {
  Parameters p;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor t = Tensor::zeros({grads[i].size()}, true);
    auto g = t.ensure_grad();
    std::copy(grads[i].begin(), grads[i].end(), g.begin());
    p.add("p" + std::to_string(i), t, true);
  }
  return p;
}

// Label-1 slices carry a checkerboard on top of the shared smooth ramp.
Subject toy_subject(std::string id, int label, std::uint64_t seed, std::size_t slices = 6) {
  Subject s;
  s.subject_id = std::move(id);
  s.site_id = "toy";
  s.label = label;
  Rng rng(seed);
  for (std::size_t k = 0; k < slices; ++k) {
    Slice2D sl;
    sl.rows = kSide;
    sl.cols = kSide;
    sl.values.resize(kSide * kSide);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x) {
        double v = 0.3 + 0.4 * static_cast<double>(x + y) / (2.0 * kSide) + 0.05 * rng.uniform();
        if (label && (x + y) % 2) v += 0.25;
        sl.values[y * kSide + x] = static_cast<float>(v);
      }
    s.slices.push_back(std::move(sl));
    s.slice_indices.push_back(k);
  }
  return s;
}

std::vector<Subject> toy_cohort(std::size_t n) {
  std::vector<Subject> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(toy_subject("s" + std::to_string(i), static_cast<int>(i % 2), 100 + i));
  return out;
}

ModelConfig toy_model() { return reduced_config(Preset::channel, kSide, kSide); }

TrainConfig toy_train(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.sched_patience = std::min<std::size_t>(20, epochs);
  c.early_stop_patience = std::min<std::size_t>(20, epochs);
  c.batch_size = 8;
  c.seed = 5;
  return c;
}

std::string history_text(const TrainHistory& h) {
  std::ostringstream os;
  write_history(h, os);
  return os.str();
}

TEST(Clip, ScalesAboveThreshold) {
  Parameters p = grad_params({{1.2f}, {0.0f, 1.6f}});
  EXPECT_NEAR(global_grad_norm(p), 2.0, 1e-6);
  EXPECT_NEAR(clip_gradients(p, 1.0), 0.5, 1e-7);
  EXPECT_NEAR(global_grad_norm(p), 1.0, 1e-6);
  EXPECT_NEAR(p.at("p0").grad()[0], 0.6f, 1e-7);
}

TEST(Clip, LeavesSmallAndBoundaryNormsUntouched) {
  Parameters small = grad_params({{0.3f, 0.4f}});
  EXPECT_EQ(clip_gradients(small, 1.0), 1.0);
  EXPECT_EQ(small.at("p0").grad()[0], 0.3f);
  Parameters exact = grad_params({{0.0f, 1.0f}});
  ASSERT_EQ(global_grad_norm(exact), 1.0);
  EXPECT_EQ(clip_gradients(exact, 1.0), 1.0);
  EXPECT_EQ(exact.at("p0").grad()[1], 1.0f);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameters p = grad_params({{0.0f, 0.0f}});
  p.at("p0").data()[0] = 3.0f;
  auto st = OptimizerState::for_params(p);
  adam_step(p, st, 1e-3);
  EXPECT_EQ(st.t, 1u);
  EXPECT_EQ(p.at("p0").data()[0], 3.0f);
  EXPECT_EQ(p.at("p0").data()[1], 0.0f);
}

TEST(Adam, FirstStepClosedForm) {
  Parameters p = grad_params({{0.1f}});
  auto st = OptimizerState::for_params(p);
  adam_step(p, st, 1e-3);
  // m_hat = g and v_hat = g^2 after bias correction at t = 1.
  const double g = static_cast<double>(0.1f);
  const double expected = -1e-3 * g / (std::abs(g) + 1e-8);
  EXPECT_NEAR(p.at("p0").data()[0], expected, 1e-10);
  EXPECT_NEAR(std::abs(p.at("p0").data()[0]), 9.9999e-4, 1e-8);
}

TEST(Adam, OddInGradient) {
  Parameters p = grad_params({{0.37f, -0.37f}});
  auto st = OptimizerState::for_params(p);
  for (int i = 0; i < 3; ++i) adam_step(p, st, 1e-2);
  EXPECT_EQ(p.at("p0").data()[0], -p.at("p0").data()[1]);
  EXPECT_LT(p.at("p0").data()[0], 0.0f);
}

TEST(Adam, MismatchedStateIsContractError) {
  Parameters p = grad_params({{1.0f, 2.0f}});
  auto st = OptimizerState::for_params(grad_params({{1.0f}}));
  EXPECT_THROW(adam_step(p, st, 1e-3), ContractError);
  auto extra = OptimizerState::for_params(grad_params({{1.0f, 2.0f}, {3.0f}}));
  EXPECT_THROW(adam_step(p, extra, 1e-3), ContractError);
}

// Counter simulation: lr halves when `patience` consecutive epochs fail to
// improve on the best so far, then the count restarts.
std::vector<double> simulate_schedule(const std::vector<double>& losses, double lr, std::size_t patience) {
  std::vector<double> out;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  for (double v : losses) {
    if (v < best) {
      best = v;
      bad = 0;
    } else if (++bad == patience) {
      lr /= 2;
      bad = 0;
    }
    out.push_back(lr);
  }
  return out;
}

TEST(Scheduler, StrictlyDecreasingNeverReduces) {
  PlateauScheduler s(1e-3, 0.5, 20);
  for (int e = 0; e < 50; ++e) EXPECT_EQ(s.step(1.0 - 0.01 * e), 1e-3);
}

TEST(Scheduler, FlatTraceHalvesOnceAtEpoch21) {
  PlateauScheduler s(1e-3, 0.5, 20);
  std::size_t halvings = 0;
  for (std::size_t epoch = 1; epoch <= 21; ++epoch) {
    const double before = s.lr();
    const double after = s.step(0.7);
    if (after != before) {
      ++halvings;
      EXPECT_EQ(epoch, 21u);
      EXPECT_EQ(after, before * 0.5);
    }
  }
  EXPECT_EQ(halvings, 1u);
}

TEST(Scheduler, ImprovementResetsCounter) {
  std::vector<double> trace(10, 1.0);
  trace.push_back(0.5);
  trace.insert(trace.end(), 25, 0.5);
  const auto expected = simulate_schedule(trace, 1e-3, 20);
  PlateauScheduler s(1e-3, 0.5, 20);
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(s.step(trace[i]), expected[i]) << "epoch " << i + 1;
  // Best set at epoch 11; twenty flat epochs later (epoch 31) the rate halves.
  EXPECT_EQ(expected[29], 1e-3);
  EXPECT_EQ(expected[30], 5e-4);
}

TEST(EarlyStop, RestoresBestEpochWeights) {
  std::vector<double> trace{1.0, 0.5};
  trace.insert(trace.end(), 20, 0.6);
  EarlyStopping stop(20);
  Parameters p;
  p.add("w", Tensor::zeros({1}), true);
  std::size_t stopped_at = 0;
  for (std::size_t epoch = 1; epoch <= trace.size(); ++epoch) {
    p.at("w").data()[0] = static_cast<float>(epoch);
    if (stop.step(trace[epoch - 1], p, epoch)) {
      stopped_at = epoch;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 22u);
  EXPECT_EQ(stop.best_epoch(), 2u);
  EXPECT_EQ(stop.best_loss(), 0.5);
  EXPECT_EQ(stop.best_params().at("w").data()[0], 2.0f);
}

TEST(EarlyStop, ImprovingRunNeverStops) {
  EarlyStopping stop(3);
  Parameters p;
  p.add("w", Tensor::zeros({1}), true);
  for (std::size_t epoch = 1; epoch <= 10; ++epoch) EXPECT_FALSE(stop.step(1.0 / epoch, p, epoch));
  EXPECT_EQ(stop.best_epoch(), 10u);
}

TEST(Split, StratifiedAndDisjoint) {
  auto cohort = toy_cohort(10);
  const auto split = split_subjects(cohort, 0.2, 9);
  ASSERT_EQ(split.val.size(), 2u);
  EXPECT_NE(*cohort[split.val[0]].label, *cohort[split.val[1]].label);
  std::set<std::size_t> all(split.train.begin(), split.train.end());
  for (auto v : split.val) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 10u);
}

TEST(Split, RejectsImpossibleAndUnlabelled) {
  auto one = toy_cohort(1);
  EXPECT_THROW(split_subjects(one, 0.2, 1), ConfigError);
  auto cohort = toy_cohort(4);
  cohort[2].label.reset();
  EXPECT_THROW(split_subjects(cohort, 0.2, 1), ConfigError);
}

TEST(Config, ValidationCatchesBadValues) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.sched_factor = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Fit, FrozenBatchLossDecreases) {
  const auto model = toy_model();
  auto subject = toy_subject("a", 1, 1, 4);
  auto other = toy_subject("b", 0, 2, 4);
  std::vector<const std::vector<float>*> xs;
  std::vector<float> ys;
  for (const auto* s : {&subject, &other})
    for (const auto& sl : s->slices) {
      xs.push_back(&sl.values);
      ys.push_back(static_cast<float>(*s->label));
    }
  const Tensor batch = slices_to_batch(xs, kSide, kSide);
  Parameters params = init_params(model, 17);
  auto opt = OptimizerState::for_params(params);
  std::vector<double> losses;
  for (int step = 0; step < 6; ++step) {
    params.zero_grad();
    Rng mask(99);  // same dropout mask every step
    Tape tape;
    auto out = forward<float>(&tape, batch, params, model, Mode::train, &mask);
    auto loss = ops::bce_loss<float>(&tape, out.probs, ys);
    losses.push_back(loss.item());
    tape.backward(loss);
    clip_gradients(params, 1.0);
    adam_step(params, opt, 1e-3);
  }
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
}

TEST(Fit, ContractsOnSmallRun) {
  const auto cohort = toy_cohort(10);
  auto tc = toy_train(6);
  tc.sched_patience = 1;
  tc.early_stop_patience = 6;
  const auto r = fit(cohort, toy_model(), tc);
  const auto& h = r.history;
  ASSERT_FALSE(h.epochs.empty());

  std::set<std::string> train(h.train_subjects.begin(), h.train_subjects.end());
  for (const auto& v : h.val_subjects) EXPECT_EQ(train.count(v), 0u) << v;
  EXPECT_EQ(train.size() + h.val_subjects.size(), cohort.size());

  for (const auto& s : h.steps) EXPECT_LE(s.clipped_norm, tc.clip_norm + 1e-6);
  EXPECT_EQ(h.epochs.front().lr, tc.lr);
  for (std::size_t i = 1; i < h.epochs.size(); ++i) {
    const double prev = h.epochs[i - 1].lr, cur = h.epochs[i].lr;
    EXPECT_TRUE(cur == prev || cur == prev * 0.5) << "epoch " << h.epochs[i].epoch;
  }

  std::vector<const Subject*> val;
  for (const auto& s : cohort)
    if (!train.count(s.subject_id)) val.push_back(&s);
  Parameters restored = r.params.clone();
  EXPECT_EQ(evaluate_loss(val, restored, toy_model(), tc.batch_size).loss, h.best_val_loss);
  const auto best = std::min_element(h.epochs.begin(), h.epochs.end(),
                                     [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
  EXPECT_EQ(best->epoch, h.best_epoch);
}

TEST(Fit, DeterministicForSeed) {
  const auto cohort = toy_cohort(6);
  const auto tc = toy_train(2);
  const auto a = fit(cohort, toy_model(), tc);
  const auto b = fit(cohort, toy_model(), tc);
  EXPECT_EQ(history_text(a.history), history_text(b.history));
  EXPECT_TRUE(a.params.bitwise_equal(b.params));
  auto other = tc;
  other.seed = 6;
  EXPECT_NE(history_text(fit(cohort, toy_model(), other).history), history_text(a.history));
}

TEST(Fit, HistoryFormat) {
  const auto r = fit(toy_cohort(6), toy_model(), toy_train(2));
  const std::string text = history_text(r.history);
  EXPECT_EQ(text.rfind("epoch\ttrain_loss\tval_loss\tval_accuracy\tlr\n", 0), 0u);
  EXPECT_NE(text.find("\n# best_epoch "), std::string::npos);
  EXPECT_NE(text.find(" stop max_epochs\n"), std::string::npos);
}

TEST(Fit, TargetAccuracyStopsEarly) {
  const auto cohort = toy_cohort(6);
  std::vector<const Subject*> all;
  for (const auto& s : cohort) all.push_back(&s);
  FitOptions opts;
  opts.target_val_accuracy = 0.0;
  const auto r = fit(all, all, toy_model(), toy_train(5), opts);
  EXPECT_EQ(r.history.epochs.size(), 1u);
  EXPECT_EQ(r.history.stop_reason, "target_accuracy");
}

TEST(Fit, NonFiniteLossIsNumericError) {
  auto cohort = toy_cohort(6);
  for (auto& s : cohort)
    if (s.subject_id == "s2") s.slices[0].values[3] = std::numeric_limits<float>::quiet_NaN();
  std::vector<const Subject*> train{&cohort[2]}, val{&cohort[3]};
  try {
    fit(train, val, toy_model(), toy_train(2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr "), std::string::npos) << msg;
  }
}

TEST(Fit, EmptySplitsAreConfigErrors) {
  const auto cohort = toy_cohort(2);
  std::vector<const Subject*> one{&cohort[0]};
  EXPECT_THROW(fit({}, one, toy_model(), toy_train(2)), ConfigError);
  EXPECT_THROW(fit(one, {}, toy_model(), toy_train(2)), ConfigError);
}

TEST(Fit, WrongSliceSizeIsShapeError) {
  const auto cohort = toy_cohort(2);
  std::vector<const Subject*> a{&cohort[0]}, b{&cohort[1]};
  EXPECT_THROW(fit(a, b, reduced_config(Preset::channel, 32, 32), toy_train(2)), ShapeError);
}

}  // namespace
}  // namespace aqc
