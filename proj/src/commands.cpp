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

#include "aqc/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "aqc/error.hpp"
#include "aqc/manifest.hpp"
#include "aqc/nifti.hpp"
#include "aqc/runtime.hpp"

namespace aqc {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<const Subject*> pointers(const std::vector<Subject>& subjects) {
  std::vector<const Subject*> out;
  for (const auto& s : subjects) out.push_back(&s);
  return out;
}

template <typename Write>
void write_file(const fs::path& path, const char* what, Write write) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(std::string("cannot write ") + what + " " + path.string());
  write(f);
  if (!f) throw IoError(std::string("failed writing ") + what + " " + path.string());
}

std::vector<Subject> load_cohort(const fs::path& manifest, const PreprocessOptions& pp) {
  const auto entries = load_manifest(manifest);
  if (entries.empty()) throw ConfigError("manifest " + manifest.string() + " has no entries");
  return load_subjects(entries, pp);
}

PreprocessOptions preprocess_for(const RunConfig& config, const ModelConfig& model) {
  PreprocessOptions pp = config.preprocess;
  pp.rows = model.input_rows;
  pp.cols = model.input_cols;
  return pp;
}

std::string describe_mismatch(const ModelConfig& stored, const ModelConfig& requested) {
  const auto a = to_json(stored), b = to_json(requested);
  std::string out;
  for (const auto& [key, value] : a.items()) {
    if (b.at(key) == value) continue;
    if (!out.empty()) out += "; ";
    out += key + ": checkpoint " + value.dump() + ", requested " + b.at(key).dump();
  }
  return out;
}

}  // namespace

ModelConfig ablation_model(const ModelConfig& base, Preset preset) {
  ModelConfig m = base;
  m.preset = preset;
  const bool reduced = base.block_channels == reduced_config(base.preset).block_channels;
  m.head_dims = reduced ? reduced_config(preset).head_dims : std::vector<std::size_t>{};
  return m;
}

DatasetSummary cmd_generate(const RunConfig& config, std::ostream& out) {
  const auto summary = build_dataset(config.generate, config.paths.data_dir);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_split;  // subjects, corrupted
  std::map<std::string, std::set<std::string>> sites;
  for (const auto& e : summary.entries) {
    const std::string cohort = e.subject_id.substr(0, e.subject_id.find('-'));
    per_split[cohort].first += 1;
    per_split[cohort].second += e.label.value_or(0);
    sites[cohort].insert(e.site_id);
  }
  out << "manifest " << summary.manifest.string() << "\n";
  for (const auto& [cohort, counts] : per_split) {
    out << cohort << ": " << counts.first << " subjects, " << counts.second << " corrupted, sites";
    for (const auto& s : sites[cohort]) out << ' ' << s;
    out << "\n";
  }
  return summary;
}

TrainOutcome cmd_train(const RunConfig& config, const TrainRequest& request, std::ostream& out) {
  if (config.paths.manifest.empty()) throw ConfigError("train needs a manifest (--manifest or paths.manifest)");
  const auto entries = load_manifest(config.paths.manifest);
  const auto train_entries = filter_split(entries, Split::train);
  const auto val_entries = filter_split(entries, Split::val);
  if (train_entries.empty()) throw ConfigError("manifest " + config.paths.manifest.string() + " has no train entries");
  const auto pp = preprocess_for(config, config.model);
  const auto subjects = load_subjects(train_entries, pp);
  out << "training " << preset_name(config.model.preset) << " (" << count_params(config.model) << " parameters) on "
      << subjects.size() << " subjects, " << slice_count(subjects) << " slices\n";

  FitOptions options;
  options.on_epoch = [&](const EpochRecord& e, const TrainHistory& h) {
    out << "epoch " << e.epoch << "  train_loss " << fixed(e.train_loss, 6) << "  val_loss " << fixed(e.val_loss, 6)
        << "  val_acc " << fixed(e.val_accuracy) << "  lr " << e.lr << "  best " << h.best_epoch << "  wait "
        << e.epoch - h.best_epoch << "/" << config.train.early_stop_patience << "  (" << fixed(e.wall_seconds, 1)
        << " s)\n";
    out.flush();
  };
  FitResult fitted;
  if (request.overfit) {
    options.target_val_accuracy = request.target_accuracy;
    const auto all = pointers(subjects);
    fitted = fit(all, all, config.model, config.train, options);
  } else if (!val_entries.empty()) {
    const auto val = load_subjects(val_entries, pp);
    fitted = fit(pointers(subjects), pointers(val), config.model, config.train, options);
  } else {
    fitted = fit(subjects, config.model, config.train, options);
  }

  TrainOutcome outcome;
  outcome.history = fitted.history;
  auto& ck = outcome.checkpoint;
  ck.model = config.model;
  ck.train = config.train;
  ck.params = std::move(fitted.params);
  ck.best_val_loss = outcome.history.best_val_loss;
  ck.metadata = {{"tool", "aqc " + std::string(kVersion)},
                 {"train_manifest", config.paths.manifest.filename().string()},
                 {"best_epoch", std::to_string(outcome.history.best_epoch)},
                 {"epochs_run", std::to_string(outcome.history.epochs.size())},
                 {"stop_reason", outcome.history.stop_reason},
                 {"mode", request.overfit ? "overfit" : "standard"}};
  save_checkpoint(ck, config.paths.checkpoint);
  write_history(outcome.history, config.paths.history.string());
  write_steps(outcome.history, config.paths.steps_path().string());
  out << "stopped: " << outcome.history.stop_reason << "; best epoch " << outcome.history.best_epoch << " val_loss "
      << fixed(outcome.history.best_val_loss, 6) << "\n"
      << "checkpoint " << config.paths.checkpoint.string() << "\nhistory " << config.paths.history.string() << "\n";
  return outcome;
}

std::vector<CohortReport> cmd_eval(const RunConfig& config, const EvalRequest& request, std::ostream& out) {
  auto ck = load_checkpoint(request.checkpoint);
  if (request.expected_model && !(*request.expected_model == ck.model))
    throw ConfigError("checkpoint " + request.checkpoint.string() + " does not match the requested model (" +
                      describe_mismatch(ck.model, *request.expected_model) + ")");
  if (request.cohorts.empty()) throw ConfigError("eval needs at least one manifest");
  const auto pp = preprocess_for(config, ck.model);
  std::vector<CohortReport> reports;
  for (const auto& c : request.cohorts) {
    const auto subjects = load_cohort(c.manifest, pp);
    reports.push_back({c.name, c.kind, evaluate(subjects, ck.params, ck.model, config.eval)});
  }
  write_report(out, reports, request.report);
  if (!config.paths.report.empty())
    write_file(config.paths.report, "report", [&](std::ostream& f) { write_report(f, reports, request.report); });
  if (!config.paths.records.empty())
    write_file(config.paths.records, "report records", [&](std::ostream& f) { write_report_records(f, reports); });
  if (!config.paths.slice_dump.empty()) {
    std::vector<SlicePrediction> all;
    for (const auto& r : reports) all.insert(all.end(), r.result.slices.begin(), r.result.slices.end());
    write_file(config.paths.slice_dump, "slice dump", [&](std::ostream& f) { write_slice_dump(all, f); });
  }
  return reports;
}

PredictOutcome cmd_predict(const RunConfig& config, const fs::path& checkpoint, const fs::path& volume,
                           bool print_slices, std::ostream& out) {
  auto ck = load_checkpoint(checkpoint);
  const Volume vol = load_nifti(volume);
  ManifestEntry entry;
  entry.path = volume;
  entry.subject_id = volume.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".hdr", ".img"}) {
    const std::string e = ext;
    auto& id = entry.subject_id;
    if (id.size() > e.size() && id.compare(id.size() - e.size(), e.size(), e) == 0) {
      id.resize(id.size() - e.size());
      break;
    }
  }
  const auto stack = preprocess_volume(vol, preprocess_for(config, ck.model));
  Subject subject;
  subject.subject_id = entry.subject_id;
  subject.slices = stack.slices;
  subject.slice_indices = stack.kept_indices;
  subject.short_volume = stack.short_volume;
  auto result = evaluate({subject}, ck.params, ck.model, config.eval);

  PredictOutcome outcome{result.scans.front(), std::move(result.slices)};
  const auto& v = outcome.verdict;
  out << "subject " << v.subject_id << "\nverdict " << verdict_name(v.verdict) << "\nflagged " << v.n_flagged << "/"
      << v.n_slices << " (" << fixed(v.fraction_flagged) << ")\n";
  if (print_slices) {
    out << "slice_index\tprob\tpred\n";
    for (const auto& s : outcome.slices) out << s.slice_index << '\t' << fixed(s.prob, 6) << '\t' << s.pred << '\n';
  }
  if (!config.paths.slice_dump.empty())
    write_file(config.paths.slice_dump, "prediction record",
               [&](std::ostream& f) { write_slice_dump(outcome.slices, f); });
  return outcome;
}

AblationTable cmd_ablate(const RunConfig& config, const std::vector<Preset>& presets,
                         const std::vector<CohortInput>& cohorts, std::ostream& out) {
  if (config.paths.manifest.empty()) throw ConfigError("ablate needs a training manifest (--manifest)");
  if (presets.empty()) throw ConfigError("ablate needs at least one preset");
  if (cohorts.empty()) throw ConfigError("ablate needs at least one evaluation manifest (--seen/--unseen/--eval)");
  const auto pp = preprocess_for(config, config.model);
  const auto train_entries = filter_split(load_manifest(config.paths.manifest), Split::train);
  if (train_entries.empty()) throw ConfigError("manifest " + config.paths.manifest.string() + " has no train entries");
  const auto train = load_subjects(train_entries, pp);
  std::vector<std::vector<Subject>> loaded;
  loaded.reserve(cohorts.size());
  std::vector<NamedCohort> named;
  for (const auto& c : cohorts) {
    loaded.push_back(load_cohort(c.manifest, pp));
    named.push_back({c.name, &loaded.back()});
  }
  std::vector<ModelConfig> models;
  for (Preset p : presets) {
    models.push_back(ablation_model(config.model, p));
    models.back().validate();
  }
  const auto table = ablation_run(train, named, models, config.train, config.eval);
  write_ablation(out, table);
  if (!config.paths.report.empty())
    write_file(config.paths.report, "ablation table", [&](std::ostream& f) { write_ablation(f, table); });
  if (!config.paths.records.empty())
    write_file(config.paths.records, "ablation records", [&](std::ostream& f) { write_ablation_records(f, table); });
  return table;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

// One value bound on several subcommands; set() reports whether any of them
// saw it.
template <typename T>
struct Flag {
  T value{};
  std::vector<CLI::Option*> opts;
  bool set() const {
    for (const auto* o : opts)
      if (o->count()) return true;
    return false;
  }
  template <typename U>
  void apply(U& into) const {
    if (set()) into = static_cast<U>(value);
  }
};

template <typename T>
CLI::Option* bind_opt(CLI::App* app, Flag<T>& flag, const std::string& name, const std::string& help) {
  auto* o = app->add_option(name, flag.value, help);
  flag.opts.push_back(o);
  return o;
}

void bind_switch(CLI::App* app, Flag<bool>& flag, const std::string& name, const std::string& help) {
  flag.opts.push_back(app->add_flag(name, flag.value, help));
}

struct Flags {
  Flag<std::string> config;
  Flag<std::uint64_t> seed;
  Flag<std::size_t> threads;

  Flag<std::string> preset, width;
  Flag<std::vector<std::size_t>> channels;
  Flag<std::size_t> attention_hidden, heads;
  Flag<float> dropout;

  Flag<double> lr, clip_norm, val_fraction, target;
  Flag<std::size_t> batch, epochs, sched_patience, patience;
  Flag<bool> overfit;

  Flag<std::size_t> slice_count;
  Flag<double> background;
  Flag<std::string> filter_order;
  Flag<float> threshold;

  Flag<std::size_t> subjects, sites, seen_test, unseen_test, unseen_sites;
  Flag<double> corruption_ratio, min_severity, max_severity;
  Flag<std::vector<std::size_t>> matrix;

  Flag<std::string> out_dir, manifest, checkpoint, history, report, records, dump, steps;

  std::vector<std::string> eval_manifests, seen, unseen;
  std::string presets = "cnn-only,cnn-attn,channel";
  Flag<bool> blank_unseen_f1, print_slices;
  std::string volume;

  bool model_flags_set() const {
    return preset.set() || width.set() || channels.set() || attention_hidden.set() || heads.set() || dropout.set();
  }
};

void add_model_flags(CLI::App* app, Flags& f) {
  bind_opt(app, f.preset, "--preset", "channel | token | cnn-only | cnn-attn");
  bind_opt(app, f.width, "--width", "full | reduced block widths")->check(CLI::IsMember({"full", "reduced"}));
  bind_opt(app, f.channels, "--channels", "comma-separated block widths")->delimiter(',');
  bind_opt(app, f.attention_hidden, "--attention-hidden", "attention MLP hidden width");
  bind_opt(app, f.heads, "--heads", "attention heads");
  bind_opt(app, f.dropout, "--dropout", "head dropout probability");
}

void add_train_flags(CLI::App* app, Flags& f) {
  bind_opt(app, f.lr, "--lr", "initial learning rate");
  bind_opt(app, f.batch, "--batch", "slices per batch");
  bind_opt(app, f.epochs, "--epochs", "maximum epochs");
  bind_opt(app, f.clip_norm, "--clip-norm", "global gradient norm ceiling");
  bind_opt(app, f.sched_patience, "--sched-patience", "plateau epochs before the rate halves");
  bind_opt(app, f.patience, "--patience", "plateau epochs before early stopping");
  bind_opt(app, f.val_fraction, "--val-fraction", "validation share of subjects");
}

void add_preprocess_flags(CLI::App* app, Flags& f) {
  bind_opt(app, f.slice_count, "--slice-count", "middle axial slices kept");
  bind_opt(app, f.background, "--background-threshold", "minimum normalised slice mean");
  bind_opt(app, f.filter_order, "--filter-order", "normalize_then_filter | filter_then_normalize");
}

void add_eval_flags(CLI::App* app, Flags& f) {
  bind_opt(app, f.threshold, "--threshold", "slice probability flagged as corrupted");
  bind_opt(app, f.report, "--report", "also write the report here");
  bind_opt(app, f.records, "--records", "tab-separated metrics records");
}

// Flags over config file over defaults.
RunConfig build_config(const Flags& f) {
  RunConfig cfg = f.config.set() ? load_run_config(f.config.value) : RunConfig{};
  f.seed.apply(cfg.seed);
  f.threads.apply(cfg.threads);

  ModelConfig& m = cfg.model;
  if (f.preset.set()) m.preset = parse_preset(f.preset.value);
  if (f.width.set()) {
    const Preset p = m.preset;
    m = f.width.value == "reduced" ? reduced_width_config(p) : ModelConfig{};
    m.preset = p;
  }
  f.channels.apply(m.block_channels);
  f.attention_hidden.apply(m.attention_hidden);
  f.heads.apply(m.attention_heads);
  f.dropout.apply(m.dropout_p);

  TrainConfig& t = cfg.train;
  f.lr.apply(t.lr);
  f.batch.apply(t.batch_size);
  f.epochs.apply(t.max_epochs);
  f.clip_norm.apply(t.clip_norm);
  f.sched_patience.apply(t.sched_patience);
  f.patience.apply(t.early_stop_patience);
  f.val_fraction.apply(t.val_fraction);

  f.slice_count.apply(cfg.preprocess.slice_count);
  f.background.apply(cfg.preprocess.background_threshold);
  if (f.filter_order.set()) cfg.preprocess.order = parse_filter_order(f.filter_order.value);
  f.threshold.apply(cfg.eval.threshold);

  CohortSpec& g = cfg.generate;
  f.subjects.apply(g.train_subjects);
  f.sites.apply(g.seen_sites);
  f.seen_test.apply(g.seen_test_subjects);
  f.unseen_test.apply(g.unseen_test_subjects);
  f.unseen_sites.apply(g.unseen_sites);
  f.corruption_ratio.apply(g.corruption_ratio);
  f.min_severity.apply(g.min_severity);
  f.max_severity.apply(g.max_severity);
  if (f.matrix.set()) {
    if (f.matrix.value.size() != 3) throw ConfigError("--matrix takes three sizes, e.g. 96,72,60");
    std::copy(f.matrix.value.begin(), f.matrix.value.end(), g.matrix_override.begin());
  }

  RunPaths& p = cfg.paths;
  f.out_dir.apply(p.data_dir);
  f.manifest.apply(p.manifest);
  f.checkpoint.apply(p.checkpoint);
  f.history.apply(p.history);
  f.report.apply(p.report);
  f.records.apply(p.records);
  f.dump.apply(p.slice_dump);
  f.steps.apply(p.steps);

  cfg.finalize();
  set_thread_count(cfg.threads);
  return cfg;
}

void add_cohorts(std::vector<CohortInput>& into, const std::vector<std::string>& paths, CohortKind kind) {
  for (const auto& p : paths) into.push_back({fs::path(p).stem().string(), kind, p});
}

std::vector<Preset> parse_presets(const std::string& list) {
  std::vector<Preset> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_preset(item));
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MRI motion-artifact quality control", "aqc"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  Flags f;
  bind_opt(&app, f.config, "--config", "JSON run configuration")->check(CLI::ExistingFile);
  bind_opt(&app, f.seed, "--seed", "master seed");
  bind_opt(&app, f.threads, "--threads", "BLAS threads");

  auto* gen = app.add_subcommand("generate", "write a synthetic phantom cohort and manifests");
  bind_opt(gen, f.out_dir, "--out", "output directory");
  bind_opt(gen, f.subjects, "--subjects", "training subjects");
  bind_opt(gen, f.seen_test, "--seen-test", "held-out subjects from the training sites");
  bind_opt(gen, f.unseen_test, "--unseen-test", "subjects from unseen sites");
  bind_opt(gen, f.sites, "--sites", "training site profiles");
  bind_opt(gen, f.unseen_sites, "--unseen-sites", "unseen site profiles");
  bind_opt(gen, f.corruption_ratio, "--corruption-ratio", "share of corrupted subjects per cohort");
  bind_opt(gen, f.min_severity, "--min-severity", "lowest corruption severity");
  bind_opt(gen, f.max_severity, "--max-severity", "highest corruption severity");
  bind_opt(gen, f.matrix, "--matrix", "volume size nx,ny,nz for every site")->delimiter(',');

  auto* train = app.add_subcommand("train", "train a model on a manifest");
  bind_opt(train, f.manifest, "--manifest", "training manifest");
  add_model_flags(train, f);
  add_train_flags(train, f);
  add_preprocess_flags(train, f);
  bind_opt(train, f.checkpoint, "--checkpoint", "output checkpoint");
  bind_opt(train, f.history, "--history", "per-epoch history");
  bind_opt(train, f.steps, "--steps", "per-step log");
  bind_switch(train, f.overfit, "--overfit", "validate on the training subjects and stop at --target-accuracy");
  bind_opt(train, f.target, "--target-accuracy", "training slice accuracy that ends an --overfit run");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labelled or unlabelled cohorts");
  bind_opt(eval, f.checkpoint, "--checkpoint", "trained checkpoint");
  eval->add_option("--manifest", f.eval_manifests, "cohort manifest (repeatable)");
  eval->add_option("--seen", f.seen, "cohort from the training sites (repeatable)");
  eval->add_option("--unseen", f.unseen, "cohort from unseen sites (repeatable)");
  add_model_flags(eval, f);
  add_preprocess_flags(eval, f);
  add_eval_flags(eval, f);
  bind_opt(eval, f.dump, "--slice-dump", "per-slice predictions");
  bind_switch(eval, f.blank_unseen_f1, "--blank-unseen-f1", "blank F1 for unseen cohorts");

  auto* predict = app.add_subcommand("predict", "classify one volume");
  bind_opt(predict, f.checkpoint, "--checkpoint", "trained checkpoint");
  predict->add_option("volume", f.volume, "NIfTI volume")->required();
  bind_switch(predict, f.print_slices, "--slices", "print per-slice probabilities");
  bind_opt(predict, f.dump, "--record", "write the per-slice predictions");
  add_preprocess_flags(predict, f);
  bind_opt(predict, f.threshold, "--threshold", "slice probability flagged as corrupted");

  auto* ablate = app.add_subcommand("ablate", "train each preset with one seed and compare");
  bind_opt(ablate, f.manifest, "--manifest", "training manifest");
  ablate->add_option("--seen", f.seen, "cohort from the training sites (repeatable)");
  ablate->add_option("--unseen", f.unseen, "cohort from unseen sites (repeatable)");
  ablate->add_option("--eval", f.eval_manifests, "other cohort (repeatable)");
  ablate->add_option("--presets", f.presets, "comma-separated presets")->capture_default_str();
  add_model_flags(ablate, f);
  add_train_flags(ablate, f);
  add_preprocess_flags(ablate, f);
  add_eval_flags(ablate, f);

  tune_allocator();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = build_config(f);
    if (gen->parsed()) {
      cmd_generate(cfg, out);
    } else if (train->parsed()) {
      TrainRequest req;
      req.overfit = f.overfit.value;
      f.target.apply(req.target_accuracy);
      cmd_train(cfg, req, out);
    } else if (eval->parsed()) {
      EvalRequest req;
      req.checkpoint = cfg.paths.checkpoint;
      add_cohorts(req.cohorts, f.seen, CohortKind::seen);
      add_cohorts(req.cohorts, f.unseen, CohortKind::unseen);
      add_cohorts(req.cohorts, f.eval_manifests, CohortKind::other);
      if (req.cohorts.empty() && !cfg.paths.manifest.empty())
        req.cohorts.push_back({cfg.paths.manifest.stem().string(), CohortKind::other, cfg.paths.manifest});
      req.report.blank_unseen_f1 = f.blank_unseen_f1.value;
      if (f.model_flags_set()) req.expected_model = cfg.model;
      cmd_eval(cfg, req, out);
    } else if (predict->parsed()) {
      const auto outcome = cmd_predict(cfg, cfg.paths.checkpoint, f.volume, f.print_slices.value, out);
      return outcome.verdict.verdict == Verdict::poor ? 2 : 0;
    } else if (ablate->parsed()) {
      std::vector<CohortInput> cohorts;
      add_cohorts(cohorts, f.seen, CohortKind::seen);
      add_cohorts(cohorts, f.unseen, CohortKind::unseen);
      add_cohorts(cohorts, f.eval_manifests, CohortKind::other);
      cmd_ablate(cfg, parse_presets(f.presets), cohorts, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace aqc
