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

#include "aqc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "aqc/error.hpp"
#include "aqc/rng.hpp"

namespace aqc {

namespace fs = std::filesystem;

void SiteProfile::validate() const {
  if (!(intensity_scale > 0)) throw ParameterError("site " + site_id + ": intensity_scale must be positive");
  if (!(bias_field_strength >= 0) || !(noise_sigma >= 0))
    throw ParameterError("site " + site_id + ": bias and noise must be non-negative");
  for (auto n : matrix_size)
    if (n < 32) throw ParameterError("site " + site_id + ": matrix extents must be at least 32");
}

std::vector<SiteProfile> seen_site_profiles(std::size_t count) {
  std::vector<SiteProfile> out;
  for (std::size_t i = 0; i < count; ++i) {
    SiteProfile p;
    p.site_id = "siteA" + std::to_string(i + 1);
    p.intensity_scale = 100.0 * (1.0 + 0.5 * static_cast<double>(i));
    p.bias_field_strength = 0.10 + 0.05 * static_cast<double>(i % 3);
    p.noise_sigma = 0.010 + 0.005 * static_cast<double>(i % 3);
    p.matrix_size = i % 2 ? std::array<std::size_t, 3>{104, 78, 64} : std::array<std::size_t, 3>{96, 72, 60};
    out.push_back(p);
  }
  return out;
}

std::vector<SiteProfile> unseen_site_profiles(std::size_t count) {
  std::vector<SiteProfile> out;
  for (std::size_t i = 0; i < count; ++i) {
    SiteProfile p;
    p.site_id = "siteB" + std::to_string(i + 1);
    p.intensity_scale = 800.0 * (1.0 + static_cast<double>(i));
    p.bias_field_strength = 0.30 + 0.10 * static_cast<double>(i % 3);
    p.noise_sigma = 0.030 + 0.010 * static_cast<double>(i % 3);
    p.matrix_size = i % 2 ? std::array<std::size_t, 3>{120, 90, 66} : std::array<std::size_t, 3>{80, 60, 54};
    out.push_back(p);
  }
  return out;
}

Volume make_phantom(std::uint64_t seed, const SiteProfile& site) {
  site.validate();
  Rng rng(seed);
  const auto [nx, ny, nz] = site.matrix_size;
  auto jitter = [&](double base, double spread) { return base + rng.uniform(-spread, spread); };
  const double hx = jitter(0.86, 0.04), hy = jitter(0.92, 0.04), hz = jitter(1.15, 0.05);
  const double cx = jitter(0.0, 0.03), cy = jitter(0.0, 0.03);
  const double skull = jitter(0.09, 0.015);
  const double bx = hx - skull, by = hy - skull, bz = hz - skull;
  const double f1 = jitter(3.0, 1.0), f2 = jitter(3.0, 1.0), f3 = jitter(2.0, 0.5);
  const double p1 = rng.uniform(0, 6.283185307179586), p2 = rng.uniform(0, 6.283185307179586),
               p3 = rng.uniform(0, 6.283185307179586);
  const double vx = jitter(0.15, 0.03), vy = jitter(-0.05, 0.03);
  const double vax = jitter(0.08, 0.015), vay = jitter(0.22, 0.03), vaz = jitter(0.30, 0.05);
  double bias[5];
  for (double& b : bias) b = rng.uniform(-1.0, 1.0);

  Volume vol(nx, ny, nz);
  for (std::size_t z = 0; z < nz; ++z) {
    const double w = (z + 0.5) / nz * 2.0 - 1.0;
    for (std::size_t y = 0; y < ny; ++y) {
      const double v = (y + 0.5) / ny * 2.0 - 1.0 - cy;
      for (std::size_t x = 0; x < nx; ++x) {
        const double u = (x + 0.5) / nx * 2.0 - 1.0 - cx;
        const double head = (u / hx) * (u / hx) + (v / hy) * (v / hy) + (w / hz) * (w / hz);
        double value = 0.0;
        if (head <= 1.0) {
          const double brain = (u / bx) * (u / bx) + (v / by) * (v / by) + (w / bz) * (w / bz);
          if (brain > 1.0) {
            value = 0.55;
          } else {
            value = 0.72 + 0.2 * std::sin(6.283185307179586 * f1 * u + p1) * std::sin(6.283185307179586 * f2 * v + p2) *
                               std::cos(6.283185307179586 * f3 * w + p3);
            for (double side : {-1.0, 1.0}) {
              const double du = (u - side * vx) / vax, dv = (v - vy) / vay, dw = w / vaz;
              if (du * du + dv * dv + dw * dw <= 1.0) value = 0.15;
            }
          }
        }
        const double field = 1.0 + site.bias_field_strength *
                                       (bias[0] * u + bias[1] * v + bias[2] * w + bias[3] * u * v +
                                        bias[4] * 0.5 * (u * u - v * v)) / 2.5;
        vol.at(x, y, z) = static_cast<float>(site.intensity_scale *
                                             (value * std::max(field, 0.1) + site.noise_sigma * rng.normal()));
      }
    }
  }
  vol.site_id = site.site_id;
  return vol;
}

namespace {

// In-plane axes of an axial slice, matching extract_slice: columns run along
// the faster storage axis.
struct PlaneAxes {
  std::size_t col, row;
};

PlaneAxes plane_axes(std::size_t axial) { return {axial == 0 ? 1u : 0u, axial == 2 ? 1u : 2u}; }

std::size_t wrap(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace

Volume corrupt_motion(const Volume& vol, const CorruptionParams& params, std::uint64_t seed) {
  if (!(params.severity >= 0.0 && params.severity <= 1.0))
    throw ParameterError("severity must be in [0, 1], got " + std::to_string(params.severity));
  if (params.ghost_count == 0) throw ParameterError("ghost_count must be at least 1");
  if (!params.ghost_offsets.empty() && params.ghost_offsets.size() != params.ghost_count)
    throw ParameterError("ghost_offsets must list ghost_count displacements");
  if (params.severity == 0.0) return vol;

  const auto axes = plane_axes(vol.axial_axis);
  const std::size_t rows = vol.extents[axes.row], cols = vol.extents[axes.col];
  const std::size_t depth = vol.extents[vol.axial_axis];

  auto offsets = params.ghost_offsets;
  if (offsets.empty()) {
    Rng rng(seed);
    for (std::size_t k = 0; k < params.ghost_count; ++k) {
      const int mag = static_cast<int>(rows / 8 + rng.below(std::max<std::size_t>(1, rows / 4)));
      offsets.push_back({0, rng.below(2) ? mag : -mag});
    }
  }
  const double alpha = 0.6 * params.severity;
  const auto radius = static_cast<std::size_t>(std::ceil(static_cast<double>(params.blur_extent) * params.severity));

  Volume out = vol;
  std::vector<double> plane(rows * cols), ghosted(rows * cols);
  std::size_t pos[3];
  for (std::size_t s = 0; s < depth; ++s) {
    pos[vol.axial_axis] = s;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        pos[axes.row] = r;
        pos[axes.col] = c;
        plane[r * cols + c] = vol.at(pos[0], pos[1], pos[2]);
      }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        double ghost = 0.0;
        for (const auto& d : offsets)
          ghost += plane[wrap(static_cast<long>(r) - d[1], rows) * cols + wrap(static_cast<long>(c) - d[0], cols)];
        ghosted[r * cols + c] = (1.0 - alpha) * plane[r * cols + c] + alpha * ghost / static_cast<double>(offsets.size());
      }
    const double norm = 1.0 / static_cast<double>(2 * radius + 1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (long k = -static_cast<long>(radius); k <= static_cast<long>(radius); ++k)
          acc += ghosted[wrap(static_cast<long>(r) + k, rows) * cols + c];
        pos[axes.row] = r;
        pos[axes.col] = c;
        out.at(pos[0], pos[1], pos[2]) = static_cast<float>(acc * norm);
      }
  }
  return out;
}

double mean_gradient_magnitude(const Slice2D& s) {
  if (s.rows < 2 || s.cols < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r + 1 < s.rows; ++r)
    for (std::size_t c = 0; c + 1 < s.cols; ++c) {
      const double dx = s.at(r, c + 1) - s.at(r, c), dy = s.at(r + 1, c) - s.at(r, c);
      acc += std::sqrt(dx * dx + dy * dy);
    }
  return acc / static_cast<double>((s.rows - 1) * (s.cols - 1));
}

double gradient_oracle_scan_accuracy(const std::vector<Subject>& subjects) {
  std::vector<std::vector<double>> features(subjects.size());
  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (!subjects[i].label) throw ContractError("oracle needs labelled subjects");
    for (const auto& s : subjects[i].slices) {
      features[i].push_back(mean_gradient_magnitude(s));
      thresholds.push_back(features[i].back());
    }
  }
  if (subjects.empty()) throw ContractError("oracle needs at least one subject");
  double best = 0.0;
  for (double t : thresholds) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const auto flagged = static_cast<std::size_t>(
          std::count_if(features[i].begin(), features[i].end(), [&](double f) { return f < t; }));
      const int verdict = 2 * flagged > features[i].size() ? 1 : 0;
      correct += verdict == *subjects[i].label;
    }
    best = std::max(best, static_cast<double>(correct) / static_cast<double>(subjects.size()));
  }
  return best;
}

DatasetSummary build_dataset(const CohortSpec& spec, const fs::path& out_dir) {
  if (!(spec.corruption_ratio >= 0 && spec.corruption_ratio <= 1))
    throw ParameterError("corruption ratio must be in [0, 1]");
  if (!(spec.min_severity > 0 && spec.min_severity <= spec.max_severity && spec.max_severity <= 1))
    throw ParameterError("severity range must satisfy 0 < min <= max <= 1");
  if (spec.train_subjects == 0) throw ParameterError("at least one training subject is required");
  if (spec.seen_sites == 0 || (spec.unseen_test_subjects > 0 && spec.unseen_sites == 0))
    throw ParameterError("site counts must be positive");

  std::error_code ec;
  fs::create_directories(out_dir / "volumes", ec);
  if (ec) throw IoError("cannot create output directory " + (out_dir / "volumes").string() + ": " + ec.message());

  auto seen = seen_site_profiles(spec.seen_sites);
  auto unseen = unseen_site_profiles(spec.unseen_sites);
  const bool override = spec.matrix_override[0] && spec.matrix_override[1] && spec.matrix_override[2];
  if (override) {
    for (auto& p : seen) p.matrix_size = spec.matrix_override;
    for (auto& p : unseen) p.matrix_size = spec.matrix_override;
  }

  struct Cohort {
    const char* name;
    std::size_t count;
    const std::vector<SiteProfile>* sites;
    Split split;
  };
  const Cohort cohorts[] = {{"train", spec.train_subjects, &seen, Split::train},
                            {"seen", spec.seen_test_subjects, &seen, Split::test},
                            {"unseen", spec.unseen_test_subjects, &unseen, Split::test}};

  DatasetSummary summary;
  summary.manifest = out_dir / "manifest.csv";
  for (std::size_t ci = 0; ci < 3; ++ci) {
    const auto& cohort = cohorts[ci];
    if (cohort.count == 0) continue;
    const std::uint64_t cohort_seed = derive_seed(spec.seed, 100 + ci);
    const auto corrupted =
        static_cast<std::size_t>(std::lround(spec.corruption_ratio * static_cast<double>(cohort.count)));
    std::vector<int> labels(cohort.count, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(corrupted), 1);
    Rng label_rng(derive_seed(cohort_seed, 0));
    label_rng.shuffle(labels.begin(), labels.end());

    std::vector<ManifestEntry> rows;
    for (std::size_t i = 0; i < cohort.count; ++i) {
      const auto& site = (*cohort.sites)[i % cohort.sites->size()];
      const std::uint64_t subject_seed = derive_seed(cohort_seed, i + 1);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%03zu", cohort.name, i);
      Volume vol = make_phantom(derive_seed(subject_seed, 0), site);
      if (labels[i]) {
        Rng sev(derive_seed(subject_seed, 1));
        CorruptionParams cp;
        cp.severity = sev.uniform(spec.min_severity, spec.max_severity);
        vol = corrupt_motion(vol, cp, derive_seed(subject_seed, 2));
      }
      ManifestEntry e;
      e.subject_id = id;
      e.path = out_dir / "volumes" / (std::string(id) + ".nii.gz");
      e.label = labels[i];
      e.site_id = site.site_id;
      e.split = cohort.split;
      write_nifti(vol, e.path);
      rows.push_back(e);
    }
    const fs::path cohort_manifest = out_dir / (ci == 0 ? "train.csv" : ci == 1 ? "seen_test.csv" : "unseen_test.csv");
    write_manifest(rows, cohort_manifest);
    (ci == 0 ? summary.train_manifest : ci == 1 ? summary.seen_test_manifest : summary.unseen_test_manifest) =
        cohort_manifest;
    summary.entries.insert(summary.entries.end(), rows.begin(), rows.end());
  }
  write_manifest(summary.entries, summary.manifest);
  return summary;
}

}  // namespace aqc
