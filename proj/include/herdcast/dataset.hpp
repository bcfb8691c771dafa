/*
 * Copyright 2026 The herdcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "herdcast/features.hpp"
#include "herdcast/trial.hpp"

namespace herdcast::dataset {

inline constexpr int kSeqLen = 25;

// Sub-classes of a sample: (non-)transitioning window x (non-)switching
// horizon label.
enum class Subclass : std::uint8_t { nt_ns = 0, nt_s = 1, t_ns = 2, t_s = 3 };
inline constexpr int kNumSubclasses = 4;
std::string_view to_string(Subclass s);

// 25 x 48 row-major window, oldest row first.
using SequenceMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Sample {
  SequenceMatrix features;
  int label = 0;
  Subclass subclass = Subclass::nt_ns;
  // Provenance.
  std::string trial_id;
  int focal = 0;
  std::uint32_t t_f = 0;
};

// Samples sharing one window geometry.
struct SampleSet {
  std::uint16_t horizon = 16;
  std::uint8_t stride = 2;
  std::vector<Sample> samples;
};

Subclass tag_subclass(std::span<const int> window_labels, int horizon_label);

// Every window of a labeled trial for one focal herder: rows are frames
// t_f - 24*stride .. t_f and the label is the focal label at
// t_f + horizon*stride. Windows that do not fit in the trial are skipped.
std::vector<Sample> window_trial(const Trial& trial, int focal, int stride, int horizon);

// Compact pool entry; features are materialized only for drawn samples.
struct WindowRef {
  std::uint32_t trial = 0;
  std::uint8_t focal = 0;
  std::uint32_t t_f = 0;
  std::uint8_t label = 0;
  Subclass subclass = Subclass::nt_ns;
};

struct SamplePool {
  int stride = 2;
  int horizon = 16;
  std::vector<std::string> trial_ids;
  // Per trial, the feature table of each focal herder.
  std::vector<std::array<features::FeatureTable, kNumHerders>> tables;
  std::vector<WindowRef> windows;

  std::array<std::size_t, kNumSubclasses> subclass_counts() const;
  Sample materialize(const WindowRef& ref) const;
};

// Index of all windows over the successful trials (failure trials skipped).
SamplePool build_pool(std::span<const Trial> trials, int stride, int horizon);

enum class Balance { balanced, representative };

struct SplitConfig {
  std::size_t n_train = 21000;
  std::size_t n_test = 2000;
  std::size_t n_test_sets = 10;
  Balance balance = Balance::balanced;
  double validation_fraction = 0.10;
  bool standardize = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-column z-score statistics over the 48 feature channels. Columns with
// spread below 1e-12 keep mean 0, scale 1 (left untouched).
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  bool empty() const { return mean.empty(); }
  void apply(SequenceMatrix& x) const;
  static Standardization fit(std::span<const Sample> samples);
  static Standardization identity(std::size_t n = features::kNumFeatures);
};

struct Split {
  SampleSet train;
  SampleSet validation;
  std::vector<SampleSet> tests;
  Standardization standardization;  // empty when not requested
};

// Draws train/test sets from the pool without replacement. Balanced mode
// takes an equal quota per sub-class and fails with a per-class shortfall
// report when the pool cannot cover it.
Split assemble_split(const SamplePool& pool, const SplitConfig& cfg);

// Moves round(fraction * n) randomly chosen samples out of `train`.
SampleSet split_validation(SampleSet& train, double fraction, std::uint64_t seed);

// Applies standardization to a copy of the set.
SampleSet standardized(const SampleSet& set, const Standardization& stats);

// Binary sample-set file (.hxs).
void write_hxs(const std::filesystem::path& path, const SampleSet& set);
SampleSet read_hxs(const std::filesystem::path& path);

}  // namespace herdcast::dataset
