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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "herdcast/dataset.hpp"
#include "herdcast/explain.hpp"
#include "herdcast/sim.hpp"
#include "herdcast/train.hpp"

namespace herdcast::pipeline {

// Configuration problems: unknown section/key/stage, bad value. The command
// line front end maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::string_view kStages[] = {"simulate", "featurize", "build-samples", "train",
                                               "eval",     "explain",   "analyze",       "report"};

struct PipelineConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::vector<std::string> stages{kStages, kStages + 8};
  std::size_t threads = 1;
  std::vector<Expertise> expertise{Expertise::expert, Expertise::novice};

  // [world]
  sim::WorldConfig world;

  // [simulate]
  int pairs = 10;
  int trials_per_pair = 20;
  double expert_hysteresis = sim::PolicyKind::expert().hysteresis;

  // [samples]
  int stride = 2;
  int horizon = 16;
  dataset::SplitConfig split{8000, 2000, 2, dataset::Balance::balanced, 0.10, true, 0};

  // [train]
  double scale = 0.25;
  train::TrainConfig train;
  double lstm_dropout = 0.1145;
  double inter_layer_dropout = 0.0145;

  // [explain]
  std::size_t explain_samples = 100;
  std::size_t n_perm = 200;
  std::size_t background_size = 200;
  std::vector<std::size_t> depths{0, 10, 5};
  explain::TopK top_k = explain::TopK::union_full_rank;

  // [analyze]
  double bin_ms = 40.0;

  void validate() const;
};

// Parses the sectioned `key = value` format; '#' starts a comment. Throws
// ConfigError naming the offending section.key.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

// Normalized text of one section (every key, defaults included). Stage
// cache keys are built from these.
std::string canonical_section(const PipelineConfig& cfg, std::string_view section);
// Hash over every section except run-time knobs (threads, out_dir, stages).
std::uint64_t config_hash(const PipelineConfig& cfg);

// Per-stage seeds, all derived from the global seed.
std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stage, Expertise e);

// Output locations inside cfg.out_dir.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path trials(Expertise e) const;
  std::filesystem::path features(Expertise e) const;
  std::filesystem::path samples(Expertise e) const;  // directory
  std::filesystem::path model(Expertise e) const;
  std::filesystem::path history(Expertise e) const;
  std::filesystem::path eval() const;
  std::filesystem::path explain() const;
  std::filesystem::path analysis() const;
  std::filesystem::path report() const;
  std::filesystem::path manifest(std::string_view stage) const;
};

// Stage building blocks shared by the subcommands and the pipeline.
void write_feature_tables(std::span<const Trial> trials, const std::filesystem::path& dir);
void write_split(const dataset::Split& split, const std::filesystem::path& dir);
std::vector<std::filesystem::path> test_files(const std::filesystem::path& samples_dir);
void write_history_csv(const train::History& history, std::ostream& out);

struct RunSummary {
  std::vector<std::string> ran;
  std::vector<std::string> skipped;  // up to date
};

// Runs the configured stages in pipeline order. Every stage whose inputs,
// settings and outputs are unchanged since its last run is skipped.
RunSummary run_pipeline(const PipelineConfig& cfg, std::ostream& log);

}  // namespace herdcast::pipeline
