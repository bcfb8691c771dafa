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
#include <span>
#include <vector>

#include "herdcast/dataset.hpp"
#include "herdcast/nn.hpp"

namespace herdcast::train {

struct TrainConfig {
  double learning_rate = 0.0018;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  nn::LossMode loss = nn::LossMode::final_step;
  std::size_t threads = 1;
  bool verbose = false;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg);

// Same update applied tensor by tensor over a whole parameter set.
void adam_step(nn::Parameters& params, const nn::Parameters& grads, AdamState& state, const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct History {
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct FitResult {
  nn::LstmModel model;  // best-validation weights
  History history;
};

// Thrown when the training loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& msg) : Error("TRAIN_DIVERGED", msg), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Mini-batch Adam with early stopping on validation log loss. Uses the
// supplied standardization, or fits one on `train` when it is empty and
// `standardize` is set. Deterministic in (cfg.seed, data) for any thread count.
FitResult fit(nn::LstmModel init, const dataset::SampleSet& train, const dataset::SampleSet& validation,
              const TrainConfig& cfg, const dataset::Standardization& standardization = {}, bool standardize = true);

// Validation-style pass: mean final-step log loss and accuracy, no dropout.
// Inputs must already be standardized.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy evaluate_loss(const nn::LstmModel& model, std::span<const dataset::Sample> samples, std::size_t threads = 1);

// Checkpoint file (.hxm).
void save_checkpoint(const nn::LstmModel& model, const std::filesystem::path& path);
nn::LstmModel load_checkpoint(const std::filesystem::path& path);
nn::LstmModel checkpoint_roundtrip(const nn::LstmModel& model, const std::filesystem::path& path);

}  // namespace herdcast::train
