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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "herdcast/common.hpp"
#include "herdcast/dataset.hpp"

namespace herdcast::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using dataset::SequenceMatrix;

struct Architecture {
  int input_size = 48;
  std::vector<int> hidden{253, 25, 8};
  int num_classes = kNumClasses;

  // Hidden widths (ceil(253w), ceil(25w), max(4, ceil(8w))); w = 1 is the
  // full-size network.
  static Architecture scaled(double w);
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// One LSTM layer; gate blocks are stacked in the order input, forget, cell,
// output along the rows of every tensor.
struct LstmLayer {
  Matrix w_input;      // 4H x In
  Matrix w_recurrent;  // 4H x H
  Vector bias;         // 4H

  Eigen::Index hidden_size() const { return w_recurrent.cols(); }
  Eigen::Index input_size() const { return w_input.cols(); }
};

struct Parameters {
  std::vector<LstmLayer> layers;
  Matrix dense_w;  // C x H_last
  Vector dense_b;  // C

  // Visits every tensor in declaration order: per layer w_input,
  // w_recurrent, bias; then dense_w, dense_b.
  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& l : layers) {
      fn(l.w_input);
      fn(l.w_recurrent);
      fn(l.bias);
    }
    fn(dense_w);
    fn(dense_b);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& l : layers) {
      fn(l.w_input);
      fn(l.w_recurrent);
      fn(l.bias);
    }
    fn(dense_w);
    fn(dense_b);
  }

  std::size_t size() const;
  Parameters zeros_like() const;
  Architecture architecture() const;
  // Element i of the concatenation of all tensors (column-major inside each).
  double& flat(std::size_t i);
  double flat(std::size_t i) const;
  bool all_finite() const;

  Parameters& operator+=(const Parameters& other);
  Parameters& operator*=(double s);
};

enum class LossMode : std::uint8_t { final_step = 0, all_steps = 1 };

// Dropout masks are drawn from `seed` per layer and timestep; inference mode
// applies no masks at all.
struct DropoutPlan {
  enum class Mode : std::uint8_t { train, inference };
  Mode mode = Mode::inference;
  std::uint64_t seed = 0;

  static DropoutPlan inference() { return {}; }
  static DropoutPlan training(std::uint64_t seed) { return {Mode::train, seed}; }
};

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  std::uint16_t horizon = 16;
  std::uint8_t stride = 2;
  Expertise expertise = Expertise::expert;
  double learning_rate = 0.0018;
  LossMode loss = LossMode::final_step;
  std::string tag;  // free-form provenance, e.g. a config hash
};

struct LstmModel {
  Parameters params;
  double lstm_dropout = 0.1145;         // on each LSTM layer's input
  double inter_layer_dropout = 0.0145;  // after each LSTM layer
  dataset::Standardization standardization;
  ModelMetadata meta;

  // Weights U(-k, k) with k = 1/sqrt(fan_in), forget-gate bias 1.
  static LstmModel init(const Architecture& arch, std::uint64_t seed);
};

struct LstmOutput {
  Matrix logits;         // T x C
  Matrix probabilities;  // T x C, rows sum to 1
};

// Single-sequence forward pass; `x` must already be standardized.
LstmOutput lstm_forward(const LstmModel& model, const SequenceMatrix& x, const DropoutPlan& plan);

// Final-step class probabilities (C x N) for raw inputs; applies the model's
// standardization and no dropout.
Matrix predict_final(const LstmModel& model, std::span<const SequenceMatrix* const> inputs);

struct LossGrad {
  double loss = 0.0;
  Parameters grad;
};

// Mean categorical cross-entropy over the batch (final step, or averaged
// over all steps with the label broadcast) and its exact gradient under the
// masks drawn from `plan`. Inputs must already be standardized.
LossGrad loss_and_backward(const LstmModel& model, std::span<const SequenceMatrix* const> inputs,
                           std::span<const int> labels, const DropoutPlan& plan,
                           LossMode mode = LossMode::final_step);

// Loss only, no gradient.
double loss_only(const LstmModel& model, std::span<const SequenceMatrix* const> inputs, std::span<const int> labels,
                 const DropoutPlan& plan, LossMode mode = LossMode::final_step);

// Central-difference derivative of the (dropout-free) loss with respect to
// flat parameter `index`: five-point stencils at eps and eps/2 combined by
// Richardson extrapolation.
double numeric_gradient(const LstmModel& model, const SequenceMatrix& x, int label, std::size_t index, double eps,
                        LossMode mode = LossMode::final_step);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

// Compares BPTT with central differences on `n_params` random parameters
// (all of them when the model is smaller), dropout disabled. Relative error
// is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const LstmModel& model, const SequenceMatrix& x, int label, double eps = 2e-2,
                           std::size_t n_params = 200, std::uint64_t seed = 0, LossMode mode = LossMode::final_step);

}  // namespace herdcast::nn
