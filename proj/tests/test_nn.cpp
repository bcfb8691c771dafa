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

#include <gtest/gtest.h>

#include <cmath>

#include "herdcast/nn.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SequenceMatrix random_input(Eigen::Index steps, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  SequenceMatrix x(steps, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

LstmModel tiny(std::uint64_t seed) {
  LstmModel m = LstmModel::init({4, {6, 3, 2}, 5}, seed);
  // Spread the parameters so that gradients are not all tiny.
  m.params *= 1.5;
  return m;
}

double loss_of(const LstmModel& m, const SequenceMatrix& x, int label, LossMode mode = LossMode::final_step) {
  const SequenceMatrix* in[] = {&x};
  const int lab[] = {label};
  return loss_only(m, in, lab, DropoutPlan::inference(), mode);
}

TEST(Architecture, Scaled) {
  EXPECT_EQ(Architecture::scaled(1.0).hidden, (std::vector<int>{253, 25, 8}));
  EXPECT_EQ(Architecture::scaled(0.25).hidden, (std::vector<int>{64, 7, 4}));
  EXPECT_EQ(Architecture::scaled(0.1).hidden, (std::vector<int>{26, 3, 4}));
  EXPECT_THROW(Architecture::scaled(0.0), Error);
}

TEST(Init, ShapesAndForgetBias) {
  const LstmModel m = LstmModel::init(Architecture{}, 3);
  ASSERT_EQ(m.params.layers.size(), 3u);
  EXPECT_EQ(m.params.layers[0].w_input.rows(), 4 * 253);
  EXPECT_EQ(m.params.layers[0].w_input.cols(), 48);
  EXPECT_EQ(m.params.layers[2].w_recurrent.cols(), 8);
  EXPECT_EQ(m.params.dense_w.rows(), 5);
  EXPECT_EQ(m.params.architecture(), Architecture{});
  for (const auto& l : m.params.layers) {
    const auto h = l.hidden_size();
    EXPECT_TRUE((l.bias.segment(h, h).array() == 1.0).all());
    const double k = 1.0 / std::sqrt(static_cast<double>(l.input_size() + h));
    EXPECT_LE(l.w_input.cwiseAbs().maxCoeff(), k);
  }
  EXPECT_EQ(m.lstm_dropout, 0.1145);
  EXPECT_EQ(m.inter_layer_dropout, 0.0145);
}

TEST(Parameters, FlatIndexing) {
  LstmModel m = tiny(1);
  const std::size_t n = m.params.size();
  std::size_t expected = 0;
  for (const auto& l : m.params.layers) expected += l.w_input.size() + l.w_recurrent.size() + l.bias.size();
  expected += m.params.dense_w.size() + m.params.dense_b.size();
  EXPECT_EQ(n, expected);
  EXPECT_EQ(&m.params.flat(0), m.params.layers[0].w_input.data());
  EXPECT_EQ(&m.params.flat(n - 1), m.params.dense_b.data() + 4);
  EXPECT_THROW(m.params.flat(n), Error);
}

TEST(Forward, ZeroWeightsGiveUniform) {
  LstmModel m = LstmModel::init({48, {5, 3, 4}, 5}, 0);
  m.params *= 0.0;
  const auto out = lstm_forward(m, random_input(25, 48, 1), DropoutPlan::inference());
  ASSERT_EQ(out.probabilities.rows(), 25);
  ASSERT_EQ(out.probabilities.cols(), 5);
  EXPECT_TRUE((out.probabilities.array() == 0.2).all());
}

TEST(Forward, ShapeIsStepsByClasses) {
  const LstmModel m = LstmModel::init(Architecture::scaled(0.25), 5);
  const auto out = lstm_forward(m, random_input(25, 48, 2), DropoutPlan::inference());
  EXPECT_EQ(out.logits.rows(), 25);
  EXPECT_EQ(out.logits.cols(), 5);
}

TEST(Forward, ScalarCellOracle) {
  LstmModel m = LstmModel::init({1, {1}, 2}, 0);
  auto& l = m.params.layers[0];
  l.w_input.setConstant(0.5);
  l.w_recurrent.setConstant(0.5);
  l.bias.setZero();
  m.params.dense_w << 1.0, 0.0;
  m.params.dense_b.setZero();
  SequenceMatrix x(2, 1);
  x << 1.0, 1.0;
  const auto out = lstm_forward(m, x, DropoutPlan::inference());
  // Hand-coded cell: gates i, f, g, o from 0.5*x + 0.5*h.
  double h = 0.0, c = 0.0;
  for (int t = 0; t < 2; ++t) {
    const double z = 0.5 * 1.0 + 0.5 * h;
    c = sigmoid(z) * c + sigmoid(z) * std::tanh(z);
    h = sigmoid(z) * std::tanh(c);
    EXPECT_NEAR(out.logits(t, 0), h, 1e-15) << t;
    EXPECT_EQ(out.logits(t, 1), 0.0);
  }
  EXPECT_NEAR(out.logits(0, 0), sigmoid(0.5) * std::tanh(sigmoid(0.5) * std::tanh(0.5)), 1e-15);
}

TEST(Forward, RowStochasticAndDeterministic) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const LstmModel m = tiny(s);
    const SequenceMatrix x = random_input(7, 4, s + 100);
    const auto a = lstm_forward(m, x, DropoutPlan::inference());
    const auto b = lstm_forward(m, x, DropoutPlan::inference());
    EXPECT_TRUE(a.logits == b.logits);
    for (Eigen::Index t = 0; t < a.probabilities.rows(); ++t) {
      EXPECT_NEAR(a.probabilities.row(t).sum(), 1.0, 1e-12);
      EXPECT_GT(a.probabilities.row(t).minCoeff(), 0.0);
      EXPECT_LT(a.probabilities.row(t).maxCoeff(), 1.0);
    }
  }
}

TEST(Forward, ZeroDropoutTrainEqualsInference) {
  LstmModel m = tiny(4);
  m.lstm_dropout = 0.0;
  m.inter_layer_dropout = 0.0;
  const SequenceMatrix x = random_input(6, 4, 9);
  EXPECT_TRUE(lstm_forward(m, x, DropoutPlan::training(77)).logits == lstm_forward(m, x, DropoutPlan::inference()).logits);
}

TEST(Forward, DropoutMasksFollowSeed) {
  LstmModel m = tiny(4);
  m.lstm_dropout = 0.3;
  const SequenceMatrix x = random_input(6, 4, 9);
  const auto a = lstm_forward(m, x, DropoutPlan::training(1)).logits;
  EXPECT_TRUE(a == lstm_forward(m, x, DropoutPlan::training(1)).logits);
  EXPECT_FALSE(a == lstm_forward(m, x, DropoutPlan::training(2)).logits);
  EXPECT_FALSE(a == lstm_forward(m, x, DropoutPlan::inference()).logits);
}

TEST(Forward, RejectsBadInput) {
  const LstmModel m = tiny(1);
  SequenceMatrix x = random_input(5, 4, 1);
  x(2, 3) = NAN;
  EXPECT_THROW(lstm_forward(m, x, DropoutPlan::inference()), Error);
  EXPECT_THROW(lstm_forward(m, random_input(5, 3, 1), DropoutPlan::inference()), Error);
}

TEST(Loss, ConfidentAndUniformCases) {
  LstmModel m = tiny(2);
  m.params.dense_w.setZero();
  m.params.dense_b.setZero();
  const SequenceMatrix x = random_input(5, 4, 3);
  for (int label = 0; label < 5; ++label) EXPECT_NEAR(loss_of(m, x, label), std::log(5.0), 1e-15);
  m.params.dense_b(3) = 800.0;
  EXPECT_EQ(loss_of(m, x, 3), 0.0);
  EXPECT_EQ(loss_of(m, x, 3, LossMode::all_steps), 0.0);
}

TEST(Loss, EmptyBatchAndBadLabels) {
  const LstmModel m = tiny(2);
  EXPECT_THROW(loss_only(m, {}, {}, DropoutPlan::inference()), Error);
  const SequenceMatrix x = random_input(5, 4, 3);
  EXPECT_THROW(loss_of(m, x, 5), Error);
}

TEST(Backward, DenseBiasGradientIsSoftmaxMinusOneHot) {
  const LstmModel m = tiny(8);
  std::vector<SequenceMatrix> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(random_input(6, 4, 50 + static_cast<std::uint64_t>(i)));
  std::vector<const SequenceMatrix*> in;
  for (const auto& x : xs) in.push_back(&x);
  const std::vector<int> labels{0, 3, 3, 1};
  const auto lg = loss_and_backward(m, in, labels, DropoutPlan::inference());
  Vector expected = Vector::Zero(5);
  double loss = 0.0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const auto out = lstm_forward(m, xs[b], DropoutPlan::inference());
    Vector p = out.probabilities.row(5).transpose();
    loss -= std::log(p(labels[b]));
    p(labels[b]) -= 1.0;
    expected += p;
  }
  expected /= 4.0;
  EXPECT_NEAR(lg.loss, loss / 4.0, 1e-14);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(lg.grad.dense_b(c), expected(c), 1e-14);
}

TEST(Backward, ZeroInputGivesZeroInputWeightGradient) {
  const LstmModel m = tiny(3);
  const SequenceMatrix x = SequenceMatrix::Zero(5, 4);
  const SequenceMatrix* in[] = {&x};
  const int lab[] = {2};
  const auto lg = loss_and_backward(m, in, lab, DropoutPlan::inference());
  EXPECT_TRUE((lg.grad.layers[0].w_input.array() == 0.0).all());
  EXPECT_GT(lg.grad.layers[0].bias.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, TinyModelsBothLossModes) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const LstmModel m = tiny(s);
    const SequenceMatrix x = random_input(5, 4, 1000 + s);
    for (auto mode : {LossMode::final_step, LossMode::all_steps}) {
      const auto r = grad_check(m, x, static_cast<int>(s % 5), 2e-2, 200, s, mode);
      EXPECT_EQ(r.checked, std::min<std::size_t>(200, m.params.size()));
      EXPECT_LT(r.max_relative_error, 1e-5) << "seed " << s << " worst " << r.worst_index;
    }
  }
}

TEST(GradCheck, WithDropoutMasksIsExactForSampledMasks) {
  // Central differences under a fixed training plan (masks fixed by seed).
  LstmModel m = tiny(6);
  m.lstm_dropout = 0.3;
  m.inter_layer_dropout = 0.2;
  const SequenceMatrix x = random_input(5, 4, 3);
  const SequenceMatrix* in[] = {&x};
  const int lab[] = {1};
  const auto plan = DropoutPlan::training(31);
  const auto lg = loss_and_backward(m, in, lab, plan);
  for (std::size_t i = 0; i < m.params.size(); i += 7) {
    LstmModel p = m;
    const double h = 1e-5, base = m.params.flat(i);
    p.params.flat(i) = base + h;
    const double up = loss_only(p, in, lab, plan);
    p.params.flat(i) = base - h;
    const double down = loss_only(p, in, lab, plan);
    EXPECT_NEAR(lg.grad.flat(i), (up - down) / (2 * h), 1e-7) << i;
  }
}

TEST(GradCheck, CentralDifferenceErrorIsSecondOrder) {
  // d(h) = g + c h^2 + O(h^4): successive differences shrink by 4.
  const LstmModel m = tiny(12);
  const SequenceMatrix x = random_input(5, 4, 13);
  std::size_t tested = 0;
  for (std::size_t i = 0; i < m.params.size(); i += 5) {
    auto central = [&](double h) {
      LstmModel p = m;
      const double base = m.params.flat(i);
      p.params.flat(i) = base + h;
      const double up = loss_of(p, x, 2);
      p.params.flat(i) = base - h;
      return (up - loss_of(p, x, 2)) / (2 * h);
    };
    const double d1 = central(1e-2), d2 = central(2e-2), d4 = central(4e-2);
    if (std::abs(d2 - d1) < 1e-8) continue;
    EXPECT_NEAR((d4 - d2) / (d2 - d1), 4.0, 0.5) << i;
    ++tested;
  }
  EXPECT_GT(tested, 10u);
}

}  // namespace
}  // namespace herdcast::nn
