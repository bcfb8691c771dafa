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

#include <algorithm>
#include <numeric>
#include <sstream>

#include "herdcast/eval.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::eval {
namespace {

ConfusionMatrix random_matrix(Rng& rng, int k) {
  ConfusionMatrix cm(k);
  for (int t = 0; t < k; ++t)
    for (int p = 0; p < k; ++p) cm.at(t, p) = rng.bernoulli(0.2) ? 0 : rng.index(50);
  cm.at(0, 0) += 1;
  return cm;
}

// Model whose final-step prediction is always `cls`.
nn::LstmModel constant_model(int cls) {
  nn::LstmModel m = nn::LstmModel::init({48, {3, 2, 4}, 5}, 1);
  m.params.dense_w.setZero();
  m.params.dense_b.setZero();
  m.params.dense_b(cls) = 5.0;
  m.meta.horizon = 16;
  m.meta.stride = 2;
  return m;
}

dataset::SampleSet balanced_set(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  dataset::SampleSet set;
  for (std::size_t i = 0; i < 5 * per_class; ++i) {
    dataset::Sample s;
    s.features.resize(25, 48);
    for (Eigen::Index k = 0; k < s.features.size(); ++k) s.features.data()[k] = rng.normal();
    s.label = static_cast<int>(i % 5);
    set.samples.push_back(std::move(s));
  }
  return set;
}

TEST(Confusion, Examples) {
  const std::vector<int> labels{0, 1, 1}, preds{0, 1, 2};
  const ConfusionMatrix cm = confusion_matrix(preds, labels);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_EQ(cm.at(1, 2), 1u);
  EXPECT_EQ(cm.total(), 3u);
  EXPECT_EQ(cm.trace(), 2u);
  const ConfusionMatrix perfect = confusion_matrix(labels, labels);
  for (int t = 0; t < 5; ++t)
    for (int p = 0; p < 5; ++p)
      EXPECT_EQ(perfect.at(t, p), t == p ? perfect.row_sum(t) : 0u);
  EXPECT_THROW(confusion_matrix(std::vector<int>{1}, labels), Error);
  EXPECT_THROW(confusion_matrix(std::vector<int>{7}, std::vector<int>{1}), Error);
}

TEST(Confusion, RowSumsAreLabelCounts) {
  Rng rng(3);
  std::vector<int> labels(500), preds(500);
  std::array<std::uint64_t, 5> counts{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(rng.index(5));
    preds[i] = static_cast<int>(rng.index(5));
    ++counts[labels[i]];
  }
  const ConfusionMatrix cm = confusion_matrix(preds, labels);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(cm.row_sum(t), counts[t]);
}

TEST(Metrics, BinaryHandExample) {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 1;
  cm.at(0, 1) = 1;
  cm.at(1, 1) = 2;
  const MetricsReport m = classification_metrics(cm);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.precision[0], 1.0);
  EXPECT_DOUBLE_EQ(m.recall[0], 0.5);
  EXPECT_DOUBLE_EQ(m.precision[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall[1], 1.0);
  EXPECT_NEAR(m.macro_f1, (2.0 / 3.0 + 4.0 / 5.0) / 2.0, 1e-12);
  EXPECT_NEAR(m.macro_f1, 0.7333, 1e-4);
  EXPECT_EQ(m.n_samples, 4u);
}

TEST(Metrics, PerfectFiveClass) {
  ConfusionMatrix cm;
  for (int k = 0; k < 5; ++k) cm.at(k, k) = 10 + static_cast<std::uint64_t>(k);
  const MetricsReport m = classification_metrics(cm);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_precision, 1.0);
  EXPECT_EQ(m.macro_recall, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
}

TEST(Metrics, AbsentClassesLeaveMacroAverage) {
  ConfusionMatrix cm;
  cm.at(1, 1) = 3;
  cm.at(2, 1) = 1;
  cm.at(2, 2) = 1;
  const MetricsReport m = classification_metrics(cm);
  // Classes 1 and 2 occur: recalls 1 and 0.5.
  EXPECT_DOUBLE_EQ(m.macro_recall, 0.75);
  EXPECT_DOUBLE_EQ(m.macro_precision, (0.75 + 1.0) / 2.0);
  EXPECT_EQ(m.precision[0], 0.0);
  EXPECT_THROW(classification_metrics(ConfusionMatrix{}), Error);
}

TEST(Metrics, RandomMatrixProperties) {
  Rng rng(11);
  for (int n = 0; n < 1000; ++n) {
    const int k = 2 + static_cast<int>(rng.index(4));
    const ConfusionMatrix cm = random_matrix(rng, k);
    const MetricsReport m = classification_metrics(cm);
    double weighted = 0.0;
    for (int c = 0; c < k; ++c)
      weighted += m.recall[c] * static_cast<double>(cm.row_sum(c)) / static_cast<double>(cm.total());
    EXPECT_NEAR(m.accuracy, weighted, 1e-12);
    const auto [lo, hi] = std::minmax_element(m.f1.begin(), m.f1.end());
    EXPECT_LE(m.macro_f1, *hi + 1e-15);
    double present_min = 1.0;
    for (int c = 0; c < k; ++c) {
      if (cm.row_sum(c) > 0) present_min = std::min(present_min, m.f1[c]);
      const double p = m.precision[c], r = m.recall[c];
      EXPECT_NEAR(m.f1[c], p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-15);
      for (double v : {p, r, m.f1[c]}) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_GE(m.macro_f1, present_min - 1e-15);
    EXPECT_GE(m.macro_f1, *lo - 1e-15);
  }
}

TEST(Metrics, PermutationInvariant) {
  Rng rng(2);
  std::vector<int> labels(300), preds(300);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(rng.index(5));
    preds[i] = rng.bernoulli(0.6) ? labels[i] : static_cast<int>(rng.index(5));
  }
  const auto a = classification_metrics(confusion_matrix(preds, labels));
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<int> l2, p2;
  for (auto i : order) {
    l2.push_back(labels[i]);
    p2.push_back(preds[i]);
  }
  const auto b = classification_metrics(confusion_matrix(p2, l2));
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.macro_f1, b.macro_f1);
  EXPECT_EQ(a.f1, b.f1);
}

TEST(Argmax, TiesToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1);
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.2, 0.2, 0.2, 0.2}), 0);
  EXPECT_EQ(argmax(std::vector<double>{-1, -3, 5}), 2);
}

TEST(Evaluate, ConstantPredictorOnBalancedSet) {
  const auto set = balanced_set(20, 1);
  for (int cls = 0; cls < 5; ++cls) {
    const Evaluation e = evaluate(constant_model(cls), set);
    EXPECT_DOUBLE_EQ(e.metrics.accuracy, 0.2);
    EXPECT_EQ(e.cm.col_sum(cls), 100u);
  }
}

TEST(Evaluate, RepeatableAndThreadIndependent) {
  nn::LstmModel m = nn::LstmModel::init({48, {6, 3, 4}, 5}, 8);
  m.meta.horizon = 16;
  m.meta.stride = 2;
  const auto set = balanced_set(120, 4);
  const Evaluation a = evaluate(m, set);
  const Evaluation b = evaluate(m, set);
  const Evaluation c = evaluate(m, set, 4);
  EXPECT_EQ(a.cm, b.cm);
  EXPECT_EQ(a.cm, c.cm);
  EXPECT_EQ(a.metrics.accuracy, c.metrics.accuracy);
}

TEST(Evaluate, LayoutMismatchNamesField) {
  auto set = balanced_set(1, 1);
  set.horizon = 32;
  try {
    evaluate(constant_model(0), set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EVAL_LAYOUT");
    EXPECT_NE(std::string(e.what()).find("horizon"), std::string::npos);
  }
  set.horizon = 16;
  set.stride = 4;
  try {
    evaluate(constant_model(0), set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stride"), std::string::npos);
  }
}

TEST(CrossEvaluate, CellsAndSpread) {
  std::vector<dataset::SampleSet> expert{balanced_set(10, 1), balanced_set(10, 2)};
  std::vector<dataset::SampleSet> novice{balanced_set(10, 3)};
  // Skew one expert set towards class 2.
  for (auto& s : expert[1].samples) s.label = s.label == 0 ? 2 : s.label;
  const CrossTable t = cross_evaluate(constant_model(2), constant_model(4), expert, novice);
  EXPECT_EQ(t(Expertise::expert, Expertise::expert).accuracies, (std::vector<double>{0.2, 0.4}));
  EXPECT_DOUBLE_EQ(t(Expertise::expert, Expertise::expert).mean, 0.3);
  EXPECT_NEAR(t(Expertise::expert, Expertise::expert).sd, std::sqrt(0.02), 1e-12);
  EXPECT_EQ(t(Expertise::novice, Expertise::novice).sd, 0.0);
  EXPECT_DOUBLE_EQ(t(Expertise::novice, Expertise::expert).mean, 0.2);

  std::ostringstream csv;
  write_cross_csv(csv, t);
  EXPECT_NE(csv.str().find("expert,expert,2,"), std::string::npos);
}

TEST(Reports, Formats) {
  ConfusionMatrix cm;
  cm.at(1, 1) = 3;
  cm.at(2, 1) = 1;
  const std::vector<ReportRow> rows{{"expert", "test-00", classification_metrics(cm)}};
  std::ostringstream csv, table, conf;
  write_metrics_csv(csv, rows);
  write_metrics_table(table, rows);
  write_confusion_csv(conf, "expert/test-00", cm);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "model,test_set,n,accuracy,macro_precision,macro_recall,macro_f1");
  EXPECT_NE(table.str().find("macro"), std::string::npos);
  EXPECT_NE(conf.str().find("true_2,0,1,0,0,0"), std::string::npos);
}

}  // namespace
}  // namespace herdcast::eval
