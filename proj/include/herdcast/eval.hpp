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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "herdcast/dataset.hpp"
#include "herdcast/nn.hpp"

namespace herdcast::eval {

// Rows are true labels, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = kNumClasses);

  int classes() const { return k_; }
  std::uint64_t& at(int truth, int predicted) { return counts_[index(truth, predicted)]; }
  std::uint64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int predicted) const;
  std::uint64_t trace() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int predicted) const;
  int k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 int classes = kNumClasses);

struct MetricsReport {
  double accuracy = 0.0;
  // Unweighted means over the classes that occur in the labels.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::uint64_t n_samples = 0;
};

MetricsReport classification_metrics(const ConfusionMatrix& cm);

// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const double> scores);

// Final-step argmax predictions for raw (unstandardized) samples.
std::vector<int> predict(const nn::LstmModel& model, std::span<const dataset::Sample> samples,
                         std::size_t threads = 1);

struct Evaluation {
  ConfusionMatrix cm;
  MetricsReport metrics;
};

// Throws EVAL_LAYOUT naming the first mismatching field.
void check_compatible(const nn::LstmModel& model, const dataset::SampleSet& set);

Evaluation evaluate(const nn::LstmModel& model, const dataset::SampleSet& set, std::size_t threads = 1);

struct CrossCell {
  std::vector<double> accuracies;  // one per test set
  double mean = 0.0;
  double sd = 0.0;  // sample sd, 0 for a single set
};

// cells[m][d]: model trained on expertise m evaluated on expertise d data.
struct CrossTable {
  CrossCell cells[2][2];
  const CrossCell& operator()(Expertise model, Expertise data) const {
    return cells[static_cast<int>(model)][static_cast<int>(data)];
  }
};

CrossTable cross_evaluate(const nn::LstmModel& expert_model, const nn::LstmModel& novice_model,
                          std::span<const dataset::SampleSet> expert_tests,
                          std::span<const dataset::SampleSet> novice_tests, std::size_t threads = 1);

// Reports.
struct ReportRow {
  std::string model;
  std::string test_set;
  MetricsReport metrics;
};
void write_metrics_csv(std::ostream& out, std::span<const ReportRow> rows);
void write_metrics_table(std::ostream& out, std::span<const ReportRow> rows);
void write_confusion_csv(std::ostream& out, const std::string& name, const ConfusionMatrix& cm);
void write_cross_csv(std::ostream& out, const CrossTable& table);

}  // namespace herdcast::eval
