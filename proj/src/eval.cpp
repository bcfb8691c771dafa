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

#include "herdcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "herdcast/parallel.hpp"

namespace herdcast::eval {

ConfusionMatrix::ConfusionMatrix(int classes) : k_(classes) {
  if (classes < 1) throw Error("EVAL_ARGS", "confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= k_ || predicted < 0 || predicted >= k_)
    throw Error("EVAL_ARGS", "label outside 0.." + std::to_string(k_ - 1));
  return static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(predicted);
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int predicted) const {
  std::uint64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (int c = 0; c < k_; ++c) s += at(c, c);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw Error("EVAL_ARGS", "confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels, int classes) {
  if (predictions.size() != labels.size())
    throw Error("EVAL_LENGTH", "confusion_matrix: " + std::to_string(predictions.size()) + " predictions vs " +
                                   std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) ++cm.at(labels[i], predictions[i]);
  return cm;
}

MetricsReport classification_metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.n_samples = cm.total();
  if (r.n_samples == 0) throw Error("EVAL_EMPTY", "classification_metrics: empty confusion matrix");
  const int k = cm.classes();
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.n_samples);
  r.precision.assign(k, 0.0);
  r.recall.assign(k, 0.0);
  r.f1.assign(k, 0.0);
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const auto d = static_cast<double>(cm.at(c, c));
    const auto col = cm.col_sum(c);
    const auto row = cm.row_sum(c);
    if (col > 0) r.precision[c] = d / static_cast<double>(col);
    if (row > 0) r.recall[c] = d / static_cast<double>(row);
    const double pr = r.precision[c] + r.recall[c];
    if (pr > 0) r.f1[c] = 2.0 * r.precision[c] * r.recall[c] / pr;
    if (row > 0) {
      ++present;
      r.macro_precision += r.precision[c];
      r.macro_recall += r.recall[c];
      r.macro_f1 += r.f1[c];
    }
  }
  r.macro_precision /= present;
  r.macro_recall /= present;
  r.macro_f1 /= present;
  return r;
}

int argmax(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

std::vector<int> predict(const nn::LstmModel& model, std::span<const dataset::Sample> samples, std::size_t threads) {
  constexpr std::size_t kChunk = 256;
  std::vector<int> out(samples.size());
  const std::size_t chunks = (samples.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(samples.size(), lo + kChunk);
    std::vector<const nn::SequenceMatrix*> xs;
    for (std::size_t i = lo; i < hi; ++i) xs.push_back(&samples[i].features);
    const nn::Matrix probs = nn::predict_final(model, xs);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto col = static_cast<Eigen::Index>(i - lo);
      std::vector<double> p(probs.col(col).data(), probs.col(col).data() + probs.rows());
      out[i] = argmax(p);
    }
  });
  return out;
}

void check_compatible(const nn::LstmModel& model, const dataset::SampleSet& set) {
  auto fail = [](const std::string& field, long a, long b) {
    throw Error("EVAL_LAYOUT", "layout mismatch in " + field + ": model " + std::to_string(a) + ", samples " +
                                   std::to_string(b));
  };
  if (model.meta.horizon != set.horizon) fail("horizon", model.meta.horizon, set.horizon);
  if (model.meta.stride != set.stride) fail("stride", model.meta.stride, set.stride);
  const long in = model.params.layers.empty() ? 0 : static_cast<long>(model.params.layers.front().input_size());
  for (const auto& s : set.samples) {
    if (s.features.cols() != in) fail("feature count", in, static_cast<long>(s.features.cols()));
    if (s.features.rows() != dataset::kSeqLen) fail("sequence length", dataset::kSeqLen, s.features.rows());
  }
}

Evaluation evaluate(const nn::LstmModel& model, const dataset::SampleSet& set, std::size_t threads) {
  check_compatible(model, set);
  const auto pred = predict(model, set.samples, threads);
  std::vector<int> labels;
  labels.reserve(set.samples.size());
  for (const auto& s : set.samples) labels.push_back(s.label);
  Evaluation e{confusion_matrix(pred, labels, model.params.architecture().num_classes), {}};
  e.metrics = classification_metrics(e.cm);
  return e;
}

CrossTable cross_evaluate(const nn::LstmModel& expert_model, const nn::LstmModel& novice_model,
                          std::span<const dataset::SampleSet> expert_tests,
                          std::span<const dataset::SampleSet> novice_tests, std::size_t threads) {
  if (expert_tests.empty() || novice_tests.empty())
    throw Error("EVAL_ARGS", "cross_evaluate needs at least one test set per expertise");
  CrossTable table;
  const nn::LstmModel* models[2] = {&expert_model, &novice_model};
  const std::span<const dataset::SampleSet> tests[2] = {expert_tests, novice_tests};
  for (int m = 0; m < 2; ++m)
    for (int d = 0; d < 2; ++d) {
      CrossCell& cell = table.cells[m][d];
      for (const auto& set : tests[d]) cell.accuracies.push_back(evaluate(*models[m], set, threads).metrics.accuracy);
      const double n = static_cast<double>(cell.accuracies.size());
      cell.mean = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) / n;
      if (cell.accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : cell.accuracies) ss += (a - cell.mean) * (a - cell.mean);
        cell.sd = std::sqrt(ss / (n - 1.0));
      }
    }
  return table;
}

namespace {
std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const ReportRow> rows) {
  out << "model,test_set,n,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const auto& r : rows)
    out << r.model << ',' << r.test_set << ',' << r.metrics.n_samples << ',' << fmt(r.metrics.accuracy) << ','
        << fmt(r.metrics.macro_precision) << ',' << fmt(r.metrics.macro_recall) << ',' << fmt(r.metrics.macro_f1)
        << '\n';
}

void write_metrics_table(std::ostream& out, std::span<const ReportRow> rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-24s %7s %9s %9s %9s %9s\n", "model", "test set", "n", "accuracy",
                "precision", "recall", "F1");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-24s %-24s %7llu %9.4f %9.4f %9.4f %9.4f\n", r.model.c_str(), r.test_set.c_str(),
                  static_cast<unsigned long long>(r.metrics.n_samples), r.metrics.accuracy, r.metrics.macro_precision,
                  r.metrics.macro_recall, r.metrics.macro_f1);
    out << buf;
  }
  out << "(precision, recall and F1 are macro averages over the classes present)\n";
}

void write_confusion_csv(std::ostream& out, const std::string& name, const ConfusionMatrix& cm) {
  out << name;
  for (int p = 0; p < cm.classes(); ++p) out << ",pred_" << p;
  out << '\n';
  for (int t = 0; t < cm.classes(); ++t) {
    out << "true_" << t;
    for (int p = 0; p < cm.classes(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

void write_cross_csv(std::ostream& out, const CrossTable& table) {
  out << "model,data,n_sets,mean_accuracy,sd_accuracy\n";
  for (int m = 0; m < 2; ++m)
    for (int d = 0; d < 2; ++d) {
      const auto& c = table.cells[m][d];
      out << to_string(static_cast<Expertise>(m)) << ',' << to_string(static_cast<Expertise>(d)) << ','
          << c.accuracies.size() << ',' << fmt(c.mean) << ',' << fmt(c.sd) << '\n';
    }
}

}  // namespace herdcast::eval
