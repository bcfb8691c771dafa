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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "herdcast/dataset.hpp"
#include "herdcast/nn.hpp"

namespace herdcast::explain {

using dataset::SequenceMatrix;
using Matrix = Eigen::MatrixXd;

// Black-box classifier: final-step class probabilities, one column per input.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int classes() const = 0;
  virtual int channels() const = 0;
  virtual Matrix predict(std::span<const SequenceMatrix* const> inputs) const = 0;
};

// Wraps a trained LSTM; inputs are raw and the model's standardization is
// applied inside.
class LstmPredictor : public Predictor {
 public:
  explicit LstmPredictor(const nn::LstmModel& model) : model_(&model) {}
  int classes() const override;
  int channels() const override;
  Matrix predict(std::span<const SequenceMatrix* const> inputs) const override;

 private:
  const nn::LstmModel* model_;
};

// Channel indices kept from the explained sample; all other channels come
// from a background sample, across all timesteps.
using Coalition = std::vector<int>;

// Partition of the channels into attribution groups.
using Groups = std::vector<std::vector<int>>;
Groups singleton_groups(int channels);

// v(S): mean over the background of the class-k probability of the hybrid.
double value_function(const Predictor& f, const SequenceMatrix& x, const Coalition& s,
                      std::span<const SequenceMatrix> background, int k);

inline constexpr int kMaxExactGroups = 15;

// Exact Shapley values by enumerating all 2^d group coalitions. Returns a
// C x d matrix (every class at once).
Matrix shapley_exact_all(const Predictor& f, const SequenceMatrix& x, std::span<const SequenceMatrix> background,
                         const Groups& groups);
std::vector<double> shapley_exact(const Predictor& f, const SequenceMatrix& x,
                                  std::span<const SequenceMatrix> background, int k, const Groups& groups);

struct SampledShapley {
  Matrix phi;     // C x d
  Matrix std_error;  // C x d, over antithetic pairs (inf with a single pair)
  std::size_t pairs = 0;
};

// Permutation sampling with antithetic pairs (a permutation and its
// reverse). Each pair draws one background sample uniformly, which keeps the
// estimate unbiased for the background-averaged Shapley value. n_perm is
// rounded up to an even count.
SampledShapley shapley_sample_all(const Predictor& f, const SequenceMatrix& x,
                                  std::span<const SequenceMatrix> background, const Groups& groups,
                                  std::size_t n_perm, std::uint64_t seed);

struct ChannelEstimate {
  std::vector<double> phi;
  std::vector<double> std_error;
};
ChannelEstimate shapley_sample(const Predictor& f, const SequenceMatrix& x,
                               std::span<const SequenceMatrix> background, int k, std::size_t n_perm,
                               std::uint64_t seed);

// Global importance for one class: mean |phi| over samples, plus the signed
// mean. Ranking is descending importance, ties to the lower channel index.
struct GlobalRanking {
  std::vector<double> importance;
  std::vector<double> signed_mean;
  std::vector<int> order;  // channel indices, most important first
  std::vector<int> rank;   // rank[channel], 1 = most important
};
GlobalRanking global_ranking(std::span<const Matrix> values, int k);

// Kendall tau-b between two score vectors (higher or lower, only order
// matters), with the tie-corrected normal approximation for the p-value.
struct RankComparison {
  double tau = 0.0;
  double p_value = 1.0;
  std::size_t depth = 0;  // 0 = all items
  std::size_t n_items = 0;
};
RankComparison kendall_tau_b(std::span<const double> a, std::span<const double> b);

// How top-k comparisons pick the compared items. union_full_rank: items in
// either list's top k, each scored by its full-list rank. intersection:
// only items in both top-k sets.
enum class TopK { union_full_rank, intersection };

// rank_a/rank_b give each item's rank (1 = first). depth 0 compares all items.
RankComparison kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b, std::size_t depth = 0,
                           TopK mode = TopK::union_full_rank);

// Attribution run over a set of samples.
struct ShapConfig {
  std::size_t n_perm = 200;
  std::size_t background_size = 200;
  std::uint64_t seed = 0;
  bool exact = false;  // exact mode needs grouped channels
  Groups groups;       // empty = one group per channel
  std::size_t threads = 1;
};

struct ShapReport {
  std::string background_id;
  std::vector<std::string> sample_ids;
  std::vector<Matrix> phi;      // per sample, C x d
  std::vector<Matrix> std_error;  // per sample, C x d (zeros in exact mode)
  std::vector<GlobalRanking> global;  // per class
};

// Draws `n` background rows from `pool` without replacement (all when the
// pool is smaller).
std::vector<SequenceMatrix> draw_background(std::span<const dataset::Sample> pool, std::size_t n,
                                            std::uint64_t seed);

ShapReport explain_samples(const Predictor& f, std::span<const dataset::Sample> samples,
                           std::span<const SequenceMatrix> background, const ShapConfig& cfg,
                           std::string background_id = {});

void write_shap_csv(std::ostream& out, const ShapReport& report);
// Per-class top-`k` table: class, rank, channel, name, importance, signed mean.
void write_top_table_csv(std::ostream& out, const ShapReport& report, std::size_t k = 10);

struct NamedComparison {
  std::string name;
  int class_index = 0;
  RankComparison result;
};
void write_kendall_csv(std::ostream& out, std::span<const NamedComparison> rows);

}  // namespace herdcast::explain
