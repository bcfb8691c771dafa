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

#include "herdcast/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "herdcast/features.hpp"
#include "herdcast/parallel.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::explain {
namespace {

void require_background(std::span<const SequenceMatrix> background) {
  if (background.empty()) throw Error("SHAP_BACKGROUND", "Shapley value function needs a non-empty background set");
}

void check_groups(const Groups& groups, int channels) {
  std::vector<char> seen(static_cast<std::size_t>(channels), 0);
  for (const auto& g : groups)
    for (int c : g) {
      if (c < 0 || c >= channels) throw Error("SHAP_GROUPS", "channel " + std::to_string(c) + " out of range");
      if (seen[static_cast<std::size_t>(c)]++) throw Error("SHAP_GROUPS", "channel " + std::to_string(c) + " in two groups");
    }
}

// Background row b with the channels of x flagged in `keep`.
SequenceMatrix hybrid(const SequenceMatrix& x, const SequenceMatrix& b, const std::vector<char>& keep) {
  SequenceMatrix h = b;
  for (Eigen::Index c = 0; c < h.cols(); ++c)
    if (keep[static_cast<std::size_t>(c)]) h.col(c) = x.col(c);
  return h;
}

// Class probabilities averaged over the background, for one coalition.
Eigen::VectorXd mean_value(const Predictor& f, const SequenceMatrix& x, std::span<const SequenceMatrix> background,
                           const std::vector<char>& keep) {
  std::vector<SequenceMatrix> rows;
  rows.reserve(background.size());
  for (const auto& b : background) rows.push_back(hybrid(x, b, keep));
  std::vector<const SequenceMatrix*> ptrs;
  for (const auto& r : rows) ptrs.push_back(&r);
  return f.predict(ptrs).rowwise().mean();
}

std::vector<char> mask_of(const Groups& groups, unsigned bits, int channels) {
  std::vector<char> keep(static_cast<std::size_t>(channels), 0);
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (bits & (1u << g))
      for (int c : groups[g]) keep[static_cast<std::size_t>(c)] = 1;
  return keep;
}

// Marginal contributions of each group along one ordering, C x d.
Matrix walk(const Predictor& f, const SequenceMatrix& x, const SequenceMatrix& b, const Groups& groups,
            std::span<const int> order) {
  const std::size_t d = groups.size();
  std::vector<SequenceMatrix> rows;
  rows.reserve(d + 1);
  std::vector<char> keep(static_cast<std::size_t>(x.cols()), 0);
  rows.push_back(hybrid(x, b, keep));
  for (int g : order) {
    for (int c : groups[static_cast<std::size_t>(g)]) keep[static_cast<std::size_t>(c)] = 1;
    rows.push_back(hybrid(x, b, keep));
  }
  std::vector<const SequenceMatrix*> ptrs;
  for (const auto& r : rows) ptrs.push_back(&r);
  const Matrix p = f.predict(ptrs);
  Matrix m(p.rows(), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j)
    m.col(order[j]) = p.col(static_cast<Eigen::Index>(j + 1)) - p.col(static_cast<Eigen::Index>(j));
  return m;
}

}  // namespace

int LstmPredictor::classes() const { return model_->params.architecture().num_classes; }
int LstmPredictor::channels() const { return model_->params.architecture().input_size; }
Matrix LstmPredictor::predict(std::span<const SequenceMatrix* const> inputs) const {
  return nn::predict_final(*model_, inputs);
}

Groups singleton_groups(int channels) {
  Groups g(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) g[static_cast<std::size_t>(c)] = {c};
  return g;
}

double value_function(const Predictor& f, const SequenceMatrix& x, const Coalition& s,
                      std::span<const SequenceMatrix> background, int k) {
  require_background(background);
  if (k < 0 || k >= f.classes()) throw Error("SHAP_CLASS", "class index out of range");
  std::vector<char> keep(static_cast<std::size_t>(x.cols()), 0);
  for (int c : s) {
    if (c < 0 || c >= x.cols()) throw Error("SHAP_GROUPS", "channel " + std::to_string(c) + " out of range");
    keep[static_cast<std::size_t>(c)] = 1;
  }
  return mean_value(f, x, background, keep)(k);
}

Matrix shapley_exact_all(const Predictor& f, const SequenceMatrix& x, std::span<const SequenceMatrix> background,
                         const Groups& groups) {
  require_background(background);
  const int channels = static_cast<int>(x.cols());
  check_groups(groups, channels);
  const auto d = static_cast<int>(groups.size());
  if (d > kMaxExactGroups)
    throw Error("SHAP_TOO_MANY_GROUPS", "exact Shapley enumeration supports at most " +
                                            std::to_string(kMaxExactGroups) + " groups, got " + std::to_string(d) +
                                            "; use sampling mode");
  const unsigned n_sets = 1u << d;
  std::vector<Eigen::VectorXd> v(n_sets);
  for (unsigned s = 0; s < n_sets; ++s) v[s] = mean_value(f, x, background, mask_of(groups, s, channels));

  // weight[s] = s! (d-s-1)! / d!
  std::vector<double> weight(static_cast<std::size_t>(std::max(d, 1)));
  for (int s = 0; s < d; ++s) weight[static_cast<std::size_t>(s)] = std::exp(std::lgamma(s + 1.0) + std::lgamma(d - s) - std::lgamma(d + 1.0));

  Matrix phi = Matrix::Zero(f.classes(), d);
  for (unsigned s = 0; s < n_sets; ++s) {
    const int size = std::popcount(s);
    for (int g = 0; g < d; ++g) {
      if (s & (1u << g)) continue;
      phi.col(g) += weight[static_cast<std::size_t>(size)] * (v[s | (1u << g)] - v[s]);
    }
  }
  return phi;
}

std::vector<double> shapley_exact(const Predictor& f, const SequenceMatrix& x,
                                  std::span<const SequenceMatrix> background, int k, const Groups& groups) {
  if (k < 0 || k >= f.classes()) throw Error("SHAP_CLASS", "class index out of range");
  const Matrix phi = shapley_exact_all(f, x, background, groups);
  std::vector<double> out(static_cast<std::size_t>(phi.cols()));
  for (Eigen::Index g = 0; g < phi.cols(); ++g) out[static_cast<std::size_t>(g)] = phi(k, g);
  return out;
}

SampledShapley shapley_sample_all(const Predictor& f, const SequenceMatrix& x,
                                  std::span<const SequenceMatrix> background, const Groups& groups,
                                  std::size_t n_perm, std::uint64_t seed) {
  require_background(background);
  check_groups(groups, static_cast<int>(x.cols()));
  if (n_perm < 2) throw Error("SHAP_PERMUTATIONS", "sampling mode needs at least 2 permutations");
  const auto d = static_cast<Eigen::Index>(groups.size());
  const Eigen::Index c = f.classes();

  SampledShapley out;
  out.pairs = (n_perm + 1) / 2;
  Matrix mean = Matrix::Zero(c, d);
  Matrix m2 = Matrix::Zero(c, d);
  std::vector<int> order(static_cast<std::size_t>(d));
  for (std::size_t p = 0; p < out.pairs; ++p) {
    Rng rng(derive_seed(seed, {p}));
    const SequenceMatrix& b = background[rng.index(background.size())];
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    Matrix est = walk(f, x, b, groups, order);
    std::reverse(order.begin(), order.end());
    est = 0.5 * (est + walk(f, x, b, groups, order));
    // Welford update over pair estimates.
    const Matrix delta = est - mean;
    mean += delta / static_cast<double>(p + 1);
    m2 += delta.cwiseProduct(est - mean);
  }
  out.phi = mean;
  if (out.pairs > 1) {
    const double n = static_cast<double>(out.pairs);
    out.std_error = (m2 / (n - 1.0) / n).cwiseSqrt();
  } else {
    out.std_error = Matrix::Constant(c, d, std::numeric_limits<double>::infinity());
  }
  return out;
}

ChannelEstimate shapley_sample(const Predictor& f, const SequenceMatrix& x,
                               std::span<const SequenceMatrix> background, int k, std::size_t n_perm,
                               std::uint64_t seed) {
  if (k < 0 || k >= f.classes()) throw Error("SHAP_CLASS", "class index out of range");
  const auto r = shapley_sample_all(f, x, background, singleton_groups(static_cast<int>(x.cols())), n_perm, seed);
  ChannelEstimate e;
  for (Eigen::Index g = 0; g < r.phi.cols(); ++g) {
    e.phi.push_back(r.phi(k, g));
    e.std_error.push_back(r.std_error(k, g));
  }
  return e;
}

GlobalRanking global_ranking(std::span<const Matrix> values, int k) {
  if (values.empty()) throw Error("SHAP_EMPTY", "global ranking needs at least one explained sample");
  const Eigen::Index d = values.front().cols();
  if (k < 0 || k >= values.front().rows()) throw Error("SHAP_CLASS", "class index out of range");
  GlobalRanking r;
  r.importance.assign(static_cast<std::size_t>(d), 0.0);
  r.signed_mean.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& v : values) {
    if (v.cols() != d || v.rows() <= k) throw Error("SHAP_SHAPE", "attribution matrices differ in shape");
    for (Eigen::Index i = 0; i < d; ++i) {
      r.importance[static_cast<std::size_t>(i)] += std::abs(v(k, i));
      r.signed_mean[static_cast<std::size_t>(i)] += v(k, i);
    }
  }
  const double n = static_cast<double>(values.size());
  for (auto& x : r.importance) x /= n;
  for (auto& x : r.signed_mean) x /= n;
  r.order.resize(static_cast<std::size_t>(d));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    return r.importance[static_cast<std::size_t>(a)] > r.importance[static_cast<std::size_t>(b)];
  });
  r.rank.resize(static_cast<std::size_t>(d));
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) r.rank[static_cast<std::size_t>(r.order[pos])] = static_cast<int>(pos + 1);
  return r;
}

namespace {

// Number of inversions in v, sorting it.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
  std::size_t i = lo, j = mid, o = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      tmp[o++] = v[j++];
    } else {
      tmp[o++] = v[i++];
    }
  }
  while (i < mid) tmp[o++] = v[i++];
  while (j < hi) tmp[o++] = v[j++];
  std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(hi), v.begin() + static_cast<long>(lo));
  return swaps;
}

struct TieSums {
  double pairs = 0;  // sum t(t-1)/2
  double v0 = 0;     // sum t(t-1)(2t+5)
  double v1 = 0;     // sum t(t-1)
  double v2 = 0;     // sum t(t-1)(t-2)
};

// Tie groups in an already sorted sequence.
template <class Eq>
TieSums tie_sums(std::size_t n, Eq&& equal) {
  TieSums s;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && equal(i, j)) ++j;
    const double t = static_cast<double>(j - i);
    s.pairs += t * (t - 1) / 2;
    s.v0 += t * (t - 1) * (2 * t + 5);
    s.v1 += t * (t - 1);
    s.v2 += t * (t - 1) * (t - 2);
    i = j;
  }
  return s;
}

}  // namespace

RankComparison kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("KENDALL_LENGTH", "kendall_tau: rankings differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw Error("KENDALL_SIZE", "kendall_tau needs at least 2 items");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    if (a[i] != a[j]) return a[i] < a[j];
    if (b[i] != b[j]) return b[i] < b[j];
    return i < j;
  });
  const TieSums ta = tie_sums(n, [&](std::size_t i, std::size_t j) { return a[idx[i]] == a[idx[j]]; });
  const TieSums joint = tie_sums(n, [&](std::size_t i, std::size_t j) {
    return a[idx[i]] == a[idx[j]] && b[idx[i]] == b[idx[j]];
  });
  std::vector<double> bs(n), tmp(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = b[idx[i]];
  const auto swaps = static_cast<double>(merge_count(bs, tmp, 0, n));
  const TieSums tb = tie_sums(n, [&](std::size_t i, std::size_t j) { return bs[i] == bs[j]; });

  const double nn = static_cast<double>(n);
  const double n0 = nn * (nn - 1) / 2;
  const double s = n0 - ta.pairs - tb.pairs + joint.pairs - 2.0 * swaps;

  RankComparison r;
  r.n_items = n;
  const double denom = std::sqrt((n0 - ta.pairs) * (n0 - tb.pairs));
  if (denom == 0.0) return r;  // a constant ranking: tau undefined, reported as 0, p = 1
  r.tau = std::clamp(s / denom, -1.0, 1.0);
  double var = (nn * (nn - 1) * (2 * nn + 5) - ta.v0 - tb.v0) / 18.0 + ta.v1 * tb.v1 / (2.0 * nn * (nn - 1));
  if (n > 2) var += ta.v2 * tb.v2 / (9.0 * nn * (nn - 1) * (nn - 2));
  if (var > 0) r.p_value = std::clamp(std::erfc(std::abs(s) / std::sqrt(var) / std::sqrt(2.0)), 0.0, 1.0);
  return r;
}

RankComparison kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b, std::size_t depth, TopK mode) {
  if (rank_a.size() != rank_b.size()) throw Error("KENDALL_LENGTH", "kendall_tau: rankings differ in length");
  std::vector<double> a, b;
  const bool all = depth == 0 || depth >= rank_a.size();
  const auto k = static_cast<int>(depth);
  for (std::size_t i = 0; i < rank_a.size(); ++i) {
    const bool in_a = rank_a[i] <= k, in_b = rank_b[i] <= k;
    const bool take = all || (mode == TopK::union_full_rank ? (in_a || in_b) : (in_a && in_b));
    if (!take) continue;
    a.push_back(rank_a[i]);
    b.push_back(rank_b[i]);
  }
  RankComparison r = kendall_tau_b(a, b);
  r.depth = all ? 0 : depth;
  return r;
}

std::vector<SequenceMatrix> draw_background(std::span<const dataset::Sample> pool, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  const std::size_t take = std::min(n, pool.size());
  // Partial Fisher-Yates: the first `take` slots are the draw.
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  std::vector<SequenceMatrix> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(pool[idx[i]].features);
  return out;
}

ShapReport explain_samples(const Predictor& f, std::span<const dataset::Sample> samples,
                           std::span<const SequenceMatrix> background, const ShapConfig& cfg,
                           std::string background_id) {
  require_background(background);
  if (samples.empty()) throw Error("SHAP_EMPTY", "nothing to explain");
  const Groups groups = cfg.groups.empty() ? singleton_groups(f.channels()) : cfg.groups;
  ShapReport report;
  report.background_id = std::move(background_id);
  report.phi.resize(samples.size());
  report.std_error.resize(samples.size());
  for (const auto& s : samples)
    report.sample_ids.push_back(s.trial_id + ":" + std::to_string(s.focal) + ":" + std::to_string(s.t_f));
  parallel_for(samples.size(), cfg.threads, [&](std::size_t i) {
    if (cfg.exact) {
      report.phi[i] = shapley_exact_all(f, samples[i].features, background, groups);
      report.std_error[i] = Matrix::Zero(report.phi[i].rows(), report.phi[i].cols());
    } else {
      auto r = shapley_sample_all(f, samples[i].features, background, groups, cfg.n_perm, derive_seed(cfg.seed, {i}));
      report.phi[i] = std::move(r.phi);
      report.std_error[i] = std::move(r.std_error);
    }
  });
  for (int k = 0; k < f.classes(); ++k) report.global.push_back(global_ranking(report.phi, k));
  return report;
}

namespace {
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
std::string channel_name(std::size_t channel, std::size_t d) {
  if (d == features::kNumFeatures) return std::string(features::feature_name(channel));
  return "group " + std::to_string(channel);
}
}  // namespace

void write_shap_csv(std::ostream& out, const ShapReport& report) {
  out << "sample_id,class,channel,phi,stderr\n";
  for (std::size_t i = 0; i < report.phi.size(); ++i) {
    const Matrix& phi = report.phi[i];
    for (Eigen::Index k = 0; k < phi.rows(); ++k)
      for (Eigen::Index c = 0; c < phi.cols(); ++c)
        out << report.sample_ids[i] << ',' << k << ',' << c << ',' << num(phi(k, c)) << ','
            << num(report.std_error[i](k, c)) << '\n';
  }
}

void write_top_table_csv(std::ostream& out, const ShapReport& report, std::size_t k) {
  out << "class,rank,channel,feature,mean_abs_phi,mean_phi\n";
  for (std::size_t cls = 0; cls < report.global.size(); ++cls) {
    const auto& g = report.global[cls];
    for (std::size_t r = 0; r < std::min(k, g.order.size()); ++r) {
      const auto ch = static_cast<std::size_t>(g.order[r]);
      out << cls << ',' << r + 1 << ',' << ch << ',' << channel_name(ch, g.order.size()) << ','
          << num(g.importance[ch]) << ',' << num(g.signed_mean[ch]) << '\n';
    }
  }
}

void write_kendall_csv(std::ostream& out, std::span<const NamedComparison> rows) {
  out << "comparison,class,depth,n_items,tau,p_value\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.class_index << ',' << (r.result.depth == 0 ? std::string("all") : std::to_string(r.result.depth))
        << ',' << r.result.n_items << ',' << num(r.result.tau) << ',' << num(r.result.p_value) << '\n';
}

}  // namespace herdcast::explain
