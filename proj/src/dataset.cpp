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

#include "herdcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "herdcast/binio.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::dataset {

std::string_view to_string(Subclass s) {
  switch (s) {
    case Subclass::nt_ns: return "NT-NS";
    case Subclass::nt_s: return "NT-S";
    case Subclass::t_ns: return "T-NS";
    case Subclass::t_s: return "T-S";
  }
  return "?";
}

Subclass tag_subclass(std::span<const int> window_labels, int horizon_label) {
  if (window_labels.empty()) throw Error("EMPTY_WINDOW", "tag_subclass: empty label window");
  const int last = window_labels.back();
  const bool transitioning =
      std::any_of(window_labels.begin(), window_labels.end(), [&](int l) { return l != window_labels.front(); });
  const bool switching = horizon_label != last;
  if (transitioning) return switching ? Subclass::t_s : Subclass::t_ns;
  return switching ? Subclass::nt_s : Subclass::nt_ns;
}

namespace {

void check_geometry(int stride, int horizon) {
  if (stride != 1 && stride != 2 && stride != 4)
    throw Error("BAD_STRIDE", "stride must be 1, 2 or 4, got " + std::to_string(stride));
  if (horizon < 0 || horizon > 0xffff) throw Error("BAD_HORIZON", "horizon out of range: " + std::to_string(horizon));
}

// Valid window ends: the stencil and horizon frame both fit in the trial.
template <class Fn>
void for_each_window(const Trial& trial, int focal, int stride, int horizon, Fn&& fn) {
  const std::size_t n = trial.frames.size();
  const std::size_t back = static_cast<std::size_t>((kSeqLen - 1) * stride);
  const std::size_t ahead = static_cast<std::size_t>(horizon * stride);
  if (n < back + ahead + 1) return;
  std::array<int, kSeqLen> window{};
  for (std::size_t t_f = back; t_f + ahead < n; ++t_f) {
    for (int r = 0; r < kSeqLen; ++r)
      window[r] = (*trial.frames[t_f - back + static_cast<std::size_t>(r * stride)].labels)[focal];
    const int label = (*trial.frames[t_f + ahead].labels)[focal];
    fn(t_f, label, tag_subclass(window, label));
  }
}

SequenceMatrix window_rows(const features::FeatureTable& table, std::size_t t_f, int stride) {
  SequenceMatrix m(kSeqLen, static_cast<Eigen::Index>(features::kNumFeatures));
  const auto first = static_cast<Eigen::Index>(t_f) - (kSeqLen - 1) * stride;
  for (int r = 0; r < kSeqLen; ++r) m.row(r) = table.row(first + r * stride);
  return m;
}

void require_labeled(const Trial& trial) {
  if (!trial.labeled()) throw Error("TRIAL_UNLABELED", "trial '" + trial.trial_id + "' has unlabeled frames");
}

// Splits n into k near-equal parts, remainder to the first parts.
std::vector<std::size_t> equal_quota(std::size_t n, std::size_t k) {
  std::vector<std::size_t> q(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) ++q[i];
  return q;
}

// Largest-remainder apportionment of n proportional to `weights`.
std::vector<std::size_t> proportional_quota(std::size_t n, std::span<const std::size_t> weights) {
  const double total = static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::size_t{0}));
  std::vector<std::size_t> q(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total > 0 ? static_cast<double>(n) * static_cast<double>(weights[i]) / total : 0.0;
    q[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += q[i];
    rema.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(rema.begin(), rema.end());
  for (std::size_t j = 0; assigned < n && j < rema.size(); ++j, ++assigned) ++q[rema[j].second];
  return q;
}

}  // namespace

std::vector<Sample> window_trial(const Trial& trial, int focal, int stride, int horizon) {
  check_geometry(stride, horizon);
  require_labeled(trial);
  std::vector<Sample> out;
  if (trial.frames.size() < 3) return out;
  const features::FeatureTable table = features::feature_table(trial, focal);
  for_each_window(trial, focal, stride, horizon, [&](std::size_t t_f, int label, Subclass sc) {
    out.push_back({window_rows(table, t_f, stride), label, sc, trial.trial_id, focal, static_cast<std::uint32_t>(t_f)});
  });
  return out;
}

std::array<std::size_t, kNumSubclasses> SamplePool::subclass_counts() const {
  std::array<std::size_t, kNumSubclasses> c{};
  for (const auto& w : windows) ++c[static_cast<int>(w.subclass)];
  return c;
}

Sample SamplePool::materialize(const WindowRef& ref) const {
  return {window_rows(tables[ref.trial][ref.focal], ref.t_f, stride), ref.label, ref.subclass, trial_ids[ref.trial],
          ref.focal, ref.t_f};
}

SamplePool build_pool(std::span<const Trial> trials, int stride, int horizon) {
  check_geometry(stride, horizon);
  SamplePool pool;
  pool.stride = stride;
  pool.horizon = horizon;
  for (const Trial& trial : trials) {
    if (!trial.success) continue;
    require_labeled(trial);
    if (trial.frames.size() < 3) continue;
    const auto index = static_cast<std::uint32_t>(pool.trial_ids.size());
    pool.trial_ids.push_back(trial.trial_id);
    pool.tables.push_back({features::feature_table(trial, 0), features::feature_table(trial, 1)});
    for (int focal = 0; focal < kNumHerders; ++focal)
      for_each_window(trial, focal, stride, horizon, [&](std::size_t t_f, int label, Subclass sc) {
        pool.windows.push_back({index, static_cast<std::uint8_t>(focal), static_cast<std::uint32_t>(t_f),
                                static_cast<std::uint8_t>(label), sc});
      });
  }
  return pool;
}

void SplitConfig::validate() const {
  if (n_train == 0 || n_test == 0) throw Error("SPLIT_CONFIG", "n_train and n_test must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error("SPLIT_CONFIG", "validation fraction must lie in (0, 1)");
}

void Standardization::apply(SequenceMatrix& x) const {
  if (empty()) return;
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    x.col(c) = (x.col(c).array() - mean[static_cast<std::size_t>(c)]) / scale[static_cast<std::size_t>(c)];
}

Standardization Standardization::identity(std::size_t n) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

Standardization Standardization::fit(std::span<const Sample> samples) {
  if (samples.empty()) throw Error("EMPTY_SET", "cannot fit standardization on an empty set");
  const auto cols = static_cast<std::size_t>(samples.front().features.cols());
  std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
  double rows = 0;
  for (const Sample& s : samples) {
    for (Eigen::Index r = 0; r < s.features.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) sum[c] += s.features(r, static_cast<Eigen::Index>(c));
    rows += static_cast<double>(s.features.rows());
  }
  Standardization st = identity(cols);
  for (std::size_t c = 0; c < cols; ++c) st.mean[c] = sum[c] / rows;
  for (const Sample& s : samples)
    for (Eigen::Index r = 0; r < s.features.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = s.features(r, static_cast<Eigen::Index>(c)) - st.mean[c];
        sq[c] += d * d;
      }
  for (std::size_t c = 0; c < cols; ++c) {
    const double sd = std::sqrt(sq[c] / rows);
    if (sd < 1e-12) {
      st.mean[c] = 0.0;
      st.scale[c] = 1.0;
    } else {
      st.scale[c] = sd;
    }
  }
  return st;
}

SampleSet standardized(const SampleSet& set, const Standardization& stats) {
  SampleSet out = set;
  for (Sample& s : out.samples) stats.apply(s.features);
  return out;
}

SampleSet split_validation(SampleSet& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("SPLIT_CONFIG", "validation fraction must lie in (0, 1)");
  const std::size_t n = train.samples.size();
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<bool> to_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) to_val[order[i]] = true;
  SampleSet val{train.horizon, train.stride, {}};
  std::vector<Sample> keep;
  keep.reserve(n - n_val);
  for (std::size_t i = 0; i < n; ++i) (to_val[i] ? val.samples : keep).push_back(std::move(train.samples[i]));
  train.samples = std::move(keep);
  return val;
}

Split assemble_split(const SamplePool& pool, const SplitConfig& cfg) {
  cfg.validate();
  std::array<std::vector<std::size_t>, kNumSubclasses> by_class;
  for (std::size_t i = 0; i < pool.windows.size(); ++i)
    by_class[static_cast<int>(pool.windows[i].subclass)].push_back(i);
  std::array<std::size_t, kNumSubclasses> available{};
  for (int c = 0; c < kNumSubclasses; ++c) {
    available[c] = by_class[c].size();
    Rng rng(derive_seed(cfg.seed, {0, static_cast<std::uint64_t>(c)}));
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng.engine());
  }

  std::vector<std::size_t> train_quota, test_quota;
  if (cfg.balance == Balance::balanced) {
    train_quota = equal_quota(cfg.n_train, kNumSubclasses);
    test_quota = equal_quota(cfg.n_test, kNumSubclasses);
  } else {
    train_quota = proportional_quota(cfg.n_train, available);
    test_quota = proportional_quota(cfg.n_test, available);
  }

  std::string shortfall;
  for (int c = 0; c < kNumSubclasses; ++c) {
    const std::size_t need = train_quota[c] + cfg.n_test_sets * test_quota[c];
    if (need > available[c]) {
      if (!shortfall.empty()) shortfall += "; ";
      shortfall += "subclass " + std::string(to_string(static_cast<Subclass>(c))) + " short by " +
                   std::to_string(need - available[c]) + " (need " + std::to_string(need) + ", have " +
                   std::to_string(available[c]) + ")";
    }
  }
  if (!shortfall.empty()) throw Error("SPLIT_SHORTFALL", "insufficient samples: " + shortfall);

  std::array<std::size_t, kNumSubclasses> cursor{};
  auto draw = [&](const std::vector<std::size_t>& quota, std::uint64_t stream) {
    SampleSet set{static_cast<std::uint16_t>(pool.horizon), static_cast<std::uint8_t>(pool.stride), {}};
    std::vector<std::size_t> picked;
    for (int c = 0; c < kNumSubclasses; ++c)
      for (std::size_t k = 0; k < quota[c]; ++k) picked.push_back(by_class[c][cursor[c]++]);
    Rng rng(derive_seed(cfg.seed, {1, stream}));
    std::shuffle(picked.begin(), picked.end(), rng.engine());
    set.samples.reserve(picked.size());
    for (std::size_t i : picked) set.samples.push_back(pool.materialize(pool.windows[i]));
    return set;
  };

  Split split;
  split.train = draw(train_quota, 0);
  for (std::size_t s = 0; s < cfg.n_test_sets; ++s) split.tests.push_back(draw(test_quota, s + 1));
  split.validation = split_validation(split.train, cfg.validation_fraction, derive_seed(cfg.seed, {2}));
  if (cfg.standardize) split.standardization = Standardization::fit(split.train.samples);
  return split;
}

void write_hxs(const std::filesystem::path& path, const SampleSet& set) {
  binio::Writer w;
  w.bytes("HXS1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(set.samples.size()));
  w.u16(kSeqLen);
  w.u16(static_cast<std::uint16_t>(features::kNumFeatures));
  w.u16(set.horizon);
  w.u8(set.stride);
  std::map<std::string, std::uint32_t> ids;
  std::vector<const std::string*> table;
  for (const Sample& s : set.samples) {
    if (s.features.rows() != kSeqLen || s.features.cols() != static_cast<Eigen::Index>(features::kNumFeatures))
      throw Error("HXS_SHAPE", "sample from '" + s.trial_id + "' is not 25 x 48");
    w.f64s(std::span(s.features.data(), static_cast<std::size_t>(s.features.size())));
    w.u8(static_cast<std::uint8_t>(s.label));
    w.u8(static_cast<std::uint8_t>(s.subclass));
    auto [it, inserted] = ids.emplace(s.trial_id, static_cast<std::uint32_t>(table.size()));
    if (inserted) table.push_back(&it->first);
  }
  w.u32(static_cast<std::uint32_t>(table.size()));
  for (const std::string* id : table) w.str(*id);
  for (const Sample& s : set.samples) {
    w.u32(ids.at(s.trial_id));
    w.u8(static_cast<std::uint8_t>(s.focal));
    w.u32(s.t_f);
  }
  w.save(path);
}

SampleSet read_hxs(const std::filesystem::path& path) {
  auto in = binio::Reader::from_file(path, "sample file");
  binio::expect_header(in, "HXS1", 1);
  const std::uint32_t n = in.u32();
  const std::uint16_t n_seq = in.u16();
  const std::uint16_t n_feat = in.u16();
  if (n_seq != kSeqLen || n_feat != features::kNumFeatures)
    throw binio::FormatError(binio::FormatErrorKind::corrupt, "HXS_SHAPE",
                             "sample file declares " + std::to_string(n_seq) + " x " + std::to_string(n_feat) +
                                 " windows, expected 25 x 48");
  SampleSet set;
  set.horizon = in.u16();
  set.stride = in.u8();
  set.samples.resize(n);
  for (Sample& s : set.samples) {
    s.features.resize(n_seq, n_feat);
    in.f64s(std::span(s.features.data(), static_cast<std::size_t>(s.features.size())));
    s.label = in.u8();
    const std::uint8_t sc = in.u8();
    if (s.label > kNumTargets || sc >= kNumSubclasses)
      throw binio::FormatError(binio::FormatErrorKind::corrupt, "HXS_CORRUPT", "sample file has out-of-range label");
    s.subclass = static_cast<Subclass>(sc);
  }
  std::vector<std::string> table(in.u32());
  for (auto& id : table) id = in.str();
  for (Sample& s : set.samples) {
    const std::uint32_t idx = in.u32();
    if (idx >= table.size())
      throw binio::FormatError(binio::FormatErrorKind::corrupt, "HXS_CORRUPT", "sample file provenance index out of range");
    s.trial_id = table[idx];
    s.focal = in.u8();
    s.t_f = in.u32();
  }
  if (in.remaining() != 0)
    throw binio::FormatError(binio::FormatErrorKind::corrupt, "HXS_CORRUPT",
                             "sample file has " + std::to_string(in.remaining()) + " trailing bytes");
  return set;
}

}  // namespace herdcast::dataset
