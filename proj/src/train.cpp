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

#include "herdcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "herdcast/binio.hpp"
#include "herdcast/parallel.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::train {
namespace {

// Gradient work is split into fixed-size chunks so that the reduction order,
// and therefore the result, does not depend on the worker count.
constexpr std::size_t kGradChunk = 32;
constexpr std::size_t kEvalChunk = 256;

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* what) { throw Error("TRAIN_CONFIG", std::string("invalid train config: ") + what); };
  if (!(learning_rate > 0)) fail("learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (batch_size < 1) fail("batch size must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (max_epochs < 1) fail("max epochs must be >= 1");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size())
    throw Error("ADAM_SHAPE", "adam_step: " + std::to_string(params.size()) + " parameters but " +
                                  std::to_string(grads.size()) + " gradients");
  if (state.m.empty() && state.step == 0) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw Error("ADAM_SHAPE", "adam_step: optimizer state does not match the parameter count");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void adam_step(nn::Parameters& params, const nn::Parameters& grads, AdamState& state, const TrainConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw Error("ADAM_SHAPE", "adam_step: gradient set does not match parameters");
  std::vector<double> flat_p(n), flat_g(n);
  std::size_t off = 0;
  params.for_each([&](const auto& t) {
    std::copy_n(t.data(), t.size(), flat_p.begin() + static_cast<std::ptrdiff_t>(off));
    off += static_cast<std::size_t>(t.size());
  });
  off = 0;
  grads.for_each([&](const auto& t) {
    std::copy_n(t.data(), t.size(), flat_g.begin() + static_cast<std::ptrdiff_t>(off));
    off += static_cast<std::size_t>(t.size());
  });
  adam_step(std::span<double>(flat_p), std::span<const double>(flat_g), state, cfg);
  off = 0;
  params.for_each([&](auto& t) {
    std::copy_n(flat_p.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.data());
    off += static_cast<std::size_t>(t.size());
  });
}

LossAccuracy evaluate_loss(const nn::LstmModel& model, std::span<const dataset::Sample> samples, std::size_t threads) {
  if (samples.empty()) throw Error("EMPTY_SET", "evaluate_loss on an empty set");
  const std::size_t n_chunks = (samples.size() + kEvalChunk - 1) / kEvalChunk;
  std::vector<double> nll(n_chunks, 0.0), correct(n_chunks, 0.0);
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kEvalChunk, hi = std::min(samples.size(), lo + kEvalChunk);
    std::vector<const nn::SequenceMatrix*> xs;
    for (std::size_t i = lo; i < hi; ++i) xs.push_back(&samples[i].features);
    // Inputs are pre-standardized; bypass the model's own scaling.
    nn::LstmModel raw = model;
    raw.standardization = {};
    const nn::Matrix p = nn::predict_final(raw, xs);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto col = p.col(static_cast<Eigen::Index>(i - lo));
      const int label = samples[i].label;
      nll[c] -= std::log(std::max(col(label), std::numeric_limits<double>::min()));
      Eigen::Index arg = 0;
      col.maxCoeff(&arg);
      correct[c] += arg == label ? 1.0 : 0.0;
    }
  });
  const double n = static_cast<double>(samples.size());
  return {std::accumulate(nll.begin(), nll.end(), 0.0) / n, std::accumulate(correct.begin(), correct.end(), 0.0) / n};
}

FitResult fit(nn::LstmModel model, const dataset::SampleSet& train, const dataset::SampleSet& validation,
              const TrainConfig& cfg, const dataset::Standardization& standardization, bool standardize) {
  cfg.validate();
  if (train.samples.empty() || validation.samples.empty())
    throw Error("EMPTY_SET", "fit needs non-empty training and validation sets");

  dataset::Standardization stats = standardization;
  if (stats.empty() && standardize) stats = dataset::Standardization::fit(train.samples);
  const dataset::SampleSet tr = dataset::standardized(train, stats);
  const dataset::SampleSet va = dataset::standardized(validation, stats);

  model.standardization = stats;
  model.meta.learning_rate = cfg.learning_rate;
  model.meta.horizon = train.horizon;
  model.meta.stride = train.stride;
  model.meta.loss = cfg.loss;
  model.meta.seed = cfg.seed;

  FitResult result;
  result.history.learning_rate = cfg.learning_rate;
  result.history.seed = cfg.seed;
  AdamState adam;
  double best_loss = std::numeric_limits<double>::infinity();
  nn::Parameters best = model.params;
  std::size_t since_best = 0;

  const std::size_t n = tr.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {1, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size, ++batch_index) {
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const std::size_t n_chunks = (hi - lo + kGradChunk - 1) / kGradChunk;
      std::vector<nn::LossGrad> parts(n_chunks);
      parallel_for(n_chunks, cfg.threads, [&](std::size_t c) {
        const std::size_t a = lo + c * kGradChunk, b = std::min(hi, a + kGradChunk);
        std::vector<const nn::SequenceMatrix*> xs;
        std::vector<int> ys;
        for (std::size_t i = a; i < b; ++i) {
          xs.push_back(&tr.samples[order[i]].features);
          ys.push_back(tr.samples[order[i]].label);
        }
        const auto plan = nn::DropoutPlan::training(derive_seed(cfg.seed, {2, epoch, batch_index, c}));
        parts[c] = nn::loss_and_backward(model, xs, ys, plan, cfg.loss);
        parts[c].grad *= static_cast<double>(b - a) / static_cast<double>(hi - lo);
        parts[c].loss *= static_cast<double>(b - a);
      });
      nn::Parameters grad = std::move(parts[0].grad);
      double batch_loss = parts[0].loss;
      for (std::size_t c = 1; c < n_chunks; ++c) {
        grad += parts[c].grad;
        batch_loss += parts[c].loss;
      }
      if (!std::isfinite(batch_loss) || !grad.all_finite())
        throw DivergenceError(epoch, "training diverged (non-finite loss) in epoch " + std::to_string(epoch));
      adam_step(model.params, grad, adam, cfg);
      epoch_loss += batch_loss;
    }

    const LossAccuracy val = evaluate_loss(model, va.samples, cfg.threads);
    if (!std::isfinite(val.loss))
      throw DivergenceError(epoch, "validation loss is non-finite in epoch " + std::to_string(epoch));
    result.history.epochs.push_back({epoch, epoch_loss / static_cast<double>(n), val.loss, val.accuracy});
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %3zu  train %.5f  val %.5f  val_acc %.4f\n", epoch, epoch_loss / static_cast<double>(n),
                   val.loss, val.accuracy);

    if (val.loss < best_loss - cfg.min_delta) {
      best_loss = val.loss;
      best = model.params;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.history.stopped_early = true;
      break;
    }
  }
  model.params = std::move(best);
  model.meta.epochs = static_cast<std::uint32_t>(result.history.epochs.size());
  result.model = std::move(model);
  return result;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_row_major(binio::Writer& w, const T& t) {
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) w.f64(t(r, c));
}

template <class T>
void read_row_major(binio::Reader& in, T& t) {
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = in.f64();
}

[[noreturn]] void corrupt(const std::string& what) {
  throw binio::FormatError(binio::FormatErrorKind::corrupt, "CHECKPOINT_CORRUPT", "corrupt checkpoint: " + what);
}

}  // namespace

void save_checkpoint(const nn::LstmModel& model, const std::filesystem::path& path) {
  const nn::Architecture arch = model.params.architecture();
  binio::Writer w;
  w.bytes("HXM1");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(arch.input_size));
  w.u32(static_cast<std::uint32_t>(arch.hidden.size()));
  for (int h : arch.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(arch.num_classes));
  w.f64(model.lstm_dropout);
  w.f64(model.inter_layer_dropout);
  w.f64(model.meta.learning_rate);
  w.u64(model.meta.seed);
  w.u32(model.meta.epochs);
  w.u16(model.meta.horizon);
  w.u8(model.meta.stride);
  w.u8(static_cast<std::uint8_t>(model.meta.expertise));
  w.u8(static_cast<std::uint8_t>(model.meta.loss));
  w.str(model.meta.tag);
  w.u32(static_cast<std::uint32_t>(model.standardization.mean.size()));
  w.f64s(model.standardization.mean);
  w.f64s(model.standardization.scale);
  model.params.for_each([&](const auto& t) { write_row_major(w, t); });
  w.save(path);
}

nn::LstmModel load_checkpoint(const std::filesystem::path& path) {
  auto in = binio::Reader::from_file(path, "checkpoint");
  binio::expect_header(in, "HXM1", kCheckpointVersion);
  nn::Architecture arch;
  arch.input_size = static_cast<int>(in.u32());
  const std::uint32_t n_layers = in.u32();
  if (n_layers == 0 || n_layers > 64) corrupt("layer count " + std::to_string(n_layers));
  arch.hidden.resize(n_layers);
  for (int& h : arch.hidden) h = static_cast<int>(in.u32());
  arch.num_classes = static_cast<int>(in.u32());
  auto sane = [](long v) { return v >= 1 && v <= (1 << 20); };
  if (!sane(arch.input_size) || !sane(arch.num_classes)) corrupt("layer sizes out of range");
  for (int h : arch.hidden)
    if (!sane(h)) corrupt("layer sizes out of range");

  nn::LstmModel m = nn::LstmModel::init(arch, 0);
  m.lstm_dropout = in.f64();
  m.inter_layer_dropout = in.f64();
  m.meta.learning_rate = in.f64();
  m.meta.seed = in.u64();
  m.meta.epochs = in.u32();
  m.meta.horizon = in.u16();
  m.meta.stride = in.u8();
  const std::uint8_t expertise = in.u8();
  const std::uint8_t loss = in.u8();
  if (expertise > 1 || loss > 1) corrupt("bad enum in metadata");
  m.meta.expertise = static_cast<Expertise>(expertise);
  m.meta.loss = static_cast<nn::LossMode>(loss);
  m.meta.tag = in.str();
  const std::uint32_t n_std = in.u32();
  if (n_std != 0 && n_std != static_cast<std::uint32_t>(arch.input_size)) corrupt("standardization width");
  m.standardization.mean.resize(n_std);
  m.standardization.scale.resize(n_std);
  in.f64s(m.standardization.mean);
  in.f64s(m.standardization.scale);
  m.params.for_each([&](auto& t) { read_row_major(in, t); });
  if (in.remaining() != 0) corrupt(std::to_string(in.remaining()) + " trailing bytes");
  return m;
}

nn::LstmModel checkpoint_roundtrip(const nn::LstmModel& model, const std::filesystem::path& path) {
  save_checkpoint(model, path);
  return load_checkpoint(path);
}

}  // namespace herdcast::train
