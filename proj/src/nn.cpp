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

#include "herdcast/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "herdcast/rng.hpp"

namespace herdcast::nn {

Architecture Architecture::scaled(double w) {
  if (!(w > 0.0)) throw Error("BAD_SCALE", "width scale must be > 0");
  auto up = [w](int n) { return static_cast<int>(std::ceil(static_cast<double>(n) * w - 1e-9)); };
  Architecture a;
  a.hidden = {up(253), up(25), std::max(4, up(8))};
  return a;
}

std::size_t Parameters::size() const {
  std::size_t n = 0;
  for_each([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.for_each([](auto& t) { t.setZero(); });
  return z;
}

Architecture Parameters::architecture() const {
  Architecture a;
  a.input_size = layers.empty() ? 0 : static_cast<int>(layers.front().input_size());
  a.hidden.clear();
  for (const auto& l : layers) a.hidden.push_back(static_cast<int>(l.hidden_size()));
  a.num_classes = static_cast<int>(dense_b.size());
  return a;
}

double& Parameters::flat(std::size_t i) {
  double* hit = nullptr;
  for_each([&](auto& t) {
    if (hit) return;
    const auto n = static_cast<std::size_t>(t.size());
    if (i < n)
      hit = t.data() + i;
    else
      i -= n;
  });
  if (!hit) throw Error("PARAM_RANGE", "flat parameter index out of range");
  return *hit;
}

double Parameters::flat(std::size_t i) const { return const_cast<Parameters*>(this)->flat(i); }

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

Parameters& Parameters::operator+=(const Parameters& other) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].w_input += other.layers[l].w_input;
    layers[l].w_recurrent += other.layers[l].w_recurrent;
    layers[l].bias += other.layers[l].bias;
  }
  dense_w += other.dense_w;
  dense_b += other.dense_b;
  return *this;
}

Parameters& Parameters::operator*=(double s) {
  for_each([s](auto& t) { t *= s; });
  return *this;
}

LstmModel LstmModel::init(const Architecture& arch, std::uint64_t seed) {
  if (arch.hidden.empty() || arch.input_size < 1 || arch.num_classes < 2)
    throw Error("BAD_ARCH", "architecture needs an input, at least one LSTM layer and two classes");
  Rng rng(seed);
  auto fill = [&](auto& t, double k) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = k * (2.0 * rng.uniform() - 1.0);
  };
  LstmModel m;
  int in = arch.input_size;
  for (int h : arch.hidden) {
    LstmLayer l;
    l.w_input.resize(4 * h, in);
    l.w_recurrent.resize(4 * h, h);
    l.bias.resize(4 * h);
    const double k = 1.0 / std::sqrt(static_cast<double>(in + h));
    fill(l.w_input, k);
    fill(l.w_recurrent, k);
    fill(l.bias, k);
    l.bias.segment(h, h).setConstant(1.0);
    m.params.layers.push_back(std::move(l));
    in = h;
  }
  m.params.dense_w.resize(arch.num_classes, in);
  m.params.dense_b.resize(arch.num_classes);
  const double k = 1.0 / std::sqrt(static_cast<double>(in));
  fill(m.params.dense_w, k);
  fill(m.params.dense_b, k);
  m.meta.seed = seed;
  return m;
}

namespace {

struct LayerTrace {
  Matrix x;         // In x TB, after input dropout
  Matrix in_mask;   // empty when unused
  Matrix gates;     // 4H x TB, activated
  Matrix c, tc, h;  // H x TB
  Matrix out_mask;  // empty when unused
  Matrix y;         // H x TB, output after dropout
};

struct Trace {
  Eigen::Index steps = 0, batch = 0;
  std::vector<LayerTrace> layers;
  Matrix logits;  // C x TB
  Matrix probs;   // C x TB
};

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed) {
  Rng rng(seed);
  const double keep = 1.0 - rate;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

// Column block of timestep t in a feature x (T*B) matrix.
auto step_cols(Matrix& m, Eigen::Index t, Eigen::Index b) { return m.middleCols(t * b, b); }
auto step_cols(const Matrix& m, Eigen::Index t, Eigen::Index b) { return m.middleCols(t * b, b); }

Matrix pack_inputs(std::span<const SequenceMatrix* const> inputs, Eigen::Index in_size,
                   const dataset::Standardization* stats) {
  if (inputs.empty()) throw Error("EMPTY_BATCH", "empty batch");
  const Eigen::Index steps = inputs.front()->rows();
  const auto batch = static_cast<Eigen::Index>(inputs.size());
  Matrix packed(in_size, steps * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const SequenceMatrix& x = *inputs[static_cast<std::size_t>(b)];
    if (x.rows() != steps || x.cols() != in_size)
      throw Error("BAD_INPUT_SHAPE", "input sequence is " + std::to_string(x.rows()) + " x " +
                                         std::to_string(x.cols()) + ", expected " + std::to_string(steps) + " x " +
                                         std::to_string(in_size));
    if (!x.allFinite()) throw Error("NONFINITE_INPUT", "non-finite value in input sequence");
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto col = packed.col(t * batch + b);
      col = x.row(t).transpose();
      if (stats && !stats->empty())
        for (Eigen::Index f = 0; f < in_size; ++f)
          col(f) = (col(f) - stats->mean[static_cast<std::size_t>(f)]) / stats->scale[static_cast<std::size_t>(f)];
    }
  }
  return packed;
}

Trace run_forward(const LstmModel& model, Matrix input, Eigen::Index steps, Eigen::Index batch,
                  const DropoutPlan& plan) {
  const bool train = plan.mode == DropoutPlan::Mode::train;
  Trace tr;
  tr.steps = steps;
  tr.batch = batch;
  tr.layers.resize(model.params.layers.size());
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    const LstmLayer& w = model.params.layers[l];
    LayerTrace& lt = tr.layers[l];
    const Eigen::Index H = w.hidden_size();
    lt.x = std::move(input);
    if (train && model.lstm_dropout > 0.0) {
      lt.in_mask = dropout_mask(lt.x.rows(), lt.x.cols(), model.lstm_dropout, derive_seed(plan.seed, {l, 0}));
      lt.x.array() *= lt.in_mask.array();
    }
    Matrix pre = w.w_input * lt.x;
    pre.colwise() += w.bias;
    lt.gates.resize(4 * H, steps * batch);
    lt.c.resize(H, steps * batch);
    lt.tc.resize(H, steps * batch);
    lt.h.resize(H, steps * batch);
    Matrix a(4 * H, batch);
    for (Eigen::Index t = 0; t < steps; ++t) {
      a = step_cols(pre, t, batch);
      if (t > 0) a.noalias() += w.w_recurrent * step_cols(lt.h, t - 1, batch);
      auto g = step_cols(lt.gates, t, batch);
      g.topRows(2 * H) = (1.0 + (-a.topRows(2 * H).array()).exp()).inverse().matrix();
      g.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh().matrix();
      g.bottomRows(H) = (1.0 + (-a.bottomRows(H).array()).exp()).inverse().matrix();
      auto c = step_cols(lt.c, t, batch);
      c = (g.topRows(H).array() * g.middleRows(2 * H, H).array()).matrix();
      if (t > 0) c.array() += g.middleRows(H, H).array() * step_cols(lt.c, t - 1, batch).array();
      step_cols(lt.tc, t, batch) = c.array().tanh().matrix();
      step_cols(lt.h, t, batch) = (g.bottomRows(H).array() * step_cols(lt.tc, t, batch).array()).matrix();
    }
    lt.y = lt.h;
    if (train && model.inter_layer_dropout > 0.0) {
      lt.out_mask = dropout_mask(H, steps * batch, model.inter_layer_dropout, derive_seed(plan.seed, {l, 1}));
      lt.y.array() *= lt.out_mask.array();
    }
    input = lt.y;
  }
  tr.logits = model.params.dense_w * tr.layers.back().y;
  tr.logits.colwise() += model.params.dense_b;
  tr.probs.resize(tr.logits.rows(), tr.logits.cols());
  for (Eigen::Index j = 0; j < tr.logits.cols(); ++j) {
    const double mx = tr.logits.col(j).maxCoeff();
    auto e = (tr.logits.col(j).array() - mx).exp();
    tr.probs.col(j) = (e / e.sum()).matrix();
  }
  return tr;
}

// -log softmax(logits)[label] for one column.
double column_nll(const Matrix& logits, Eigen::Index col, int label) {
  const auto z = logits.col(col).array();
  const double mx = z.maxCoeff();
  return -(z(label) - mx - std::log((z - mx).exp().sum()));
}

void check_labels(std::span<const int> labels, Eigen::Index classes, std::size_t batch) {
  if (labels.size() != batch) throw Error("BATCH_SHAPE", "label count does not match batch size");
  for (int l : labels)
    if (l < 0 || l >= classes) throw Error("BAD_LABEL", "label " + std::to_string(l) + " out of range");
}

double trace_loss(const Trace& tr, std::span<const int> labels, LossMode mode) {
  double loss = 0.0;
  const Eigen::Index first = mode == LossMode::final_step ? tr.steps - 1 : 0;
  for (Eigen::Index t = first; t < tr.steps; ++t)
    for (Eigen::Index b = 0; b < tr.batch; ++b)
      loss += column_nll(tr.logits, t * tr.batch + b, labels[static_cast<std::size_t>(b)]);
  return loss / static_cast<double>((tr.steps - first) * tr.batch);
}

Trace forward_batch(const LstmModel& model, std::span<const SequenceMatrix* const> inputs, const DropoutPlan& plan) {
  if (model.params.layers.empty()) throw Error("BAD_ARCH", "model has no LSTM layers");
  const Eigen::Index in_size = model.params.layers.front().input_size();
  Matrix packed = pack_inputs(inputs, in_size, nullptr);
  const Eigen::Index steps = inputs.front()->rows();
  return run_forward(model, std::move(packed), steps, static_cast<Eigen::Index>(inputs.size()), plan);
}

}  // namespace

LstmOutput lstm_forward(const LstmModel& model, const SequenceMatrix& x, const DropoutPlan& plan) {
  const SequenceMatrix* ptr = &x;
  const Trace tr = forward_batch(model, std::span(&ptr, 1), plan);
  return {tr.logits.transpose(), tr.probs.transpose()};
}

Matrix predict_final(const LstmModel& model, std::span<const SequenceMatrix* const> inputs) {
  const Eigen::Index in_size = model.params.layers.front().input_size();
  Matrix packed = pack_inputs(inputs, in_size, &model.standardization);
  const Eigen::Index steps = inputs.front()->rows();
  const auto batch = static_cast<Eigen::Index>(inputs.size());
  const Trace tr = run_forward(model, std::move(packed), steps, batch, DropoutPlan::inference());
  return tr.probs.rightCols(batch);
}

double loss_only(const LstmModel& model, std::span<const SequenceMatrix* const> inputs, std::span<const int> labels,
                 const DropoutPlan& plan, LossMode mode) {
  if (inputs.empty()) throw Error("EMPTY_BATCH", "loss over an empty batch");
  check_labels(labels, model.params.dense_b.size(), inputs.size());
  return trace_loss(forward_batch(model, inputs, plan), labels, mode);
}

LossGrad loss_and_backward(const LstmModel& model, std::span<const SequenceMatrix* const> inputs,
                           std::span<const int> labels, const DropoutPlan& plan, LossMode mode) {
  if (inputs.empty()) throw Error("EMPTY_BATCH", "loss_and_backward over an empty batch");
  check_labels(labels, model.params.dense_b.size(), inputs.size());
  const Trace tr = forward_batch(model, inputs, plan);
  const Eigen::Index T = tr.steps, B = tr.batch;

  LossGrad out;
  out.loss = trace_loss(tr, labels, mode);
  Parameters& g = out.grad;
  g.layers.resize(model.params.layers.size());

  // d loss / d logits = (softmax - onehot) / count on the scored columns.
  Matrix dlogits = Matrix::Zero(tr.logits.rows(), tr.logits.cols());
  const Eigen::Index first = mode == LossMode::final_step ? T - 1 : 0;
  const double scale = 1.0 / static_cast<double>((T - first) * B);
  for (Eigen::Index t = first; t < T; ++t)
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index j = t * B + b;
      dlogits.col(j) = tr.probs.col(j) * scale;
      dlogits(labels[static_cast<std::size_t>(b)], j) -= scale;
    }
  g.dense_w.noalias() = dlogits * tr.layers.back().y.transpose();
  g.dense_b = dlogits.rowwise().sum();
  Matrix dy = model.params.dense_w.transpose() * dlogits;

  for (std::size_t li = model.params.layers.size(); li-- > 0;) {
    const LstmLayer& w = model.params.layers[li];
    const LayerTrace& lt = tr.layers[li];
    const Eigen::Index H = w.hidden_size();
    if (lt.out_mask.size() > 0) dy.array() *= lt.out_mask.array();

    Matrix da(4 * H, T * B);
    Matrix dh_next = Matrix::Zero(H, B);
    Matrix dc_next = Matrix::Zero(H, B);
    Matrix dh(H, B), dc(H, B);
    for (Eigen::Index t = T; t-- > 0;) {
      const auto gt = step_cols(lt.gates, t, B);
      const auto i = gt.topRows(H).array();
      const auto f = gt.middleRows(H, H).array();
      const auto c_hat = gt.middleRows(2 * H, H).array();
      const auto o = gt.bottomRows(H).array();
      const auto tc = step_cols(lt.tc, t, B).array();
      dh = step_cols(dy, t, B) + dh_next;
      dc = (dh.array() * o * (1.0 - tc * tc) + dc_next.array()).matrix();
      auto d = step_cols(da, t, B);
      d.topRows(H) = (dc.array() * c_hat * i * (1.0 - i)).matrix();
      if (t > 0)
        d.middleRows(H, H) = (dc.array() * step_cols(lt.c, t - 1, B).array() * f * (1.0 - f)).matrix();
      else
        d.middleRows(H, H).setZero();
      d.middleRows(2 * H, H) = (dc.array() * i * (1.0 - c_hat * c_hat)).matrix();
      d.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
      dc_next = (dc.array() * f).matrix();
      dh_next.noalias() = w.w_recurrent.transpose() * d;
    }
    LstmLayer& gl = g.layers[li];
    gl.w_input.noalias() = da * lt.x.transpose();
    gl.w_recurrent = Matrix::Zero(4 * H, H);
    if (T > 1) gl.w_recurrent.noalias() = da.rightCols((T - 1) * B) * lt.h.leftCols((T - 1) * B).transpose();
    gl.bias = da.rowwise().sum();
    if (li > 0) {
      dy.noalias() = w.w_input.transpose() * da;
      if (lt.in_mask.size() > 0) dy.array() *= lt.in_mask.array();
    }
  }
  return out;
}

double numeric_gradient(const LstmModel& model, const SequenceMatrix& x, int label, std::size_t index, double eps,
                        LossMode mode) {
  LstmModel probe = model;
  const SequenceMatrix* ptr = &x;
  const std::span<const SequenceMatrix* const> in(&ptr, 1);
  const std::span<const int> lab(&label, 1);
  const double base = model.params.flat(index);
  auto at = [&](double offset) {
    probe.params.flat(index) = base + offset;
    return loss_only(probe, in, lab, DropoutPlan::inference(), mode);
  };
  auto five_point = [&](double h) { return (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h); };
  // One Richardson step removes the h^4 term.
  return (16.0 * five_point(0.5 * eps) - five_point(eps)) / 15.0;
}

// Gradients below this magnitude count as zero when forming relative errors.
constexpr double kGradFloor = 1e-8;

GradCheckResult grad_check(const LstmModel& model, const SequenceMatrix& x, int label, double eps,
                           std::size_t n_params, std::uint64_t seed, LossMode mode) {
  const SequenceMatrix* ptr = &x;
  const LossGrad lg = loss_and_backward(model, std::span(&ptr, 1), std::span(&label, 1), DropoutPlan::inference(), mode);
  const std::size_t total = model.params.size();
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  if (total > n_params) {
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    idx.resize(n_params);
    std::sort(idx.begin(), idx.end());
  }
  GradCheckResult r;
  for (std::size_t i : idx) {
    const double a = lg.grad.flat(i);
    const double n = numeric_gradient(model, x, label, i, eps, mode);
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor});
    if (rel > r.max_relative_error) {
      r.max_relative_error = rel;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace herdcast::nn
