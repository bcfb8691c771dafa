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

#include "herdcast/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "herdcast/parallel.hpp"

namespace herdcast::sim {
namespace {

Vec2 unit_or(Vec2 v, Vec2 fallback) {
  const double n = v.norm();
  return n > 1e-12 ? (1.0 / n) * v : fallback;
}

double reflect(double x, double w) {
  while (x > w || x < -w) {
    if (x > w) x = 2.0 * w - x;
    if (x < -w) x = -2.0 * w - x;
  }
  return x;
}

void require_finite(const WorldState& s) {
  bool ok = std::isfinite(s.t);
  for (const auto& a : s.herders) ok = ok && a.pos.finite() && a.vel.finite();
  for (const auto& a : s.targets) ok = ok && a.pos.finite() && a.vel.finite();
  if (!ok) throw Error("SIM_NONFINITE", "step_world: non-finite world state");
}

Frame to_frame(const WorldState& s) {
  Frame f;
  f.t = s.t;
  for (int h = 0; h < kNumHerders; ++h) f.herders[h] = {s.herders[h].pos, s.herders[h].vel};
  for (int k = 0; k < kNumTargets; ++k) f.targets[k] = {s.targets[k].pos, s.targets[k].vel};
  f.labels = s.labels;
  return f;
}

}  // namespace

void WorldConfig::validate() const {
  auto fail = [](const char* what) { throw Error("SIM_CONFIG", std::string("invalid world config: ") + what); };
  if (!(repulsion_radius > 0)) fail("repulsion_radius must be > 0");
  if (!(containment_radius > repulsion_radius)) fail("containment_radius must exceed repulsion_radius");
  if (!(field_half_width > containment_radius)) fail("field_half_width must exceed containment_radius");
  if (!(record_hz > 0)) fail("record_hz must be > 0");
  if (!(max_duration > 0)) fail("max_duration must be > 0");
  if (target_brownian_sigma < 0 || target_flee_speed < 0 || expert_max_speed < 0 || novice_max_speed < 0)
    fail("speeds must be >= 0");
}

void PolicyKind::validate() const {
  if (!(switch_noise >= 0.0 && switch_noise <= 1.0))
    throw Error("SIM_CONFIG", "policy switch noise must lie in [0, 1]");
  if (!(redecision_period > 0.0)) throw Error("SIM_CONFIG", "policy re-decision period must be > 0");
}

// The expert sticks with its target until it is contained.
PolicyKind PolicyKind::expert() {
  return {Expertise::expert, 0.1, 0.0, true, std::numeric_limits<double>::infinity()};
}
PolicyKind PolicyKind::novice() { return {Expertise::novice, 0.3, 0.15, false, 0.0}; }

WorldState step_world(const WorldState& state, const WorldConfig& cfg,
                      const std::array<HerderCommand, kNumHerders>& commands, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw Error("SIM_DT", "step_world: dt must be > 0");
  require_finite(state);
  for (const auto& c : commands)
    if (!c.goal.finite() || !std::isfinite(c.max_speed))
      throw Error("SIM_NONFINITE", "step_world: non-finite herder command");

  const double w = cfg.field_half_width;
  WorldState next = state;
  next.t = state.t + dt;

  for (int h = 0; h < kNumHerders; ++h) {
    const Vec2 from = state.herders[h].pos;
    Vec2 step = commands[h].goal - from;
    const double len = step.norm();
    const double max_step = commands[h].max_speed * dt;
    if (len > max_step) step = (max_step / len) * step;
    Vec2 to = from + step;
    to.x = std::clamp(to.x, -w, w);
    to.y = std::clamp(to.y, -w, w);
    next.herders[h] = {to, (1.0 / dt) * (to - from)};
  }

  const double diffusion = cfg.target_brownian_sigma * std::sqrt(dt);
  for (int k = 0; k < kNumTargets; ++k) {
    const double n1 = rng.normal();
    const double n2 = rng.normal();
    const Vec2 from = state.targets[k].pos;
    Vec2 away{};
    bool influenced = false;
    for (const auto& herder : state.herders) {
      const Vec2 rel = from - herder.pos;
      if (rel.norm() < cfg.repulsion_radius) {
        influenced = true;
        away = away + unit_or(rel, Vec2{});
      }
    }
    Vec2 drift{};
    Vec2 to;
    if (influenced && away.norm() > 1e-12) {
      drift = cfg.target_flee_speed * unit_or(away, Vec2{});
      to = from + dt * drift;
    } else {
      to = from + Vec2{diffusion * n1, diffusion * n2};
    }
    to = {reflect(to.x, w), reflect(to.y, w)};
    next.targets[k] = {to, (1.0 / dt) * (to - from)};
    next.target_drift[k] = drift;
  }
  return next;
}

int select_target(const PolicyKind& policy, const WorldState& state, const WorldConfig& cfg, int focal,
                  Rng& rng) {
  const int co = 1 - focal;
  const Vec2 self = state.herders[focal].pos;
  const Vec2 other = state.herders[co].pos;

  std::array<bool, kNumTargets> outside{};
  int n_outside = 0;
  for (int k = 0; k < kNumTargets; ++k) {
    outside[k] = state.targets[k].pos.norm() > cfg.containment_radius;
    n_outside += outside[k];
  }

  if (policy.variant == Expertise::novice) {
    // Fixed draw count per call keeps the policy stream aligned across states.
    const double u = rng.uniform();
    const double pick = rng.uniform();
    if (n_outside == 0) return 0;
    if (u < policy.switch_noise) {
      int seen = 0;
      const int wanted = std::min(n_outside - 1, static_cast<int>(pick * n_outside));
      for (int k = 0; k < kNumTargets; ++k)
        if (outside[k] && seen++ == wanted) return k + 1;
    }
    int best = 0;
    double best_d = 0.0;
    for (int k = 0; k < kNumTargets; ++k) {
      if (!outside[k]) continue;
      const double d = distance(self, state.targets[k].pos);
      if (best == 0 || d < best_d) {
        best = k + 1;
        best_d = d;
      }
    }
    return best;
  }

  if (n_outside == 0) return 0;
  std::array<bool, kNumTargets> eligible{};
  bool any_own = false;
  for (int k = 0; k < kNumTargets; ++k) {
    eligible[k] = outside[k] && distance(self, state.targets[k].pos) < distance(other, state.targets[k].pos);
    any_own = any_own || eligible[k];
  }
  if (!any_own) eligible = outside;

  const int current = state.labels[focal];
  std::array<double, kNumTargets> score{};
  for (int k = 0; k < kNumTargets; ++k) {
    const Vec2 p = state.targets[k].pos;
    score[k] = p.norm();
    // Targets already being pushed inward (by the co-herder) are worth less.
    if (policy.direction_sensitive && k + 1 != current && dot(state.target_drift[k], p) < 0.0) score[k] *= 0.5;
  }
  int best = 0;
  for (int k = 0; k < kNumTargets; ++k)
    if (eligible[k] && (best == 0 || score[k] > score[best - 1])) best = k + 1;
  if (current >= 1 && current <= kNumTargets && eligible[current - 1] &&
      score[best - 1] <= (1.0 + policy.hysteresis) * score[current - 1])
    return current;
  return best;
}

Vec2 steering_goal(const WorldState& state, const WorldConfig& cfg, int focal) {
  const int label = state.labels[focal];
  const Vec2 self = state.herders[focal].pos;
  if (label < 1 || label > kNumTargets) return self;
  const Vec2 target = state.targets[label - 1].pos;
  const Vec2 out = unit_or(target, Vec2{1.0, 0.0});
  const Vec2 rel = self - target;
  // On the center side of the target and close to it: go around instead of
  // pushing the target outward.
  if (dot(rel, out) < 0.0 && rel.norm() < 2.5 * cfg.repulsion_radius) {
    const double side = cross(out, rel) >= 0.0 ? 1.0 : -1.0;
    const Vec2 lateral{-out.y * side, out.x * side};
    return target + 2.0 * cfg.repulsion_radius * lateral + 0.5 * cfg.steer_offset * out;
  }
  return target + cfg.steer_offset * out;
}

bool all_contained(const WorldState& state, const WorldConfig& cfg) {
  for (const auto& t : state.targets)
    if (t.pos.norm() > cfg.containment_radius) return false;
  return true;
}

WorldState initial_state(const WorldConfig& cfg, Rng& rng) {
  constexpr double kTwoPi = 6.28318530717958647692;
  WorldState s;
  const double r_lo = cfg.containment_radius + 0.5;
  const double r_hi = std::min(cfg.field_half_width - 0.2, cfg.containment_radius + 1.0);
  for (auto& t : s.targets) {
    const double r = r_lo + (r_hi - r_lo) * rng.uniform();
    const double a = kTwoPi * rng.uniform();
    t.pos = {r * std::cos(a), r * std::sin(a)};
  }
  const double y = -(cfg.field_half_width - 0.15);
  s.herders[0].pos = {-0.4 + 0.2 * (rng.uniform() - 0.5), y};
  s.herders[1].pos = {0.4 + 0.2 * (rng.uniform() - 0.5), y};
  return s;
}

Trial run_trial_from(const WorldConfig& cfg, const std::array<PolicyKind, kNumHerders>& policies,
                     WorldState state, std::uint64_t seed, std::string trial_id) {
  cfg.validate();
  for (const auto& p : policies) p.validate();
  Rng dynamics(derive_seed(seed, {1}));
  Rng decisions(derive_seed(seed, {2}));

  Trial trial;
  trial.trial_id = std::move(trial_id);
  trial.expertise = policies[0].variant;
  trial.hz = cfg.record_hz;

  const double dt = 1.0 / cfg.record_hz;
  std::array<long, kNumHerders> period{};
  for (int h = 0; h < kNumHerders; ++h)
    period[h] = std::max(1L, std::lround(policies[h].redecision_period * cfg.record_hz));
  const auto max_steps = static_cast<long>(std::floor(cfg.max_duration * cfg.record_hz + 1e-9));

  state.t = 0.0;
  state.labels = {0, 0};
  for (int h = 0; h < kNumHerders; ++h) state.labels[h] = select_target(policies[h], state, cfg, h, decisions);
  trial.frames.push_back(to_frame(state));
  if (all_contained(state, cfg)) {
    trial.success = true;
    return trial;
  }
  for (long step = 1; step <= max_steps; ++step) {
    std::array<HerderCommand, kNumHerders> cmd;
    for (int h = 0; h < kNumHerders; ++h) cmd[h] = {steering_goal(state, cfg, h), cfg.max_speed(policies[h].variant)};
    state = step_world(state, cfg, cmd, dt, dynamics);
    state.t = static_cast<double>(step) / cfg.record_hz;
    const bool done = all_contained(state, cfg);
    for (int h = 0; h < kNumHerders; ++h)
      if (done || step % period[h] == 0) state.labels[h] = select_target(policies[h], state, cfg, h, decisions);
    trial.frames.push_back(to_frame(state));
    if (done) {
      trial.success = true;
      break;
    }
  }
  return trial;
}

Trial run_trial(const WorldConfig& cfg, const std::array<PolicyKind, kNumHerders>& policies, std::uint64_t seed,
                std::string trial_id) {
  Rng init(derive_seed(seed, {0}));
  WorldState start = initial_state(cfg, init);
  if (trial_id.empty()) trial_id = std::string(to_string(policies[0].variant)) + "-s" + std::to_string(seed);
  return run_trial_from(cfg, policies, start, seed, std::move(trial_id));
}

std::vector<Trial> simulate_batch(const WorldConfig& cfg, const BatchSpec& spec) {
  if (spec.pairs < 1 || spec.trials_per_pair < 1) throw Error("SIM_CONFIG", "pairs and trials per pair must be >= 1");
  const auto n = static_cast<std::size_t>(spec.pairs) * static_cast<std::size_t>(spec.trials_per_pair);
  const PolicyKind policy = spec.policy.value_or(PolicyKind::for_expertise(spec.expertise));
  std::vector<Trial> trials(n);
  parallel_for(n, spec.threads, [&](std::size_t i) {
    const auto pair = i / static_cast<std::size_t>(spec.trials_per_pair);
    const auto index = i % static_cast<std::size_t>(spec.trials_per_pair);
    char id[64];
    std::snprintf(id, sizeof id, "%s-p%02zu-t%03zu", std::string(to_string(spec.expertise)).c_str(), pair, index);
    trials[i] = run_trial(cfg, {policy, policy}, derive_seed(spec.seed, {pair, index}), id);
  });
  return trials;
}

}  // namespace herdcast::sim
