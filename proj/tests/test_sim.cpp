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
#include <cstring>
#include <numeric>

#include "herdcast/dataset.hpp"
#include "herdcast/sim.hpp"
#include "herdcast/trial.hpp"

namespace herdcast::sim {
namespace {

WorldState far_apart_state() {
  WorldState s;
  s.herders[0].pos = {-1.0, -1.0};
  s.herders[1].pos = {1.0, -1.0};
  s.targets[0].pos = {0.8, 0.8};
  s.targets[1].pos = {-0.8, 0.8};
  s.targets[2].pos = {0.0, 1.2};
  s.targets[3].pos = {1.2, 0.0};
  return s;
}

std::array<HerderCommand, 2> stay(const WorldState& s) {
  return {HerderCommand{s.herders[0].pos, 1.0}, HerderCommand{s.herders[1].pos, 1.0}};
}

TEST(StepWorld, OutsideRadiusIsPureBrownian) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.herders[0].pos = s.targets[0].pos - Vec2{0.20, 0.0};
  const double dt = 0.02;
  Rng rng(11);
  Rng oracle = rng;
  const WorldState next = step_world(s, cfg, stay(s), dt, rng);
  const double sd = cfg.target_brownian_sigma * std::sqrt(dt);
  const double n1 = oracle.normal(), n2 = oracle.normal();
  EXPECT_DOUBLE_EQ(next.targets[0].pos.x, s.targets[0].pos.x + sd * n1);
  EXPECT_DOUBLE_EQ(next.targets[0].pos.y, s.targets[0].pos.y + sd * n2);
  EXPECT_EQ(next.target_drift[0], (Vec2{0.0, 0.0}));
}

TEST(StepWorld, FleeDirectlyAway) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.herders[0].pos = s.targets[0].pos - Vec2{0.05, 0.0};
  const double dt = 0.02;
  Rng rng(3);
  const WorldState next = step_world(s, cfg, stay(s), dt, rng);
  const Vec2 v = (1.0 / dt) * (next.targets[0].pos - s.targets[0].pos);
  EXPECT_NEAR(v.x, cfg.target_flee_speed, 1e-12);
  EXPECT_NEAR(v.y, 0.0, 1e-12);
}

TEST(StepWorld, TwoHerdersFleeAlongSummedAwayVectors) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  const Vec2 t = s.targets[0].pos;
  s.herders[0].pos = t - Vec2{0.05, 0.0};
  s.herders[1].pos = t - Vec2{0.0, 0.05};
  Rng rng(3);
  const WorldState next = step_world(s, cfg, stay(s), 0.02, rng);
  const Vec2 d = next.targets[0].pos - t;
  EXPECT_NEAR(d.x, d.y, 1e-12);
  EXPECT_NEAR(d.norm(), cfg.target_flee_speed * 0.02, 1e-12);
}

TEST(StepWorld, HerderSpeedClipped) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  std::array<HerderCommand, 2> cmd{HerderCommand{{1.0, 1.0}, 1.2}, HerderCommand{s.herders[1].pos + Vec2{0.001, 0}, 1.2}};
  Rng rng(1);
  const WorldState next = step_world(s, cfg, cmd, 0.02, rng);
  EXPECT_NEAR(distance(s.herders[0].pos, next.herders[0].pos), 1.2 * 0.02, 1e-12);
  EXPECT_NEAR(next.herders[1].pos.x, s.herders[1].pos.x + 0.001, 1e-15);
}

TEST(StepWorld, IdenticalRngStateGivesIdenticalSuccessor) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  Rng a(99), b(99);
  const WorldState x = step_world(s, cfg, stay(s), 0.02, a);
  const WorldState y = step_world(s, cfg, stay(s), 0.02, b);
  EXPECT_EQ(std::memcmp(&x, &y, sizeof x), 0);
}

TEST(StepWorld, RejectsNonFinite) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  Rng rng(1);
  s.targets[2].pos.x = NAN;
  EXPECT_THROW(step_world(s, cfg, stay(far_apart_state()), 0.02, rng), Error);
  s = far_apart_state();
  auto cmd = stay(s);
  cmd[0].goal.y = INFINITY;
  EXPECT_THROW(step_world(s, cfg, cmd, 0.02, rng), Error);
  EXPECT_THROW(step_world(s, cfg, stay(s), 0.0, rng), Error);
}

TEST(SelectTarget, AllInsideGivesZero) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  for (int k = 0; k < 4; ++k) s.targets[k].pos = {0.05 * k, 0.0};
  Rng rng(1);
  for (const auto& p : {PolicyKind::expert(), PolicyKind::novice()})
    for (int focal : {0, 1}) EXPECT_EQ(select_target(p, s, cfg, focal, rng), 0);
}

TEST(SelectTarget, ExpertSingleOutsideTarget) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  for (int k = 0; k < 4; ++k) s.targets[k].pos = {0.05 * k, 0.0};
  s.targets[2].pos = {-0.9, -0.9};
  Rng rng(1);
  EXPECT_EQ(select_target(PolicyKind::expert(), s, cfg, 0, rng), 3);
}

TEST(SelectTarget, ExpertPicksFarthestOwnTarget) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.herders[0].pos = {-1.2, 0.0};
  s.herders[1].pos = {1.2, 0.0};
  s.targets[0].pos = {-0.7, 0.0};
  s.targets[1].pos = {-0.9, 0.0};
  s.targets[2].pos = {0.0, 0.1};
  s.targets[3].pos = {1.3, 0.0};  // farther, but the co-herder's
  Rng rng(1);
  EXPECT_EQ(select_target(PolicyKind::expert(), s, cfg, 0, rng), 2);
  EXPECT_EQ(select_target(PolicyKind::expert(), s, cfg, 1, rng), 4);
}

TEST(SelectTarget, ExpertDemotesInboundTargets) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.herders[0].pos = {-1.2, 0.0};
  s.herders[1].pos = {1.2, 0.0};
  s.targets[0].pos = {-0.7, 0.0};
  s.targets[1].pos = {-0.9, 0.0};
  s.targets[2].pos = {0.0, 0.1};
  s.targets[3].pos = {0.0, -0.1};
  s.target_drift[1] = {0.3, 0.0};  // already heading for the center
  Rng rng(1);
  EXPECT_EQ(select_target(PolicyKind::expert(), s, cfg, 0, rng), 1);
  PolicyKind blind = PolicyKind::expert();
  blind.direction_sensitive = false;
  EXPECT_EQ(select_target(blind, s, cfg, 0, rng), 2);
}

TEST(SelectTarget, NoviceNearestWithLowestIndexTies) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.herders[0].pos = {0.0, 0.0};
  s.targets[0].pos = {0.0, 0.9};
  s.targets[1].pos = {0.6, 0.0};
  s.targets[2].pos = {0.0, -0.6};
  s.targets[3].pos = {0.1, 0.1};
  PolicyKind p = PolicyKind::novice();
  p.switch_noise = 0.0;
  Rng rng(1);
  EXPECT_EQ(select_target(p, s, cfg, 0, rng), 2);
}

TEST(SelectTarget, NoviceNoiseDrawsOnlyOutsideTargets) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  s.targets[1].pos = {0.0, 0.0};
  PolicyKind p = PolicyKind::novice();
  p.switch_noise = 1.0;
  Rng rng(5);
  std::array<int, 5> hits{};
  for (int i = 0; i < 3000; ++i) hits[select_target(p, s, cfg, 0, rng)]++;
  EXPECT_EQ(hits[0], 0);
  EXPECT_EQ(hits[2], 0);
  for (int k : {1, 3, 4}) EXPECT_NEAR(hits[k] / 3000.0, 1.0 / 3.0, 0.04);
}

TEST(RunTrial, AllInsideAtStartIsOneFrame) {
  WorldConfig cfg;
  WorldState s = far_apart_state();
  for (int k = 0; k < 4; ++k) s.targets[k].pos = {0.0, 0.05 * k};
  const Trial t = run_trial_from(cfg, {PolicyKind::expert(), PolicyKind::expert()}, s, 1, "x");
  ASSERT_EQ(t.frames.size(), 1u);
  EXPECT_TRUE(t.success);
  EXPECT_EQ(t.duration(), 0.0);
}

TEST(RunTrial, SameSeedIsByteIdentical) {
  WorldConfig cfg;
  const Trial a = run_trial(cfg, {PolicyKind::novice(), PolicyKind::novice()}, 17);
  const Trial b = run_trial(cfg, {PolicyKind::novice(), PolicyKind::novice()}, 17);
  EXPECT_EQ(ingest::encode_trial(a), ingest::encode_trial(b));
  const Trial c = run_trial(cfg, {PolicyKind::novice(), PolicyKind::novice()}, 18);
  EXPECT_NE(ingest::encode_trial(a), ingest::encode_trial(c));
}

struct BatchStats {
  std::vector<Trial> expert;
  std::vector<Trial> novice;
};

const BatchStats& hundred_seeds() {
  static const BatchStats stats = [] {
    WorldConfig cfg;
    BatchStats b;
    b.expert = simulate_batch(cfg, {Expertise::expert, 10, 10, 404, 1, {}});
    b.novice = simulate_batch(cfg, {Expertise::novice, 10, 10, 404, 1, {}});
    return b;
  }();
  return stats;
}

TEST(RunTrial, ExpertsGatherFaster) {
  const auto& b = hundred_seeds();
  auto mean_tg = [](const std::vector<Trial>& ts) {
    double s = 0.0;
    for (const auto& t : ts) s += t.duration();
    return s / static_cast<double>(ts.size());
  };
  EXPECT_LT(mean_tg(b.expert), mean_tg(b.novice));
}

TEST(RunTrial, TrialInvariants) {
  WorldConfig cfg;
  const auto& b = hundred_seeds();
  const double dt = 1.0 / cfg.record_hz;
  const double target_bound =
      std::max(cfg.target_flee_speed * dt, 4.0 * cfg.target_brownian_sigma * std::sqrt(dt) * std::sqrt(2.0)) + 1e-12;
  for (const auto* batch : {&b.expert, &b.novice}) {
    for (const Trial& t : *batch) {
      ingest::validate(t);
      const double vmax = cfg.max_speed(t.expertise);
      std::size_t big_steps = 0;
      for (std::size_t i = 0; i < t.frames.size(); ++i) {
        const Frame& f = t.frames[i];
        for (const auto& a : f.herders) EXPECT_LE(std::max(std::abs(a.pos.x), std::abs(a.pos.y)), cfg.field_half_width);
        for (const auto& a : f.targets) EXPECT_LE(std::max(std::abs(a.pos.x), std::abs(a.pos.y)), cfg.field_half_width);
        bool contained = true;
        for (const auto& a : f.targets) contained = contained && a.pos.norm() <= cfg.containment_radius;
        if (t.success) {
          EXPECT_EQ(contained, i + 1 == t.frames.size()) << t.trial_id << " frame " << i;
        }
        if (i == 0) continue;
        const Frame& p = t.frames[i - 1];
        for (int h = 0; h < 2; ++h) EXPECT_LE(distance(p.herders[h].pos, f.herders[h].pos), vmax * dt + 1e-12);
        // Gaussian steps beyond 4 sigma are rare but legal; count them.
        for (int k = 0; k < 4; ++k) big_steps += distance(p.targets[k].pos, f.targets[k].pos) > target_bound;
      }
      EXPECT_LE(static_cast<double>(big_steps), 1e-3 * static_cast<double>(t.frames.size()) + 2) << t.trial_id;
    }
  }
}

double non_transitioning_fraction(const std::vector<Trial>& trials) {
  std::size_t nt = 0, total = 0;
  for (const Trial& t : trials) {
    if (!t.success) continue;
    for (int focal : {0, 1}) {
      for (const auto& s : dataset::window_trial(t, focal, 2, 16)) {
        ++total;
        nt += s.subclass == dataset::Subclass::nt_ns || s.subclass == dataset::Subclass::nt_s;
      }
    }
  }
  return total ? static_cast<double>(nt) / static_cast<double>(total) : 0.0;
}

TEST(RunTrial, ExpertsTransitionLess) {
  const auto& b = hundred_seeds();
  EXPECT_GT(non_transitioning_fraction(b.expert), non_transitioning_fraction(b.novice));
}

TEST(SimulateBatch, IndependentOfThreadCount) {
  WorldConfig cfg;
  const auto one = simulate_batch(cfg, {Expertise::novice, 2, 3, 8, 1, {}});
  const auto many = simulate_batch(cfg, {Expertise::novice, 2, 3, 8, 8, {}});
  ASSERT_EQ(one.size(), 6u);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(ingest::encode_trial(one[i]), ingest::encode_trial(many[i]));
  EXPECT_EQ(one[4].trial_id, "novice-p01-t001");
}

TEST(Config, Validation) {
  WorldConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.containment_radius = 0.1;
  EXPECT_THROW(cfg.validate(), Error);
  PolicyKind p = PolicyKind::novice();
  p.switch_noise = 1.5;
  EXPECT_THROW(p.validate(), Error);
}

}  // namespace
}  // namespace herdcast::sim
