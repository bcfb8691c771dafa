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
#include <sstream>

#include "herdcast/analysis.hpp"
#include "herdcast/rng.hpp"
#include "oracles.hpp"

namespace herdcast::analysis {
namespace {

constexpr double kR = 0.12;
constexpr double kContain = 0.3;

TEST(InterTargetTimes, CraftedSwitch) {
  const auto m = inter_target_times(oracle::crafted_switch_trial(), kR);
  EXPECT_EQ(m.switches, 1u);
  EXPECT_EQ(m.skipped, 0u);
  ASSERT_EQ(m.durations_ms.size(), 1u);
  EXPECT_NEAR(m.durations_ms[0], oracle::kCraftedSwitchMs, 20.0);
}

TEST(InterTargetTimes, NoSwitches) {
  Trial t = oracle::blank_trial(50);
  auto m = inter_target_times(t, kR);
  EXPECT_TRUE(m.durations_ms.empty());
  EXPECT_EQ(m.switches, 0u);
  // Switches through 0 are not direct switches.
  for (std::size_t i = 0; i < t.frames.size(); ++i) (*t.frames[i].labels)[0] = i < 20 ? 1 : (i < 30 ? 0 : 2);
  m = inter_target_times(t, kR);
  EXPECT_EQ(m.switches, 0u);
}

TEST(InterTargetTimes, Unlabeled) {
  const Trial t = oracle::static_square_trial(10);
  Trial u = t;
  for (auto& f : u.frames) f.labels.reset();
  try {
    inter_target_times(u, kR);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "ANALYSIS_UNLABELED");
  }
}

TEST(InterTargetTimes, SwitchWithoutLeaveIsSkipped) {
  Trial t = oracle::blank_trial(60);
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    t.frames[i].herders[0].pos = {0.0, 0.05};
    (*t.frames[i].labels)[0] = i < 30 ? 1 : 2;
  }
  const auto m = inter_target_times(t, kR);
  EXPECT_EQ(m.switches, 1u);
  EXPECT_EQ(m.skipped, 1u);
  EXPECT_TRUE(m.durations_ms.empty());
}

TEST(InterTargetTimes, RelabelInvariance) {
  const Trial base = oracle::crafted_switch_trial();
  const std::array<int, 4> perm{2, 3, 0, 1};  // target k moves to slot perm[k]
  Trial t = base;
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    for (int k = 0; k < 4; ++k) t.frames[i].targets[perm[k]] = base.frames[i].targets[k];
    for (int h = 0; h < 2; ++h) {
      const int l = (*base.frames[i].labels)[h];
      (*t.frames[i].labels)[h] = l == 0 ? 0 : perm[l - 1] + 1;
    }
  }
  EXPECT_EQ(inter_target_times(t, kR).durations_ms, inter_target_times(base, kR).durations_ms);
}

TEST(HerdingMeasures, StaticSquare) {
  const auto m = herding_measures(oracle::static_square_trial(40), kContain);
  EXPECT_EQ(m.t_g, 0.0);
  EXPECT_EQ(m.d_g, 0.0);
  EXPECT_NEAR(m.D_g, 0.1 * std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(m.S_g, 0.04, 1e-9);
  EXPECT_NEAR(m.S_g_pct, 14.147106052612918, 1e-9);
  EXPECT_NEAR(m.I_pct, 100.0, 1e-9);
}

TEST(HerdingMeasures, GatherTimeAndPartialContainment) {
  // Target 2 walks in from 0.5 m at 0.5 m/s; the herd is contained once it crosses 0.3 m.
  Trial t = oracle::static_square_trial(60);
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    t.frames[i].targets[2].pos = {-std::max(0.0, 0.5 - 0.01 * static_cast<double>(i)), 0.0};
    t.frames[i].herders[0].pos = {0.8 - 0.01 * static_cast<double>(i), -0.8};
  }
  const auto m = herding_measures(t, kContain);
  EXPECT_NEAR(m.t_g, 0.4, 1e-12);  // frame 20
  EXPECT_NEAR(m.d_g, 0.2 / 2.0, 1e-12);
  EXPECT_NEAR(m.I_pct, (20 * 75.0 + 100.0) / 21.0, 1e-9);
  EXPECT_THROW(herding_measures(Trial{}, kContain), Error);
}

TEST(HerdingMeasures, PathLengthAndTranslation) {
  Trial t = oracle::static_square_trial(80);
  Rng rng(3);
  for (auto& f : t.frames) f.targets[0].pos = {2.0, 2.0};  // never gathered
  for (std::size_t i = 1; i < t.frames.size(); ++i)
    for (int h = 0; h < 2; ++h)
      t.frames[i].herders[h].pos = t.frames[i - 1].herders[h].pos + Vec2{rng.normal() * 0.01, rng.normal() * 0.01};
  double path = 0.0;
  for (int h = 0; h < 2; ++h)
    for (std::size_t i = 1; i < t.frames.size(); ++i)
      path += (t.frames[i].herders[h].pos - t.frames[i - 1].herders[h].pos).norm();
  const auto m = herding_measures(t, kContain);
  EXPECT_NEAR(m.t_g, t.frames.back().t, 1e-12);
  EXPECT_NEAR(m.d_g, path / 2.0, 1e-12);
  Trial shifted = t;
  for (auto& f : shifted.frames)
    for (auto& h : f.herders) h.pos = h.pos + Vec2{0.3, -0.2};
  EXPECT_NEAR(herding_measures(shifted, kContain).d_g, m.d_g, 1e-12);
  EXPECT_NEAR(m.I_pct, 75.0, 1e-9);
}

TEST(ConvexHull, Areas) {
  const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_NEAR(convex_hull_area(square), 1.0, 1e-15);
  const std::vector<Vec2> inner{{0, 0}, {2, 0}, {0, 2}, {0.5, 0.5}};
  EXPECT_NEAR(convex_hull_area(inner), 2.0, 1e-15);
  const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  EXPECT_EQ(convex_hull_area(line), 0.0);
  const std::vector<Vec2> same{{1, 1}, {1, 1}, {1, 1}, {1, 1}};
  EXPECT_EQ(convex_hull_area(same), 0.0);
}

TEST(AnalysisCsv, HistogramAndMeasures) {
  std::ostringstream h;
  const std::vector<double> d{410, 430, 470, 505};
  write_histogram_csv(h, d, 40.0);
  EXPECT_EQ(h.str(),
            "bin_start_ms,bin_end_ms,count,fraction\n"
            "400,440,2,0.500000\n"
            "440,480,1,0.250000\n"
            "480,520,1,0.250000\n");
  EXPECT_THROW(write_histogram_csv(h, d, 0.0), Error);

  std::ostringstream m;
  const std::vector<Trial> trials{oracle::static_square_trial(5)};
  write_measures_csv(m, trials, kContain);
  EXPECT_EQ(m.str().rfind("trial_id,expertise,success,t_g,d_g,D_g,S_g,S_g_pct,I_pct\ncrafted,", 0), 0u);
  EXPECT_NE(m.str().find(",14.147106,100.000000\n"), std::string::npos);
}

}  // namespace
}  // namespace herdcast::analysis
