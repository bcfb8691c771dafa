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

#include <fstream>
#include <sstream>

#include "herdcast/rng.hpp"
#include "herdcast/trial.hpp"
#include "support.hpp"

namespace herdcast {
namespace {

Trial random_trial(std::uint64_t seed, std::size_t frames, bool labeled, bool velocities) {
  Rng rng(seed);
  Trial t;
  t.trial_id = "trial-" + std::to_string(seed);
  t.expertise = seed % 2 ? Expertise::novice : Expertise::expert;
  t.hz = 50.0;
  t.success = seed % 3 != 0;
  for (std::size_t i = 0; i < frames; ++i) {
    Frame f;
    f.t = static_cast<double>(i) / t.hz;
    auto agent = [&] {
      AgentSample a;
      a.pos = {rng.normal() * 0.7, rng.normal() * 1e-7};
      if (velocities) a.vel = Vec2{rng.normal(), 1.0 / 3.0};
      return a;
    };
    for (auto& h : f.herders) h = agent();
    for (auto& k : f.targets) k = agent();
    if (labeled) f.labels = std::array<int, 2>{static_cast<int>(rng.index(5)), static_cast<int>(rng.index(5))};
    t.frames.push_back(f);
  }
  return t;
}

TEST(Ingest, WriteReadIsIdentity) {
  testing::TempDir dir;
  std::vector<Trial> trials;
  for (std::uint64_t s = 0; s < 6; ++s) trials.push_back(random_trial(s, 30 + s, s % 2 == 0, s % 3 == 1));
  ingest::write_trials(dir / "t.jsonl", trials);
  const auto back = ingest::read_trials(dir / "t.jsonl");
  ASSERT_EQ(back.size(), trials.size());
  // JSON doubles are printed shortest-roundtrip, so equality is exact.
  for (std::size_t i = 0; i < trials.size(); ++i) EXPECT_EQ(back[i], trials[i]) << i;
}

TEST(Ingest, FortyNoviceTrials) {
  testing::TempDir dir;
  std::vector<Trial> trials;
  for (int i = 0; i < 40; ++i) {
    Trial t = random_trial(static_cast<std::uint64_t>(2 * i + 1), 26, true, false);
    t.expertise = Expertise::novice;
    trials.push_back(t);
  }
  ingest::write_trials(dir / "novice.jsonl", trials);
  const auto back = ingest::read_trials(dir / "novice.jsonl");
  ASSERT_EQ(back.size(), 40u);
  for (const auto& t : back) EXPECT_EQ(t.expertise, Expertise::novice);
}

TEST(Ingest, MissingTargetNamesTrialAndLine) {
  testing::TempDir dir;
  const Trial good = random_trial(3, 5, false, false);
  Trial bad = random_trial(4, 5, false, false);
  bad.trial_id = "broken-one";
  std::string line = ingest::encode_trial(bad);
  // Drop the last target object of the first frame.
  const auto targets = line.find("\"targets\":[");
  const auto close = line.find(']', targets);
  const auto last = line.rfind(",{", close);
  line.erase(last, close - last);
  testing::write_text(dir / "t.jsonl", ingest::encode_trial(good) + "\n" + line + "\n");
  try {
    ingest::read_trials(dir / "t.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "TRIAL_SCHEMA");
    const std::string msg = e.what();
    EXPECT_NE(msg.find("broken-one"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(Ingest, MalformedLineNamesLineNumber) {
  testing::TempDir dir;
  testing::write_text(dir / "t.jsonl", ingest::encode_trial(random_trial(1, 3, false, false)) + "\n\n{oops\n");
  try {
    ingest::read_trials(dir / "t.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "TRIAL_PARSE");
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Ingest, NonMonotoneTimestampsNameTrial) {
  Trial t = random_trial(5, 10, false, false);
  t.trial_id = "backwards";
  t.frames[5].t = t.frames[3].t;
  try {
    ingest::decode_trial(ingest::encode_trial(t), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "TRIAL_NONMONOTONE");
    EXPECT_NE(std::string(e.what()).find("backwards"), std::string::npos);
  }
}

TEST(Ingest, ValidateRejectsBadLabelsAndSpacing) {
  Trial t = random_trial(6, 10, true, false);
  t.frames[2].labels = std::array<int, 2>{5, 0};
  EXPECT_THROW(ingest::validate(t), Error);
  t = random_trial(6, 10, false, false);
  t.frames[9].t += 0.001;
  EXPECT_THROW(ingest::validate(t), Error);
  t = random_trial(6, 10, false, false);
  t.frames[1].targets[2].pos.x = std::nan("");
  EXPECT_THROW(ingest::validate(t), Error);
}

// Herder 0 approaches along x; targets placed per test.
Trial approach(std::array<Vec2, kNumTargets> targets, double start_x, double step) {
  Trial t = testing::static_trial(5, {start_x, 0.0}, {5.0, 5.0}, targets);
  for (std::size_t i = 0; i < t.frames.size(); ++i) t.frames[i].herders[0].pos.x = start_x + step * static_cast<double>(i);
  return t;
}

TEST(AutoLabel, ClosingInsideRadius) {
  // Target 2 sits 0.10 m ahead of the herder at the middle frame.
  const Trial t = ingest::auto_label(approach({Vec2{-3, -3}, Vec2{0.0, 0.0}, Vec2{3, -3}, Vec2{-3, 3}}, -0.12, 0.01), 0.12);
  EXPECT_EQ((*t.frames[2].labels)[0], 2);
  EXPECT_EQ((*t.frames[2].labels)[1], 0);
}

TEST(AutoLabel, NothingWithinRadius) {
  const Trial t = ingest::auto_label(approach({Vec2{-3, -3}, Vec2{3, 3}, Vec2{3, -3}, Vec2{-3, 3}}, 0.0, 0.01), 0.12);
  for (const auto& f : t.frames) EXPECT_EQ(*f.labels, (std::array<int, 2>{0, 0}));
}

TEST(AutoLabel, NearestOfSeveralClosing) {
  // At the middle frame target 1 is 0.11 m and target 3 is 0.08 m away, both closing.
  Trial t = approach({Vec2{0.11, 0.0}, Vec2{3, 3}, Vec2{0.0, 0.08}, Vec2{-3, 3}}, 0.0, 0.0);
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const double s = 0.01 * (static_cast<double>(i) - 2.0);
    t.frames[i].herders[0].pos = {s, s};
  }
  t.frames[2].herders[0].pos = {0.0, 0.0};
  t = ingest::auto_label(t, 0.12);
  EXPECT_EQ((*t.frames[2].labels)[0], 3);
}

TEST(AutoLabel, RecedingIsNotLabeled) {
  const Trial t = ingest::auto_label(approach({Vec2{-3, -3}, Vec2{0.0, 0.0}, Vec2{3, -3}, Vec2{-3, 3}}, 0.0, 0.01), 0.12);
  for (const auto& f : t.frames) EXPECT_EQ((*f.labels)[0], 0);
}

TEST(AutoLabel, LabelsAlwaysInRange) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Trial t = random_trial(s, 40, false, false);
    for (auto& f : t.frames)
      for (auto& a : f.targets) a.pos.y = a.pos.x * 0.1;
    t = ingest::auto_label(std::move(t), 0.5);
    for (const auto& f : t.frames)
      for (int l : *f.labels) EXPECT_TRUE(l >= 0 && l <= 4);
  }
}

TEST(AutoLabel, TooShort) {
  EXPECT_THROW(ingest::auto_label(random_trial(1, 2, false, false), 0.12), Error);
}

}  // namespace
}  // namespace herdcast
