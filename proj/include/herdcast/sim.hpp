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

#include <array>
#include <cstdint>
#include <optional>

#include "herdcast/common.hpp"
#include "herdcast/rng.hpp"
#include "herdcast/trial.hpp"

namespace herdcast::sim {

// World geometry and agent dynamics. The original task's field size,
// containment radius and diffusion constant are not published; the
// defaults marked "invented" are tuned so that expert pairs gather the herd
// in roughly 5-15 simulated seconds, well ahead of novice pairs.
struct WorldConfig {
  double field_half_width = 1.5;        // invented, m
  double containment_radius = 0.3;      // invented, m (centered at origin)
  double repulsion_radius = 0.12;       // m
  double target_brownian_sigma = 0.02;  // invented, m/sqrt(s)
  double target_flee_speed = 0.3;       // invented, m/s
  double expert_max_speed = 1.2;        // invented, m/s
  double novice_max_speed = 0.8;        // invented, m/s
  double steer_offset = 0.10;           // invented, m beyond the target
  double record_hz = 50.0;
  double max_duration = 120.0;  // s

  void validate() const;
  double max_speed(Expertise e) const {
    return e == Expertise::expert ? expert_max_speed : novice_max_speed;
  }
};

struct Agent {
  Vec2 pos;
  Vec2 vel;
};

struct WorldState {
  double t = 0.0;
  std::array<Agent, kNumHerders> herders{};
  std::array<Agent, kNumTargets> targets{};
  // Deterministic (flee) part of each target's last velocity; zero while the
  // target only diffuses.
  std::array<Vec2, kNumTargets> target_drift{};
  std::array<int, kNumHerders> labels{};
};

struct HerderCommand {
  Vec2 goal;
  double max_speed = 0.0;
};

// Advances the world by dt. Targets inside the repulsion radius of any
// herder flee at target_flee_speed along the normalized sum of the unit
// vectors pointing away from those herders; all other targets take a
// reflected Brownian step. Two normal draws are consumed per target every
// call, so the stream position does not depend on the state.
WorldState step_world(const WorldState& state, const WorldConfig& cfg,
                      const std::array<HerderCommand, kNumHerders>& commands, double dt, Rng& rng);

struct PolicyKind {
  Expertise variant = Expertise::expert;
  double redecision_period = 0.1;  // s
  double switch_noise = 0.0;       // probability of a random pick per re-decision
  bool direction_sensitive = true;
  double hysteresis = 0.10;  // relative score margin needed to abandon the current target (inf: never)

  void validate() const;
  static PolicyKind expert();
  static PolicyKind novice();
  static PolicyKind for_expertise(Expertise e) { return e == Expertise::expert ? expert() : novice(); }
};

// Picks the target (1..4) the focal herder should corral, 0 when every
// target is already inside the containment region.
int select_target(const PolicyKind& policy, const WorldState& state, const WorldConfig& cfg, int focal,
                  Rng& rng);

// Point the herder steers toward to push `target` at the center.
Vec2 steering_goal(const WorldState& state, const WorldConfig& cfg, int focal);

// Random start: targets on an annulus outside the containment region,
// herders near the bottom fence.
WorldState initial_state(const WorldConfig& cfg, Rng& rng);

bool all_contained(const WorldState& state, const WorldConfig& cfg);

// Simulates one trial from `seed` until the herd is first contained or
// max_duration elapses.
Trial run_trial(const WorldConfig& cfg, const std::array<PolicyKind, kNumHerders>& policies, std::uint64_t seed,
                std::string trial_id = {});

// Same as run_trial but from a caller-supplied initial state.
Trial run_trial_from(const WorldConfig& cfg, const std::array<PolicyKind, kNumHerders>& policies,
                     WorldState start, std::uint64_t seed, std::string trial_id);

struct BatchSpec {
  Expertise expertise = Expertise::expert;
  int pairs = 1;
  int trials_per_pair = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::optional<PolicyKind> policy;  // overrides the default for `expertise`
};

// Trials for pairs x trials_per_pair, each from its own derived seed and in a
// fixed order regardless of thread count.
std::vector<Trial> simulate_batch(const WorldConfig& cfg, const BatchSpec& spec);

}  // namespace herdcast::sim
