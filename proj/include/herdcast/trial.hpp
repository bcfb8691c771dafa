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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "herdcast/common.hpp"

namespace herdcast {

struct AgentSample {
  Vec2 pos;
  std::optional<Vec2> vel;

  friend bool operator==(const AgentSample&, const AgentSample&) = default;
};

// One recorded instant. Labels are the target ID (1..4) each herder is
// corralling, 0 for none; absent on unlabeled recordings.
struct Frame {
  double t = 0.0;
  std::array<AgentSample, kNumHerders> herders{};
  std::array<AgentSample, kNumTargets> targets{};
  std::optional<std::array<int, kNumHerders>> labels;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Trial {
  std::string trial_id;
  Expertise expertise = Expertise::expert;
  double hz = 50.0;
  bool success = false;
  std::vector<Frame> frames;

  bool labeled() const;
  double duration() const { return frames.empty() ? 0.0 : frames.back().t - frames.front().t; }

  friend bool operator==(const Trial&, const Trial&) = default;
};

namespace ingest {

// Checks timestamps, spacing, finiteness and label range; throws Error
// naming the trial on violation.
void validate(const Trial& trial);

// Line-delimited JSON trial file, one trial per line.
void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials);
std::vector<Trial> read_trials(const std::filesystem::path& path);

// Text forms of a single trial record, used by the file codec.
std::string encode_trial(const Trial& trial);
Trial decode_trial(const std::string& line, std::size_t line_number);

// Labels each herder/frame with the nearest target that is inside
// `repulsion_radius` and getting closer (central difference, one-sided at the
// ends); 0 when no target qualifies. Existing labels are overwritten.
Trial auto_label(Trial trial, double repulsion_radius);

}  // namespace ingest
}  // namespace herdcast
