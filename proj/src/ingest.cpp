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

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "herdcast/trial.hpp"

namespace herdcast {

bool Trial::labeled() const {
  if (frames.empty()) return false;
  for (const Frame& f : frames)
    if (!f.labels) return false;
  return true;
}

namespace ingest {
namespace {

using nlohmann::json;

json agent_to_json(const AgentSample& a) {
  json j = {{"x", a.pos.x}, {"y", a.pos.y}};
  if (a.vel) {
    j["vx"] = a.vel->x;
    j["vy"] = a.vel->y;
  }
  return j;
}

AgentSample agent_from_json(const json& j) {
  AgentSample a;
  a.pos = {j.at("x").get<double>(), j.at("y").get<double>()};
  const bool has_vx = j.contains("vx"), has_vy = j.contains("vy");
  if (has_vx != has_vy) throw std::invalid_argument("velocity needs both vx and vy");
  if (has_vx) a.vel = Vec2{j.at("vx").get<double>(), j.at("vy").get<double>()};
  return a;
}

}  // namespace

void validate(const Trial& trial) {
  const std::string& id = trial.trial_id;
  if (!(trial.hz > 0.0) || !std::isfinite(trial.hz))
    throw Error("TRIAL_HZ", "trial '" + id + "': hz must be positive");
  const double spacing = 1.0 / trial.hz;
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    const Frame& f = trial.frames[i];
    if (!std::isfinite(f.t)) throw Error("TRIAL_NONFINITE", "trial '" + id + "': non-finite timestamp");
    for (const auto& a : f.herders)
      if (!a.pos.finite() || (a.vel && !a.vel->finite()))
        throw Error("TRIAL_NONFINITE", "trial '" + id + "': non-finite herder coordinate at frame " + std::to_string(i));
    for (const auto& a : f.targets)
      if (!a.pos.finite() || (a.vel && !a.vel->finite()))
        throw Error("TRIAL_NONFINITE", "trial '" + id + "': non-finite target coordinate at frame " + std::to_string(i));
    if (f.labels)
      for (int l : *f.labels)
        if (l < 0 || l > kNumTargets)
          throw Error("TRIAL_LABEL", "trial '" + id + "': label " + std::to_string(l) + " out of range at frame " + std::to_string(i));
    if (i == 0) continue;
    const double dt = f.t - trial.frames[i - 1].t;
    if (!(dt > 0.0))
      throw Error("TRIAL_NONMONOTONE", "trial '" + id + "': timestamps not strictly increasing at frame " + std::to_string(i));
    if (std::abs(dt - spacing) > 1e-9)
      throw Error("TRIAL_SPACING", "trial '" + id + "': frame spacing " + std::to_string(dt) + " s differs from 1/hz at frame " + std::to_string(i));
  }
}

std::string encode_trial(const Trial& trial) {
  json frames = json::array();
  for (const Frame& f : trial.frames) {
    json jf = {{"t", f.t}};
    json hs = json::array(), ts = json::array();
    for (const auto& a : f.herders) hs.push_back(agent_to_json(a));
    for (const auto& a : f.targets) ts.push_back(agent_to_json(a));
    jf["herders"] = std::move(hs);
    jf["targets"] = std::move(ts);
    if (f.labels) jf["labels"] = {(*f.labels)[0], (*f.labels)[1]};
    frames.push_back(std::move(jf));
  }
  json j = {{"trial_id", trial.trial_id},
            {"expertise", std::string(to_string(trial.expertise))},
            {"hz", trial.hz},
            {"success", trial.success},
            {"frames", std::move(frames)}};
  return j.dump();
}

Trial decode_trial(const std::string& line, std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error("TRIAL_PARSE", where + ": malformed JSON: " + e.what());
  }
  Trial trial;
  try {
    trial.trial_id = j.at("trial_id").get<std::string>();
  } catch (const json::exception& e) {
    throw Error("TRIAL_SCHEMA", where + ": missing trial_id: " + e.what());
  }
  const std::string ctx = "trial '" + trial.trial_id + "' (" + where + ")";
  try {
    trial.expertise = parse_expertise(j.at("expertise").get<std::string>());
    trial.hz = j.at("hz").get<double>();
    trial.success = j.at("success").get<bool>();
    const json& frames = j.at("frames");
    trial.frames.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const json& jf = frames[i];
      Frame f;
      f.t = jf.at("t").get<double>();
      const json& hs = jf.at("herders");
      const json& ts = jf.at("targets");
      if (hs.size() != kNumHerders)
        throw std::invalid_argument("frame " + std::to_string(i) + " has " + std::to_string(hs.size()) + " herders");
      if (ts.size() != kNumTargets)
        throw std::invalid_argument("frame " + std::to_string(i) + " has " + std::to_string(ts.size()) + " target positions");
      for (int h = 0; h < kNumHerders; ++h) f.herders[h] = agent_from_json(hs[h]);
      for (int k = 0; k < kNumTargets; ++k) f.targets[k] = agent_from_json(ts[k]);
      if (jf.contains("labels")) {
        const json& jl = jf.at("labels");
        if (jl.size() != kNumHerders) throw std::invalid_argument("frame " + std::to_string(i) + " labels need 2 entries");
        f.labels = std::array<int, kNumHerders>{jl[0].get<int>(), jl[1].get<int>()};
      }
      trial.frames.push_back(std::move(f));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("TRIAL_SCHEMA", ctx + ": " + e.what());
  }
  validate(trial);
  return trial;
}

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("IO_OPEN", "cannot open '" + path.string() + "' for writing");
  for (const Trial& t : trials) out << encode_trial(t) << '\n';
  if (!out) throw Error("IO_WRITE", "write failed for '" + path.string() + "'");
}

std::vector<Trial> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IO_OPEN", "cannot open '" + path.string() + "'");
  std::vector<Trial> trials;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    trials.push_back(decode_trial(line, line_number));
  }
  return trials;
}

Trial auto_label(Trial trial, double repulsion_radius) {
  const std::size_t n = trial.frames.size();
  if (n < 3) throw Error("TRIAL_SHORT", "trial '" + trial.trial_id + "': auto_label needs at least 3 frames");
  auto dist = [&](std::size_t i, int h, int k) {
    return distance(trial.frames[i].herders[h].pos, trial.frames[i].targets[k].pos);
  };
  std::vector<std::array<int, kNumHerders>> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    for (int h = 0; h < kNumHerders; ++h) {
      int best = 0;
      double best_d = 0.0;
      for (int k = 0; k < kNumTargets; ++k) {
        const double d = dist(i, h, k);
        const double rate = dist(hi, h, k) - dist(lo, h, k);
        if (d < repulsion_radius && rate < 0.0 && (best == 0 || d < best_d)) {
          best = k + 1;
          best_d = d;
        }
      }
      labels[i][h] = best;
    }
  }
  for (std::size_t i = 0; i < n; ++i) trial.frames[i].labels = labels[i];
  return trial;
}

}  // namespace ingest
}  // namespace herdcast
