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

#include "herdcast/features.hpp"

#include <cmath>
#include <string>

#include "herdcast/binio.hpp"

namespace herdcast::features {

Polar polar_offset(Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double dist = d.norm();
  if (dist == 0.0) return {0.0, 0.0};
  return {dist, wrap_angle(std::atan2(d.y, d.x))};
}

namespace {

// First derivative with central differences, one-sided at the ends.
std::vector<double> derivative(std::span<const double> v, double h) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0)
      d[i] = (v[1] - v[0]) / h;
    else if (i + 1 == n)
      d[i] = (v[n - 1] - v[n - 2]) / h;
    else
      d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
  }
  return d;
}

std::vector<double> second_derivative(std::span<const double> v, double h) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i == 0 ? 1 : (i + 1 == n ? n - 2 : i);
    d[i] = (v[c + 1] - 2.0 * v[c] + v[c - 1]) / (h * h);
  }
  return d;
}

double heading(Vec2 v) {
  if (v.norm() < 1e-9) return 0.0;
  return wrap_angle(std::atan2(v.y, v.x));
}

}  // namespace

KinematicsSeries kinematics_series(std::span<const Vec2> positions, double hz, Vec2 center,
                                   std::span<const std::optional<Vec2>> velocities) {
  const std::size_t n = positions.size();
  if (n < 3) throw Error("KINEMATICS_SHORT", "kinematics_series needs at least 3 frames, got " + std::to_string(n));
  const double h = 1.0 / hz;
  std::vector<double> r(n), xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = distance(center, positions[i]);
    xs[i] = positions[i].x;
    ys[i] = positions[i].y;
  }
  KinematicsSeries out;
  out.radial_velocity = derivative(r, h);
  out.radial_acceleration = second_derivative(r, h);
  out.direction.resize(n);

  bool recorded = velocities.size() == n;
  for (std::size_t i = 0; recorded && i < n; ++i) recorded = velocities[i].has_value();
  if (recorded) {
    for (std::size_t i = 0; i < n; ++i) out.direction[i] = heading(*velocities[i]);
  } else {
    const auto vx = derivative(xs, h);
    const auto vy = derivative(ys, h);
    for (std::size_t i = 0; i < n; ++i) out.direction[i] = heading({vx[i], vy[i]});
  }
  return out;
}

namespace {

constexpr int kAgents = kNumHerders + kNumTargets;

// Kinematics per agent: herders first, then targets.
std::array<KinematicsSeries, kAgents> agent_kinematics(const Trial& trial, Vec2 center) {
  const std::size_t n = trial.frames.size();
  std::array<KinematicsSeries, kAgents> ks;
  std::vector<Vec2> pos(n);
  std::vector<std::optional<Vec2>> vel(n);
  for (int a = 0; a < kAgents; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      const AgentSample& s = a < kNumHerders ? trial.frames[i].herders[a] : trial.frames[i].targets[a - kNumHerders];
      pos[i] = s.pos;
      vel[i] = s.vel;
    }
    ks[a] = kinematics_series(pos, trial.hz, center, vel);
  }
  return ks;
}

void fill_row(const Frame& f, std::size_t i, int focal, Vec2 center, const std::array<KinematicsSeries, kAgents>& ks,
              double* row) {
  using namespace layout;
  const int co = 1 - focal;
  const Vec2 self = f.herders[focal].pos;
  const Vec2 other = f.herders[co].pos;
  auto put = [&](std::size_t at, Polar p) {
    row[at] = p.dist;
    row[at + 1] = p.angle;
  };
  put(kHerderPair, polar_offset(self, other));
  for (int k = 0; k < kNumTargets; ++k) {
    put(kTargetsFromSelf + 2 * k, polar_offset(self, f.targets[k].pos));
    put(kTargetsFromCo + 2 * k, polar_offset(other, f.targets[k].pos));
    put(kTargetsFromCenter + 2 * k, polar_offset(center, f.targets[k].pos));
  }
  put(kSelfFromCenter, polar_offset(center, self));
  put(kCoFromCenter, polar_offset(center, other));
  row[kSelfRadial] = ks[focal].radial_velocity[i];
  row[kSelfRadial + 1] = ks[focal].radial_acceleration[i];
  row[kCoRadial] = ks[co].radial_velocity[i];
  row[kCoRadial + 1] = ks[co].radial_acceleration[i];
  row[kSelfHeading] = ks[focal].direction[i];
  row[kCoHeading] = ks[co].direction[i];
  for (int k = 0; k < kNumTargets; ++k) {
    const auto& tk = ks[kNumHerders + k];
    row[kTargetsRadial + 2 * k] = tk.radial_velocity[i];
    row[kTargetsRadial + 2 * k + 1] = tk.radial_acceleration[i];
    row[kTargetsHeading + k] = tk.direction[i];
  }
}

void check_focal(int focal) {
  if (focal != 0 && focal != 1) throw Error("BAD_FOCAL", "focal herder must be 0 or 1, got " + std::to_string(focal));
}

}  // namespace

FeatureTable feature_table(const Trial& trial, int focal, Vec2 center) {
  check_focal(focal);
  const auto ks = agent_kinematics(trial, center);
  FeatureTable table(static_cast<Eigen::Index>(trial.frames.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < trial.frames.size(); ++i)
    fill_row(trial.frames[i], i, focal, center, ks, table.row(static_cast<Eigen::Index>(i)).data());
  return table;
}

StateVector extract_features(const Trial& trial, std::size_t frame, int focal, Vec2 center) {
  check_focal(focal);
  if (frame >= trial.frames.size())
    throw Error("FRAME_RANGE", "frame " + std::to_string(frame) + " out of range for trial '" + trial.trial_id +
                                   "' with " + std::to_string(trial.frames.size()) + " frames");
  const auto ks = agent_kinematics(trial, center);
  StateVector v{};
  fill_row(trial.frames[frame], frame, focal, center, ks, v.data());
  return v;
}

std::string_view feature_name(std::size_t index) {
  static const std::array<std::string, kNumFeatures> names = [] {
    std::array<std::string, kNumFeatures> n;
    using namespace layout;
    n[kHerderPair] = "herders dist";
    n[kHerderPair + 1] = "herders angle";
    for (int k = 0; k < kNumTargets; ++k) {
      const std::string t = "targ" + std::to_string(k + 1);
      n[kTargetsFromSelf + 2 * k] = "self-" + t + " dist";
      n[kTargetsFromSelf + 2 * k + 1] = "self-" + t + " angle";
      n[kTargetsFromCo + 2 * k] = "co-" + t + " dist";
      n[kTargetsFromCo + 2 * k + 1] = "co-" + t + " angle";
      n[kTargetsFromCenter + 2 * k] = t + " center dist";
      n[kTargetsFromCenter + 2 * k + 1] = t + " center angle";
      n[kTargetsRadial + 2 * k] = t + " radial vel";
      n[kTargetsRadial + 2 * k + 1] = t + " radial acc";
      n[kTargetsHeading + k] = t + " heading";
    }
    n[kSelfFromCenter] = "self center dist";
    n[kSelfFromCenter + 1] = "self center angle";
    n[kCoFromCenter] = "co center dist";
    n[kCoFromCenter + 1] = "co center angle";
    n[kSelfRadial] = "self radial vel";
    n[kSelfRadial + 1] = "self radial acc";
    n[kCoRadial] = "co radial vel";
    n[kCoRadial + 1] = "co radial acc";
    n[kSelfHeading] = "self heading";
    n[kCoHeading] = "co heading";
    return n;
  }();
  return names.at(index);
}

void write_hxf(const std::filesystem::path& path, const FeatureTable& table) {
  binio::Writer w;
  w.bytes("HXF1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(table.rows()));
  w.u32(static_cast<std::uint32_t>(table.cols()));
  w.f64s(std::span(table.data(), static_cast<std::size_t>(table.size())));
  w.save(path);
}

FeatureTable read_hxf(const std::filesystem::path& path) {
  auto in = binio::Reader::from_file(path, "feature file");
  binio::expect_header(in, "HXF1", 1);
  const auto rows = in.u32();
  const auto cols = in.u32();
  if (cols != kNumFeatures)
    throw binio::FormatError(binio::FormatErrorKind::corrupt, "HXF_COLS",
                             "feature file has " + std::to_string(cols) + " columns, expected 48");
  FeatureTable t(rows, cols);
  in.f64s(std::span(t.data(), static_cast<std::size_t>(t.size())));
  return t;
}

}  // namespace herdcast::features
